//! Prompt templates and reply parsing.
//!
//! Analysis stages expect a reply holding one fenced block of `key: value`
//! lines. A line that does not start with a known key continues the value of
//! the previous key. List values are comma-separated.

use indexmap::IndexMap;

use crate::classify::{ClassificationRequest, FieldCategory};
use crate::introspect::{SchemaSnapshot, TableMeta};
use crate::pipeline::{ColumnRelation, DbInfo, TableInfo};
use crate::profile::{ColumnProfile, TableProfile};

/// Bumped whenever a template changes; part of every cache key.
pub const TEMPLATE_VERSION: &str = "v1";

/// Rough token estimate used for the context budget.
pub fn estimate_tokens(text: &str) -> usize {
    text.chars().count().div_ceil(4)
}

fn fmt_num(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

/// One-line rendering of a column's profile, category and (optionally)
/// original comment.
pub fn render_column(p: &ColumnProfile, category: Option<&FieldCategory>, show_comment: bool) -> String {
    let m = &p.meta;
    let declared = if m.declared_type.is_empty() {
        m.normalized_type.as_str().to_ascii_uppercase()
    } else {
        m.declared_type.clone()
    };
    let mut parts = vec![format!("{}: {declared}", m.name)];
    if m.is_primary_key {
        parts.push("primary key".into());
    }
    if let Some(c) = category {
        match c.granularity() {
            Some(g) => parts.push(format!("category {} with {g} granularity", c.kind())),
            None => parts.push(format!("category {}", c.kind())),
        }
    }
    parts.push(format!(
        "rows {}, distinct {}, nulls {}",
        p.row_count, p.distinct_count, p.null_count
    ));
    if let (Some(lo), Some(hi)) = (p.numeric_min, p.numeric_max) {
        let mut range = format!("range {}..{}", fmt_num(lo), fmt_num(hi));
        if let Some(avg) = p.numeric_avg {
            range.push_str(&format!(", mean {}", fmt_num(avg)));
        }
        parts.push(range);
    }
    if let (Some(lo), Some(hi)) = (p.strlen_min, p.strlen_max) {
        parts.push(format!("length {lo}..{hi}"));
    }
    if !p.samples.is_empty() {
        parts.push(format!("examples [{}]", p.samples.join(", ")));
    }
    if show_comment {
        if let Some(c) = &m.original_comment {
            parts.push(format!("comment \"{c}\""));
        }
    }
    format!("- {}", parts.join("; "))
}

/// Full rendering of one table: name, optional comment and every column.
pub fn render_table(
    table: &TableMeta,
    profile: Option<&TableProfile>,
    categories: Option<&IndexMap<String, FieldCategory>>,
    show_comments: bool,
) -> String {
    let mut out = format!("Table {}", table.name);
    if show_comments {
        if let Some(c) = &table.original_comment {
            out.push_str(&format!(" (comment \"{c}\")"));
        }
    }
    out.push('\n');
    for column in &table.columns {
        let category = categories.and_then(|c| c.get(&column.name));
        let line = match profile.and_then(|p| p.column(&column.name)) {
            Some(p) => render_column(p, category, show_comments),
            None => format!("- {}: {}", column.name, column.declared_type),
        };
        out.push_str(&line);
        out.push('\n');
    }
    out
}

fn render_foreign_keys(snapshot: &SchemaSnapshot) -> String {
    if snapshot.foreign_keys.is_empty() {
        return String::new();
    }
    let mut out = String::from("Foreign keys\n");
    for fk in &snapshot.foreign_keys {
        out.push_str(&format!(
            "- {}.{} references {}.{}\n",
            fk.from_table, fk.from_column, fk.to_table, fk.to_column
        ));
    }
    out
}

/// Whole-schema rendering. Falls back to table and column names only when
/// the full rendering would exceed `budget_tokens`.
pub fn render_schema(
    snapshot: &SchemaSnapshot,
    profiles: &[TableProfile],
    show_comments: bool,
    budget_tokens: usize,
) -> String {
    let mut full = String::new();
    for table in &snapshot.tables {
        full.push_str(&render_table(
            table,
            crate::profile::find_table(profiles, &table.name),
            None,
            show_comments,
        ));
        full.push('\n');
    }
    full.push_str(&render_foreign_keys(snapshot));
    if estimate_tokens(&full) <= budget_tokens {
        return full;
    }
    log::warn!(
        "schema of {} exceeds the context budget of {budget_tokens} tokens; using names only",
        snapshot.db_id
    );
    let mut compact = String::new();
    for table in &snapshot.tables {
        let names: Vec<&str> = table.columns.iter().map(|c| c.name.as_str()).collect();
        compact.push_str(&format!("Table {}: {}\n", table.name, names.join(", ")));
    }
    compact.push_str(&render_foreign_keys(snapshot));
    compact
}

pub fn render_db_info(info: &DbInfo) -> String {
    format!(
        "Database domain: {}\nDatabase overview: {}\nKey dimensions: {}\nKey metrics: {}\n",
        info.domain,
        info.overview,
        info.key_dimensions.join(", "),
        info.key_metrics.join(", ")
    )
}

pub fn render_table_info(info: &TableInfo) -> String {
    format!(
        "Table {} content: {}\nTable {} function: {}\n",
        info.table, info.content_summary, info.table, info.function_hypothesis
    )
}

fn reply_format(keys: &[&str]) -> String {
    let mut out = String::from("Reply with one fenced block of `key: value` lines and nothing else:\n```\n");
    for k in keys {
        out.push_str(&format!("{k}: ...\n"));
    }
    out.push_str("```\n");
    out
}

pub const DB_INFO_KEYS: [&str; 4] = ["domain", "overview", "key_dimensions", "key_metrics"];
pub const TABLE_INFO_KEYS: [&str; 2] = ["summary", "function"];
pub const RELATION_KEYS: [&str; 1] = ["analysis"];
pub const DESCRIPTION_KEYS: [&str; 1] = ["description"];

pub fn db_info_prompt(db_id: &str, schema: &str) -> String {
    format!(
        "You are analysing the database `{db_id}`.\n\n{schema}\n\
         Identify the business domain this database belongs to and summarise what it records. \
         Use your background knowledge of that domain. List the dimensions and metrics most \
         useful for analysis as comma-separated lists.\n\n{}",
        reply_format(&DB_INFO_KEYS)
    )
}

pub fn table_info_prompt(db_info: &DbInfo, table_rendering: &str) -> String {
    format!(
        "{}\n{table_rendering}\n\
         Using the database context above, analyse what data this table stores and what its \
         function in the database might be.\n\n{}",
        render_db_info(db_info),
        reply_format(&TABLE_INFO_KEYS)
    )
}

pub fn relation_prompt(
    db_info: &DbInfo,
    table_info: &TableInfo,
    table_rendering: &str,
    kind: crate::classify::CategoryKind,
    group: &[String],
) -> String {
    format!(
        "{}{}\n{table_rendering}\n\
         The columns {} all have category {kind}. Analyse the differences and the links between \
         these columns so each can be described without confusing it with the others.\n\n{}",
        render_db_info(db_info),
        render_table_info(table_info),
        group.join(", "),
        reply_format(&RELATION_KEYS)
    )
}

pub fn column_prompt(
    db_info: &DbInfo,
    table_info: &TableInfo,
    relation: Option<&ColumnRelation>,
    column_rendering: &str,
    word_limit: usize,
) -> String {
    let relation = relation
        .map(|r| format!("Related {} columns: {}\n", r.category, r.analysis))
        .unwrap_or_default();
    format!(
        "{}{}{relation}\nColumn:\n{column_rendering}\n\n\
         Predict the meaning of this column from the table context, its related columns and its \
         values. Write a description of at most {word_limit} words.\n\n{}",
        render_db_info(db_info),
        render_table_info(table_info),
        reply_format(&DESCRIPTION_KEYS)
    )
}

pub fn table_description_prompt(
    db_info: &DbInfo,
    table_info: Option<&TableInfo>,
    table: &TableMeta,
    column_descriptions: &[(String, String)],
    word_limit: usize,
) -> String {
    let mut cols = String::new();
    for (name, text) in column_descriptions {
        cols.push_str(&format!("- {name}: {text}\n"));
    }
    let info = table_info.map(render_table_info).unwrap_or_default();
    format!(
        "{}{info}\nTable {} columns:\n{cols}\n\
         Give an overview of the whole table: summarise its content and its likely applications. \
         Write a description of at most {word_limit} words.\n\n{}",
        render_db_info(db_info),
        table.name,
        reply_format(&DESCRIPTION_KEYS)
    )
}

pub fn classify_prompt(req: &ClassificationRequest<'_>) -> String {
    let peers: Vec<&str> = req.peers.iter().map(|p| p.meta.name.as_str()).collect();
    format!(
        "Table {} has columns: {}.\n\nColumn:\n{}\n\n\
         Classify the column as one of:\n\
         MEASURE - numeric values that are aggregated\n\
         CODE - identifiers of an entity\n\
         ENUM - a small fixed set of values\n\
         DATETIME - dates or times, whatever the storage type\n\
         TEXT - free text\n\
         Answer with exactly one of MEASURE, CODE, ENUM, DATETIME, TEXT.\n",
        req.table,
        peers.join(", "),
        render_column(req.profile, None, false)
    )
}

pub fn granularity_prompt(table: &str, p: &ColumnProfile) -> String {
    format!(
        "Column of table {table}:\n{}\n\n\
         This column stores dates or times. What is the finest time unit its values distinguish? \
         Answer with exactly one of YEAR, QUARTER, MONTH, DAY, HOUR, MINUTE, SECOND.\n",
        render_column(p, None, false)
    )
}

pub fn token_repair_prompt(original: &str, reply: &str, tokens: &[&str]) -> String {
    format!(
        "{original}\nYour previous answer was:\n{reply}\n\n\
         It did not contain a valid answer. Answer with exactly one of {}.\n",
        tokens.join(", ")
    )
}

pub fn repair_prompt(original: &str, error: &str, reply: &str) -> String {
    format!(
        "{original}\nYour previous answer could not be read ({error}):\n{reply}\n\n\
         Answer again using exactly the fenced `key: value` format requested above.\n"
    )
}

pub fn shorten_prompt(original: &str, reply: &str, word_limit: usize) -> String {
    format!(
        "{original}\nYour previous description was too long:\n{reply}\n\n\
         Rewrite it in at most {word_limit} words, keeping the same fenced format.\n"
    )
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{0}")]
pub struct ReplyParseError(pub String);

/// Parses the first fenced block of `reply` into the values of `keys`.
/// Every key must be present; values may be empty.
pub fn parse_fenced(reply: &str, keys: &[&str]) -> Result<IndexMap<String, String>, ReplyParseError> {
    let mut lines = reply.lines();
    if !lines.by_ref().any(|l| l.trim_start().starts_with("```")) {
        return Err(ReplyParseError("no fenced block".into()));
    }
    let mut values: IndexMap<String, String> = IndexMap::new();
    let mut current: Option<String> = None;
    for line in lines {
        let trimmed = line.trim();
        if trimmed.starts_with("```") {
            break;
        }
        if trimmed.is_empty() {
            continue;
        }
        let keyed = trimmed.split_once(':').and_then(|(k, v)| {
            let k = k.trim().to_ascii_lowercase();
            keys.iter().find(|want| **want == k).map(|want| (want.to_string(), v.trim().to_string()))
        });
        match keyed {
            Some((k, v)) => {
                values.insert(k.clone(), v);
                current = Some(k);
            }
            None => {
                if let Some(k) = &current {
                    let v = values.get_mut(k).expect("current key present");
                    if !v.is_empty() {
                        v.push(' ');
                    }
                    v.push_str(trimmed);
                }
            }
        }
    }
    let missing: Vec<&str> = keys.iter().copied().filter(|k| !values.contains_key(*k)).collect();
    if !missing.is_empty() {
        return Err(ReplyParseError(format!("missing keys: {}", missing.join(", "))));
    }
    Ok(keys.iter().map(|k| (k.to_string(), values[*k].clone())).collect())
}

/// Splits a comma-separated list value, dropping empty items.
pub fn split_list(value: &str) -> Vec<String> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}

/// Reply text with fences and a leading `description:` removed. Used when a
/// description reply stays unparseable after the repair attempt.
pub fn strip_reply(reply: &str) -> String {
    let body: Vec<&str> = reply
        .lines()
        .map(str::trim)
        .filter(|l| !l.starts_with("```") && !l.is_empty())
        .collect();
    let joined = body.join(" ");
    let lower = joined.to_ascii_lowercase();
    match lower.strip_prefix("description:") {
        Some(_) => joined["description:".len()..].trim().to_string(),
        None => joined.trim().to_string(),
    }
}
