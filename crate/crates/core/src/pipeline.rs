//! The staged description pipeline.
//!
//! Stages run in dependency order, each a barrier for the next:
//! database summary, per-table preliminary analysis, per-(table, category)
//! column relations, column descriptions, then table descriptions. Within a
//! stage the targets run on the [`Executor`] and are merged back in catalog
//! order.

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::classify::{CategoryKind, CategoryMap, FieldCategory};
use crate::exec::Executor;
use crate::introspect::{SchemaSnapshot, TableMeta};
use crate::model::{Attempt, DescriptionModel, ModelError, Prompt, SamplingParams, Stage};
use crate::mschema::GenerationMode;
use crate::profile::{find_table, TableProfile};
use crate::prompt::{self, DB_INFO_KEYS, DESCRIPTION_KEYS, RELATION_KEYS, TABLE_INFO_KEYS};
use crate::words::{count_words, truncate_words, COLUMN_WORD_LIMIT, TABLE_WORD_LIMIT};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DbInfo {
    pub domain: String,
    pub overview: String,
    pub key_dimensions: Vec<String>,
    pub key_metrics: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableInfo {
    pub table: String,
    pub content_summary: String,
    pub function_hypothesis: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnRelation {
    pub table: String,
    pub category: CategoryKind,
    pub columns: Vec<String>,
    pub analysis: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Origin,
    Generated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Table,
    Column,
}

impl Target {
    pub fn word_limit(self, cfg: &PipelineConfig) -> usize {
        match self {
            Target::Table => cfg.table_word_limit,
            Target::Column => cfg.column_word_limit,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Description {
    pub text: String,
    pub word_count: usize,
    pub source: Source,
    pub target: Target,
}

impl Description {
    pub fn new(text: impl Into<String>, source: Source, target: Target) -> Self {
        let text = text.into();
        Description {
            word_count: count_words(&text),
            text,
            source,
            target,
        }
    }
}

/// Everything the pipeline learned about one database.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnalysisContext {
    pub db_info: Option<DbInfo>,
    pub table_infos: IndexMap<String, TableInfo>,
    pub relations: IndexMap<String, IndexMap<CategoryKind, ColumnRelation>>,
    pub column_descriptions: IndexMap<String, IndexMap<String, Description>>,
    pub table_descriptions: IndexMap<String, Description>,
}

impl AnalysisContext {
    pub fn relation(&self, table: &str, kind: CategoryKind) -> Option<&ColumnRelation> {
        self.relations.get(table).and_then(|m| m.get(&kind))
    }

    pub fn column_description(&self, table: &str, column: &str) -> Option<&Description> {
        self.column_descriptions.get(table).and_then(|m| m.get(column))
    }

    pub fn descriptions(&self) -> impl Iterator<Item = &Description> {
        self.column_descriptions
            .values()
            .flat_map(|m| m.values())
            .chain(self.table_descriptions.values())
    }

    fn insert_column_description(&mut self, table: &str, column: &str, d: Description) {
        self.column_descriptions
            .entry(table.to_string())
            .or_default()
            .insert(column.to_string(), d);
    }

    /// Every generated entry has its prerequisites.
    pub fn is_monotone(&self) -> bool {
        let generated_columns = self.column_descriptions.iter().all(|(t, cols)| {
            cols.values()
                .all(|d| d.source == Source::Origin || (self.db_info.is_some() && self.table_infos.contains_key(t)))
        });
        let tables = self
            .table_descriptions
            .values()
            .all(|d| d.source == Source::Origin || self.db_info.is_some());
        let infos = self.table_infos.is_empty() || self.db_info.is_some();
        let relations = self.relations.keys().all(|t| self.table_infos.contains_key(t));
        generated_columns && tables && infos && relations
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub params: SamplingParams,
    pub column_word_limit: usize,
    pub table_word_limit: usize,
    /// Estimated tokens above which the database summary prompt renders
    /// table and column names only.
    pub context_budget_tokens: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            params: SamplingParams::default(),
            column_word_limit: COLUMN_WORD_LIMIT,
            table_word_limit: TABLE_WORD_LIMIT,
            context_budget_tokens: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum StageError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("unreadable {stage} reply for {target} after repair: {reason}")]
    Unparseable {
        stage: Stage,
        target: String,
        reason: String,
        /// Raw replies in the order received.
        replies: Vec<String>,
    },
    #[error("inconsistent pipeline input: {0}")]
    Inconsistent(String),
}

/// A stage failure together with everything completed before it.
#[derive(Debug, Clone, thiserror::Error)]
#[error("{error}")]
pub struct PipelineError {
    pub error: StageError,
    pub partial: Box<AnalysisContext>,
}

fn ask_structured(
    model: &dyn DescriptionModel,
    prompt: Prompt,
    keys: &[&str],
    params: &SamplingParams,
) -> Result<IndexMap<String, String>, StageError> {
    let first = model.send(&prompt, params)?;
    let err = match prompt::parse_fenced(&first, keys) {
        Ok(v) => return Ok(v),
        Err(e) => e,
    };
    let repair = prompt.follow_up(Attempt::Repair, prompt::repair_prompt(&prompt.text, &err.0, &first));
    let second = model.send(&repair, params)?;
    prompt::parse_fenced(&second, keys).map_err(|e| StageError::Unparseable {
        stage: prompt.stage,
        target: prompt.target.clone(),
        reason: e.0,
        replies: vec![first, second],
    })
}

/// Reads a `description` reply. A reply still unreadable after the repair
/// attempt is used as plain text.
fn ask_description_text(
    model: &dyn DescriptionModel,
    prompt: &Prompt,
    params: &SamplingParams,
) -> Result<String, ModelError> {
    let first = model.send(prompt, params)?;
    let err = match prompt::parse_fenced(&first, &DESCRIPTION_KEYS) {
        Ok(mut v) => return Ok(v.swap_remove("description").unwrap_or_default()),
        Err(e) => e,
    };
    let repair = prompt.follow_up(Attempt::Repair, prompt::repair_prompt(&prompt.text, &err.0, &first));
    let second = model.send(&repair, params)?;
    Ok(match prompt::parse_fenced(&second, &DESCRIPTION_KEYS) {
        Ok(mut v) => v.swap_remove("description").unwrap_or_default(),
        Err(e) => {
            log::warn!("using unstructured {} reply for {} ({e})", prompt.stage, prompt.target);
            prompt::strip_reply(&second)
        }
    })
}

/// Asks for a description and enforces `limit`: one shorten re-prompt, then
/// truncation at a word boundary.
fn ask_description(
    model: &dyn DescriptionModel,
    prompt: Prompt,
    target: Target,
    limit: usize,
    params: &SamplingParams,
) -> Result<Description, ModelError> {
    let text = ask_description_text(model, &prompt, params)?;
    if count_words(&text) <= limit {
        return Ok(Description::new(text, Source::Generated, target));
    }
    let shorten = prompt.follow_up(Attempt::Shorten, prompt::shorten_prompt(&prompt.text, &text, limit));
    let reply = model.send(&shorten, params)?;
    let shorter = match prompt::parse_fenced(&reply, &DESCRIPTION_KEYS) {
        Ok(mut v) => v.swap_remove("description").unwrap_or_default(),
        Err(_) => prompt::strip_reply(&reply),
    };
    if count_words(&shorter) <= limit {
        return Ok(Description::new(shorter, Source::Generated, target));
    }
    log::warn!("{} for {} still exceeds {limit} words; truncating", prompt.stage, prompt.target);
    Ok(Description::new(truncate_words(&shorter, limit), Source::Generated, target))
}

/// Domain and overview of the whole database.
pub fn summarize_database(
    snapshot: &SchemaSnapshot,
    profiles: &[TableProfile],
    model: &dyn DescriptionModel,
    cfg: &PipelineConfig,
    show_comments: bool,
) -> Result<DbInfo, StageError> {
    let schema = prompt::render_schema(snapshot, profiles, show_comments, cfg.context_budget_tokens);
    let p = Prompt::new(Stage::DbInfo, &snapshot.db_id, prompt::db_info_prompt(&snapshot.db_id, &schema));
    let v = ask_structured(model, p, &DB_INFO_KEYS, &cfg.params)?;
    if v["domain"].is_empty() {
        return Err(StageError::Unparseable {
            stage: Stage::DbInfo,
            target: snapshot.db_id.clone(),
            reason: "empty domain".into(),
            replies: vec![],
        });
    }
    Ok(DbInfo {
        domain: v["domain"].clone(),
        overview: v["overview"].clone(),
        key_dimensions: prompt::split_list(&v["key_dimensions"]),
        key_metrics: prompt::split_list(&v["key_metrics"]),
    })
}

/// What the table stores and what it is for.
pub fn analyze_table_preliminary(
    db_info: &DbInfo,
    table: &TableMeta,
    profile: Option<&TableProfile>,
    categories: Option<&IndexMap<String, FieldCategory>>,
    model: &dyn DescriptionModel,
    cfg: &PipelineConfig,
    show_comments: bool,
) -> Result<TableInfo, StageError> {
    let rendering = prompt::render_table(table, profile, categories, show_comments);
    let p = Prompt::new(Stage::TableInfo, &table.name, prompt::table_info_prompt(db_info, &rendering));
    let v = ask_structured(model, p, &TABLE_INFO_KEYS, &cfg.params)?;
    Ok(TableInfo {
        table: table.name.clone(),
        content_summary: v["summary"].clone(),
        function_hypothesis: v["function"].clone(),
    })
}

/// Differences and links among the columns of one category in one table.
#[allow(clippy::too_many_arguments)]
pub fn analyze_column_relations(
    db_info: &DbInfo,
    table_info: &TableInfo,
    table: &TableMeta,
    profile: Option<&TableProfile>,
    categories: Option<&IndexMap<String, FieldCategory>>,
    kind: CategoryKind,
    group: &[String],
    model: &dyn DescriptionModel,
    cfg: &PipelineConfig,
    show_comments: bool,
) -> Result<ColumnRelation, StageError> {
    if group.len() < 2 {
        return Err(StageError::Inconsistent(format!(
            "relation group {}.{kind} has fewer than two columns",
            table.name
        )));
    }
    let rendering = prompt::render_table(table, profile, categories, show_comments);
    let p = Prompt::new(
        Stage::ColumnRelation,
        format!("{}.{kind}", table.name),
        prompt::relation_prompt(db_info, table_info, &rendering, kind, group),
    );
    let v = ask_structured(model, p, &RELATION_KEYS, &cfg.params)?;
    Ok(ColumnRelation {
        table: table.name.clone(),
        category: kind,
        columns: group.to_vec(),
        analysis: v["analysis"].clone(),
    })
}

#[allow(clippy::too_many_arguments)]
pub fn generate_column_description(
    db_info: &DbInfo,
    table_info: &TableInfo,
    relation: Option<&ColumnRelation>,
    profile: &crate::profile::ColumnProfile,
    category: Option<&FieldCategory>,
    model: &dyn DescriptionModel,
    cfg: &PipelineConfig,
    show_comments: bool,
) -> Result<Description, StageError> {
    let rendering = prompt::render_column(profile, category, show_comments);
    let p = Prompt::new(
        Stage::ColumnDescription,
        format!("{}.{}", table_info.table, profile.meta.name),
        prompt::column_prompt(db_info, table_info, relation, &rendering, cfg.column_word_limit),
    );
    Ok(ask_description(model, p, Target::Column, cfg.column_word_limit, &cfg.params)?)
}

pub fn generate_table_description(
    db_info: &DbInfo,
    table_info: Option<&TableInfo>,
    table: &TableMeta,
    column_descriptions: &IndexMap<String, Description>,
    model: &dyn DescriptionModel,
    cfg: &PipelineConfig,
) -> Result<Description, StageError> {
    let mut cols = Vec::with_capacity(table.columns.len());
    for c in &table.columns {
        let d = column_descriptions.get(&c.name).ok_or_else(|| {
            StageError::Inconsistent(format!("column {}.{} has no description", table.name, c.name))
        })?;
        cols.push((c.name.clone(), d.text.clone()));
    }
    let p = Prompt::new(
        Stage::TableDescription,
        &table.name,
        prompt::table_description_prompt(db_info, table_info, table, &cols, cfg.table_word_limit),
    );
    Ok(ask_description(model, p, Target::Table, cfg.table_word_limit, &cfg.params)?)
}

/// Which targets a mode sends to the model.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Plan {
    /// Tables needing a preliminary analysis, in catalog order.
    pub table_infos: Vec<String>,
    pub relations: Vec<(String, CategoryKind, Vec<String>)>,
    pub columns: Vec<(String, String)>,
    pub tables: Vec<String>,
}

impl Plan {
    pub fn needs_db_info(&self) -> bool {
        !self.table_infos.is_empty()
    }

    /// Model calls when every reply is well formed and within limits.
    pub fn expected_calls(&self) -> usize {
        usize::from(self.needs_db_info()) + self.table_infos.len() + self.relations.len() + self.columns.len() + self.tables.len()
    }
}

/// Column groups of one table, by category, in first-appearance order.
fn category_groups(table: &TableMeta, categories: &IndexMap<String, FieldCategory>) -> Vec<(CategoryKind, Vec<String>)> {
    let mut groups: IndexMap<CategoryKind, Vec<String>> = IndexMap::new();
    for c in &table.columns {
        if let Some(cat) = categories.get(&c.name) {
            groups.entry(cat.kind()).or_default().push(c.name.clone());
        }
    }
    groups.into_iter().collect()
}

/// Generation targets of `mode`. Merge mode only targets tables and columns
/// without an original comment; relation groups are analysed when at least
/// one of their columns is a target.
pub fn plan(snapshot: &SchemaSnapshot, categories: &CategoryMap, mode: GenerationMode) -> Plan {
    let generate_all = match mode {
        GenerationMode::NoComment | GenerationMode::Origin => return Plan::default(),
        GenerationMode::Generation => true,
        GenerationMode::Merge => false,
    };
    let empty = IndexMap::new();
    let mut plan = Plan::default();
    for table in &snapshot.tables {
        let target_cols: Vec<&str> = table
            .columns
            .iter()
            .filter(|c| generate_all || c.original_comment.is_none())
            .map(|c| c.name.as_str())
            .collect();
        let table_target = generate_all || table.original_comment.is_none();
        if target_cols.is_empty() && !table_target {
            continue;
        }
        plan.table_infos.push(table.name.clone());
        let cats = categories.get(&table.name).unwrap_or(&empty);
        for (kind, group) in category_groups(table, cats) {
            if group.len() >= 2 && group.iter().any(|g| target_cols.contains(&g.as_str())) {
                plan.relations.push((table.name.clone(), kind, group));
            }
        }
        plan.columns
            .extend(target_cols.iter().map(|c| (table.name.clone(), c.to_string())));
        if table_target {
            plan.tables.push(table.name.clone());
        }
    }
    plan
}

fn check_inputs(snapshot: &SchemaSnapshot, categories: &CategoryMap, plan: &Plan) -> Result<(), StageError> {
    for (table, column) in &plan.columns {
        if categories.get(table).and_then(|m| m.get(column)).is_none() {
            return Err(StageError::Inconsistent(format!("column {table}.{column} has no category")));
        }
    }
    if categories.keys().any(|t| snapshot.table(t).is_none()) {
        return Err(StageError::Inconsistent("categories name a table missing from the snapshot".into()));
    }
    Ok(())
}

/// Runs every stage `mode` needs. No model calls happen in the `no_comment`
/// and `origin` modes.
pub fn run_pipeline(
    snapshot: &SchemaSnapshot,
    profiles: &[TableProfile],
    categories: &CategoryMap,
    model: &dyn DescriptionModel,
    mode: GenerationMode,
    cfg: &PipelineConfig,
    exec: &Executor,
) -> Result<AnalysisContext, PipelineError> {
    let mut ctx = AnalysisContext::default();
    let fail = |error: StageError, ctx: &AnalysisContext| PipelineError {
        error,
        partial: Box::new(ctx.clone()),
    };

    if matches!(mode, GenerationMode::Origin | GenerationMode::Merge) {
        for table in &snapshot.tables {
            for c in &table.columns {
                if let Some(comment) = &c.original_comment {
                    ctx.insert_column_description(&table.name, &c.name, Description::new(comment, Source::Origin, Target::Column));
                }
            }
            if let Some(comment) = &table.original_comment {
                ctx.table_descriptions
                    .insert(table.name.clone(), Description::new(comment, Source::Origin, Target::Table));
            }
        }
    }
    let plan = plan(snapshot, categories, mode);
    if !plan.needs_db_info() {
        return Ok(ctx);
    }
    check_inputs(snapshot, categories, &plan).map_err(|e| fail(e, &ctx))?;
    let show_comments = mode == GenerationMode::Merge;
    let empty_cats = IndexMap::new();
    let table_meta = |name: &str| snapshot.table(name).expect("planned table exists");
    let cats_of = |name: &str| Some(categories.get(name).unwrap_or(&empty_cats));

    let db_info = summarize_database(snapshot, profiles, model, cfg, show_comments).map_err(|e| fail(e, &ctx))?;
    ctx.db_info = Some(db_info.clone());

    let infos = exec.map(&plan.table_infos, |name: &String| {
        analyze_table_preliminary(
            &db_info,
            table_meta(name),
            find_table(profiles, name),
            cats_of(name),
            model,
            cfg,
            show_comments,
        )
    });
    let mut first_err = None;
    for r in infos {
        match r {
            Ok(info) => {
                ctx.table_infos.insert(info.table.clone(), info);
            }
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    if let Some(e) = first_err {
        return Err(fail(e, &ctx));
    }

    let relations = exec.map(&plan.relations, |(table, kind, group): &(String, CategoryKind, Vec<String>)| {
        analyze_column_relations(
            &db_info,
            &ctx.table_infos[table],
            table_meta(table),
            find_table(profiles, table),
            cats_of(table),
            *kind,
            group,
            model,
            cfg,
            show_comments,
        )
    });
    let mut first_err = None;
    for r in relations {
        match r {
            Ok(rel) => {
                ctx.relations
                    .entry(rel.table.clone())
                    .or_default()
                    .insert(rel.category, rel);
            }
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    if let Some(e) = first_err {
        return Err(fail(e, &ctx));
    }

    let columns = exec.map(&plan.columns, |(table, column): &(String, String)| {
        let profile = find_table(profiles, table)
            .and_then(|t| t.column(column))
            .ok_or_else(|| StageError::Inconsistent(format!("column {table}.{column} has no profile")))?;
        let category = categories.get(table).and_then(|m| m.get(column));
        let relation = category.and_then(|c| ctx.relation(table, c.kind()));
        generate_column_description(
            &db_info,
            &ctx.table_infos[table],
            relation,
            profile,
            category,
            model,
            cfg,
            show_comments,
        )
    });
    let mut first_err = None;
    for ((table, column), r) in plan.columns.iter().zip(columns) {
        match r {
            Ok(d) => ctx.insert_column_description(table, column, d),
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    if let Some(e) = first_err {
        return Err(fail(e, &ctx));
    }
    // Catalog order regardless of which columns were generated.
    for table in &snapshot.tables {
        if let Some(map) = ctx.column_descriptions.get_mut(&table.name) {
            let ordered: IndexMap<String, Description> = table
                .columns
                .iter()
                .filter_map(|c| map.swap_remove(&c.name).map(|d| (c.name.clone(), d)))
                .collect();
            *map = ordered;
        }
    }
    ctx.column_descriptions
        .sort_by_cached_key(|t, _| snapshot.tables.iter().position(|m| &m.name == t));

    let empty_desc = IndexMap::new();
    let tables = exec.map(&plan.tables, |name: &String| {
        generate_table_description(
            &db_info,
            ctx.table_infos.get(name),
            table_meta(name),
            ctx.column_descriptions.get(name).unwrap_or(&empty_desc),
            model,
            cfg,
        )
    });
    let mut first_err = None;
    for (name, r) in plan.tables.iter().zip(tables) {
        match r {
            Ok(d) => {
                ctx.table_descriptions.insert(name.clone(), d);
            }
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    ctx.table_descriptions
        .sort_by_cached_key(|t, _| snapshot.tables.iter().position(|m| &m.name == t));
    if let Some(e) = first_err {
        return Err(fail(e, &ctx));
    }
    Ok(ctx)
}
