//! Per-column statistics: counts, numeric range, string lengths and a few
//! rendered sample values.
//!
//! Statistics are pushed down to the engine as aggregate queries. With a row
//! limit they run over the first `N` rows ordered by primary key (or by
//! every column when there is no key), never a random sample.

use serde::{Deserialize, Serialize};

use crate::exec::Executor;
use crate::introspect::{self, ColumnMeta, Connection, ConnectionSpec, DbError, Engine, SchemaSnapshot, TableMeta, Value};

/// Longest rendered sample, in characters, before the `…` suffix.
pub const SAMPLE_MAX_CHARS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProfileOptions {
    pub sample_limit: usize,
    pub row_limit: Option<u64>,
}

impl Default for ProfileOptions {
    fn default() -> Self {
        ProfileOptions {
            sample_limit: 5,
            row_limit: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnProfile {
    pub meta: ColumnMeta,
    pub row_count: u64,
    pub distinct_count: u64,
    pub null_count: u64,
    /// Observed uniqueness over the profiled rows.
    pub is_unique: bool,
    pub numeric_min: Option<f64>,
    pub numeric_max: Option<f64>,
    pub numeric_avg: Option<f64>,
    pub strlen_min: Option<u64>,
    pub strlen_max: Option<u64>,
    pub samples: Vec<String>,
}

impl ColumnProfile {
    pub fn name(&self) -> &str {
        &self.meta.name
    }

    pub fn non_null_count(&self) -> u64 {
        self.row_count - self.null_count
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableProfile {
    pub table: String,
    pub columns: Vec<ColumnProfile>,
}

impl TableProfile {
    pub fn column(&self, name: &str) -> Option<&ColumnProfile> {
        self.columns.iter().find(|c| c.meta.name == name)
    }
}

/// Looks up one table's profiles by name.
pub fn find_table<'a>(profiles: &'a [TableProfile], table: &str) -> Option<&'a TableProfile> {
    profiles.iter().find(|t| t.table == table)
}

/// Renders a value the same way for every engine. Reals use the shortest
/// text that round-trips; long values are cut at [`SAMPLE_MAX_CHARS`].
/// Nulls and blobs have no rendering.
pub fn render_value(value: &Value) -> Option<String> {
    let raw = match value {
        Value::Null | Value::Blob(_) => return None,
        Value::Integer(i) => i.to_string(),
        Value::Real(r) => r.to_string(),
        Value::Bool(b) => b.to_string(),
        Value::Text(s) => s.clone(),
    };
    Some(truncate_sample(&raw))
}

pub fn truncate_sample(raw: &str) -> String {
    if raw.chars().count() <= SAMPLE_MAX_CHARS {
        raw.to_string()
    } else {
        let mut s: String = raw.chars().take(SAMPLE_MAX_CHARS).collect();
        s.push('…');
        s
    }
}

fn source_relation(engine: Engine, table: &TableMeta, row_limit: Option<u64>) -> String {
    let quoted = engine.quote_ident(&table.name);
    match row_limit {
        None => quoted,
        Some(n) => {
            let order: Vec<String> = if table.primary_key.is_empty() {
                table.columns.iter().map(|c| engine.quote_ident(&c.name)).collect()
            } else {
                table.primary_key.iter().map(|c| engine.quote_ident(c)).collect()
            };
            format!("(SELECT * FROM {quoted} ORDER BY {} LIMIT {n})", order.join(", "))
        }
    }
}

fn scalar_row(conn: &mut dyn Connection, sql: &str) -> Result<Vec<Value>, DbError> {
    conn.query(sql)?
        .into_iter()
        .next()
        .ok_or_else(|| DbError::query(sql, "aggregate returned no rows"))
}

/// Profiles one column over an open connection.
pub fn profile_column_with(
    conn: &mut dyn Connection,
    table: &TableMeta,
    column: &ColumnMeta,
    opts: &ProfileOptions,
) -> Result<ColumnProfile, DbError> {
    let engine = conn.engine();
    let src = source_relation(engine, table, opts.row_limit);
    let col = engine.quote_ident(&column.name);
    let ty = column.normalized_type;

    let counts = scalar_row(
        conn,
        &format!("SELECT COUNT(*), COUNT(DISTINCT {col}), COUNT({col}) FROM {src} s"),
    )?;
    let count = |i: usize| counts.get(i).and_then(Value::as_u64).unwrap_or(0);
    let row_count = count(0);
    let distinct_count = count(1);
    let null_count = row_count.saturating_sub(count(2));

    let (mut numeric_min, mut numeric_max, mut numeric_avg) = (None, None, None);
    if ty.is_numeric() && row_count > null_count {
        let row = scalar_row(
            conn,
            &format!(
                "SELECT {}, {} FROM {src} s",
                engine.as_double(&format!("MIN({col})")),
                engine.as_double(&format!("MAX({col})"))
            ),
        )?;
        numeric_min = row.first().and_then(Value::as_f64);
        numeric_max = row.get(1).and_then(Value::as_f64);
        let avg_expr = match engine {
            Engine::Sqlite => format!("AVG({col})"),
            _ => format!("AVG({})", engine.as_double(&col)),
        };
        // A failed cast leaves the average absent rather than failing the profile.
        numeric_avg = match conn.query(&format!("SELECT {avg_expr} FROM {src} s")) {
            Ok(rows) => rows.first().and_then(|r| r.first()).and_then(Value::as_f64),
            Err(err) => {
                log::warn!("average of {}.{} unavailable: {err}", table.name, column.name);
                None
            }
        };
    }

    let (mut strlen_min, mut strlen_max) = (None, None);
    if ty.is_text_like() && row_count > null_count {
        let len = engine.char_length_fn();
        let row = scalar_row(conn, &format!("SELECT MIN({len}({col})), MAX({len}({col})) FROM {src} s"))?;
        strlen_min = row.first().and_then(Value::as_u64);
        strlen_max = row.get(1).and_then(Value::as_u64);
    }

    let mut samples = Vec::new();
    if ty != introspect::NormalizedType::Blob && opts.sample_limit > 0 && row_count > null_count {
        let sql = format!(
            "SELECT {} FROM (SELECT DISTINCT {col} AS v FROM {src} s WHERE {col} IS NOT NULL ORDER BY v LIMIT {}) d ORDER BY v",
            engine.as_text("v"),
            opts.sample_limit
        );
        for row in conn.query(&sql)? {
            if let Some(rendered) = row.first().and_then(render_value) {
                if !samples.contains(&rendered) {
                    samples.push(rendered);
                }
            }
        }
    }

    Ok(ColumnProfile {
        meta: column.clone(),
        row_count,
        distinct_count,
        null_count,
        is_unique: row_count > 0 && distinct_count == row_count - null_count,
        numeric_min,
        numeric_max,
        numeric_avg,
        strlen_min,
        strlen_max,
        samples,
    })
}

/// Opens a connection and profiles a single column of the snapshot.
pub fn profile_column(
    spec: &ConnectionSpec,
    snapshot: &SchemaSnapshot,
    table: &str,
    column: &str,
    opts: &ProfileOptions,
) -> Result<ColumnProfile, DbError> {
    let t = snapshot.table(table).ok_or_else(|| DbError::UnknownTable(table.to_string()))?;
    let c = t.column(column).ok_or_else(|| DbError::UnknownColumn {
        table: table.to_string(),
        column: column.to_string(),
    })?;
    let mut conn = introspect::connect(spec)?;
    profile_column_with(conn.as_mut(), t, c, opts)
}

/// Profiles every column in the snapshot. Each worker of `exec` holds its
/// own connection.
pub fn profile_snapshot(
    spec: &ConnectionSpec,
    snapshot: &SchemaSnapshot,
    opts: &ProfileOptions,
    exec: &Executor,
) -> Result<Vec<TableProfile>, DbError> {
    let jobs: Vec<(&TableMeta, &ColumnMeta)> = snapshot
        .tables
        .iter()
        .flat_map(|t| t.columns.iter().map(move |c| (t, c)))
        .collect();
    let results = exec.map_init(
        &jobs,
        || introspect::connect(spec),
        |conn, (table, column)| match conn {
            Ok(conn) => profile_column_with(conn.as_mut(), table, column, opts),
            Err(err) => Err(err.clone()),
        },
    );
    let mut results = results.into_iter();
    let mut out = Vec::with_capacity(snapshot.tables.len());
    for table in &snapshot.tables {
        let mut columns = Vec::with_capacity(table.columns.len());
        for _ in &table.columns {
            columns.push(results.next().expect("one result per column")?);
        }
        out.push(TableProfile {
            table: table.name.clone(),
            columns,
        });
    }
    Ok(out)
}
