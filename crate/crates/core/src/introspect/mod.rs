//! Engine-independent schema snapshots.
//!
//! Each supported engine implements [`Connection`]: it reads its own catalog
//! into [`RawTable`]s and answers plain `SELECT` queries with [`Value`] rows.
//! Everything above this module (profiling, prompts, M-Schema) only sees the
//! [`SchemaSnapshot`] built here.
//!
//! All access is read-only. SQLite files are opened without the create flag,
//! so a wrong path fails instead of producing an empty database.

pub mod ddl;
#[cfg(feature = "mysql")]
mod mysql;
#[cfg(feature = "postgres")]
mod postgres;
mod sqlite;
pub mod types;

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use types::NormalizedType;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    Sqlite,
    Mysql,
    Postgresql,
}

impl Engine {
    pub fn as_str(self) -> &'static str {
        match self {
            Engine::Sqlite => "sqlite",
            Engine::Mysql => "mysql",
            Engine::Postgresql => "postgresql",
        }
    }

    pub fn quote_ident(self, ident: &str) -> String {
        match self {
            Engine::Mysql => format!("`{}`", ident.replace('`', "``")),
            Engine::Sqlite | Engine::Postgresql => format!("\"{}\"", ident.replace('"', "\"\"")),
        }
    }

    /// Character-length function. SQLite's `LENGTH` already counts
    /// characters for text values.
    pub(crate) fn char_length_fn(self) -> &'static str {
        match self {
            Engine::Sqlite => "LENGTH",
            Engine::Mysql | Engine::Postgresql => "CHAR_LENGTH",
        }
    }

    /// Wraps a numeric aggregate so every engine hands back a double.
    pub(crate) fn as_double(self, expr: &str) -> String {
        match self {
            Engine::Sqlite => expr.to_string(),
            Engine::Mysql => format!("CAST({expr} AS DOUBLE)"),
            Engine::Postgresql => format!("CAST({expr} AS DOUBLE PRECISION)"),
        }
    }

    /// Renders a sample value as text on the server side, so temporal and
    /// decimal types come back in the engine's canonical text form.
    pub(crate) fn as_text(self, expr: &str) -> String {
        match self {
            Engine::Sqlite => expr.to_string(),
            Engine::Mysql => format!("CAST({expr} AS CHAR)"),
            Engine::Postgresql => format!("CAST({expr} AS TEXT)"),
        }
    }
}

impl fmt::Display for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DbError {
    #[error("invalid connection url `{url}`: {reason}")]
    InvalidUrl { url: String, reason: String },
    #[error("unsupported engine `{0}` (expected sqlite, mysql or postgresql)")]
    UnsupportedEngine(String),
    #[error("engine `{0}` support was not compiled into this build")]
    EngineNotBuilt(Engine),
    #[error("cannot connect to {url}: {message}")]
    Connect { url: String, message: String },
    #[error("database `{0}` has no user tables")]
    EmptyDatabase(String),
    #[error("query failed: {message}\n  sql: {sql}")]
    Query { sql: String, message: String },
    #[error("inconsistent catalog: {0}")]
    Catalog(String),
    #[error("table `{0}` is not in the snapshot")]
    UnknownTable(String),
    #[error("column `{table}.{column}` is not in the snapshot")]
    UnknownColumn { table: String, column: String },
}

impl DbError {
    pub(crate) fn query(sql: &str, err: impl fmt::Display) -> Self {
        DbError::Query {
            sql: sql.to_string(),
            message: err.to_string(),
        }
    }
}

/// A parsed `sqlite:///path`, `mysql://...` or `postgresql://...` URL.
#[derive(Clone, PartialEq, Eq)]
pub struct ConnectionSpec {
    url: String,
    engine: Engine,
}

impl ConnectionSpec {
    pub fn engine(&self) -> Engine {
        self.engine
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    /// Filesystem path for SQLite specs.
    pub fn sqlite_path(&self) -> Option<&str> {
        (self.engine == Engine::Sqlite).then(|| &self.url["sqlite://".len()..])
    }

    /// Identifier used as the M-Schema `DB_ID`: the file stem for SQLite,
    /// the database name otherwise.
    pub fn db_id(&self) -> String {
        match self.engine {
            Engine::Sqlite => {
                let path = std::path::Path::new(self.sqlite_path().unwrap_or_default());
                path.file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| "main".to_string())
            }
            Engine::Mysql | Engine::Postgresql => {
                let rest = self.url.split_once("://").map(|(_, r)| r).unwrap_or("");
                let path = rest.split_once('/').map(|(_, p)| p).unwrap_or("");
                let name = path.split(['?', '#']).next().unwrap_or("");
                if name.is_empty() {
                    self.engine.as_str().to_string()
                } else {
                    name.to_string()
                }
            }
        }
    }

    /// The URL with any password replaced by `***`.
    pub fn redacted(&self) -> String {
        let Some((scheme, rest)) = self.url.split_once("://") else {
            return self.url.clone();
        };
        let (authority, tail) = match rest.find('/') {
            Some(i) => (&rest[..i], &rest[i..]),
            None => (rest, ""),
        };
        match authority.rsplit_once('@') {
            Some((creds, host)) => match creds.split_once(':') {
                Some((user, _)) => format!("{scheme}://{user}:***@{host}{tail}"),
                None => self.url.clone(),
            },
            None => self.url.clone(),
        }
    }
}

impl fmt::Debug for ConnectionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ConnectionSpec")
            .field("url", &self.redacted())
            .field("engine", &self.engine)
            .finish()
    }
}

impl fmt::Display for ConnectionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.redacted())
    }
}

impl FromStr for ConnectionSpec {
    type Err = DbError;

    fn from_str(url: &str) -> Result<Self, Self::Err> {
        let invalid = |reason: &str| DbError::InvalidUrl {
            url: url.to_string(),
            reason: reason.to_string(),
        };
        let (scheme, rest) = url.split_once("://").ok_or_else(|| invalid("missing `://`"))?;
        let engine = match scheme.to_ascii_lowercase().as_str() {
            "sqlite" => Engine::Sqlite,
            "mysql" => Engine::Mysql,
            "postgresql" | "postgres" => Engine::Postgresql,
            other => return Err(DbError::UnsupportedEngine(other.to_string())),
        };
        if rest.is_empty() {
            return Err(invalid("empty location"));
        }
        let url = match engine {
            Engine::Sqlite => format!("sqlite://{rest}"),
            Engine::Postgresql => format!("postgresql://{rest}"),
            Engine::Mysql => format!("mysql://{rest}"),
        };
        Ok(ConnectionSpec { url, engine })
    }
}

/// One cell of a query result.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Null,
    Integer(i64),
    Real(f64),
    Text(String),
    Blob(Vec<u8>),
    Bool(bool),
}

impl Value {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Integer(i) => Some(*i as f64),
            Value::Real(r) => Some(*r),
            Value::Bool(b) => Some(if *b { 1.0 } else { 0.0 }),
            Value::Text(s) => s.trim().parse().ok(),
            Value::Null | Value::Blob(_) => None,
        }
    }

    pub fn as_u64(&self) -> Option<u64> {
        match self {
            Value::Integer(i) => u64::try_from(*i).ok(),
            Value::Real(r) if *r >= 0.0 && r.fract() == 0.0 => Some(*r as u64),
            Value::Text(s) => s.trim().parse().ok(),
            _ => None,
        }
    }

    pub fn is_null(&self) -> bool {
        matches!(self, Value::Null)
    }
}

/// Catalog rows as an engine reports them, before validation.
#[derive(Debug, Clone, Default)]
pub struct RawTable {
    pub name: String,
    pub comment: Option<String>,
    pub columns: Vec<RawColumn>,
    /// Primary-key column names in key order.
    pub primary_key: Vec<String>,
    pub foreign_keys: Vec<ForeignKey>,
}

#[derive(Debug, Clone, Default)]
pub struct RawColumn {
    pub name: String,
    pub declared_type: String,
    pub nullable: bool,
    pub declared_unique: bool,
    pub comment: Option<String>,
}

/// A live, read-only handle on one database.
///
/// A handle runs one query at a time; concurrent profiling opens one handle
/// per worker.
pub trait Connection: Send {
    fn engine(&self) -> Engine;

    /// User tables in catalog order with their columns, keys and comments.
    fn read_catalog(&mut self) -> Result<Vec<RawTable>, DbError>;

    fn query(&mut self, sql: &str) -> Result<Vec<Vec<Value>>, DbError>;
}

pub fn connect(spec: &ConnectionSpec) -> Result<Box<dyn Connection>, DbError> {
    match spec.engine() {
        Engine::Sqlite => Ok(Box::new(sqlite::SqliteConnection::open(spec)?)),
        #[cfg(feature = "postgres")]
        Engine::Postgresql => Ok(Box::new(postgres::PgConnection::open(spec)?)),
        #[cfg(feature = "mysql")]
        Engine::Mysql => Ok(Box::new(mysql::MysqlConnection::open(spec)?)),
        #[allow(unreachable_patterns)]
        engine => Err(DbError::EngineNotBuilt(engine)),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ForeignKey {
    pub from_table: String,
    pub from_column: String,
    pub to_table: String,
    pub to_column: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnMeta {
    pub name: String,
    pub declared_type: String,
    pub normalized_type: NormalizedType,
    pub nullable: bool,
    pub is_primary_key: bool,
    /// Declared single-column UNIQUE constraint, when the catalog exposes one.
    /// Observed uniqueness lives in [`crate::profile::ColumnProfile::is_unique`].
    #[serde(default)]
    pub declared_unique: bool,
    pub original_comment: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableMeta {
    pub name: String,
    pub columns: Vec<ColumnMeta>,
    pub primary_key: Vec<String>,
    pub original_comment: Option<String>,
}

impl TableMeta {
    pub fn column(&self, name: &str) -> Option<&ColumnMeta> {
        self.columns.iter().find(|c| c.name == name)
    }
}

/// Immutable image of one database.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemaSnapshot {
    pub db_id: String,
    pub engine: Engine,
    pub tables: Vec<TableMeta>,
    pub foreign_keys: Vec<ForeignKey>,
}

impl SchemaSnapshot {
    /// Validates raw catalog data and builds a snapshot.
    ///
    /// Foreign keys whose endpoints are not in the snapshot (for example a
    /// reference into another schema) are dropped with a warning.
    pub fn from_raw(db_id: impl Into<String>, engine: Engine, raw: Vec<RawTable>) -> Result<Self, DbError> {
        let db_id = db_id.into();
        if raw.is_empty() {
            return Err(DbError::EmptyDatabase(db_id));
        }
        let mut seen_tables = HashSet::new();
        let mut tables = Vec::with_capacity(raw.len());
        let mut foreign_keys = Vec::new();
        for t in raw {
            if !seen_tables.insert(t.name.clone()) {
                return Err(DbError::Catalog(format!("duplicate table `{}`", t.name)));
            }
            let mut seen_cols = HashSet::new();
            for c in &t.columns {
                if !seen_cols.insert(c.name.as_str()) {
                    return Err(DbError::Catalog(format!("duplicate column `{}.{}`", t.name, c.name)));
                }
            }
            for pk in &t.primary_key {
                if !seen_cols.contains(pk.as_str()) {
                    return Err(DbError::Catalog(format!(
                        "primary key column `{}.{pk}` does not exist",
                        t.name
                    )));
                }
            }
            let pk: HashSet<&str> = t.primary_key.iter().map(String::as_str).collect();
            let columns = t
                .columns
                .iter()
                .map(|c| ColumnMeta {
                    name: c.name.clone(),
                    declared_type: c.declared_type.clone(),
                    normalized_type: types::normalize(engine, &c.declared_type),
                    nullable: c.nullable,
                    is_primary_key: pk.contains(c.name.as_str()),
                    declared_unique: c.declared_unique,
                    original_comment: clean_comment(c.comment.as_deref()),
                })
                .collect();
            foreign_keys.extend(t.foreign_keys.iter().cloned());
            tables.push(TableMeta {
                name: t.name.clone(),
                columns,
                primary_key: t.primary_key.clone(),
                original_comment: clean_comment(t.comment.as_deref()),
            });
        }

        let known: HashMap<&str, HashSet<&str>> = tables
            .iter()
            .map(|t| (t.name.as_str(), t.columns.iter().map(|c| c.name.as_str()).collect()))
            .collect();
        let exists = |table: &str, column: &str| known.get(table).is_some_and(|cols| cols.contains(column));
        let mut kept = BTreeSet::new();
        for fk in foreign_keys {
            if exists(&fk.from_table, &fk.from_column) && exists(&fk.to_table, &fk.to_column) {
                kept.insert(fk);
            } else {
                log::warn!(
                    "dropping foreign key {}.{} -> {}.{}: endpoint not in snapshot",
                    fk.from_table,
                    fk.from_column,
                    fk.to_table,
                    fk.to_column
                );
            }
        }

        Ok(SchemaSnapshot {
            db_id,
            engine,
            tables,
            foreign_keys: kept.into_iter().collect(),
        })
    }

    pub fn table(&self, name: &str) -> Option<&TableMeta> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn column_count(&self) -> usize {
        self.tables.iter().map(|t| t.columns.len()).sum()
    }
}

fn clean_comment(comment: Option<&str>) -> Option<String> {
    comment.map(str::trim).filter(|c| !c.is_empty()).map(str::to_string)
}

/// Reads the full catalog of the database behind `spec`.
pub fn introspect_database(spec: &ConnectionSpec) -> Result<SchemaSnapshot, DbError> {
    let mut conn = connect(spec)?;
    introspect_with(conn.as_mut(), spec.db_id())
}

pub fn introspect_with(conn: &mut dyn Connection, db_id: String) -> Result<SchemaSnapshot, DbError> {
    let raw = conn.read_catalog()?;
    SchemaSnapshot::from_raw(db_id, conn.engine(), raw)
}
