//! Declared-type normalization.
//!
//! | normalized | SQLite (affinity-style, substring)          | MySQL (`COLUMN_TYPE`)                          | PostgreSQL (`format_type`)                 |
//! |------------|---------------------------------------------|------------------------------------------------|--------------------------------------------|
//! | boolean    | `BOOL`, `BOOLEAN`                           | `bool`, `boolean`, `tinyint(1)`, `bit(1)`      | `boolean`                                  |
//! | datetime   | `DATE`, `DATETIME`, `TIMESTAMP*`, `TIME`    | `date`, `datetime`, `timestamp`, `time`, `year`| `date`, `timestamp*`, `time*`              |
//! | integer    | contains `INT`                              | `tinyint`..`bigint`, `int`, `integer`          | `smallint`, `integer`, `bigint`            |
//! | text       | contains `CHAR`, `CLOB`, `TEXT`             | `char`, `varchar`, `*text`, `enum`, `set`      | `text`, `character*`, `"char"`, `name`, `citext` |
//! | blob       | contains `BLOB`                             | `binary`, `varbinary`, `*blob`                 | `bytea`                                    |
//! | real       | contains `REAL`, `FLOA`, `DOUB`, `NUMERIC`, `DECIMAL` | `decimal`, `numeric`, `float`, `double`, `real` | `real`, `double precision`, `numeric*` |
//! | other      | anything else, including an empty type      | anything else (`json`, `geometry`, ...)        | anything else (`uuid`, `json`, arrays, ...) |

use serde::{Deserialize, Serialize};

use super::Engine;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormalizedType {
    Integer,
    Real,
    Text,
    Blob,
    Datetime,
    Boolean,
    Other,
}

impl NormalizedType {
    pub fn as_str(self) -> &'static str {
        match self {
            NormalizedType::Integer => "integer",
            NormalizedType::Real => "real",
            NormalizedType::Text => "text",
            NormalizedType::Blob => "blob",
            NormalizedType::Datetime => "datetime",
            NormalizedType::Boolean => "boolean",
            NormalizedType::Other => "other",
        }
    }

    pub fn is_numeric(self) -> bool {
        matches!(self, NormalizedType::Integer | NormalizedType::Real)
    }

    pub fn is_text_like(self) -> bool {
        self == NormalizedType::Text
    }
}

pub fn normalize(engine: Engine, declared: &str) -> NormalizedType {
    match engine {
        Engine::Sqlite => normalize_sqlite(declared),
        Engine::Mysql => normalize_mysql(declared),
        Engine::Postgresql => normalize_postgres(declared),
    }
}

fn normalize_sqlite(declared: &str) -> NormalizedType {
    let t = declared.trim().to_ascii_uppercase();
    let base = base_name(&t);
    if base.is_empty() {
        return NormalizedType::Other;
    }
    if base == "BOOL" || base == "BOOLEAN" {
        return NormalizedType::Boolean;
    }
    if base == "DATE" || base == "DATETIME" || base == "TIME" || base.starts_with("TIMESTAMP") {
        return NormalizedType::Datetime;
    }
    if t.contains("INT") {
        NormalizedType::Integer
    } else if t.contains("CHAR") || t.contains("CLOB") || t.contains("TEXT") {
        NormalizedType::Text
    } else if t.contains("BLOB") {
        NormalizedType::Blob
    } else if t.contains("REAL") || t.contains("FLOA") || t.contains("DOUB") || t.contains("NUMERIC") || t.contains("DECIMAL") {
        NormalizedType::Real
    } else {
        NormalizedType::Other
    }
}

fn normalize_mysql(declared: &str) -> NormalizedType {
    let t = declared.trim().to_ascii_lowercase();
    let compact: String = t.chars().filter(|c| !c.is_whitespace()).collect();
    if compact.starts_with("tinyint(1)") || compact.starts_with("bit(1)") {
        return NormalizedType::Boolean;
    }
    match base_name(&t).as_str() {
        "bool" | "boolean" => NormalizedType::Boolean,
        "tinyint" | "smallint" | "mediumint" | "int" | "integer" | "bigint" => NormalizedType::Integer,
        "decimal" | "numeric" | "dec" | "fixed" | "float" | "double" | "real" => NormalizedType::Real,
        "date" | "datetime" | "timestamp" | "time" | "year" => NormalizedType::Datetime,
        "char" | "varchar" | "tinytext" | "text" | "mediumtext" | "longtext" | "enum" | "set" => NormalizedType::Text,
        "binary" | "varbinary" | "tinyblob" | "blob" | "mediumblob" | "longblob" => NormalizedType::Blob,
        _ => NormalizedType::Other,
    }
}

fn normalize_postgres(declared: &str) -> NormalizedType {
    let t = declared.trim().to_ascii_lowercase();
    if t.ends_with("[]") {
        return NormalizedType::Other;
    }
    let base = base_name(&t);
    match base.as_str() {
        "boolean" | "bool" => NormalizedType::Boolean,
        "smallint" | "integer" | "bigint" | "int" | "int2" | "int4" | "int8" | "smallserial" | "serial" | "bigserial" => {
            NormalizedType::Integer
        }
        "real" | "double precision" | "float4" | "float8" | "numeric" | "decimal" => NormalizedType::Real,
        "text" | "character varying" | "character" | "varchar" | "char" | "\"char\"" | "name" | "citext" | "bpchar" => {
            NormalizedType::Text
        }
        "bytea" => NormalizedType::Blob,
        "date" => NormalizedType::Datetime,
        b if b.starts_with("timestamp") || b.starts_with("time") => NormalizedType::Datetime,
        _ => NormalizedType::Other,
    }
}

/// Type name with any `(n, m)` modifier and trailing qualifiers removed.
/// `TIMESTAMP WITH TIME ZONE` stays whole; `VARCHAR(20)` becomes `VARCHAR`.
pub(crate) fn base_name(declared: &str) -> String {
    let head = match declared.find('(') {
        Some(i) => &declared[..i],
        None => declared,
    };
    let head = head.trim();
    head.trim_end_matches(" unsigned")
        .trim_end_matches(" UNSIGNED")
        .trim_end_matches(" zerofill")
        .trim()
        .to_string()
}
