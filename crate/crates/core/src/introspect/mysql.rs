use mysql::consts::ColumnType;
use mysql::prelude::Queryable;
use mysql::{Conn, Opts};

use super::{Connection, ConnectionSpec, DbError, Engine, ForeignKey, RawColumn, RawTable, Value};

pub(crate) struct MysqlConnection {
    conn: Conn,
}

const TABLES: &str = "SELECT TABLE_NAME, TABLE_COMMENT FROM information_schema.TABLES \
     WHERE TABLE_SCHEMA = DATABASE() AND TABLE_TYPE = 'BASE TABLE' \
     ORDER BY TABLE_NAME";

const COLUMNS: &str = "SELECT TABLE_NAME, COLUMN_NAME, COLUMN_TYPE, IS_NULLABLE, COLUMN_COMMENT \
     FROM information_schema.COLUMNS WHERE TABLE_SCHEMA = DATABASE() \
     ORDER BY TABLE_NAME, ORDINAL_POSITION";

const KEYS: &str = "SELECT k.TABLE_NAME, tc.CONSTRAINT_TYPE, k.CONSTRAINT_NAME, k.COLUMN_NAME, \
            k.REFERENCED_TABLE_NAME, k.REFERENCED_COLUMN_NAME, \
            (SELECT COUNT(*) FROM information_schema.KEY_COLUMN_USAGE k2 \
              WHERE k2.TABLE_SCHEMA = k.TABLE_SCHEMA AND k2.TABLE_NAME = k.TABLE_NAME \
                AND k2.CONSTRAINT_NAME = k.CONSTRAINT_NAME) \
     FROM information_schema.KEY_COLUMN_USAGE k \
     JOIN information_schema.TABLE_CONSTRAINTS tc \
       ON tc.CONSTRAINT_SCHEMA = k.CONSTRAINT_SCHEMA AND tc.TABLE_NAME = k.TABLE_NAME \
      AND tc.CONSTRAINT_NAME = k.CONSTRAINT_NAME \
     WHERE k.TABLE_SCHEMA = DATABASE() \
     ORDER BY k.TABLE_NAME, k.CONSTRAINT_NAME, k.ORDINAL_POSITION";

impl MysqlConnection {
    pub(crate) fn open(spec: &ConnectionSpec) -> Result<Self, DbError> {
        let connect_err = |message: String| DbError::Connect {
            url: spec.redacted(),
            message,
        };
        let opts = Opts::from_url(spec.url()).map_err(|e| connect_err(e.to_string()))?;
        let conn = Conn::new(opts).map_err(|e| connect_err(e.to_string()))?;
        Ok(MysqlConnection { conn })
    }
}

/// Binary collation id; text columns carry a character-set collation.
const BINARY_CHARSET: u16 = 63;

fn convert(row: mysql::Row) -> Vec<Value> {
    let columns = row.columns();
    row.unwrap()
        .into_iter()
        .zip(columns.iter())
        .map(|(v, col)| match v {
            mysql::Value::NULL => Value::Null,
            mysql::Value::Int(i) => Value::Integer(i),
            mysql::Value::UInt(u) => i64::try_from(u).map(Value::Integer).unwrap_or(Value::Real(u as f64)),
            mysql::Value::Float(f) => Value::Real(f.into()),
            mysql::Value::Double(d) => Value::Real(d),
            mysql::Value::Bytes(bytes) => {
                use ColumnType::*;
                let text = || String::from_utf8_lossy(&bytes).into_owned();
                match col.column_type() {
                    MYSQL_TYPE_TINY | MYSQL_TYPE_SHORT | MYSQL_TYPE_LONG | MYSQL_TYPE_INT24 | MYSQL_TYPE_LONGLONG => {
                        text().parse().map(Value::Integer).unwrap_or_else(|_| Value::Text(text()))
                    }
                    MYSQL_TYPE_FLOAT | MYSQL_TYPE_DOUBLE | MYSQL_TYPE_DECIMAL | MYSQL_TYPE_NEWDECIMAL => {
                        text().parse().map(Value::Real).unwrap_or_else(|_| Value::Text(text()))
                    }
                    MYSQL_TYPE_TINY_BLOB | MYSQL_TYPE_MEDIUM_BLOB | MYSQL_TYPE_LONG_BLOB | MYSQL_TYPE_BLOB
                    | MYSQL_TYPE_VAR_STRING | MYSQL_TYPE_STRING
                        if col.character_set() == BINARY_CHARSET =>
                    {
                        Value::Blob(bytes)
                    }
                    _ => Value::Text(text()),
                }
            }
            other => Value::Text(other.as_sql(true).trim_matches('\'').to_string()),
        })
        .collect()
}

fn s(v: &Value) -> String {
    match v {
        Value::Text(t) => t.clone(),
        Value::Integer(i) => i.to_string(),
        _ => String::new(),
    }
}

impl Connection for MysqlConnection {
    fn engine(&self) -> Engine {
        Engine::Mysql
    }

    fn read_catalog(&mut self) -> Result<Vec<RawTable>, DbError> {
        let mut tables: Vec<RawTable> = self
            .query(TABLES)?
            .into_iter()
            .map(|r| RawTable {
                name: s(&r[0]),
                comment: Some(s(&r[1])),
                ..Default::default()
            })
            .collect();
        let index = |tables: &[RawTable], name: &str| tables.iter().position(|t| t.name == name);

        for r in self.query(COLUMNS)? {
            if let Some(i) = index(&tables, &s(&r[0])) {
                tables[i].columns.push(RawColumn {
                    name: s(&r[1]),
                    declared_type: s(&r[2]),
                    nullable: s(&r[3]).eq_ignore_ascii_case("YES"),
                    declared_unique: false,
                    comment: Some(s(&r[4])),
                });
            }
        }
        for r in self.query(KEYS)? {
            let table = s(&r[0]);
            let Some(i) = index(&tables, &table) else { continue };
            let column = s(&r[3]);
            match s(&r[1]).as_str() {
                "PRIMARY KEY" => tables[i].primary_key.push(column),
                "UNIQUE" if matches!(r[6], Value::Integer(1)) => {
                    if let Some(c) = tables[i].columns.iter_mut().find(|c| c.name == column) {
                        c.declared_unique = true;
                    }
                }
                "FOREIGN KEY" => tables[i].foreign_keys.push(ForeignKey {
                    from_table: table,
                    from_column: column,
                    to_table: s(&r[4]),
                    to_column: s(&r[5]),
                }),
                _ => {}
            }
        }
        for t in tables.iter_mut() {
            if let [only] = t.primary_key.as_slice() {
                let only = only.clone();
                if let Some(c) = t.columns.iter_mut().find(|c| c.name == only) {
                    c.declared_unique = true;
                }
            }
        }
        Ok(tables)
    }

    fn query(&mut self, sql: &str) -> Result<Vec<Vec<Value>>, DbError> {
        let rows: Vec<mysql::Row> = self.conn.query(sql).map_err(|e| DbError::query(sql, e))?;
        Ok(rows.into_iter().map(convert).collect())
    }
}
