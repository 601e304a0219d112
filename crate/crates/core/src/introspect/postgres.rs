use postgres::types::Type;
use postgres::{Client, NoTls, Row};

use super::{Connection, ConnectionSpec, DbError, Engine, ForeignKey, RawColumn, RawTable, Value};

pub(crate) struct PgConnection {
    client: Client,
}

const TABLES: &str = "SELECT c.relname::text, obj_description(c.oid, 'pg_class') \
     FROM pg_class c JOIN pg_namespace n ON n.oid = c.relnamespace \
     WHERE c.relkind IN ('r', 'p') AND n.nspname = current_schema() \
     ORDER BY c.relname";

const COLUMNS: &str = "SELECT c.relname::text, a.attname::text, format_type(a.atttypid, a.atttypmod), \
            NOT a.attnotnull, col_description(c.oid, a.attnum) \
     FROM pg_attribute a \
     JOIN pg_class c ON c.oid = a.attrelid \
     JOIN pg_namespace n ON n.oid = c.relnamespace \
     WHERE c.relkind IN ('r', 'p') AND n.nspname = current_schema() \
       AND a.attnum > 0 AND NOT a.attisdropped \
     ORDER BY c.relname, a.attnum";

const KEYS: &str = "SELECT c.relname::text, con.contype::text, con.conname::text, a.attname::text, \
            cardinality(con.conkey)::bigint \
     FROM pg_constraint con \
     JOIN pg_class c ON c.oid = con.conrelid \
     JOIN pg_namespace n ON n.oid = c.relnamespace \
     CROSS JOIN LATERAL unnest(con.conkey) WITH ORDINALITY AS k(attnum, ord) \
     JOIN pg_attribute a ON a.attrelid = c.oid AND a.attnum = k.attnum \
     WHERE con.contype IN ('p', 'u') AND n.nspname = current_schema() \
     ORDER BY c.relname, con.conname, k.ord";

const FOREIGN_KEYS: &str = "SELECT c.relname::text, a.attname::text, fc.relname::text, fa.attname::text \
     FROM pg_constraint con \
     JOIN pg_class c ON c.oid = con.conrelid \
     JOIN pg_namespace n ON n.oid = c.relnamespace \
     JOIN pg_class fc ON fc.oid = con.confrelid \
     CROSS JOIN LATERAL unnest(con.conkey, con.confkey) AS k(attnum, fattnum) \
     JOIN pg_attribute a ON a.attrelid = con.conrelid AND a.attnum = k.attnum \
     JOIN pg_attribute fa ON fa.attrelid = con.confrelid AND fa.attnum = k.fattnum \
     WHERE con.contype = 'f' AND n.nspname = current_schema() \
     ORDER BY c.relname, con.conname";

impl PgConnection {
    pub(crate) fn open(spec: &ConnectionSpec) -> Result<Self, DbError> {
        let client = Client::connect(spec.url(), NoTls).map_err(|e| DbError::Connect {
            url: spec.redacted(),
            message: e.to_string(),
        })?;
        Ok(PgConnection { client })
    }
}

fn convert(row: &Row) -> Vec<Value> {
    (0..row.len())
        .map(|i| {
            let ty = row.columns()[i].type_();
            let v = match *ty {
                Type::BOOL => row.try_get::<_, Option<bool>>(i).ok().flatten().map(Value::Bool),
                Type::INT2 => row.try_get::<_, Option<i16>>(i).ok().flatten().map(|v| Value::Integer(v.into())),
                Type::INT4 => row.try_get::<_, Option<i32>>(i).ok().flatten().map(|v| Value::Integer(v.into())),
                Type::INT8 => row.try_get::<_, Option<i64>>(i).ok().flatten().map(Value::Integer),
                Type::FLOAT4 => row.try_get::<_, Option<f32>>(i).ok().flatten().map(|v| Value::Real(v.into())),
                Type::FLOAT8 => row.try_get::<_, Option<f64>>(i).ok().flatten().map(Value::Real),
                Type::BYTEA => row.try_get::<_, Option<Vec<u8>>>(i).ok().flatten().map(Value::Blob),
                _ => row.try_get::<_, Option<String>>(i).ok().flatten().map(Value::Text),
            };
            v.unwrap_or(Value::Null)
        })
        .collect()
}

fn s(v: &Value) -> String {
    match v {
        Value::Text(t) => t.clone(),
        _ => String::new(),
    }
}

impl Connection for PgConnection {
    fn engine(&self) -> Engine {
        Engine::Postgresql
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
                    nullable: matches!(r[3], Value::Bool(true)),
                    declared_unique: false,
                    comment: Some(s(&r[4])),
                });
            }
        }
        for r in self.query(KEYS)? {
            let Some(i) = index(&tables, &s(&r[0])) else { continue };
            let column = s(&r[3]);
            match s(&r[1]).as_str() {
                "p" => tables[i].primary_key.push(column),
                "u" if matches!(r[4], Value::Integer(1)) => {
                    if let Some(c) = tables[i].columns.iter_mut().find(|c| c.name == column) {
                        c.declared_unique = true;
                    }
                }
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
        for r in self.query(FOREIGN_KEYS)? {
            if let Some(i) = index(&tables, &s(&r[0])) {
                tables[i].foreign_keys.push(ForeignKey {
                    from_table: s(&r[0]),
                    from_column: s(&r[1]),
                    to_table: s(&r[2]),
                    to_column: s(&r[3]),
                });
            }
        }
        Ok(tables)
    }

    fn query(&mut self, sql: &str) -> Result<Vec<Vec<Value>>, DbError> {
        let rows = self.client.query(sql, &[]).map_err(|e| DbError::query(sql, e))?;
        Ok(rows.iter().map(convert).collect())
    }
}
