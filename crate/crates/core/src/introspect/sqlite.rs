use rusqlite::types::ValueRef;
use rusqlite::{Connection as RawConn, OpenFlags};

use super::ddl::parse_create_table_comments;
use super::{Connection, ConnectionSpec, DbError, Engine, ForeignKey, RawColumn, RawTable, Value};

pub(crate) struct SqliteConnection {
    conn: RawConn,
}

impl SqliteConnection {
    pub(crate) fn open(spec: &ConnectionSpec) -> Result<Self, DbError> {
        let path = spec.sqlite_path().unwrap_or_default();
        let conn = RawConn::open_with_flags(
            path,
            OpenFlags::SQLITE_OPEN_READ_ONLY | OpenFlags::SQLITE_OPEN_NO_MUTEX | OpenFlags::SQLITE_OPEN_URI,
        )
        .map_err(|e| DbError::Connect {
            url: spec.redacted(),
            message: e.to_string(),
        })?;
        // A file that is not a database only fails on first read.
        conn.query_row("SELECT COUNT(*) FROM sqlite_master", [], |r| r.get::<_, i64>(0))
            .map_err(|e| DbError::Connect {
                url: spec.redacted(),
                message: e.to_string(),
            })?;
        Ok(SqliteConnection { conn })
    }

    fn pragma_rows(&self, sql: &str) -> Result<Vec<Vec<Value>>, DbError> {
        run(&self.conn, sql)
    }
}

fn run(conn: &RawConn, sql: &str) -> Result<Vec<Vec<Value>>, DbError> {
    let mut stmt = conn.prepare(sql).map_err(|e| DbError::query(sql, e))?;
    let width = stmt.column_count();
    let mut rows = stmt.query([]).map_err(|e| DbError::query(sql, e))?;
    let mut out = Vec::new();
    while let Some(row) = rows.next().map_err(|e| DbError::query(sql, e))? {
        let mut values = Vec::with_capacity(width);
        for i in 0..width {
            let v = row.get_ref(i).map_err(|e| DbError::query(sql, e))?;
            values.push(match v {
                ValueRef::Null => Value::Null,
                ValueRef::Integer(i) => Value::Integer(i),
                ValueRef::Real(r) => Value::Real(r),
                ValueRef::Text(t) => Value::Text(String::from_utf8_lossy(t).into_owned()),
                ValueRef::Blob(b) => Value::Blob(b.to_vec()),
            });
        }
        out.push(values);
    }
    Ok(out)
}

fn text(v: &Value) -> String {
    match v {
        Value::Text(s) => s.clone(),
        Value::Integer(i) => i.to_string(),
        _ => String::new(),
    }
}

fn int(v: &Value) -> i64 {
    match v {
        Value::Integer(i) => *i,
        _ => 0,
    }
}

impl Connection for SqliteConnection {
    fn engine(&self) -> Engine {
        Engine::Sqlite
    }

    fn read_catalog(&mut self) -> Result<Vec<RawTable>, DbError> {
        let tables = self.pragma_rows(
            "SELECT name, sql FROM sqlite_master \
             WHERE type = 'table' AND name NOT LIKE 'sqlite\\_%' ESCAPE '\\' \
             ORDER BY rowid, name",
        )?;
        let mut out = Vec::with_capacity(tables.len());
        for row in tables {
            let name = text(&row[0]);
            let create_sql = text(&row[1]);
            let comments = parse_create_table_comments(&create_sql);
            let quoted = Engine::Sqlite.quote_ident(&name);

            // cid, name, type, notnull, dflt_value, pk
            let info = self.pragma_rows(&format!("PRAGMA table_info({quoted})"))?;
            let mut pk: Vec<(i64, String)> = Vec::new();
            let mut columns = Vec::with_capacity(info.len());
            for col in &info {
                let col_name = text(&col[1]);
                let pk_pos = int(&col[5]);
                if pk_pos > 0 {
                    pk.push((pk_pos, col_name.clone()));
                }
                columns.push(RawColumn {
                    comment: comments.column(&col_name).map(str::to_string),
                    declared_type: text(&col[2]),
                    // PRIMARY KEY does not imply NOT NULL in SQLite, except
                    // for the INTEGER PRIMARY KEY rowid alias.
                    nullable: int(&col[3]) == 0 && !(pk_pos > 0 && text(&col[2]).eq_ignore_ascii_case("INTEGER")),
                    declared_unique: false,
                    name: col_name,
                });
            }
            pk.sort();

            // seq, name, unique, origin, partial
            let indexes = self.pragma_rows(&format!("PRAGMA index_list({quoted})"))?;
            for idx in indexes {
                if int(&idx[2]) != 1 || text(&idx[4]) == "1" {
                    continue;
                }
                let idx_name = Engine::Sqlite.quote_ident(&text(&idx[1]));
                let cols = self.pragma_rows(&format!("PRAGMA index_info({idx_name})"))?;
                if let [only] = cols.as_slice() {
                    let col_name = text(&only[2]);
                    if let Some(c) = columns.iter_mut().find(|c| c.name == col_name) {
                        c.declared_unique = true;
                    }
                }
            }
            if let [(_, only)] = pk.as_slice() {
                if let Some(c) = columns.iter_mut().find(|c| &c.name == only) {
                    c.declared_unique = true;
                }
            }

            // id, seq, table, from, to, on_update, on_delete, match
            let fks = self.pragma_rows(&format!("PRAGMA foreign_key_list({quoted})"))?;
            let mut foreign_keys = Vec::with_capacity(fks.len());
            for fk in fks {
                let to_table = text(&fk[2]);
                let from_column = text(&fk[3]);
                let to_column = match &fk[4] {
                    Value::Null => {
                        // Implicit reference to the parent's primary key.
                        let seq = int(&fk[1]) as usize;
                        let parent = Engine::Sqlite.quote_ident(&to_table);
                        let mut parent_pk: Vec<(i64, String)> = self
                            .pragma_rows(&format!("PRAGMA table_info({parent})"))?
                            .iter()
                            .filter(|c| int(&c[5]) > 0)
                            .map(|c| (int(&c[5]), text(&c[1])))
                            .collect();
                        parent_pk.sort();
                        match parent_pk.get(seq) {
                            Some((_, c)) => c.clone(),
                            None => continue,
                        }
                    }
                    v => text(v),
                };
                foreign_keys.push(ForeignKey {
                    from_table: name.clone(),
                    from_column,
                    to_table,
                    to_column,
                });
            }

            out.push(RawTable {
                name,
                comment: comments.table.clone(),
                columns,
                primary_key: pk.into_iter().map(|(_, c)| c).collect(),
                foreign_keys,
            });
        }
        Ok(out)
    }

    fn query(&mut self, sql: &str) -> Result<Vec<Vec<Value>>, DbError> {
        run(&self.conn, sql)
    }
}
