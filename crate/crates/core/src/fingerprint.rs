//! Content digest of a [`SchemaSnapshot`], used to key the model-reply cache.

use sha2::{Digest, Sha256};

use crate::introspect::SchemaSnapshot;

/// Hex SHA-256 over a canonical rendering of the snapshot. Names, types,
/// nullability, keys and comments all feed the digest; foreign keys are
/// sorted first so their catalog order does not matter.
pub fn snapshot_fingerprint(snapshot: &SchemaSnapshot) -> String {
    let mut h = Sha256::new();
    let mut field = |tag: &str, value: &str| {
        // Length-prefixed so adjacent fields cannot run together.
        h.update(tag.as_bytes());
        h.update((value.len() as u64).to_le_bytes());
        h.update(value.as_bytes());
    };
    field("db", &snapshot.db_id);
    field("engine", snapshot.engine.as_str());
    for t in &snapshot.tables {
        field("table", &t.name);
        field("table_comment", t.original_comment.as_deref().unwrap_or("\u{0}"));
        field("pk", &t.primary_key.join("\u{1}"));
        for c in &t.columns {
            field("column", &c.name);
            field("type", &c.declared_type);
            field("normalized", c.normalized_type.as_str());
            field("nullable", if c.nullable { "1" } else { "0" });
            field("is_pk", if c.is_primary_key { "1" } else { "0" });
            field("unique", if c.declared_unique { "1" } else { "0" });
            field("comment", c.original_comment.as_deref().unwrap_or("\u{0}"));
        }
    }
    let mut fks = snapshot.foreign_keys.clone();
    fks.sort();
    for fk in &fks {
        field("fk", &format!("{}\u{1}{}\u{1}{}\u{1}{}", fk.from_table, fk.from_column, fk.to_table, fk.to_column));
    }
    hex::encode(h.finalize())
}
