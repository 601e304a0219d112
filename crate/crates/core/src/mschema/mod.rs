//! M-Schema documents: mode resolution, text serialization and JSON export.

mod text;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use text::{parse_mschema, serialize_mschema, ParseError};

use crate::introspect::{ForeignKey, SchemaSnapshot};
use crate::pipeline::{AnalysisContext, Description, Source};
use crate::profile::{find_table, TableProfile};

/// Examples shown per column.
pub const MAX_EXAMPLES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GenerationMode {
    /// All descriptions removed.
    NoComment,
    /// Catalog comments only.
    Origin,
    /// Generated descriptions everywhere.
    Generation,
    /// Catalog comments where present, generated text elsewhere.
    Merge,
}

impl GenerationMode {
    pub const ALL: [GenerationMode; 4] = [
        GenerationMode::NoComment,
        GenerationMode::Origin,
        GenerationMode::Generation,
        GenerationMode::Merge,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            GenerationMode::NoComment => "no_comment",
            GenerationMode::Origin => "origin",
            GenerationMode::Generation => "generation",
            GenerationMode::Merge => "merge",
        }
    }

    pub fn uses_model(self) -> bool {
        matches!(self, GenerationMode::Generation | GenerationMode::Merge)
    }
}

impl fmt::Display for GenerationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GenerationMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown mode `{s}` (expected no_comment, origin, generation or merge)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlotSource {
    Origin,
    Generated,
    Empty,
}

/// A description slot and where its text came from.
///
/// Equality compares the text only: the text grammar does not carry
/// provenance, so a parsed document equals its source document. Use
/// [`MSchemaDoc::same_provenance`] to compare sources.
#[derive(Debug, Clone, Eq, Serialize, Deserialize)]
pub struct Slot {
    text: Option<String>,
    source: SlotSource,
}

impl PartialEq for Slot {
    fn eq(&self, other: &Self) -> bool {
        self.text == other.text
    }
}

impl Slot {
    pub fn empty() -> Self {
        Slot {
            text: None,
            source: SlotSource::Empty,
        }
    }

    fn with(text: &str, source: SlotSource) -> Self {
        if text.is_empty() {
            Self::empty()
        } else {
            Slot {
                text: Some(text.to_string()),
                source,
            }
        }
    }

    pub fn origin(text: &str) -> Self {
        Self::with(text, SlotSource::Origin)
    }

    pub fn generated(text: &str) -> Self {
        Self::with(text, SlotSource::Generated)
    }

    pub fn text(&self) -> Option<&str> {
        self.text.as_deref()
    }

    pub fn source(&self) -> SlotSource {
        self.source
    }

    pub fn is_empty(&self) -> bool {
        self.text.is_none()
    }

    fn from_description(d: &Description) -> Self {
        match d.source {
            Source::Origin => Self::origin(&d.text),
            Source::Generated => Self::generated(&d.text),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MColumn {
    pub name: String,
    #[serde(rename = "type")]
    pub ty: String,
    pub description: Slot,
    pub primary_key: bool,
    pub examples: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MTable {
    pub name: String,
    pub description: Slot,
    pub columns: Vec<MColumn>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MSchemaDoc {
    pub db_id: String,
    pub tables: Vec<MTable>,
    pub foreign_keys: Vec<ForeignKey>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AssemblyError {
    #[error("{mode} mode needs a description for {target}, but the analysis context has none")]
    IncompleteContext { mode: GenerationMode, target: String },
}

impl MSchemaDoc {
    pub fn to_text(&self) -> String {
        serialize_mschema(self)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("document serializes");
        s.push('\n');
        s
    }

    pub fn from_json(json: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(json)
    }

    /// Copy with every description slot emptied.
    pub fn strip_descriptions(&self) -> MSchemaDoc {
        let mut doc = self.clone();
        for t in &mut doc.tables {
            t.description = Slot::empty();
            for c in &mut t.columns {
                c.description = Slot::empty();
            }
        }
        doc
    }

    /// Equal including the source of every slot.
    pub fn same_provenance(&self, other: &MSchemaDoc) -> bool {
        self == other
            && self.slots().zip(other.slots()).all(|(a, b)| a.source == b.source)
    }

    /// Table slots followed by their column slots, in document order.
    pub fn slots(&self) -> impl Iterator<Item = &Slot> {
        self.tables
            .iter()
            .flat_map(|t| std::iter::once(&t.description).chain(t.columns.iter().map(|c| &c.description)))
    }
}

fn column_type(declared: &str, normalized: &str) -> String {
    if declared.trim().is_empty() {
        normalized.to_ascii_uppercase()
    } else {
        declared.to_ascii_uppercase()
    }
}

/// Builds the document for `mode`.
///
/// `generation` requires a generated description for every table and
/// column; `merge` requires one wherever the catalog has no comment.
pub fn resolve_descriptions(
    snapshot: &SchemaSnapshot,
    profiles: &[TableProfile],
    ctx: &AnalysisContext,
    mode: GenerationMode,
) -> Result<MSchemaDoc, AssemblyError> {
    let needed = |found: Option<&Description>, target: String| -> Result<Slot, AssemblyError> {
        match found {
            Some(d) if d.source == Source::Generated => Ok(Slot::from_description(d)),
            _ => Err(AssemblyError::IncompleteContext { mode, target }),
        }
    };
    let mut tables = Vec::with_capacity(snapshot.tables.len());
    for table in &snapshot.tables {
        let profile = find_table(profiles, &table.name);
        let mut columns = Vec::with_capacity(table.columns.len());
        for c in &table.columns {
            let description = match (mode, &c.original_comment) {
                (GenerationMode::NoComment, _) => Slot::empty(),
                (GenerationMode::Origin, comment) => comment.as_deref().map_or_else(Slot::empty, Slot::origin),
                (GenerationMode::Merge, Some(comment)) => Slot::origin(comment),
                (GenerationMode::Merge, None) | (GenerationMode::Generation, _) => needed(
                    ctx.column_description(&table.name, &c.name),
                    format!("column {}.{}", table.name, c.name),
                )?,
            };
            let examples = profile
                .and_then(|p| p.column(&c.name))
                .map(|p| p.samples.iter().take(MAX_EXAMPLES).cloned().collect())
                .unwrap_or_default();
            columns.push(MColumn {
                name: c.name.clone(),
                ty: column_type(&c.declared_type, c.normalized_type.as_str()),
                description,
                primary_key: c.is_primary_key,
                examples,
            });
        }
        let description = match (mode, &table.original_comment) {
            (GenerationMode::NoComment, _) => Slot::empty(),
            (GenerationMode::Origin, comment) => comment.as_deref().map_or_else(Slot::empty, Slot::origin),
            (GenerationMode::Merge, Some(comment)) => Slot::origin(comment),
            (GenerationMode::Merge, None) | (GenerationMode::Generation, _) => needed(
                ctx.table_descriptions.get(&table.name),
                format!("table {}", table.name),
            )?,
        };
        tables.push(MTable {
            name: table.name.clone(),
            description,
            columns,
        });
    }
    let mut foreign_keys = snapshot.foreign_keys.clone();
    foreign_keys.sort();
    Ok(MSchemaDoc {
        db_id: snapshot.db_id.clone(),
        tables,
        foreign_keys,
    })
}
