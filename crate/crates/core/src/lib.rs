//! Automatic table and column descriptions for relational databases.
//!
//! The crate walks a database in two passes. The coarse-to-fine pass builds
//! an understanding of the whole database, then of each table, then of the
//! columns inside it. The fine-to-coarse pass turns the column descriptions
//! back into a summary for each table. The enriched schema is emitted as an
//! M-Schema document.
//!
//! The main entry points, in pipeline order:
//!
//! - [`introspect::introspect_database`] reads the catalog into a [`SchemaSnapshot`].
//! - [`profile::profile_snapshot`] computes per-column statistics.
//! - [`classify::classify_snapshot`] assigns every column a [`FieldCategory`].
//! - [`pipeline::run_pipeline`] drives the model through the analysis stages.
//! - [`mschema::resolve_descriptions`] applies a [`GenerationMode`] and
//!   [`mschema::serialize_mschema`] renders the final document.

pub mod classify;
pub mod exec;
pub mod fingerprint;
pub mod introspect;
pub mod model;
pub mod mschema;
pub mod pipeline;
pub mod profile;
pub mod prompt;
pub mod words;

pub use classify::{CategoryKind, FieldCategory, Granularity};
pub use exec::Executor;
pub use introspect::{ConnectionSpec, Engine, SchemaSnapshot};
pub use model::DescriptionModel;
pub use mschema::{GenerationMode, MSchemaDoc};
pub use pipeline::AnalysisContext;
pub use profile::ColumnProfile;
