//! Command-line arguments and their resolution into a [`RunConfig`].
//!
//! Each setting comes from the first of: command-line flag, `DBDESC_*`
//! environment variable, config file. The API key is only ever read from
//! `DBDESC_API_KEY`.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use dbdesc_core::{ConnectionSpec, GenerationMode};
use serde::Deserialize;

use crate::error::CliError;

pub const DEFAULT_MAX_INFLIGHT: usize = 8;

#[derive(Debug, Parser)]
#[command(name = "dbdesc", version, about = "Generate table and column descriptions for a database and emit M-Schema")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Describe a database and write `<db_id>.mschema` and `<db_id>.json`.
    Generate(GenerateArgs),
    /// Print the profile and category of every column.
    Inspect(InspectArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// Connection URL: sqlite:///path.db, mysql://..., postgresql://...
    #[arg(long, env = "DBDESC_DB")]
    pub db: Option<String>,
    /// TOML file with defaults for any of these settings.
    #[arg(long, env = "DBDESC_CONFIG")]
    pub config: Option<PathBuf>,
    /// Scripted model fixture (JSON).
    #[arg(long, env = "DBDESC_MOCK")]
    pub mock: Option<PathBuf>,
    /// Base URL of a chat-completions API.
    #[arg(long, env = "DBDESC_ENDPOINT")]
    pub endpoint: Option<String>,
    /// Model name sent to the endpoint.
    #[arg(long, env = "DBDESC_MODEL")]
    pub model: Option<String>,
    /// Reply cache file (JSON lines).
    #[arg(long, env = "DBDESC_CACHE")]
    pub cache: Option<PathBuf>,
    /// Profile only the first N rows of each table, by primary key.
    #[arg(long, env = "DBDESC_PROFILE_ROW_LIMIT")]
    pub profile_row_limit: Option<u64>,
    /// Concurrent model requests and profiling connections.
    #[arg(long, env = "DBDESC_MAX_INFLIGHT")]
    pub max_inflight: Option<usize>,
    #[arg(long, env = "DBDESC_SEED")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// no_comment, origin, generation or merge.
    #[arg(long, env = "DBDESC_MODE")]
    pub mode: Option<String>,
    /// Output directory.
    #[arg(long, env = "DBDESC_OUT")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct InspectArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Never ask the model; undecided columns get the fallback category.
    #[arg(long)]
    pub rules_only: bool,
    #[arg(long)]
    pub json: bool,
}

/// Settings read from `--config`.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub db: Option<String>,
    pub mode: Option<String>,
    pub mock: Option<PathBuf>,
    pub endpoint: Option<String>,
    pub model: Option<String>,
    pub out: Option<PathBuf>,
    pub cache: Option<PathBuf>,
    pub profile_row_limit: Option<u64>,
    pub max_inflight: Option<usize>,
    pub seed: Option<u64>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config file {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| e.message().to_string())?;
        if table.keys().any(|k| k.contains("key") || k.contains("secret") || k.contains("token")) {
            return Err(format!("secrets are not read from files; set {}", dbdesc_core::model::http::API_KEY_ENV));
        }
        table.try_into().map_err(|e: toml::de::Error| e.message().to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Backend {
    None,
    Mock(PathBuf),
    Live { endpoint: String, model: String },
}

impl Backend {
    pub fn is_some(&self) -> bool {
        !matches!(self, Backend::None)
    }
}

/// Fully resolved settings of one run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub db: ConnectionSpec,
    pub mode: GenerationMode,
    pub backend: Backend,
    pub out: PathBuf,
    pub cache: Option<PathBuf>,
    pub profile_row_limit: Option<u64>,
    pub max_inflight: usize,
    pub seed: u64,
}

fn load_file(common: &CommonArgs) -> Result<FileConfig, CliError> {
    match &common.config {
        Some(path) => FileConfig::load(path),
        None => Ok(FileConfig::default()),
    }
}

fn resolve_common(common: &CommonArgs, file: &FileConfig) -> Result<(ConnectionSpec, Backend, RunDefaults), CliError> {
    let url = common
        .db
        .clone()
        .or_else(|| file.db.clone())
        .ok_or_else(|| CliError::Config("no database given (--db or DBDESC_DB)".into()))?;
    let db: ConnectionSpec = url.parse().map_err(|e| CliError::Config(format!("{e}")))?;

    let mock = common.mock.clone().or_else(|| file.mock.clone());
    let endpoint = common.endpoint.clone().or_else(|| file.endpoint.clone());
    let model = common.model.clone().or_else(|| file.model.clone());
    let backend = match (mock, endpoint) {
        (Some(_), Some(_)) => {
            return Err(CliError::Config("--mock and --endpoint are mutually exclusive".into()));
        }
        (Some(path), None) => {
            if model.is_some() {
                return Err(CliError::Config("--model only applies to --endpoint".into()));
            }
            Backend::Mock(path)
        }
        (None, Some(endpoint)) => Backend::Live {
            endpoint,
            model: model.ok_or_else(|| CliError::Config("--endpoint needs --model".into()))?,
        },
        (None, None) if model.is_some() => {
            return Err(CliError::Config("--model needs --endpoint".into()));
        }
        (None, None) => Backend::None,
    };

    let max_inflight = common.max_inflight.or(file.max_inflight).unwrap_or(DEFAULT_MAX_INFLIGHT);
    if max_inflight == 0 {
        return Err(CliError::Config("--max-inflight must be at least 1".into()));
    }
    let profile_row_limit = common.profile_row_limit.or(file.profile_row_limit);
    if profile_row_limit == Some(0) {
        return Err(CliError::Config("--profile-row-limit must be at least 1".into()));
    }
    Ok((
        db,
        backend,
        RunDefaults {
            cache: common.cache.clone().or_else(|| file.cache.clone()),
            profile_row_limit,
            max_inflight,
            seed: common.seed.or(file.seed).unwrap_or(0),
        },
    ))
}

struct RunDefaults {
    cache: Option<PathBuf>,
    profile_row_limit: Option<u64>,
    max_inflight: usize,
    seed: u64,
}

impl GenerateArgs {
    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let file = load_file(&self.common)?;
        let (db, backend, d) = resolve_common(&self.common, &file)?;
        let mode: GenerationMode = self
            .mode
            .clone()
            .or_else(|| file.mode.clone())
            .ok_or_else(|| CliError::Config("no mode given (--mode or DBDESC_MODE)".into()))?
            .parse()
            .map_err(CliError::Config)?;
        match (mode.uses_model(), backend.is_some()) {
            (true, false) => {
                return Err(CliError::Config(format!("{mode} mode needs --mock or --endpoint")));
            }
            (false, true) => {
                return Err(CliError::Config(format!("{mode} mode does not use a model; drop --mock/--endpoint")));
            }
            _ => {}
        }
        let out = self.out.clone().or_else(|| file.out.clone()).unwrap_or_else(|| PathBuf::from("."));
        let cache = match d.cache {
            Some(c) => Some(c),
            None if backend.is_some() => Some(out.join(format!("{}.cache.jsonl", db.db_id()))),
            None => None,
        };
        Ok(RunConfig {
            db,
            mode,
            backend,
            out,
            cache,
            profile_row_limit: d.profile_row_limit,
            max_inflight: d.max_inflight,
            seed: d.seed,
        })
    }
}

impl InspectArgs {
    /// Inspect keeps its cache in memory unless `--cache` is given.
    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let file = load_file(&self.common)?;
        let (db, backend, d) = resolve_common(&self.common, &file)?;
        let backend = if self.rules_only { Backend::None } else { backend };
        Ok(RunConfig {
            db,
            mode: GenerationMode::NoComment,
            backend,
            out: PathBuf::from("."),
            cache: d.cache,
            profile_row_limit: d.profile_row_limit,
            max_inflight: d.max_inflight,
            seed: d.seed,
        })
    }
}
