use std::io::Write;
use std::path::Path;

use dbdesc_core::classify::{classify_snapshot, CategoryMap, ClassifierConfig, Decider};
use dbdesc_core::fingerprint::snapshot_fingerprint;
use dbdesc_core::introspect::introspect_database;
use dbdesc_core::model::{CachedModel, DescriptionModel, HttpModel, MockModel, Retrying, SamplingParams};
use dbdesc_core::mschema::resolve_descriptions;
use dbdesc_core::pipeline::{run_pipeline, PipelineConfig};
use dbdesc_core::profile::{profile_snapshot, ProfileOptions, TableProfile};
use dbdesc_core::prompt::TEMPLATE_VERSION;
use dbdesc_core::{Executor, SchemaSnapshot};
use serde::Serialize;

use crate::config::{Backend, RunConfig};
use crate::error::CliError;

type Model = CachedModel<Box<dyn DescriptionModel>>;

fn backend_model(backend: &Backend) -> Result<Option<Box<dyn DescriptionModel>>, CliError> {
    Ok(match backend {
        Backend::None => None,
        Backend::Mock(path) => Some(Box::new(MockModel::from_path(path).map_err(|e| CliError::Config(e.to_string()))?)),
        Backend::Live { endpoint, model } => Some(Box::new(Retrying::new(HttpModel::from_env(endpoint, model.clone())))),
    })
}

/// Wraps the backend in the reply cache: a file when `cfg.cache` is set,
/// memory otherwise.
fn cached_model(cfg: &RunConfig, snapshot: &SchemaSnapshot) -> Result<Option<Model>, CliError> {
    let Some(inner) = backend_model(&cfg.backend)? else {
        return Ok(None);
    };
    let fp = snapshot_fingerprint(snapshot);
    Ok(Some(match &cfg.cache {
        Some(path) => CachedModel::open(inner, path, fp, TEMPLATE_VERSION)?,
        None => CachedModel::in_memory(inner, fp, TEMPLATE_VERSION),
    }))
}

fn load(cfg: &RunConfig, exec: &Executor) -> Result<(SchemaSnapshot, Vec<TableProfile>), CliError> {
    let snapshot = introspect_database(&cfg.db)?;
    let opts = ProfileOptions {
        row_limit: cfg.profile_row_limit,
        ..ProfileOptions::default()
    };
    let profiles = profile_snapshot(&cfg.db, &snapshot, &opts, exec)?;
    Ok((snapshot, profiles))
}

fn params(cfg: &RunConfig) -> SamplingParams {
    SamplingParams {
        seed: cfg.seed,
        ..SamplingParams::default()
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

pub fn generate(cfg: &RunConfig, stdout: &mut dyn Write) -> Result<(), CliError> {
    // Check the fixture before touching the database.
    backend_model(&cfg.backend)?;
    let exec = Executor::with_max_inflight(cfg.max_inflight);
    let (snapshot, profiles) = load(cfg, &exec)?;
    std::fs::create_dir_all(&cfg.out).map_err(|e| CliError::io(&cfg.out, e))?;
    let model = cached_model(cfg, &snapshot)?;
    let dyn_model = model.as_ref().map(|m| m as &dyn DescriptionModel);
    let params = params(cfg);

    // Categories only feed the model stages.
    let categories = match dyn_model {
        Some(m) if cfg.mode.uses_model() => {
            classify_snapshot(&snapshot, &profiles, Some(m), &params, &ClassifierConfig::default(), &exec)?
        }
        _ => CategoryMap::new(),
    };
    let pipeline_cfg = PipelineConfig {
        params,
        ..PipelineConfig::default()
    };
    let unused = MockModel::synthetic().strict(true);
    let ctx = run_pipeline(
        &snapshot,
        &profiles,
        &categories,
        dyn_model.unwrap_or(&unused),
        cfg.mode,
        &pipeline_cfg,
        &exec,
    )?;
    let doc = resolve_descriptions(&snapshot, &profiles, &ctx, cfg.mode)?;

    let db_id = &snapshot.db_id;
    let text_path = cfg.out.join(format!("{db_id}.mschema"));
    let json_path = cfg.out.join(format!("{db_id}.json"));
    write_file(&text_path, &doc.to_text())?;
    write_file(&json_path, &doc.to_json())?;

    let stats = model.as_ref().map(|m| m.stats()).unwrap_or_default();
    writeln!(
        stdout,
        "{db_id}: {} tables, {} columns, mode {}, {} model calls, {} cache hits; wrote {} and {}",
        snapshot.tables.len(),
        snapshot.column_count(),
        cfg.mode,
        stats.misses,
        stats.hits,
        text_path.display(),
        json_path.display()
    )
    .map_err(|e| CliError::io("stdout", e))?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct ColumnRow<'a> {
    table: &'a str,
    column: &'a str,
    declared_type: &'a str,
    normalized_type: &'a str,
    primary_key: bool,
    comment: Option<&'a str>,
    category: &'a str,
    granularity: Option<&'a str>,
    decided_by: &'a str,
    row_count: u64,
    distinct_count: u64,
    null_count: u64,
    is_unique: bool,
    numeric_min: Option<f64>,
    numeric_max: Option<f64>,
    numeric_avg: Option<f64>,
    strlen_min: Option<u64>,
    strlen_max: Option<u64>,
    samples: &'a [String],
}

#[derive(Debug, Serialize)]
struct InspectReport<'a> {
    db_id: &'a str,
    engine: &'a str,
    foreign_keys: Vec<String>,
    columns: Vec<ColumnRow<'a>>,
    model_calls: u64,
}

fn fmt_num(v: Option<f64>) -> String {
    v.map(|v| format!("{v}")).unwrap_or_else(|| "-".into())
}

pub fn inspect(cfg: &RunConfig, json: bool, stdout: &mut dyn Write) -> Result<(), CliError> {
    backend_model(&cfg.backend)?;
    let exec = Executor::with_max_inflight(cfg.max_inflight);
    let (snapshot, profiles) = load(cfg, &exec)?;
    let model = cached_model(cfg, &snapshot)?;
    let dyn_model = model.as_ref().map(|m| m as &dyn DescriptionModel);
    let categories =
        classify_snapshot(&snapshot, &profiles, dyn_model, &params(cfg), &ClassifierConfig::default(), &exec)?;

    let mut rows = Vec::new();
    for (table, tp) in snapshot.tables.iter().zip(&profiles) {
        for (meta, p) in table.columns.iter().zip(&tp.columns) {
            let cat = &categories[&table.name][&meta.name];
            rows.push(ColumnRow {
                table: &table.name,
                column: &meta.name,
                declared_type: &meta.declared_type,
                normalized_type: meta.normalized_type.as_str(),
                primary_key: meta.is_primary_key,
                comment: meta.original_comment.as_deref(),
                category: cat.kind().as_str(),
                granularity: cat.granularity().map(|g| g.as_str()),
                decided_by: match cat.confidence() {
                    Decider::Rule => "rule",
                    Decider::Model => "model",
                },
                row_count: p.row_count,
                distinct_count: p.distinct_count,
                null_count: p.null_count,
                is_unique: p.is_unique,
                numeric_min: p.numeric_min,
                numeric_max: p.numeric_max,
                numeric_avg: p.numeric_avg,
                strlen_min: p.strlen_min,
                strlen_max: p.strlen_max,
                samples: &p.samples,
            });
        }
    }
    let model_calls = model.as_ref().map(|m| m.stats().misses).unwrap_or(0);
    let io = |e| CliError::io("stdout", e);
    if json {
        let report = InspectReport {
            db_id: &snapshot.db_id,
            engine: snapshot.engine.as_str(),
            foreign_keys: snapshot
                .foreign_keys
                .iter()
                .map(|fk| format!("{}.{}={}.{}", fk.from_table, fk.from_column, fk.to_table, fk.to_column))
                .collect(),
            columns: rows,
            model_calls,
        };
        let text = serde_json::to_string_pretty(&report).expect("report serializes");
        writeln!(stdout, "{text}").map_err(io)?;
        return Ok(());
    }
    writeln!(
        stdout,
        "table\tcolumn\ttype\tcategory\tdecided_by\trows\tdistinct\tnulls\tmin\tmax\tavg\tsamples"
    )
    .map_err(io)?;
    for r in &rows {
        let category = match r.granularity {
            Some(g) => format!("{}:{g}", r.category),
            None => r.category.to_string(),
        };
        writeln!(
            stdout,
            "{}\t{}\t{}{}\t{category}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.table,
            r.column,
            r.normalized_type,
            if r.primary_key { " pk" } else { "" },
            r.decided_by,
            r.row_count,
            r.distinct_count,
            r.null_count,
            fmt_num(r.numeric_min),
            fmt_num(r.numeric_max),
            fmt_num(r.numeric_avg),
            r.samples.join(" | ")
        )
        .map_err(io)?;
    }
    Ok(())
}
