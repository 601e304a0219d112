//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any of them fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use common::*;
use dbdesc_core::classify::{probe_granularity, rule_kind, ClassifierConfig};
use dbdesc_core::model::{Attempt, CachedModel, MockModel, Recording, Stage};
use dbdesc_core::mschema::SlotSource;
use dbdesc_core::pipeline::{plan, Source};
use dbdesc_core::{fingerprint::snapshot_fingerprint, prompt::TEMPLATE_VERSION};
use dbdesc_core::{CategoryKind, Executor, GenerationMode};
use proptest::test_runner::{Config, TestCaseError, TestRunner};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn stats_oracle() -> Outcome {
    let start = Instant::now();
    let corpus = Corpus::build();
    let total = column_total(&corpus);
    ensure(corpus.dbs.len() >= 5 && total >= 30, || format!("corpus too small: {total} columns"))?;
    let mut checked = 0;
    for db in &corpus.dbs {
        for table in &db.profiles {
            for p in &table.columns {
                let o = oracle_stats(&db.path, &table.table, p.name(), p.meta.normalized_type, 5);
                let at = format!("{}.{}.{}", db.name, table.table, p.name());
                ensure(p.row_count == o.row_count, || format!("{at}: row_count {} vs {}", p.row_count, o.row_count))?;
                ensure(p.distinct_count == o.distinct_count, || {
                    format!("{at}: distinct {} vs {}", p.distinct_count, o.distinct_count)
                })?;
                ensure(p.null_count == o.null_count, || format!("{at}: nulls {} vs {}", p.null_count, o.null_count))?;
                ensure(p.is_unique == o.is_unique, || format!("{at}: is_unique"))?;
                ensure(p.numeric_min == o.numeric_min && p.numeric_max == o.numeric_max, || {
                    format!("{at}: range {:?}..{:?} vs {:?}..{:?}", p.numeric_min, p.numeric_max, o.numeric_min, o.numeric_max)
                })?;
                let avg_ok = match (p.numeric_avg, o.numeric_avg) {
                    (None, None) => true,
                    (Some(a), Some(b)) => (a - b).abs() <= 1e-9 * b.abs().max(f64::MIN_POSITIVE),
                    _ => false,
                };
                ensure(avg_ok, || format!("{at}: avg {:?} vs {:?}", p.numeric_avg, o.numeric_avg))?;
                ensure(p.strlen_min == o.strlen_min && p.strlen_max == o.strlen_max, || {
                    format!("{at}: lengths {:?}..{:?} vs {:?}..{:?}", p.strlen_min, p.strlen_max, o.strlen_min, o.strlen_max)
                })?;
                ensure(p.samples == o.samples, || format!("{at}: samples {:?} vs {:?}", p.samples, o.samples))?;
                checked += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(30), || format!("took {elapsed:?}"))?;
    Ok(format!("{checked} columns over {} sqlite databases in {elapsed:.2?}", corpus.dbs.len()))
}

fn classification() -> Outcome {
    let corpus = Corpus::build();
    let labels = labels();
    let cfg = ClassifierConfig::default();
    let (mut rule_decided, mut model_decided, mut well_formed) = (0, 0, 0);
    for db in &corpus.dbs {
        for table in &db.profiles {
            for p in &table.columns {
                let at = format!("{}.{}.{}", db.name, table.table, p.name());
                let label = labels[&db.name][&table.table][p.name()];
                match rule_kind(p, &cfg) {
                    Some(kind) => {
                        rule_decided += 1;
                        ensure(kind == label.kind, || format!("rule says {kind} for {at}, label {}", label.kind))?;
                    }
                    None => model_decided += 1,
                }
                if let Some(g) = label.granularity {
                    let values = column_text_values(&db.path, &table.table, p.name());
                    if let Some(expected) = oracle_granularity(&values) {
                        well_formed += 1;
                        ensure(probe_granularity(&values) == Some(expected), || {
                            format!("{at}: probe {:?} vs oracle {expected:?}", probe_granularity(&values))
                        })?;
                        ensure(expected == g, || format!("{at}: oracle {expected:?} disagrees with label {g:?}"))?;
                    }
                }
            }
        }
        let mock = label_mock(&labels, &db.name);
        let categories = classify(db, Some(&mock), 0, &Executor::sequential());
        for (table, cols) in &labels[&db.name] {
            for (col, label) in cols {
                let got = categories[table][col];
                ensure(label.matches(&got), || format!("{}.{table}.{col}: got {got:?}, label {label:?}", db.name))?;
            }
        }
    }
    ensure(well_formed > 0, || "no well-formed datetime columns".into())?;
    Ok(format!(
        "{rule_decided} rule-decided columns all correct, {model_decided} via scripted model, {well_formed} datetime columns match the oracle"
    ))
}

fn target_table(target: &str) -> &str {
    target.split_once('.').map_or(target, |(t, _)| t)
}

fn pipeline_order() -> Outcome {
    let corpus = Corpus::build();
    let mut prompts_checked = 0;
    for db in &corpus.dbs {
        let model = Recording::new(MockModel::synthetic());
        let categories = classify(db, None, 3, &Executor::sequential());
        let run = run_with(db, categories, &model, GenerationMode::Generation, 3, &Executor::with_max_inflight(4));
        let prompts = model.prompts();
        let info = run.context.db_info.as_ref().ok_or("no db_info")?;
        ensure(prompts.first().map(|p| p.stage) == Some(Stage::DbInfo), || format!("{}: db_info not first", db.name))?;
        for (i, p) in prompts.iter().enumerate().skip(1) {
            let at = format!("{} prompt {i} ({} {})", db.name, p.stage, p.target);
            ensure(p.text.contains(&info.domain) && p.text.contains(&info.overview), || {
                format!("{at}: db_info missing")
            })?;
            let table = target_table(&p.target);
            if matches!(p.stage, Stage::ColumnRelation | Stage::ColumnDescription) {
                let ti = &run.context.table_infos[table];
                ensure(
                    p.text.contains(&ti.content_summary) && p.text.contains(&ti.function_hypothesis),
                    || format!("{at}: table_info missing"),
                )?;
                let ti_pos = prompts
                    .iter()
                    .position(|q| q.stage == Stage::TableInfo && q.target == table)
                    .ok_or_else(|| format!("{at}: table_info never asked"))?;
                ensure(ti_pos < i, || format!("{at}: asked before its table_info"))?;
            }
            if p.stage == Stage::TableDescription {
                for d in run.context.column_descriptions[table].values() {
                    ensure(p.text.contains(&d.text), || format!("{at}: column description {:?} missing", d.text))?;
                }
                let last_column = prompts
                    .iter()
                    .rposition(|q| q.stage == Stage::ColumnDescription && target_table(&q.target) == table);
                ensure(last_column.is_some_and(|c| c < i), || format!("{at}: before its columns"))?;
            }
            prompts_checked += 1;
        }
    }
    Ok(format!("{prompts_checked} prompts across {} databases", corpus.dbs.len()))
}

fn whitespace_words(s: &str) -> usize {
    s.split_whitespace().count()
}

fn word_limits() -> Outcome {
    let corpus = Corpus::build();
    let mut generated = 0;
    for db in &corpus.dbs {
        let run = run_full(db, &MockModel::synthetic(), GenerationMode::Generation, 11, &Executor::with_max_inflight(4));
        for (table, cols) in &run.context.column_descriptions {
            for (col, d) in cols {
                ensure(whitespace_words(&d.text) <= 20 && d.word_count == whitespace_words(&d.text), || {
                    format!("{}.{table}.{col}: {} words", db.name, whitespace_words(&d.text))
                })?;
                generated += 1;
            }
        }
        for (table, d) in &run.context.table_descriptions {
            ensure(whitespace_words(&d.text) <= 100, || format!("{}.{table}: {} words", db.name, whitespace_words(&d.text)))?;
            generated += 1;
        }
    }

    // Replies that stay too long after the shorten request get truncated.
    let long_column = (1..=40).map(|i| format!("w{i}")).collect::<Vec<_>>().join(" ");
    let long_table = (1..=150).map(|i| format!("t{i}")).collect::<Vec<_>>().join(" ");
    let fenced = |s: &str| format!("```\ndescription: {s}\n```");
    let mock = MockModel::synthetic()
        .script("column_description:*", [fenced(&long_column)])
        .script("table_description:*", [fenced(&long_table)]);
    let model = Recording::new(mock);
    let db = corpus.get("hr");
    let run = run_with(db, classify(db, None, 0, &Executor::sequential()), &model, GenerationMode::Generation, 0, &Executor::sequential());
    let shorten = model.prompts().iter().filter(|p| p.attempt == Attempt::Shorten).count();
    let targets = db.snapshot.column_count() + db.snapshot.tables.len();
    ensure(shorten == targets, || format!("{shorten} shorten requests for {targets} targets"))?;
    for d in run.context.descriptions() {
        let limit = if d.text.starts_with('w') { 20 } else { 100 };
        ensure(whitespace_words(&d.text) == limit, || format!("truncated to {} words", whitespace_words(&d.text)))?;
    }
    Ok(format!("{generated} generated descriptions within limits; {targets} forced truncations"))
}

/// Model calls merge mode needs, counted straight from the catalog.
fn merge_call_oracle(db: &FixtureDb, categories: &dbdesc_core::classify::CategoryMap) -> usize {
    let mut calls = 0;
    for table in &db.snapshot.tables {
        let open: Vec<&str> = table
            .columns
            .iter()
            .filter(|c| c.original_comment.is_none())
            .map(|c| c.name.as_str())
            .collect();
        let table_open = table.original_comment.is_none();
        if open.is_empty() && !table_open {
            continue;
        }
        calls += 1 + open.len() + usize::from(table_open);
        for kind in CategoryKind::ALL {
            let group: Vec<&str> = table
                .columns
                .iter()
                .filter(|c| categories[&table.name][&c.name].kind() == kind)
                .map(|c| c.name.as_str())
                .collect();
            if group.len() >= 2 && group.iter().any(|c| open.contains(c)) {
                calls += 1;
            }
        }
    }
    calls + usize::from(calls > 0)
}

fn mode_laws() -> Outcome {
    let corpus = Corpus::build_only(&["retail"]);
    let db = corpus.get("retail");
    let commented = db.snapshot.tables.iter().filter(|t| t.original_comment.is_some()).count()
        + db.snapshot.tables.iter().flat_map(|t| &t.columns).filter(|c| c.original_comment.is_some()).count();
    let slots = db.snapshot.tables.len() + db.snapshot.column_count();
    ensure(commented > 0 && commented < slots, || "fixture does not mix commented and uncommented items".into())?;

    let categories = classify(db, None, 0, &Executor::sequential());
    let mut merge_calls = 0;
    for mode in GenerationMode::ALL {
        let model = Recording::new(MockModel::synthetic());
        let run = run_with(db, categories.clone(), &model, mode, 0, &Executor::with_max_inflight(4));
        let doc = &run.doc;
        let mut checked = 0;
        for (mt, table) in doc.tables.iter().zip(&db.snapshot.tables) {
            let pairs = std::iter::once((&mt.description, &table.original_comment, format!("table {}", table.name))).chain(
                mt.columns
                    .iter()
                    .zip(&table.columns)
                    .map(|(mc, c)| (&mc.description, &c.original_comment, format!("column {}.{}", table.name, c.name))),
            );
            for (slot, comment, at) in pairs {
                let ok = match mode {
                    GenerationMode::NoComment => slot.is_empty(),
                    GenerationMode::Origin => slot.text() == comment.as_deref(),
                    GenerationMode::Merge => match comment {
                        Some(c) => slot.text() == Some(c.as_str()) && slot.source() == SlotSource::Origin,
                        None => !slot.is_empty() && slot.source() == SlotSource::Generated,
                    },
                    GenerationMode::Generation => !slot.is_empty() && slot.source() == SlotSource::Generated,
                };
                ensure(ok, || format!("{mode}: {at} slot {slot:?}, comment {comment:?}"))?;
                checked += 1;
            }
        }
        ensure(checked == slots, || format!("{mode}: checked {checked} of {slots} slots"))?;
        ensure(run.context.is_monotone(), || format!("{mode}: context not monotone"))?;
        ensure(run.context.descriptions().filter(|d| d.source == Source::Generated).all(|d| d.word_count <= 100), || {
            format!("{mode}: overlong description")
        })?;
        match mode {
            GenerationMode::NoComment | GenerationMode::Origin => {
                ensure(model.call_count() == 0, || format!("{mode}: {} model calls", model.call_count()))?
            }
            GenerationMode::Merge => {
                merge_calls = model.call_count();
                let expected = merge_call_oracle(db, &categories);
                ensure(merge_calls == expected, || format!("merge made {merge_calls} calls, expected {expected}"))?;
                let planned = plan(&db.snapshot, &categories, mode).expected_calls();
                ensure(planned == expected, || format!("plan says {planned}, expected {expected}"))?;
            }
            GenerationMode::Generation => {}
        }
    }
    Ok(format!("4 modes over {slots} slots ({commented} commented); merge made {merge_calls} calls"))
}

fn determinism_and_cache() -> Outcome {
    let corpus = Corpus::build();
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = 0;
    for db in &corpus.dbs {
        let render = |exec: &Executor| {
            let run = run_full(db, &MockModel::synthetic(), GenerationMode::Generation, 42, exec);
            (run.doc.to_text(), run.doc.to_json())
        };
        let a = render(&Executor::with_max_inflight(8));
        let b = render(&Executor::with_max_inflight(8));
        let c = render(&Executor::sequential());
        ensure(a == b, || format!("{}: two runs differ", db.name))?;
        ensure(a == c, || format!("{}: sequential and parallel runs differ", db.name))?;

        let path = dir.path().join(format!("{}.cache.jsonl", db.name));
        let fp = snapshot_fingerprint(&db.snapshot);
        let cold = CachedModel::open(Recording::new(MockModel::synthetic()), &path, fp.clone(), TEMPLATE_VERSION).unwrap();
        let first = run_full(db, &cold, GenerationMode::Merge, 42, &Executor::with_max_inflight(8));
        ensure(cold.inner().call_count() > 0, || format!("{}: cold cache made no calls", db.name))?;
        drop(cold);
        let warm = CachedModel::open(Recording::new(MockModel::synthetic()), &path, fp, TEMPLATE_VERSION).unwrap();
        let second = run_full(db, &warm, GenerationMode::Merge, 42, &Executor::with_max_inflight(8));
        ensure(warm.inner().call_count() == 0, || {
            format!("{}: warm rerun made {} calls", db.name, warm.inner().call_count())
        })?;
        ensure(first.doc.to_text() == second.doc.to_text(), || format!("{}: warm rerun output differs", db.name))?;
        outputs += 1;
    }
    Ok(format!("{outputs} databases byte-identical across runs; warm reruns made 0 calls"))
}

fn serialization() -> Outcome {
    let corpus = Corpus::build_only(&["retail", "sensors"]);
    let docs = golden_docs(&corpus);
    for (name, doc) in &docs {
        check_golden(&format!("{name}.mschema"), &doc.to_text())?;
        check_golden(&format!("{name}.json"), &doc.to_json())?;
        round_trip(doc)?;
    }
    let cases = 1000;
    let mut runner = TestRunner::new(Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    });
    runner
        .run(&doc_strategy(), |doc| round_trip(&doc).map_err(TestCaseError::fail))
        .map_err(|e| e.to_string())?;
    Ok(format!("{} golden documents byte-equal; {cases} random round trips", docs.len()))
}

fn main() {
    let criteria: [Criterion; 7] = [
        ("stats oracle equivalence", stats_oracle),
        ("classification", classification),
        ("pipeline order", pipeline_order),
        ("word limits", word_limits),
        ("mode laws", mode_laws),
        ("determinism and cache", determinism_and_cache),
        ("serialization", serialization),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|panic| {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("PASS {} {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {} {name}: {why}", i + 1);
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
