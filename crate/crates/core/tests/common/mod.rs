//! Shared fixtures for the integration tests: the SQLite corpus, its
//! hand-assigned labels, and brute-force oracles computed in memory.
#![allow(dead_code)]

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use chrono::{DateTime, NaiveDate, NaiveDateTime};
use dbdesc_core::classify::{classify_snapshot, CategoryKind, CategoryMap, ClassifierConfig, FieldCategory, Granularity};
use dbdesc_core::introspect::{introspect_database, ForeignKey, NormalizedType, SchemaSnapshot};
use dbdesc_core::model::{DescriptionModel, MockModel, SamplingParams};
use dbdesc_core::mschema::{parse_mschema, resolve_descriptions, serialize_mschema, MColumn, MTable, Slot};
use dbdesc_core::pipeline::{run_pipeline, PipelineConfig};
use dbdesc_core::profile::{profile_snapshot, ProfileOptions, TableProfile};
use dbdesc_core::{AnalysisContext, ConnectionSpec, Executor, GenerationMode, MSchemaDoc};
use indexmap::IndexMap;
use proptest::prelude::*;

pub const CORPUS: [&str; 5] = ["retail", "hr", "logistics", "blog", "sensors"];

pub fn fixtures_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests").join("fixtures")
}

pub fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests").join("golden")
}

/// Creates `<dir>/<name>.db` from `fixtures/<name>.sql`.
pub fn build_db(name: &str, dir: &Path) -> PathBuf {
    let sql = std::fs::read_to_string(fixtures_dir().join(format!("{name}.sql"))).unwrap();
    let path = dir.join(format!("{name}.db"));
    let _ = std::fs::remove_file(&path);
    let conn = rusqlite::Connection::open(&path).unwrap();
    conn.execute_batch(&sql).unwrap();
    path
}

pub fn spec_for(path: &Path) -> ConnectionSpec {
    format!("sqlite://{}", path.display()).parse().unwrap()
}

/// One built fixture database with its snapshot and profiles.
pub struct FixtureDb {
    pub name: String,
    pub path: PathBuf,
    pub spec: ConnectionSpec,
    pub snapshot: SchemaSnapshot,
    pub profiles: Vec<TableProfile>,
}

pub struct Corpus {
    pub dir: tempfile::TempDir,
    pub dbs: Vec<FixtureDb>,
}

impl Corpus {
    pub fn build() -> Corpus {
        Self::build_only(&CORPUS)
    }

    pub fn build_only(names: &[&str]) -> Corpus {
        let dir = tempfile::tempdir().unwrap();
        let dbs = names.iter().map(|n| load(n, dir.path())).collect();
        Corpus { dir, dbs }
    }

    pub fn get(&self, name: &str) -> &FixtureDb {
        self.dbs.iter().find(|d| d.name == name).unwrap()
    }
}

pub fn load(name: &str, dir: &Path) -> FixtureDb {
    let path = build_db(name, dir);
    let spec = spec_for(&path);
    let snapshot = introspect_database(&spec).unwrap();
    let profiles = profile_snapshot(&spec, &snapshot, &ProfileOptions::default(), &Executor::sequential()).unwrap();
    FixtureDb {
        name: name.to_string(),
        path,
        spec,
        snapshot,
        profiles,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Label {
    pub kind: CategoryKind,
    pub granularity: Option<Granularity>,
}

impl Label {
    pub fn matches(&self, c: &FieldCategory) -> bool {
        self.kind == c.kind() && self.granularity == c.granularity()
    }
}

fn parse_label(s: &str) -> Label {
    let (kind, grain) = match s.split_once(':') {
        Some((k, g)) => (k, Some(g)),
        None => (s, None),
    };
    Label {
        kind: CategoryKind::parse(kind).unwrap_or_else(|| panic!("bad label {s}")),
        granularity: grain.map(|g| {
            *Granularity::ALL
                .iter()
                .find(|x| x.as_str() == g)
                .unwrap_or_else(|| panic!("bad granularity {g}"))
        }),
    }
}

/// Hand labels: db -> table -> column -> label.
pub type Labels = IndexMap<String, IndexMap<String, IndexMap<String, Label>>>;

pub fn labels() -> Labels {
    let text = std::fs::read_to_string(fixtures_dir().join("labels.json")).unwrap();
    let raw: IndexMap<String, IndexMap<String, IndexMap<String, String>>> = serde_json::from_str(&text).unwrap();
    raw.into_iter()
        .map(|(db, tables)| {
            let tables = tables
                .into_iter()
                .map(|(t, cols)| (t, cols.into_iter().map(|(c, l)| (c, parse_label(&l))).collect()))
                .collect();
            (db, tables)
        })
        .collect()
}

/// A mock that answers every classify and granularity prompt of `db` with
/// its ground-truth label.
pub fn label_mock(labels: &Labels, db: &str) -> MockModel {
    let mut mock = MockModel::synthetic().strict(true);
    for (table, cols) in &labels[db] {
        for (col, label) in cols {
            mock = mock.script(&format!("classify:{table}.{col}"), [label_token(label.kind)]);
            if let Some(g) = label.granularity {
                mock = mock.script(&format!("granularity:{table}.{col}"), [g.as_str().to_ascii_uppercase()]);
            }
        }
    }
    mock
}

pub fn label_token(kind: CategoryKind) -> &'static str {
    match kind {
        CategoryKind::Measure => "MEASURE",
        CategoryKind::Code => "CODE",
        CategoryKind::EnumDim => "ENUM",
        CategoryKind::DatetimeDim => "DATETIME",
        CategoryKind::TextDim => "TEXT",
    }
}

pub fn retail_mock() -> MockModel {
    MockModel::from_path(&fixtures_dir().join("retail_mock.json")).unwrap()
}

/// Statistics recomputed from every row of a column.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleStats {
    pub row_count: u64,
    pub distinct_count: u64,
    pub null_count: u64,
    pub is_unique: bool,
    pub numeric_min: Option<f64>,
    pub numeric_max: Option<f64>,
    pub numeric_avg: Option<f64>,
    pub strlen_min: Option<u64>,
    pub strlen_max: Option<u64>,
    pub samples: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, PartialOrd)]
enum Cell {
    Num(f64),
    Text(String),
}

fn render(cell: &Cell) -> String {
    let raw = match cell {
        Cell::Num(v) if v.fract() == 0.0 && v.abs() < 9e15 => format!("{}", *v as i64),
        Cell::Num(v) => format!("{v}"),
        Cell::Text(s) => s.clone(),
    };
    if raw.chars().count() > 64 {
        format!("{}…", raw.chars().take(64).collect::<String>())
    } else {
        raw
    }
}

/// Reads the whole column and computes every statistic directly.
pub fn oracle_stats(path: &Path, table: &str, column: &str, ty: NormalizedType, sample_limit: usize) -> OracleStats {
    let conn = rusqlite::Connection::open(path).unwrap();
    let mut stmt = conn
        .prepare(&format!("SELECT \"{column}\" FROM \"{table}\""))
        .unwrap();
    let values: Vec<rusqlite::types::Value> = stmt
        .query_map([], |r| r.get::<_, rusqlite::types::Value>(0))
        .unwrap()
        .map(Result::unwrap)
        .collect();
    let row_count = values.len() as u64;
    let cells: Vec<Cell> = values
        .iter()
        .filter_map(|v| match v {
            rusqlite::types::Value::Null => None,
            rusqlite::types::Value::Integer(i) => Some(Cell::Num(*i as f64)),
            rusqlite::types::Value::Real(r) => Some(Cell::Num(*r)),
            rusqlite::types::Value::Text(s) => Some(Cell::Text(s.clone())),
            rusqlite::types::Value::Blob(_) => panic!("no blobs in the corpus"),
        })
        .collect();
    let null_count = row_count - cells.len() as u64;
    let mut distinct: Vec<Cell> = Vec::new();
    for c in &cells {
        if !distinct.contains(c) {
            distinct.push(c.clone());
        }
    }
    // SQLite order: numbers first by value, then text by bytes.
    distinct.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let distinct_count = distinct.len() as u64;

    let nums: Vec<f64> = cells
        .iter()
        .filter_map(|c| match c {
            Cell::Num(v) => Some(*v),
            Cell::Text(_) => None,
        })
        .collect();
    let numeric = matches!(ty, NormalizedType::Integer | NormalizedType::Real) && !nums.is_empty();
    let lens: Vec<u64> = cells
        .iter()
        .map(render_len)
        .collect();
    let text = ty == NormalizedType::Text && !cells.is_empty();

    let mut samples: Vec<String> = Vec::new();
    for c in distinct.iter().take(sample_limit) {
        let r = render(c);
        if !samples.contains(&r) {
            samples.push(r);
        }
    }
    OracleStats {
        row_count,
        distinct_count,
        null_count,
        is_unique: row_count > 0 && distinct_count == row_count - null_count,
        numeric_min: numeric.then(|| nums.iter().cloned().fold(f64::INFINITY, f64::min)),
        numeric_max: numeric.then(|| nums.iter().cloned().fold(f64::NEG_INFINITY, f64::max)),
        numeric_avg: numeric.then(|| nums.iter().sum::<f64>() / nums.len() as f64),
        strlen_min: text.then(|| *lens.iter().min().unwrap()),
        strlen_max: text.then(|| *lens.iter().max().unwrap()),
        samples,
    }
}

fn render_len(c: &Cell) -> u64 {
    match c {
        Cell::Text(s) => s.chars().count() as u64,
        Cell::Num(v) => format!("{v}").chars().count() as u64,
    }
}

/// Granularity an independent chrono-based parser assigns to `samples`, or
/// `None` when they are not all well formed under one format.
pub fn oracle_granularity(samples: &[String]) -> Option<Granularity> {
    if samples.is_empty() {
        return None;
    }
    let grains: BTreeSet<Granularity> = samples.iter().map(|s| oracle_one(s)).collect::<Option<_>>()?;
    (grains.len() == 1).then(|| *grains.iter().next().unwrap())
}

fn all_digits(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit())
}

fn oracle_one(s: &str) -> Option<Granularity> {
    let dt = |fmt: &str| NaiveDateTime::parse_from_str(s, fmt).is_ok();
    let d = |v: &str, fmt: &str| NaiveDate::parse_from_str(v, fmt).is_ok();
    if dt("%Y-%m-%d %H:%M:%S") || dt("%Y-%m-%dT%H:%M:%S") {
        return Some(Granularity::Second);
    }
    if s.len() == 14 && all_digits(s) && dt("%Y%m%d%H%M%S") {
        return Some(Granularity::Second);
    }
    if dt("%Y-%m-%d %H:%M") {
        return Some(Granularity::Minute);
    }
    if s.len() == 13 && NaiveDateTime::parse_from_str(&format!("{s}:00"), "%Y-%m-%d %H:%M").is_ok() {
        return Some(Granularity::Hour);
    }
    if s.len() == 10 && (d(s, "%Y-%m-%d") || d(s, "%Y/%m/%d")) {
        return Some(Granularity::Day);
    }
    if s.len() == 8 && all_digits(s) && d(s, "%Y%m%d") {
        return Some(Granularity::Day);
    }
    if s.len() == 7 && d(&format!("{s}-01"), "%Y-%m-%d") {
        return Some(Granularity::Month);
    }
    if s.len() == 7 && s.as_bytes()[4..6] == *b"-Q" && matches!(&s[6..], "1" | "2" | "3" | "4") && all_digits(&s[..4]) {
        return Some(Granularity::Quarter);
    }
    if s.len() == 4 && all_digits(s) && d(&format!("{s}-01-01"), "%Y-%m-%d") {
        return Some(Granularity::Year);
    }
    if s.len() == 10 && all_digits(s) {
        let secs: i64 = s.parse().ok()?;
        let t = DateTime::from_timestamp(secs, 0)?;
        let year = t.date_naive().format("%Y").to_string();
        if ("1973".."2100").contains(&year.as_str()) {
            return Some(Granularity::Second);
        }
    }
    None
}

pub fn column_total(corpus: &Corpus) -> usize {
    corpus.dbs.iter().map(|d| d.snapshot.column_count()).sum()
}

/// Every non-null value of a column as text, in row order.
pub fn column_text_values(path: &Path, table: &str, column: &str) -> Vec<String> {
    let conn = rusqlite::Connection::open(path).unwrap();
    let mut stmt = conn
        .prepare(&format!("SELECT \"{column}\" FROM \"{table}\" WHERE \"{column}\" IS NOT NULL"))
        .unwrap();
    stmt.query_map([], |r| r.get::<_, rusqlite::types::Value>(0))
        .unwrap()
        .map(|v| match v.unwrap() {
            rusqlite::types::Value::Integer(i) => i.to_string(),
            rusqlite::types::Value::Real(r) => r.to_string(),
            rusqlite::types::Value::Text(s) => s,
            other => panic!("unexpected value {other:?}"),
        })
        .collect()
}

/// Output of one classify + pipeline + assembly run.
pub struct Run {
    pub categories: CategoryMap,
    pub context: AnalysisContext,
    pub doc: MSchemaDoc,
}

pub fn params(seed: u64) -> SamplingParams {
    SamplingParams {
        seed,
        ..SamplingParams::default()
    }
}

pub fn classify(db: &FixtureDb, model: Option<&dyn DescriptionModel>, seed: u64, exec: &Executor) -> CategoryMap {
    classify_snapshot(&db.snapshot, &db.profiles, model, &params(seed), &ClassifierConfig::default(), exec).unwrap()
}

pub fn run_with(
    db: &FixtureDb,
    categories: CategoryMap,
    model: &dyn DescriptionModel,
    mode: GenerationMode,
    seed: u64,
    exec: &Executor,
) -> Run {
    let cfg = PipelineConfig {
        params: params(seed),
        ..PipelineConfig::default()
    };
    let context = run_pipeline(&db.snapshot, &db.profiles, &categories, model, mode, &cfg, exec)
        .unwrap_or_else(|e| panic!("pipeline failed on {}: {}", db.name, e.error));
    let doc = resolve_descriptions(&db.snapshot, &db.profiles, &context, mode).unwrap();
    Run {
        categories,
        context,
        doc,
    }
}

/// Classifies with `model` too, as the command-line tool does.
pub fn run_full(db: &FixtureDb, model: &dyn DescriptionModel, mode: GenerationMode, seed: u64, exec: &Executor) -> Run {
    let categories = classify(db, Some(model), seed, exec);
    run_with(db, categories, model, mode, seed, exec)
}

/// Small document written out by hand.
pub fn hand_doc() -> MSchemaDoc {
    let col = |name: &str, ty: &str, desc: Slot, pk: bool, examples: &[&str]| MColumn {
        name: name.into(),
        ty: ty.into(),
        description: desc,
        primary_key: pk,
        examples: examples.iter().map(|s| s.to_string()).collect(),
    };
    MSchemaDoc {
        db_id: "library".into(),
        tables: vec![
            MTable {
                name: "books".into(),
                description: Slot::origin("Books held by the library, one row per title."),
                columns: vec![
                    col("book_id", "INTEGER", Slot::origin("Book identifier."), true, &["1", "2", "3"]),
                    col("title", "TEXT", Slot::generated("Title, as printed on the cover"), false, &["Dune", "Emma"]),
                    col("price", "DECIMAL(8,2)", Slot::empty(), false, &["9.5", "12"]),
                    col("tags", "TEXT", Slot::generated("Comma list, e.g. a, b"), false, &["sci-fi, classic", "[none]"]),
                ],
            },
            MTable {
                name: "loans".into(),
                description: Slot::empty(),
                columns: vec![
                    col("loan_id", "INTEGER", Slot::empty(), true, &[]),
                    col("book_id", "INTEGER", Slot::generated("Borrowed book."), false, &["1"]),
                ],
            },
        ],
        foreign_keys: vec![ForeignKey {
            from_table: "loans".into(),
            from_column: "book_id".into(),
            to_table: "books".into(),
            to_column: "book_id".into(),
        }],
    }
}

/// The documents frozen under `tests/golden`, by file stem.
pub fn golden_docs(corpus: &Corpus) -> Vec<(&'static str, MSchemaDoc)> {
    let exec = Executor::sequential();
    let retail = corpus.get("retail");
    let origin = run_with(retail, classify(retail, None, 0, &exec), &MockModel::synthetic(), GenerationMode::Origin, 0, &exec);
    let merge = run_full(retail, &retail_mock(), GenerationMode::Merge, 0, &exec);
    let sensors = corpus.get("sensors");
    let bare = run_with(
        sensors,
        classify(sensors, None, 0, &exec),
        &MockModel::synthetic(),
        GenerationMode::NoComment,
        0,
        &exec,
    );
    vec![
        ("library_hand", hand_doc()),
        ("retail_origin", origin.doc),
        ("retail_merge", merge.doc),
        ("sensors_no_comment", bare.doc),
    ]
}

/// Compares `actual` with `tests/golden/<name>`. With `UPDATE_GOLDEN` set
/// the file is rewritten instead.
pub fn check_golden(name: &str, actual: &str) -> Result<(), String> {
    let path = golden_dir().join(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, actual).unwrap();
        return Ok(());
    }
    let expected = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    if expected == actual {
        Ok(())
    } else {
        Err(format!("{name} differs from its golden file"))
    }
}

const ATOMS: &[&str] = &[
    "a", "Z", "7", " ", ",", ", ", ":", ".", "=", "(", ")", "[", "]", "\\", "\n", "\r\n", "#", "【", "】", "é",
    "P", "E", "Primary Key", ", Primary Key", "Examples: [", ", Examples: [", "x", "_", "\t",
];

fn tricky_string(max: usize) -> impl Strategy<Value = String> {
    prop::collection::vec(prop::sample::select(ATOMS), 0..max).prop_map(|parts| parts.concat())
}

fn name_string() -> impl Strategy<Value = String> {
    prop_oneof![3 => "[a-z][a-z0-9_]{0,8}", 1 => tricky_string(6)]
}

fn slot() -> impl Strategy<Value = Slot> {
    prop_oneof![
        Just(Slot::empty()),
        tricky_string(10).prop_map(|s| Slot::generated(&s)),
        "[A-Z][a-z ,.]{0,30}".prop_map(|s| Slot::origin(&s)),
    ]
}

fn column() -> impl Strategy<Value = MColumn> {
    (
        name_string(),
        prop_oneof![
            Just("INTEGER".to_string()),
            Just("DECIMAL(10,2)".to_string()),
            Just("ENUM('a,b',')')".to_string()),
            tricky_string(5),
        ],
        slot(),
        any::<bool>(),
        prop::collection::vec(tricky_string(5), 0..4),
    )
        .prop_map(|(name, ty, description, primary_key, examples)| MColumn {
            name,
            ty,
            description,
            primary_key,
            examples,
        })
}

fn table() -> impl Strategy<Value = MTable> {
    (name_string(), slot(), prop::collection::vec(column(), 0..5)).prop_map(|(name, description, columns)| MTable {
        name,
        description,
        columns,
    })
}

fn foreign_key() -> impl Strategy<Value = ForeignKey> {
    (name_string(), name_string(), name_string(), name_string()).prop_map(|(a, b, c, d)| ForeignKey {
        from_table: a,
        from_column: b,
        to_table: c,
        to_column: d,
    })
}

pub fn doc_strategy() -> impl Strategy<Value = MSchemaDoc> {
    (
        name_string(),
        prop::collection::vec(table(), 0..4),
        prop::collection::vec(foreign_key(), 0..3),
    )
        .prop_map(|(db_id, tables, foreign_keys)| MSchemaDoc {
            db_id,
            tables,
            foreign_keys,
        })
}

/// Text round trip of one document.
pub fn round_trip(doc: &MSchemaDoc) -> Result<(), String> {
    let text = serialize_mschema(doc);
    let parsed = parse_mschema(&text).map_err(|e| format!("{e}\n{text}"))?;
    if &parsed != doc {
        return Err(format!("parsed document differs\n{text}"));
    }
    let again = serialize_mschema(&parsed);
    if again != text {
        return Err(format!("second serialization differs\n{text}\n{again}"));
    }
    Ok(())
}
