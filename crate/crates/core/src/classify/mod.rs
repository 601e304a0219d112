//! Field taxonomy and column classification.
//!
//! Classification is rule-then-model. The rules below are tried in order and
//! the first that fires decides; when none fires the model is asked.
//!
//! 1. **code**: the column is part of the primary key, or its name ends in an
//!    identifier suffix (`id`, `code`, `uuid`, `guid`) and its values are
//!    unique or it has at most `enum_threshold` distinct values. Identifier
//!    semantics win over enum for low-cardinality id columns.
//! 2. **datetime_dim**: the normalized type is a native date/time type.
//!    **enum_dim**: the normalized type is boolean.
//! 3. **measure**: integer or real, no identifier suffix, more than
//!    `enum_threshold` distinct values, and not a fixed-width integer.
//!    Fixed-width integers (min and max have the same number of digits, at
//!    least four) look like zip codes, phone numbers or `YYYYMMDD` dates and
//!    are left to the model.
//! 4. **enum_dim**: text with between 1 and `enum_threshold` distinct values,
//!    each appearing at least twice on average, whose samples do not read as
//!    dates; or an integer with at most two distinct values (flags).
//! 5. **text_dim**: text whose longest value exceeds `text_threshold`
//!    characters.
//!
//! A column with no rows is never shown to the model: after rule 1 and 2 it
//! defaults to measure for numeric types and text_dim otherwise.

pub mod granularity;

use std::fmt;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::exec::Executor;
use crate::introspect::{NormalizedType, SchemaSnapshot};
use crate::model::{Attempt, DescriptionModel, ModelError, Prompt, SamplingParams, Stage};
use crate::profile::{ColumnProfile, TableProfile};
use crate::prompt;

pub use granularity::{infer_datetime_granularity, probe_granularity};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CategoryKind {
    Measure,
    Code,
    EnumDim,
    DatetimeDim,
    TextDim,
}

/// Finds the first whole word of `reply` that is one of `tokens`,
/// ignoring case.
fn first_token<T: Copy>(reply: &str, tokens: &[(&str, T)]) -> Option<T> {
    reply
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .find_map(|w| tokens.iter().find(|(t, _)| t.eq_ignore_ascii_case(w)).map(|(_, v)| *v))
}

impl CategoryKind {
    pub const ALL: [CategoryKind; 5] = [
        CategoryKind::Measure,
        CategoryKind::Code,
        CategoryKind::EnumDim,
        CategoryKind::DatetimeDim,
        CategoryKind::TextDim,
    ];

    pub const TOKENS: [&'static str; 5] = ["MEASURE", "CODE", "ENUM", "DATETIME", "TEXT"];

    pub fn as_str(self) -> &'static str {
        match self {
            CategoryKind::Measure => "measure",
            CategoryKind::Code => "code",
            CategoryKind::EnumDim => "enum_dim",
            CategoryKind::DatetimeDim => "datetime_dim",
            CategoryKind::TextDim => "text_dim",
        }
    }

    /// Token used on the model wire.
    pub fn token(self) -> &'static str {
        Self::TOKENS[self as usize]
    }

    pub fn parse(s: &str) -> Option<CategoryKind> {
        Self::ALL.into_iter().find(|k| k.as_str() == s)
    }

    pub fn parse_token(reply: &str) -> Option<CategoryKind> {
        let table: Vec<(&str, CategoryKind)> = Self::ALL.iter().map(|k| (k.token(), *k)).collect();
        first_token(reply, &table)
    }
}

impl fmt::Display for CategoryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    Year,
    Quarter,
    Month,
    Day,
    Hour,
    Minute,
    Second,
}

impl Granularity {
    pub const ALL: [Granularity; 7] = [
        Granularity::Year,
        Granularity::Quarter,
        Granularity::Month,
        Granularity::Day,
        Granularity::Hour,
        Granularity::Minute,
        Granularity::Second,
    ];

    pub const TOKENS: [&'static str; 7] = ["YEAR", "QUARTER", "MONTH", "DAY", "HOUR", "MINUTE", "SECOND"];

    pub fn as_str(self) -> &'static str {
        match self {
            Granularity::Year => "year",
            Granularity::Quarter => "quarter",
            Granularity::Month => "month",
            Granularity::Day => "day",
            Granularity::Hour => "hour",
            Granularity::Minute => "minute",
            Granularity::Second => "second",
        }
    }

    pub fn parse_token(reply: &str) -> Option<Granularity> {
        let table: Vec<(&str, Granularity)> = Self::ALL.iter().map(|g| (Self::TOKENS[*g as usize], *g)).collect();
        first_token(reply, &table)
    }
}

impl fmt::Display for Granularity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Which path decided a category.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decider {
    Rule,
    Model,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
struct RawCategory {
    kind: CategoryKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    granularity: Option<Granularity>,
    confidence: Decider,
}

/// A column's category. Granularity is present exactly for `datetime_dim`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawCategory", into = "RawCategory")]
pub struct FieldCategory {
    kind: CategoryKind,
    granularity: Option<Granularity>,
    confidence: Decider,
}

impl TryFrom<RawCategory> for FieldCategory {
    type Error = String;

    fn try_from(raw: RawCategory) -> Result<Self, String> {
        match (raw.kind, raw.granularity) {
            (CategoryKind::DatetimeDim, Some(g)) => Ok(FieldCategory::datetime(g, raw.confidence)),
            (CategoryKind::DatetimeDim, None) => Err("datetime_dim requires a granularity".into()),
            (kind, None) => Ok(FieldCategory::new(kind, raw.confidence)),
            (kind, Some(_)) => Err(format!("{kind} cannot carry a granularity")),
        }
    }
}

impl From<FieldCategory> for RawCategory {
    fn from(c: FieldCategory) -> Self {
        RawCategory {
            kind: c.kind,
            granularity: c.granularity,
            confidence: c.confidence,
        }
    }
}

impl FieldCategory {
    /// Panics for `DatetimeDim`; use [`FieldCategory::datetime`].
    pub fn new(kind: CategoryKind, confidence: Decider) -> Self {
        assert!(kind != CategoryKind::DatetimeDim, "datetime categories need a granularity");
        FieldCategory {
            kind,
            granularity: None,
            confidence,
        }
    }

    pub fn datetime(granularity: Granularity, confidence: Decider) -> Self {
        FieldCategory {
            kind: CategoryKind::DatetimeDim,
            granularity: Some(granularity),
            confidence,
        }
    }

    pub fn kind(&self) -> CategoryKind {
        self.kind
    }

    pub fn granularity(&self) -> Option<Granularity> {
        self.granularity
    }

    pub fn confidence(&self) -> Decider {
        self.confidence
    }
}

impl fmt::Display for FieldCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.granularity {
            Some(g) => write!(f, "{}({g})", self.kind),
            None => write!(f, "{}", self.kind),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassifierConfig {
    pub enum_threshold: u64,
    /// Longest value, in characters, still considered short text.
    pub text_threshold: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            enum_threshold: 20,
            text_threshold: 64,
        }
    }
}

/// A column to classify together with its table context.
#[derive(Debug, Clone, Copy)]
pub struct ClassificationRequest<'a> {
    pub table: &'a str,
    pub profile: &'a ColumnProfile,
    pub peers: &'a [ColumnProfile],
}

impl<'a> ClassificationRequest<'a> {
    pub fn new(table: &'a TableProfile, profile: &'a ColumnProfile) -> Self {
        ClassificationRequest {
            table: &table.table,
            profile,
            peers: &table.columns,
        }
    }

    pub fn target(&self) -> String {
        format!("{}.{}", self.table, self.profile.meta.name)
    }
}

/// Categories of every column, keyed by table then column in catalog order.
pub type CategoryMap = IndexMap<String, IndexMap<String, FieldCategory>>;

const ID_SUFFIXES: [&str; 4] = ["id", "code", "uuid", "guid"];

/// Lowercase words of a snake_case, kebab-case or camelCase name.
fn name_words(name: &str) -> Vec<String> {
    let mut words = Vec::new();
    let mut current = String::new();
    let mut prev_lower = false;
    for c in name.chars() {
        if !c.is_alphanumeric() {
            if !current.is_empty() {
                words.push(std::mem::take(&mut current));
            }
            prev_lower = false;
            continue;
        }
        if c.is_uppercase() && prev_lower && !current.is_empty() {
            words.push(std::mem::take(&mut current));
        }
        prev_lower = c.is_lowercase() || c.is_ascii_digit();
        current.extend(c.to_lowercase());
    }
    if !current.is_empty() {
        words.push(current);
    }
    words
}

pub fn has_id_suffix(name: &str) -> bool {
    name_words(name).last().is_some_and(|w| ID_SUFFIXES.contains(&w.as_str()))
}

fn digit_count(v: f64) -> usize {
    format!("{}", v.abs().trunc() as i64).len()
}

fn is_fixed_width_integer(p: &ColumnProfile) -> bool {
    match (p.numeric_min, p.numeric_max) {
        (Some(lo), Some(hi)) if p.meta.normalized_type == NormalizedType::Integer && lo >= 0.0 => {
            let width = digit_count(lo);
            width >= 4 && width == digit_count(hi)
        }
        _ => false,
    }
}

/// The rule-decided kind, before granularity is attached.
pub fn rule_kind(p: &ColumnProfile, cfg: &ClassifierConfig) -> Option<CategoryKind> {
    let ty = p.meta.normalized_type;
    let id_suffix = has_id_suffix(&p.meta.name);
    let non_null = p.non_null_count();

    if p.meta.is_primary_key || (id_suffix && (p.is_unique || p.distinct_count <= cfg.enum_threshold)) {
        return Some(CategoryKind::Code);
    }
    match ty {
        NormalizedType::Datetime => return Some(CategoryKind::DatetimeDim),
        NormalizedType::Boolean => return Some(CategoryKind::EnumDim),
        _ => {}
    }
    if p.row_count == 0 {
        return Some(if ty.is_numeric() {
            CategoryKind::Measure
        } else {
            CategoryKind::TextDim
        });
    }
    if ty.is_numeric() && !id_suffix && p.distinct_count > cfg.enum_threshold && !is_fixed_width_integer(p) {
        return Some(CategoryKind::Measure);
    }
    let enum_like = match ty {
        NormalizedType::Text => {
            p.distinct_count >= 1
                && p.distinct_count <= cfg.enum_threshold
                && non_null >= 2 * p.distinct_count
                && probe_granularity(&p.samples).is_none()
        }
        NormalizedType::Integer => p.distinct_count >= 1 && p.distinct_count <= 2 && non_null > p.distinct_count,
        _ => false,
    };
    if enum_like {
        return Some(CategoryKind::EnumDim);
    }
    if ty.is_text_like() && p.strlen_max.is_some_and(|n| n > cfg.text_threshold) {
        return Some(CategoryKind::TextDim);
    }
    None
}

/// Rule pass alone. `None` means the column needs the model.
///
/// Granularity of a rule-decided datetime column comes from its declared
/// type or the format probe, falling back to `day` without the model.
pub fn classify_rule_based(p: &ColumnProfile, cfg: &ClassifierConfig) -> Option<FieldCategory> {
    rule_kind(p, cfg).map(|kind| match kind {
        CategoryKind::DatetimeDim => FieldCategory::datetime(
            infer_datetime_granularity(p, "", None, &SamplingParams::default()),
            Decider::Rule,
        ),
        k => FieldCategory::new(k, Decider::Rule),
    })
}

fn fallback_kind(p: &ColumnProfile) -> CategoryKind {
    if p.meta.normalized_type.is_numeric() {
        CategoryKind::Measure
    } else {
        CategoryKind::TextDim
    }
}

/// Asks the model for the category of a column the rules left open.
///
/// An unparseable answer is retried once, then replaced by measure for
/// numeric types and text_dim otherwise. Transport errors propagate.
pub fn classify_with_model(
    req: &ClassificationRequest<'_>,
    model: &dyn DescriptionModel,
    params: &SamplingParams,
) -> Result<FieldCategory, ModelError> {
    let target = req.target();
    let first = Prompt::new(Stage::Classify, &target, prompt::classify_prompt(req));
    let mut reply = model.send(&first, params)?;
    let mut kind = CategoryKind::parse_token(&reply);
    if kind.is_none() {
        let repair = first.follow_up(
            Attempt::Repair,
            prompt::token_repair_prompt(&first.text, &reply, &CategoryKind::TOKENS),
        );
        reply = model.send(&repair, params)?;
        kind = CategoryKind::parse_token(&reply);
    }
    let kind = kind.unwrap_or_else(|| {
        let k = fallback_kind(req.profile);
        log::warn!("no category token in model reply for {target} ({reply:?}); using {k}");
        k
    });
    Ok(match kind {
        CategoryKind::DatetimeDim => FieldCategory::datetime(
            infer_datetime_granularity(req.profile, req.table, Some(model), params),
            Decider::Model,
        ),
        k => FieldCategory::new(k, Decider::Model),
    })
}

/// Rules first, then the model when one is given.
///
/// Without a model, columns the rules leave open get the same fallback as an
/// unparseable model answer.
pub fn classify_column(
    req: &ClassificationRequest<'_>,
    model: Option<&dyn DescriptionModel>,
    params: &SamplingParams,
    cfg: &ClassifierConfig,
) -> Result<FieldCategory, ModelError> {
    match rule_kind(req.profile, cfg) {
        Some(CategoryKind::DatetimeDim) => Ok(FieldCategory::datetime(
            infer_datetime_granularity(req.profile, req.table, model, params),
            Decider::Rule,
        )),
        Some(kind) => Ok(FieldCategory::new(kind, Decider::Rule)),
        None => match model {
            Some(m) => classify_with_model(req, m, params),
            None => Ok(FieldCategory::new(fallback_kind(req.profile), Decider::Rule)),
        },
    }
}

/// Classifies every profiled column. The result follows catalog order.
pub fn classify_snapshot(
    snapshot: &SchemaSnapshot,
    profiles: &[TableProfile],
    model: Option<&dyn DescriptionModel>,
    params: &SamplingParams,
    cfg: &ClassifierConfig,
    exec: &Executor,
) -> Result<CategoryMap, ModelError> {
    let mut jobs = Vec::new();
    for table in &snapshot.tables {
        let Some(tp) = crate::profile::find_table(profiles, &table.name) else {
            continue;
        };
        for column in &table.columns {
            if let Some(p) = tp.column(&column.name) {
                jobs.push(ClassificationRequest::new(tp, p));
            }
        }
    }
    let results = exec.map(&jobs, |req: &ClassificationRequest<'_>| classify_column(req, model, params, cfg));
    let mut out = CategoryMap::new();
    for (req, result) in jobs.iter().zip(results) {
        out.entry(req.table.to_string())
            .or_default()
            .insert(req.profile.meta.name.clone(), result?);
    }
    Ok(out)
}
