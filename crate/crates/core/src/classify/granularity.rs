//! Temporal granularity of DateTime columns.
//!
//! Native `DATE` and `YEAR` columns are settled by their declared type.
//! Everything else goes through a format probe over the rendered samples:
//! the first pattern (in the order below) matched by at least 80% of the
//! samples decides. When no pattern reaches that share, the model is asked.
//!
//! | pattern                                   | granularity |
//! |-------------------------------------------|-------------|
//! | `YYYY-MM-DD hh:mm:ss[.f][tz]` (`T` or space) | second   |
//! | `YYYY-MM-DD hh:mm`                        | minute      |
//! | `YYYY-MM-DD hh`                           | hour        |
//! | `YYYY-MM-DD`, `YYYY/MM/DD`                | day         |
//! | `YYYYMMDDhhmmss`                          | second      |
//! | `YYYYMMDD`                                | day         |
//! | `YYYY-MM`, `YYYY/MM`, `YYYYMM`            | month       |
//! | `YYYY-Qn`, `YYYYQn`                       | quarter     |
//! | `YYYY` (1800..=2200)                      | year        |
//! | epoch seconds (1973-03-03 .. 2100-01-01)  | second      |

use chrono::{NaiveDate, NaiveTime};

use super::Granularity;
use crate::introspect::types::base_name;
use crate::introspect::NormalizedType;
use crate::model::{Attempt, DescriptionModel, Prompt, SamplingParams, Stage};
use crate::profile::ColumnProfile;
use crate::prompt;

/// Share of samples one pattern must match.
pub const PROBE_THRESHOLD: f64 = 0.8;

const EPOCH_MIN: i64 = 100_000_000;
const EPOCH_MAX: i64 = 4_102_444_800;

fn digits(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit())
}

fn num(s: &str) -> Option<u32> {
    digits(s).then(|| s.parse().ok()).flatten()
}

fn date(y: &str, m: &str, d: &str) -> bool {
    if y.len() != 4 || m.len() != 2 || d.len() != 2 {
        return false;
    }
    match (num(y), num(m), num(d)) {
        (Some(y), Some(m), Some(d)) => NaiveDate::from_ymd_opt(y as i32, m, d).is_some(),
        _ => false,
    }
}

fn year_month(y: &str, m: &str) -> bool {
    date(y, m, "01")
}

/// `YYYY-MM-DD` or `YYYY/MM/DD`.
fn dashed_date(s: &str) -> bool {
    if s.len() != 10 {
        return false;
    }
    let b = s.as_bytes();
    let sep = b[4];
    (sep == b'-' || sep == b'/') && b[7] == sep && date(&s[0..4], &s[5..7], &s[8..10])
}

fn time_parts(t: &str, fields: usize) -> bool {
    let parts: Vec<&str> = t.split(':').collect();
    if parts.len() != fields || parts.iter().any(|p| p.len() != 2) {
        return false;
    }
    let h = num(parts[0]);
    let m = parts.get(1).map_or(Some(0), |p| num(p));
    let s = parts.get(2).map_or(Some(0), |p| num(p));
    match (h, m, s) {
        (Some(h), Some(m), Some(s)) => NaiveTime::from_hms_opt(h, m, s).is_some(),
        _ => false,
    }
}

/// Splits `YYYY-MM-DD<sep>rest` into the time part.
fn split_datetime(s: &str) -> Option<&str> {
    if s.len() < 12 || !s.is_char_boundary(10) || !s.is_char_boundary(11) {
        return None;
    }
    let sep = s.as_bytes()[10];
    if (sep != b' ' && sep != b'T') || !dashed_date(&s[..10]) {
        return None;
    }
    Some(&s[11..])
}

fn strip_fraction_and_zone(t: &str) -> &str {
    let t = t.strip_suffix('Z').unwrap_or(t);
    let t = match t.rfind(['+', '-']) {
        Some(i) if i >= 8 => &t[..i],
        _ => t,
    };
    match t.find('.') {
        Some(i) if digits(&t[i + 1..]) => &t[..i],
        _ => t,
    }
}

fn pattern_datetime_second(s: &str) -> bool {
    split_datetime(s).is_some_and(|t| time_parts(strip_fraction_and_zone(t), 3))
}

fn pattern_datetime_minute(s: &str) -> bool {
    split_datetime(s).is_some_and(|t| time_parts(t, 2))
}

fn pattern_datetime_hour(s: &str) -> bool {
    split_datetime(s).is_some_and(|t| time_parts(t, 1))
}

fn pattern_compact_datetime(s: &str) -> bool {
    s.len() == 14
        && digits(s)
        && date(&s[0..4], &s[4..6], &s[6..8])
        && time_parts(&format!("{}:{}:{}", &s[8..10], &s[10..12], &s[12..14]), 3)
}

fn pattern_compact_date(s: &str) -> bool {
    s.len() == 8 && digits(s) && date(&s[0..4], &s[4..6], &s[6..8])
}

fn pattern_month(s: &str) -> bool {
    match s.len() {
        7 => {
            let sep = s.as_bytes()[4];
            (sep == b'-' || sep == b'/') && year_month(&s[0..4], &s[5..7])
        }
        6 => digits(s) && year_month(&s[0..4], &s[4..6]),
        _ => false,
    }
}

fn pattern_quarter(s: &str) -> bool {
    let upper = s.to_ascii_uppercase();
    let rest = match upper.get(4..) {
        Some(r) => r,
        None => return false,
    };
    let q = rest.strip_prefix("-Q").or_else(|| rest.strip_prefix('Q'));
    digits(&upper[..4]) && matches!(q, Some("1" | "2" | "3" | "4"))
}

fn pattern_year(s: &str) -> bool {
    s.len() == 4 && num(s).is_some_and(|y| (1800..=2200).contains(&y))
}

fn pattern_epoch_seconds(s: &str) -> bool {
    (9..=10).contains(&s.len()) && digits(s) && s.parse::<i64>().is_ok_and(|v| (EPOCH_MIN..=EPOCH_MAX).contains(&v))
}

type Pattern = (fn(&str) -> bool, Granularity);

const PATTERNS: [Pattern; 10] = [
    (pattern_datetime_second, Granularity::Second),
    (pattern_datetime_minute, Granularity::Minute),
    (pattern_datetime_hour, Granularity::Hour),
    (dashed_date, Granularity::Day),
    (pattern_compact_datetime, Granularity::Second),
    (pattern_compact_date, Granularity::Day),
    (pattern_month, Granularity::Month),
    (pattern_quarter, Granularity::Quarter),
    (pattern_year, Granularity::Year),
    (pattern_epoch_seconds, Granularity::Second),
];

/// Format probe alone; `None` when no pattern covers 80% of the samples.
pub fn probe_granularity(samples: &[String]) -> Option<Granularity> {
    if samples.is_empty() {
        return None;
    }
    let total = samples.len() as f64;
    PATTERNS.iter().find_map(|(matches, grain)| {
        let hits = samples.iter().filter(|s| matches(s.trim())).count() as f64;
        (hits / total >= PROBE_THRESHOLD).then_some(*grain)
    })
}

/// Granularity fixed by a native temporal type, if any.
pub fn declared_granularity(profile: &ColumnProfile) -> Option<Granularity> {
    if profile.meta.normalized_type != NormalizedType::Datetime {
        return None;
    }
    match base_name(&profile.meta.declared_type.to_ascii_uppercase()).as_str() {
        "DATE" => Some(Granularity::Day),
        "YEAR" => Some(Granularity::Year),
        _ => None,
    }
}

/// Declared type, then format probe, then the model, then `day`.
///
/// Native timestamp types that the probe cannot read default to `second`
/// without asking the model. Columns with no rows default to `day`.
pub fn infer_datetime_granularity(
    profile: &ColumnProfile,
    table: &str,
    model: Option<&dyn DescriptionModel>,
    params: &SamplingParams,
) -> Granularity {
    if let Some(g) = declared_granularity(profile) {
        return g;
    }
    if profile.row_count == 0 || profile.samples.is_empty() {
        return Granularity::Day;
    }
    if let Some(g) = probe_granularity(&profile.samples) {
        return g;
    }
    if profile.meta.normalized_type == NormalizedType::Datetime {
        return Granularity::Second;
    }
    let target = format!("{table}.{}", profile.meta.name);
    let Some(model) = model else {
        log::warn!("granularity of {target} is ambiguous; defaulting to day");
        return Granularity::Day;
    };
    let first = Prompt::new(Stage::Granularity, &target, prompt::granularity_prompt(table, profile));
    let mut reply = model.send(&first, params);
    if matches!(&reply, Ok(text) if Granularity::parse_token(text).is_none()) {
        let repair = first.follow_up(
            Attempt::Repair,
            prompt::token_repair_prompt(&first.text, reply.as_deref().unwrap_or_default(), &Granularity::TOKENS),
        );
        reply = model.send(&repair, params);
    }
    match reply {
        Ok(text) => Granularity::parse_token(&text).unwrap_or_else(|| {
            log::warn!("model gave no usable granularity for {target}; defaulting to day");
            Granularity::Day
        }),
        Err(err) => {
            log::warn!("granularity request for {target} failed ({err}); defaulting to day");
            Granularity::Day
        }
    }
}
