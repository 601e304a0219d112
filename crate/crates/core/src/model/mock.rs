//! Scripted model backend for tests and offline runs.
//!
//! A fixture is a JSON object:
//!
//! ```json
//! {
//!   "model": "retail-mock",
//!   "strict": false,
//!   "replies": {
//!     "db_info": ["```\ndomain: e-commerce\n...\n```"],
//!     "column_description:orders.is_promo": ["...", "..."],
//!     "table_info:*": ["..."],
//!     "classify:orders.zip": [{"error": "connection reset"}, "CODE"]
//!   }
//! }
//! ```
//!
//! Keys are `stage:target`, `stage:*` or a bare `stage`; the most specific
//! key wins. Each key's list is consumed in order, separately per target,
//! and the last entry repeats once the list runs out. An `{"error": ...}`
//! entry simulates a transport failure. Prompts with no matching key get a
//! synthesized reply derived from the seed and the target, unless the
//! fixture is `strict`.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Mutex;

use serde::Deserialize;
use sha2::{Digest, Sha256};

use super::{DescriptionModel, ModelError, Prompt, SamplingParams, Stage};

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum ScriptedReply {
    Text(String),
    Failure { error: String },
}

#[derive(Debug, Clone, Deserialize)]
pub struct MockFixture {
    #[serde(default = "default_name")]
    pub model: String,
    #[serde(default)]
    pub strict: bool,
    #[serde(default)]
    pub replies: HashMap<String, Vec<ScriptedReply>>,
}

fn default_name() -> String {
    "mock".to_string()
}

impl Default for MockFixture {
    fn default() -> Self {
        MockFixture {
            model: default_name(),
            strict: false,
            replies: HashMap::new(),
        }
    }
}

pub struct MockModel {
    fixture: MockFixture,
    cursors: Mutex<HashMap<(String, String), usize>>,
}

impl MockModel {
    pub fn new(fixture: MockFixture) -> Self {
        MockModel {
            fixture,
            cursors: Mutex::new(HashMap::new()),
        }
    }

    /// A mock with no script: every reply is synthesized.
    pub fn synthetic() -> Self {
        Self::new(MockFixture::default())
    }

    pub fn from_json(json: &str) -> Result<Self, ModelError> {
        let fixture: MockFixture =
            serde_json::from_str(json).map_err(|e| ModelError::Rejected(format!("invalid mock fixture: {e}")))?;
        Ok(Self::new(fixture))
    }

    pub fn from_path(path: &Path) -> Result<Self, ModelError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ModelError::Rejected(format!("cannot read mock fixture {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Adds or replaces the scripted replies for `key`.
    pub fn script(mut self, key: &str, replies: impl IntoIterator<Item = impl Into<String>>) -> Self {
        self.fixture
            .replies
            .insert(key.to_string(), replies.into_iter().map(|r| ScriptedReply::Text(r.into())).collect());
        self
    }

    pub fn script_replies(mut self, key: &str, replies: Vec<ScriptedReply>) -> Self {
        self.fixture.replies.insert(key.to_string(), replies);
        self
    }

    pub fn strict(mut self, strict: bool) -> Self {
        self.fixture.strict = strict;
        self
    }

    fn lookup(&self, prompt: &Prompt) -> Option<(&str, &[ScriptedReply])> {
        let stage = prompt.stage.as_str();
        let keys = [format!("{stage}:{}", prompt.target), format!("{stage}:*"), stage.to_string()];
        keys.iter().find_map(|k| {
            self.fixture
                .replies
                .get_key_value(k.as_str())
                .filter(|(_, v)| !v.is_empty())
                .map(|(k, v)| (k.as_str(), v.as_slice()))
        })
    }
}

impl DescriptionModel for MockModel {
    fn name(&self) -> &str {
        &self.fixture.model
    }

    fn send(&self, prompt: &Prompt, params: &SamplingParams) -> Result<String, ModelError> {
        let Some((key, replies)) = self.lookup(prompt) else {
            if self.fixture.strict {
                return Err(ModelError::Unscripted {
                    stage: prompt.stage,
                    target: prompt.target.clone(),
                });
            }
            return Ok(synthesize(prompt, params.seed));
        };
        let index = {
            let mut cursors = self.cursors.lock().expect("mock cursor lock");
            let cursor = cursors.entry((key.to_string(), prompt.target.clone())).or_insert(0);
            let i = (*cursor).min(replies.len() - 1);
            *cursor += 1;
            i
        };
        match &replies[index] {
            ScriptedReply::Text(t) => Ok(t.clone()),
            ScriptedReply::Failure { error } => Err(ModelError::Transport(error.clone())),
        }
    }
}

const MOCK_DOMAINS: [&str; 4] = ["general business", "operations", "analytics", "records management"];
const TOKENS: [&str; 5] = ["MEASURE", "CODE", "ENUM", "DATETIME", "TEXT"];
const GRAINS: [&str; 7] = ["YEAR", "QUARTER", "MONTH", "DAY", "HOUR", "MINUTE", "SECOND"];

fn pick(seed: u64, prompt: &Prompt) -> usize {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(prompt.stage.as_str().as_bytes());
    h.update(prompt.target.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes")) as usize
}

/// Deterministic stand-in reply for an unscripted prompt. Well formed for
/// its stage and within the word limits.
fn synthesize(prompt: &Prompt, seed: u64) -> String {
    let n = pick(seed, prompt);
    let target = prompt.target.replace(['_', '.'], " ");
    let body = match prompt.stage {
        Stage::Classify => return TOKENS[n % TOKENS.len()].to_string(),
        Stage::Granularity => return GRAINS[n % GRAINS.len()].to_string(),
        Stage::DbInfo => format!(
            "domain: {}\noverview: The {target} database keeps operational records (variant {}).\nkey_dimensions: time, category\nkey_metrics: count, total",
            MOCK_DOMAINS[n % MOCK_DOMAINS.len()],
            n % 97
        ),
        Stage::TableInfo => format!(
            "summary: The {target} table stores one row per {target} record (variant {}).\nfunction: Tracks {target} entries for reporting.",
            n % 97
        ),
        Stage::ColumnRelation => format!(
            "analysis: Columns in group {target} describe related attributes and differ in meaning (variant {}).",
            n % 97
        ),
        Stage::ColumnDescription => format!("description: The {target} value of each record (variant {}).", n % 97),
        Stage::TableDescription => format!(
            "description: Records of {target}, summarising their attributes for reporting and lookup (variant {}).",
            n % 97
        ),
    };
    format!("```\n{body}\n```")
}
