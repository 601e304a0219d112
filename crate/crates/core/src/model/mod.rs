//! The language-model boundary.
//!
//! Every stage talks to a [`DescriptionModel`]: one rendered prompt in, one
//! text reply out. Prompts also carry the stage and target they were built
//! for, which the mock backend and the cache use as lookup keys. Behaviour
//! such as retries, caching and prompt capture is layered on with wrappers.

pub mod cache;
#[cfg(feature = "http")]
pub mod http;
pub mod mock;

use std::fmt;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

pub use cache::CachedModel;
#[cfg(feature = "http")]
pub use http::HttpModel;
pub use mock::MockModel;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Classify,
    Granularity,
    DbInfo,
    TableInfo,
    ColumnRelation,
    ColumnDescription,
    TableDescription,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::Classify,
        Stage::Granularity,
        Stage::DbInfo,
        Stage::TableInfo,
        Stage::ColumnRelation,
        Stage::ColumnDescription,
        Stage::TableDescription,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Classify => "classify",
            Stage::Granularity => "granularity",
            Stage::DbInfo => "db_info",
            Stage::TableInfo => "table_info",
            Stage::ColumnRelation => "column_relation",
            Stage::ColumnDescription => "column_description",
            Stage::TableDescription => "table_description",
        }
    }

    pub fn parse(s: &str) -> Option<Stage> {
        Stage::ALL.into_iter().find(|st| st.as_str() == s)
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Why a prompt was sent: first ask, format repair, or a shorten request.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Attempt {
    Initial,
    Repair,
    Shorten,
}

impl Attempt {
    pub fn as_str(self) -> &'static str {
        match self {
            Attempt::Initial => "initial",
            Attempt::Repair => "repair",
            Attempt::Shorten => "shorten",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prompt {
    pub stage: Stage,
    /// `db_id`, `table`, `table.column` or `table.kind`, depending on stage.
    pub target: String,
    pub attempt: Attempt,
    pub text: String,
}

impl Prompt {
    pub fn new(stage: Stage, target: impl Into<String>, text: impl Into<String>) -> Self {
        Prompt {
            stage,
            target: target.into(),
            attempt: Attempt::Initial,
            text: text.into(),
        }
    }

    pub fn follow_up(&self, attempt: Attempt, text: impl Into<String>) -> Self {
        Prompt {
            stage: self.stage,
            target: self.target.clone(),
            attempt,
            text: text.into(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplingParams {
    pub temperature: f32,
    pub seed: u64,
    pub max_output_tokens: u32,
}

impl Default for SamplingParams {
    fn default() -> Self {
        SamplingParams {
            temperature: 0.0,
            seed: 0,
            max_output_tokens: 1024,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ModelError {
    /// Network or server-side failure; worth retrying.
    #[error("model transport error: {0}")]
    Transport(String),
    /// The backend refused the request (bad credentials, bad model name...).
    #[error("model backend rejected the request: {0}")]
    Rejected(String),
    #[error("model reply could not be used: {0}")]
    Protocol(String),
    #[error("no scripted reply for {stage}:{target}")]
    Unscripted { stage: Stage, target: String },
    #[error("model cache error: {0}")]
    Cache(String),
}

impl ModelError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, ModelError::Transport(_))
    }
}

pub trait DescriptionModel: Send + Sync {
    /// Identifier used in cache keys.
    fn name(&self) -> &str;

    fn send(&self, prompt: &Prompt, params: &SamplingParams) -> Result<String, ModelError>;
}

impl<T: DescriptionModel + ?Sized> DescriptionModel for &T {
    fn name(&self) -> &str {
        (**self).name()
    }
    fn send(&self, prompt: &Prompt, params: &SamplingParams) -> Result<String, ModelError> {
        (**self).send(prompt, params)
    }
}

impl<T: DescriptionModel + ?Sized> DescriptionModel for Box<T> {
    fn name(&self) -> &str {
        (**self).name()
    }
    fn send(&self, prompt: &Prompt, params: &SamplingParams) -> Result<String, ModelError> {
        (**self).send(prompt, params)
    }
}

impl<T: DescriptionModel + ?Sized> DescriptionModel for Arc<T> {
    fn name(&self) -> &str {
        (**self).name()
    }
    fn send(&self, prompt: &Prompt, params: &SamplingParams) -> Result<String, ModelError> {
        (**self).send(prompt, params)
    }
}

/// One captured exchange.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Exchange {
    pub prompt: Prompt,
    pub reply: Result<String, String>,
}

/// Records every prompt that reaches the wrapped model.
pub struct Recording<M> {
    inner: M,
    log: Mutex<Vec<Exchange>>,
}

impl<M: DescriptionModel> Recording<M> {
    pub fn new(inner: M) -> Self {
        Recording {
            inner,
            log: Mutex::new(Vec::new()),
        }
    }

    pub fn exchanges(&self) -> Vec<Exchange> {
        self.log.lock().expect("recording lock").clone()
    }

    pub fn prompts(&self) -> Vec<Prompt> {
        self.exchanges().into_iter().map(|e| e.prompt).collect()
    }

    pub fn call_count(&self) -> usize {
        self.log.lock().expect("recording lock").len()
    }

    pub fn count_stage(&self, stage: Stage) -> usize {
        self.log
            .lock()
            .expect("recording lock")
            .iter()
            .filter(|e| e.prompt.stage == stage)
            .count()
    }

    pub fn clear(&self) {
        self.log.lock().expect("recording lock").clear();
    }

    pub fn inner(&self) -> &M {
        &self.inner
    }
}

impl<M: DescriptionModel> DescriptionModel for Recording<M> {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn send(&self, prompt: &Prompt, params: &SamplingParams) -> Result<String, ModelError> {
        let reply = self.inner.send(prompt, params);
        self.log.lock().expect("recording lock").push(Exchange {
            prompt: prompt.clone(),
            reply: reply.clone().map_err(|e| e.to_string()),
        });
        reply
    }
}

/// Retries transport errors with exponential backoff.
pub struct Retrying<M> {
    inner: M,
    retries: u32,
    base_delay: Duration,
}

impl<M: DescriptionModel> Retrying<M> {
    /// Three retries, starting at one second and doubling.
    pub fn new(inner: M) -> Self {
        Self::with_policy(inner, 3, Duration::from_secs(1))
    }

    pub fn with_policy(inner: M, retries: u32, base_delay: Duration) -> Self {
        Retrying {
            inner,
            retries,
            base_delay,
        }
    }
}

impl<M: DescriptionModel> DescriptionModel for Retrying<M> {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn send(&self, prompt: &Prompt, params: &SamplingParams) -> Result<String, ModelError> {
        let mut delay = self.base_delay;
        let mut attempt = 0;
        loop {
            match self.inner.send(prompt, params) {
                Err(err) if err.is_retryable() && attempt < self.retries => {
                    attempt += 1;
                    log::warn!(
                        "{}:{} failed ({err}); retry {attempt}/{} in {:?}",
                        prompt.stage,
                        prompt.target,
                        self.retries,
                        delay
                    );
                    std::thread::sleep(delay);
                    delay *= 2;
                }
                other => return other,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicU32, Ordering};

    struct Flaky {
        failures: u32,
        calls: AtomicU32,
        error: ModelError,
    }

    impl DescriptionModel for Flaky {
        fn name(&self) -> &str {
            "flaky"
        }
        fn send(&self, _: &Prompt, _: &SamplingParams) -> Result<String, ModelError> {
            let n = self.calls.fetch_add(1, Ordering::SeqCst);
            if n < self.failures {
                Err(self.error.clone())
            } else {
                Ok("ok".into())
            }
        }
    }

    fn prompt() -> Prompt {
        Prompt::new(Stage::DbInfo, "db", "hello")
    }

    #[test]
    fn retries_transport_errors_up_to_three_times() {
        let flaky = Flaky {
            failures: 3,
            calls: AtomicU32::new(0),
            error: ModelError::Transport("reset".into()),
        };
        let m = Retrying::with_policy(flaky, 3, Duration::ZERO);
        assert_eq!(m.send(&prompt(), &SamplingParams::default()).unwrap(), "ok");
        assert_eq!(m.inner.calls.load(Ordering::SeqCst), 4);

        let flaky = Flaky {
            failures: 4,
            calls: AtomicU32::new(0),
            error: ModelError::Transport("reset".into()),
        };
        let m = Retrying::with_policy(flaky, 3, Duration::ZERO);
        assert!(matches!(m.send(&prompt(), &SamplingParams::default()), Err(ModelError::Transport(_))));
        assert_eq!(m.inner.calls.load(Ordering::SeqCst), 4);
    }

    #[test]
    fn rejections_are_not_retried() {
        let flaky = Flaky {
            failures: 1,
            calls: AtomicU32::new(0),
            error: ModelError::Rejected("401".into()),
        };
        let m = Retrying::with_policy(flaky, 3, Duration::ZERO);
        assert!(m.send(&prompt(), &SamplingParams::default()).is_err());
        assert_eq!(m.inner.calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn recording_captures_prompts_and_errors() {
        let flaky = Flaky {
            failures: 1,
            calls: AtomicU32::new(0),
            error: ModelError::Transport("x".into()),
        };
        let rec = Recording::new(flaky);
        let _ = rec.send(&prompt(), &SamplingParams::default());
        let _ = rec.send(&prompt(), &SamplingParams::default());
        let log = rec.exchanges();
        assert_eq!(log.len(), 2);
        assert!(log[0].reply.is_err());
        assert_eq!(log[1].reply.as_deref(), Ok("ok"));
        assert_eq!(rec.count_stage(Stage::DbInfo), 2);
        assert_eq!(rec.count_stage(Stage::TableInfo), 0);
    }

    #[test]
    fn stage_names_round_trip() {
        for s in Stage::ALL {
            assert_eq!(Stage::parse(s.as_str()), Some(s));
        }
    }
}
