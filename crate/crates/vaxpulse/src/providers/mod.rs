//! Uniform contract for external text-labeling services.
//!
//! A [`ProviderClient`] renders a prompt from a versioned template,
//! consults the response cache, and otherwise invokes the underlying
//! [`Provider`] with rate limiting and exponential-backoff retries. An
//! unparseable response earns exactly one reprompt before failing. The
//! deterministic [`MockProvider`] makes every downstream module testable
//! offline.

mod cache;
mod http;
mod mock;
mod template;

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::{BackoffPolicy, Clock, RateLimiter, SystemClock};

pub use cache::{cache_digest, CacheEntry, ResponseCache};
pub use http::HttpProvider;
pub use mock::{MockCall, MockProvider};
pub use template::{parse_label, render_labels, OutputFormat, PromptTemplate};

#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("unknown prompt template: {0}")]
    UnknownTemplate(String),
    #[error("invalid template {id}: {reason}")]
    InvalidTemplate { id: String, reason: String },
    #[error("invalid label request: {reason}")]
    InvalidRequest { reason: String },
    #[error("provider {provider} transport failure: {reason}")]
    Transport { provider: String, reason: String },
    #[error("provider {provider} unavailable after {attempts} attempts: {last}")]
    Unavailable {
        provider: String,
        attempts: u32,
        last: String,
    },
    #[error("unparseable provider response {raw:?} for labels {label_set:?}")]
    Unparseable { raw: String, label_set: Vec<String> },
    #[error("response cache failure: {reason}")]
    Cache { reason: String },
    #[error("mock provider: {reason}")]
    Mock { reason: String },
    #[error("credential environment variable {env} is not set")]
    MissingCredential { env: String },
}

impl ProviderError {
    fn retryable(&self) -> bool {
        matches!(self, ProviderError::Transport { .. })
    }
}

/// One labeling request against a named task.
#[derive(Debug, Clone)]
pub struct LabelRequest {
    /// e.g. "relevance.v1", "sentiment.v1", "concern.v1", "vaccine_tag.v1".
    pub task_id: String,
    pub text: String,
    pub label_set: Vec<String>,
    pub template_id: String,
}

impl LabelRequest {
    pub fn new(task_id: &str, text: &str, label_set: &[&str]) -> Self {
        Self {
            task_id: task_id.to_string(),
            text: text.to_string(),
            label_set: label_set.iter().map(|s| s.to_string()).collect(),
            template_id: task_id.to_string(),
        }
    }

    fn validate(&self) -> Result<(), ProviderError> {
        if self.label_set.is_empty() {
            return Err(ProviderError::InvalidRequest {
                reason: "label_set is empty".into(),
            });
        }
        let mut seen = std::collections::BTreeSet::new();
        for label in &self.label_set {
            if !seen.insert(label) {
                return Err(ProviderError::InvalidRequest {
                    reason: format!("duplicate label {label:?}"),
                });
            }
        }
        Ok(())
    }
}

/// Parsed label(s) of a response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LabelValue {
    Single(String),
    Set(Vec<String>),
}

impl LabelValue {
    pub fn single(&self) -> Option<&str> {
        match self {
            LabelValue::Single(s) => Some(s),
            LabelValue::Set(_) => None,
        }
    }

    pub fn set(&self) -> Vec<&str> {
        match self {
            LabelValue::Single(s) => vec![s.as_str()],
            LabelValue::Set(v) => v.iter().map(String::as_str).collect(),
        }
    }
}

/// Response to a [`LabelRequest`]; `label` is always a member (or subset)
/// of the request's label set.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelResponse {
    pub label: LabelValue,
    pub confidence: Option<f64>,
    /// Verbatim provider output.
    pub raw: String,
    pub provider_id: String,
    pub cached: bool,
}

/// Free-form completion (used for topic naming, where the response is a
/// phrase rather than a constrained label).
#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub text: String,
    pub provider_id: String,
    pub cached: bool,
}

/// Everything a transport needs for one invocation.
pub struct ProviderCall<'a> {
    pub task_id: &'a str,
    pub system: &'a str,
    pub prompt: &'a str,
    /// The original request text (mock providers key on it).
    pub text: &'a str,
}

/// Transport-level contract: turn a rendered prompt into raw text.
pub trait Provider: Send + Sync {
    fn id(&self) -> &str;
    fn complete(&self, call: &ProviderCall<'_>) -> Result<String, ProviderError>;
}

impl<P: Provider + ?Sized> Provider for Arc<P> {
    fn id(&self) -> &str {
        (**self).id()
    }

    fn complete(&self, call: &ProviderCall<'_>) -> Result<String, ProviderError> {
        (**self).complete(call)
    }
}

/// One logical consultation of the provider (cache hits included), used
/// to verify routing decisions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CallLogEntry {
    pub task_id: String,
    pub text: String,
}

/// Caching, rate-limited, retrying front end over a [`Provider`].
pub struct ProviderClient {
    provider: Box<dyn Provider>,
    templates: BTreeMap<String, PromptTemplate>,
    cache: ResponseCache,
    limiter: Option<Mutex<RateLimiter>>,
    clock: Arc<dyn Clock>,
    backoff: Mutex<BackoffPolicy>,
    network_calls: AtomicUsize,
    call_log: Mutex<Vec<CallLogEntry>>,
}

impl ProviderClient {
    pub fn new(provider: impl Provider + 'static, cache: ResponseCache) -> Self {
        Self {
            provider: Box::new(provider),
            templates: default_templates(),
            cache,
            limiter: None,
            clock: Arc::new(SystemClock::new()),
            backoff: Mutex::new(BackoffPolicy::new(0)),
            network_calls: AtomicUsize::new(0),
            call_log: Mutex::new(Vec::new()),
        }
    }

    pub fn with_rate_limit(mut self, per_minute: u32) -> Self {
        self.limiter = Some(Mutex::new(RateLimiter::new(per_minute)));
        self
    }

    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    pub fn with_backoff_seed(mut self, seed: u64) -> Self {
        self.backoff = Mutex::new(BackoffPolicy::new(seed));
        self
    }

    /// Registers or replaces a template.
    pub fn with_template(mut self, template: PromptTemplate) -> Self {
        self.templates.insert(template.id.clone(), template);
        self
    }

    pub fn template(&self, id: &str) -> Option<&PromptTemplate> {
        self.templates.get(id)
    }

    /// Number of transport invocations (excludes cache hits).
    pub fn network_calls(&self) -> usize {
        self.network_calls.load(Ordering::SeqCst)
    }

    /// Every logical consultation, cache hits included.
    pub fn call_log(&self) -> Vec<CallLogEntry> {
        self.call_log.lock().expect("log lock").clone()
    }

    pub fn call_count(&self) -> usize {
        self.call_log.lock().expect("log lock").len()
    }

    /// Label-constrained call: cache, invoke, parse, single reprompt on
    /// unparseable output.
    pub fn call(&self, request: &LabelRequest) -> Result<LabelResponse, ProviderError> {
        request.validate()?;
        let template = self
            .templates
            .get(&request.template_id)
            .ok_or_else(|| ProviderError::UnknownTemplate(request.template_id.clone()))?;
        template.validate()?;
        let prompt = template.render(&request.text, &request.label_set);
        self.log_call(&request.task_id, &request.text);

        let digest = cache_digest(self.provider.id(), &template.cache_tag(), &prompt);
        if let Some(entry) = self.cache.get(&digest)? {
            let label = parse_label(&entry.raw, &request.label_set, template.output_format)?;
            return Ok(LabelResponse {
                label,
                confidence: entry.confidence,
                raw: entry.raw,
                provider_id: entry.provider_id,
                cached: true,
            });
        }

        let raw = self.invoke(&request.task_id, &template.system_text, &prompt, &request.text)?;
        let (label, raw) = match parse_label(&raw, &request.label_set, template.output_format) {
            Ok(label) => (label, raw),
            Err(_) => {
                let reprompt = format!(
                    "{prompt}\nAnswer with exactly one of: {}",
                    render_labels(&request.label_set)
                );
                let raw2 =
                    self.invoke(&request.task_id, &template.system_text, &reprompt, &request.text)?;
                let label = parse_label(&raw2, &request.label_set, template.output_format)?;
                (label, raw2)
            }
        };

        self.cache.put(
            &digest,
            CacheEntry {
                raw: raw.clone(),
                confidence: None,
                provider_id: self.provider.id().to_string(),
            },
        )?;
        Ok(LabelResponse {
            label,
            confidence: None,
            raw,
            provider_id: self.provider.id().to_string(),
            cached: false,
        })
    }

    /// Free-form call: same caching and retry behaviour, no label parsing.
    pub fn complete_free(
        &self,
        task_id: &str,
        template_id: &str,
        text: &str,
        labels: &[String],
    ) -> Result<Completion, ProviderError> {
        let template = self
            .templates
            .get(template_id)
            .ok_or_else(|| ProviderError::UnknownTemplate(template_id.to_string()))?;
        template.validate()?;
        let prompt = template.render(text, labels);
        self.log_call(task_id, text);

        let digest = cache_digest(self.provider.id(), &template.cache_tag(), &prompt);
        if let Some(entry) = self.cache.get(&digest)? {
            return Ok(Completion {
                text: entry.raw,
                provider_id: entry.provider_id,
                cached: true,
            });
        }
        let raw = self.invoke(task_id, &template.system_text, &prompt, text)?;
        self.cache.put(
            &digest,
            CacheEntry {
                raw: raw.clone(),
                confidence: None,
                provider_id: self.provider.id().to_string(),
            },
        )?;
        Ok(Completion {
            text: raw,
            provider_id: self.provider.id().to_string(),
            cached: false,
        })
    }

    fn log_call(&self, task_id: &str, text: &str) {
        self.call_log.lock().expect("log lock").push(CallLogEntry {
            task_id: task_id.to_string(),
            text: text.to_string(),
        });
    }

    fn invoke(
        &self,
        task_id: &str,
        system: &str,
        prompt: &str,
        text: &str,
    ) -> Result<String, ProviderError> {
        let call = ProviderCall {
            task_id,
            system,
            prompt,
            text,
        };
        let max_attempts = self.backoff.lock().expect("backoff lock").max_attempts;
        let mut attempt = 0;
        loop {
            attempt += 1;
            if let Some(limiter) = &self.limiter {
                limiter
                    .lock()
                    .expect("limiter lock")
                    .acquire(self.clock.as_ref());
            }
            self.network_calls.fetch_add(1, Ordering::SeqCst);
            match self.provider.complete(&call) {
                Ok(raw) => return Ok(raw),
                Err(err) if err.retryable() && attempt < max_attempts => {
                    log::warn!("provider attempt {attempt} failed, retrying: {err}");
                    self.backoff
                        .lock()
                        .expect("backoff lock")
                        .backoff(attempt, self.clock.as_ref());
                }
                Err(err) if err.retryable() => {
                    return Err(ProviderError::Unavailable {
                        provider: self.provider.id().to_string(),
                        attempts: attempt,
                        last: err.to_string(),
                    });
                }
                Err(err) => return Err(err),
            }
        }
    }
}

/// Templates shipped with the crate, keyed by id.
pub fn default_templates() -> BTreeMap<String, PromptTemplate> {
    let sources = [
        include_str!("../../data/prompts/relevance.v1.json"),
        include_str!("../../data/prompts/sentiment.v1.json"),
        include_str!("../../data/prompts/concern.v1.json"),
        include_str!("../../data/prompts/vaccine_tag.v1.json"),
        include_str!("../../data/prompts/topic_name.v1.json"),
    ];
    sources
        .iter()
        .map(|src| {
            let template = PromptTemplate::from_json(src).expect("bundled template is valid");
            (template.id.clone(), template)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::VirtualClock;

    struct FailingProvider;

    impl Provider for FailingProvider {
        fn id(&self) -> &str {
            "down"
        }

        fn complete(&self, _call: &ProviderCall<'_>) -> Result<String, ProviderError> {
            Err(ProviderError::Transport {
                provider: "down".into(),
                reason: "connection refused".into(),
            })
        }
    }

    fn sentiment_request(text: &str) -> LabelRequest {
        LabelRequest::new("sentiment.v1", text, &["negative", "neutral", "positive"])
    }

    #[test]
    fn identical_requests_invoke_provider_once() {
        let mock = Arc::new(MockProvider::single_task(
            "sentiment.v1",
            &[("sore arm after shot", "negative")],
            None,
        ));
        let client = ProviderClient::new(Arc::clone(&mock), ResponseCache::in_memory());
        let first = client.call(&sentiment_request("sore arm after shot")).unwrap();
        assert!(!first.cached);
        assert_eq!(first.label, LabelValue::Single("negative".into()));
        let second = client.call(&sentiment_request("sore arm after shot")).unwrap();
        assert!(second.cached);
        assert_eq!(second.raw, first.raw);
        assert_eq!(mock.call_count(), 1);
        assert_eq!(client.network_calls(), 1);
        assert_eq!(client.call_count(), 2);
    }

    #[test]
    fn cache_soundness_network_calls_equal_distinct_digests() {
        let mock = Arc::new(MockProvider::single_task("sentiment.v1", &[], Some("neutral")));
        let client = ProviderClient::new(Arc::clone(&mock), ResponseCache::in_memory());
        let texts = ["a b c", "d e f", "a b c", "g h i", "d e f", "a b c"];
        for text in texts {
            client.call(&sentiment_request(text)).unwrap();
        }
        let distinct: std::collections::BTreeSet<&str> = texts.iter().copied().collect();
        assert_eq!(client.network_calls(), distinct.len());
    }

    #[test]
    fn provider_down_errors_after_five_attempts() {
        let clock = Arc::new(VirtualClock::new());
        let client = ProviderClient::new(FailingProvider, ResponseCache::in_memory())
            .with_clock(clock)
            .with_backoff_seed(1);
        let err = client.call(&sentiment_request("anything")).unwrap_err();
        match err {
            ProviderError::Unavailable { attempts, .. } => assert_eq!(attempts, 5),
            other => panic!("unexpected error: {other}"),
        }
        assert_eq!(client.network_calls(), 5);
    }

    #[test]
    fn unparseable_response_gets_one_reprompt() {
        // First answer is garbage; the reprompt (longer prompt) gets a
        // parseable one via the catch-all shorter key.
        let mock = Arc::new(MockProvider::single_task(
            "sentiment.v1",
            &[("Answer with exactly one of", "positive")],
            Some("mumble"),
        ));
        let client = ProviderClient::new(Arc::clone(&mock), ResponseCache::in_memory());
        let response = client.call(&sentiment_request("vague text")).unwrap();
        assert_eq!(response.label, LabelValue::Single("positive".into()));
        assert_eq!(mock.call_count(), 2);

        // Garbage twice is a hard error.
        let stubborn = Arc::new(MockProvider::single_task("sentiment.v1", &[], Some("mumble")));
        let client = ProviderClient::new(Arc::clone(&stubborn), ResponseCache::in_memory());
        let err = client.call(&sentiment_request("vague text")).unwrap_err();
        assert!(matches!(err, ProviderError::Unparseable { .. }), "{err}");
        assert_eq!(stubborn.call_count(), 2);
    }

    #[test]
    fn set_valued_task_parses_subset() {
        let mock = MockProvider::single_task(
            "concern.v1",
            &[("fever", "side_effects, maybe safety too")],
            None,
        );
        let client = ProviderClient::new(mock, ResponseCache::in_memory());
        let request = LabelRequest::new(
            "concern.v1",
            "fever after dose",
            &[
                "safety",
                "side_effects",
                "misinformation",
                "trust_in_authorities",
                "previous_negative_experience",
            ],
        );
        let response = client.call(&request).unwrap();
        assert_eq!(
            response.label,
            LabelValue::Set(vec!["safety".into(), "side_effects".into()])
        );
    }

    #[test]
    fn bundled_templates_validate() {
        let templates = default_templates();
        for id in [
            "relevance.v1",
            "sentiment.v1",
            "concern.v1",
            "vaccine_tag.v1",
            "topic_name.v1",
        ] {
            let template = templates.get(id).unwrap_or_else(|| panic!("missing {id}"));
            template.validate().unwrap();
            assert_eq!(template.id, id);
        }
    }

    #[test]
    fn duplicate_labels_rejected() {
        let mock = MockProvider::single_task("sentiment.v1", &[], Some("neutral"));
        let client = ProviderClient::new(mock, ResponseCache::in_memory());
        let request = LabelRequest::new("sentiment.v1", "text", &["a", "a"]);
        assert!(matches!(
            client.call(&request),
            Err(ProviderError::InvalidRequest { .. })
        ));
    }
}
