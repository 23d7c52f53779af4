//! Deterministic offline provider backed by a JSON response table.
//!
//! Lookup order per task: exact match on the request text, digest of the
//! rendered prompt, longest table key occurring as a substring of the
//! prompt or text, then the task default. Every lookup is recorded so
//! tests can assert exactly which posts were routed to the provider.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Mutex;

use serde::Deserialize;
use sha2::{Digest, Sha256};

use super::{Provider, ProviderCall, ProviderError};

#[derive(Debug, Clone, Deserialize, Default)]
struct MockTaskFile {
    #[serde(default)]
    entries: BTreeMap<String, String>,
    #[serde(default)]
    default: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
struct MockFile {
    tasks: BTreeMap<String, MockTaskFile>,
}

#[derive(Debug, Clone)]
struct MockTask {
    /// Sorted longest-key-first (ties lexicographic) for deterministic
    /// substring matching.
    entries: Vec<(String, String)>,
    default: Option<String>,
}

/// One recorded invocation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MockCall {
    pub task_id: String,
    pub text: String,
}

pub struct MockProvider {
    id: String,
    tasks: BTreeMap<String, MockTask>,
    calls: Mutex<Vec<MockCall>>,
}

impl MockProvider {
    pub fn from_file(path: &Path) -> Result<Self, ProviderError> {
        let body = std::fs::read_to_string(path).map_err(|e| ProviderError::Mock {
            reason: format!("read {}: {e}", path.display()),
        })?;
        Self::from_json(&body)
    }

    pub fn from_json(json: &str) -> Result<Self, ProviderError> {
        let file: MockFile = serde_json::from_str(json).map_err(|e| ProviderError::Mock {
            reason: format!("parse mock table: {e}"),
        })?;
        let tasks = file
            .tasks
            .into_iter()
            .map(|(task, spec)| {
                let mut entries: Vec<(String, String)> = spec.entries.into_iter().collect();
                entries.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then_with(|| a.0.cmp(&b.0)));
                (
                    task,
                    MockTask {
                        entries,
                        default: spec.default,
                    },
                )
            })
            .collect();
        Ok(Self {
            id: "mock".into(),
            tasks,
            calls: Mutex::new(Vec::new()),
        })
    }

    /// Convenience constructor for tests: one task, text-keyed responses.
    pub fn single_task(task_id: &str, entries: &[(&str, &str)], default: Option<&str>) -> Self {
        let mut sorted: Vec<(String, String)> = entries
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect();
        sorted.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then_with(|| a.0.cmp(&b.0)));
        let mut tasks = BTreeMap::new();
        tasks.insert(
            task_id.to_string(),
            MockTask {
                entries: sorted,
                default: default.map(str::to_string),
            },
        );
        Self {
            id: "mock".into(),
            tasks,
            calls: Mutex::new(Vec::new()),
        }
    }

    pub fn calls(&self) -> Vec<MockCall> {
        self.calls.lock().expect("mock lock").clone()
    }

    pub fn call_count(&self) -> usize {
        self.calls.lock().expect("mock lock").len()
    }
}

impl Provider for MockProvider {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, call: &ProviderCall<'_>) -> Result<String, ProviderError> {
        self.calls.lock().expect("mock lock").push(MockCall {
            task_id: call.task_id.to_string(),
            text: call.text.to_string(),
        });
        let task = self
            .tasks
            .get(call.task_id)
            .ok_or_else(|| ProviderError::Mock {
                reason: format!("no mock table for task {}", call.task_id),
            })?;
        let prompt_digest = hex::encode(Sha256::digest(call.prompt.as_bytes()));
        for (key, response) in &task.entries {
            if key == call.text || *key == prompt_digest {
                return Ok(response.clone());
            }
        }
        for (key, response) in &task.entries {
            if call.prompt.contains(key) || call.text.contains(key) {
                return Ok(response.clone());
            }
        }
        task.default.clone().ok_or_else(|| ProviderError::Mock {
            reason: format!("no mock response for task {} text {:?}", call.task_id, call.text),
        })
    }
}
