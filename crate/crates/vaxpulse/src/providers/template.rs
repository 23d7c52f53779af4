//! Prompt templates and label parsing for external labeling services.

use serde::{Deserialize, Serialize};

use super::{LabelValue, ProviderError};

/// How a provider response is interpreted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    SingleLabel,
    LabelSet,
}

/// Versioned prompt template. `user_template` must contain `{text}` and
/// `{labels}` exactly once each.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub id: String,
    pub version: u32,
    pub system_text: String,
    pub user_template: String,
    pub output_format: OutputFormat,
}

impl PromptTemplate {
    pub fn from_json(json: &str) -> Result<Self, ProviderError> {
        let template: PromptTemplate =
            serde_json::from_str(json).map_err(|e| ProviderError::InvalidTemplate {
                id: "<unparsed>".into(),
                reason: e.to_string(),
            })?;
        template.validate()?;
        Ok(template)
    }

    pub fn validate(&self) -> Result<(), ProviderError> {
        for placeholder in ["{text}", "{labels}"] {
            let count = self.user_template.matches(placeholder).count();
            if count != 1 {
                return Err(ProviderError::InvalidTemplate {
                    id: self.id.clone(),
                    reason: format!("placeholder {placeholder} occurs {count} times, expected 1"),
                });
            }
        }
        Ok(())
    }

    /// Substitutes placeholders; `{labels}` first so placeholder-like
    /// content inside `text` is never re-expanded.
    pub fn render(&self, text: &str, labels: &[String]) -> String {
        self.user_template
            .replace("{labels}", &render_labels(labels))
            .replace("{text}", text)
    }

    /// Cache key component: id plus version, so template edits invalidate
    /// stale entries.
    pub fn cache_tag(&self) -> String {
        format!("{}:{}", self.id, self.version)
    }
}

/// Renders a label set as a comma-separated quoted list in given order.
pub fn render_labels(labels: &[String]) -> String {
    labels
        .iter()
        .map(|l| format!("\"{l}\""))
        .collect::<Vec<_>>()
        .join(", ")
}

/// Extracts the label(s) from a raw provider response by case-insensitive
/// whole-word matching, scanning `label_set` in order.
pub fn parse_label(
    raw: &str,
    label_set: &[String],
    format: OutputFormat,
) -> Result<LabelValue, ProviderError> {
    let haystack = raw.to_lowercase();
    let matched: Vec<String> = label_set
        .iter()
        .filter(|label| contains_word(&haystack, &label.to_lowercase()))
        .cloned()
        .collect();
    match format {
        OutputFormat::SingleLabel => match matched.into_iter().next() {
            Some(label) => Ok(LabelValue::Single(label)),
            None => Err(ProviderError::Unparseable {
                raw: raw.to_string(),
                label_set: label_set.to_vec(),
            }),
        },
        OutputFormat::LabelSet => {
            if matched.is_empty() {
                Err(ProviderError::Unparseable {
                    raw: raw.to_string(),
                    label_set: label_set.to_vec(),
                })
            } else {
                Ok(LabelValue::Set(matched))
            }
        }
    }
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

/// Whole-word substring search over already-lowercased inputs.
fn contains_word(haystack: &str, needle: &str) -> bool {
    if needle.is_empty() {
        return false;
    }
    let mut from = 0;
    while let Some(pos) = haystack[from..].find(needle) {
        let start = from + pos;
        let end = start + needle.len();
        let before_ok = haystack[..start]
            .chars()
            .next_back()
            .is_none_or(|c| !is_word_char(c));
        let after_ok = haystack[end..].chars().next().is_none_or(|c| !is_word_char(c));
        if before_ok && after_ok {
            return true;
        }
        from = start + 1;
    }
    false
}
