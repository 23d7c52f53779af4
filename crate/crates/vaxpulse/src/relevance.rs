//! Two-step relevance cascade.
//!
//! Step one classifies each kept post as general discussion, personal
//! experience, or unrelated: the baseline classifier answers when its
//! confidence clears `tau_r`, otherwise the provider arbitrates. Step two
//! tags vaccine-specific posts, lexicon-first with an optional provider
//! fallback for posts the lexicon misses.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{RelevanceLabel, VaccineTag};
use crate::providers::{LabelRequest, ProviderClient};
use crate::sentiment::BaselineModel;

/// Which side of the ensemble produced the relevance label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelevanceSource {
    Baseline,
    EnsembleOverride,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelevanceResult {
    pub label: RelevanceLabel,
    /// Baseline max posterior (kept even when the provider overrides).
    pub confidence: f64,
    pub source: RelevanceSource,
}

/// Confidence gate for the relevance ensemble.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnsemblePolicy {
    pub tau_r: f64,
    pub provider_task: String,
}

impl Default for EnsemblePolicy {
    fn default() -> Self {
        Self {
            tau_r: 0.75,
            provider_task: "relevance.v1".into(),
        }
    }
}

/// Relevance label set in canonical order.
pub fn relevance_labels() -> Vec<String> {
    RelevanceLabel::ALL
        .iter()
        .map(|l| l.as_str().to_string())
        .collect()
}

/// Baseline prediction: argmax label plus its posterior probability.
pub fn baseline_relevance(model: &BaselineModel, clean_text: &str) -> (RelevanceLabel, f64) {
    let posterior = model.predict(clean_text);
    let (label, confidence) = posterior.top();
    let label = label.parse().expect("model trained on relevance labels");
    (label, confidence)
}

/// Gated classification outcome plus the degraded-mode warning, if any.
#[derive(Debug, Clone, PartialEq)]
pub struct GatedRelevance {
    pub result: RelevanceResult,
    pub warning: Option<String>,
}

/// Confidence-gated override: baseline answers at or above `tau_r`,
/// the provider otherwise. A provider failure degrades to the baseline
/// label with a warning so batch runs keep completing.
pub fn classify_relevance(
    clean_text: &str,
    model: &BaselineModel,
    client: Option<&ProviderClient>,
    policy: &EnsemblePolicy,
) -> GatedRelevance {
    let (baseline_label, confidence) = baseline_relevance(model, clean_text);
    let baseline = RelevanceResult {
        label: baseline_label,
        confidence,
        source: RelevanceSource::Baseline,
    };
    if confidence >= policy.tau_r {
        return GatedRelevance {
            result: baseline,
            warning: None,
        };
    }
    let Some(client) = client else {
        return GatedRelevance {
            result: baseline,
            warning: None,
        };
    };
    let request = LabelRequest {
        task_id: policy.provider_task.clone(),
        text: clean_text.to_string(),
        label_set: relevance_labels(),
        template_id: policy.provider_task.clone(),
    };
    match client.call(&request) {
        Ok(response) => {
            let label = response
                .label
                .single()
                .and_then(|l| l.parse::<RelevanceLabel>().ok())
                .unwrap_or(baseline_label);
            GatedRelevance {
                result: RelevanceResult {
                    label,
                    confidence,
                    source: RelevanceSource::EnsembleOverride,
                },
                warning: None,
            }
        }
        Err(err) => GatedRelevance {
            result: baseline,
            warning: Some(format!("relevance ensemble degraded to baseline: {err}")),
        },
    }
}

/// Trigger phrases per vaccine tag, all lowercase.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VaccineLexicon {
    map: BTreeMap<VaccineTag, Vec<String>>,
}

impl VaccineLexicon {
    /// The lexicon file shipped with the crate.
    pub fn bundled() -> Self {
        Self::from_json(include_str!("../data/lexicons/vaccines.v1.json"))
            .expect("bundled lexicon is valid")
    }

    pub fn from_file(path: &Path) -> Result<Self, String> {
        let body = std::fs::read_to_string(path)
            .map_err(|e| format!("read lexicon {}: {e}", path.display()))?;
        Self::from_json(&body)
    }

    pub fn from_json(json: &str) -> Result<Self, String> {
        let lexicon: VaccineLexicon =
            serde_json::from_str(json).map_err(|e| format!("parse lexicon: {e}"))?;
        lexicon.validate()?;
        Ok(lexicon)
    }

    fn validate(&self) -> Result<(), String> {
        for (tag, phrases) in &self.map {
            if phrases.is_empty() {
                return Err(format!("lexicon entry {} has no phrases", tag.as_str()));
            }
            for phrase in phrases {
                if phrase != &phrase.to_lowercase() {
                    return Err(format!("lexicon phrase {phrase:?} is not lowercase"));
                }
            }
        }
        Ok(())
    }

    pub fn phrases(&self, tag: VaccineTag) -> &[String] {
        self.map.get(&tag).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Tags whose trigger phrases occur as substrings of the lowercased
    /// text.
    pub fn matches(&self, clean_text: &str) -> BTreeSet<VaccineTag> {
        let haystack = clean_text.to_lowercase();
        self.map
            .iter()
            .filter(|(_, phrases)| phrases.iter().any(|p| haystack.contains(p.as_str())))
            .map(|(tag, _)| *tag)
            .collect()
    }
}

/// Vaccine tags plus the degraded-mode warning, if any.
#[derive(Debug, Clone, PartialEq)]
pub struct TaggedVaccines {
    pub tags: BTreeSet<VaccineTag>,
    pub warning: Option<String>,
}

/// Lexicon pass first; when it finds nothing and the provider is enabled,
/// the provider decides. Generic vaccine mentions end up as `{other}`.
pub fn tag_vaccines(
    clean_text: &str,
    lexicon: &VaccineLexicon,
    client: Option<&ProviderClient>,
    use_provider: bool,
) -> TaggedVaccines {
    let tags = lexicon.matches(clean_text);
    if !tags.is_empty() {
        return TaggedVaccines {
            tags,
            warning: None,
        };
    }
    let other: BTreeSet<VaccineTag> = [VaccineTag::Other].into_iter().collect();
    if !use_provider {
        return TaggedVaccines {
            tags: other,
            warning: None,
        };
    }
    let Some(client) = client else {
        return TaggedVaccines {
            tags: other,
            warning: None,
        };
    };
    let label_set: Vec<String> = VaccineTag::ALL
        .iter()
        .map(|t| t.as_str().to_string())
        .collect();
    let request = LabelRequest {
        task_id: "vaccine_tag.v1".into(),
        text: clean_text.to_string(),
        label_set,
        template_id: "vaccine_tag.v1".into(),
    };
    match client.call(&request) {
        Ok(response) => {
            let tags: BTreeSet<VaccineTag> = response
                .label
                .set()
                .iter()
                .filter_map(|l| l.parse().ok())
                .collect();
            if tags.is_empty() {
                TaggedVaccines {
                    tags: other,
                    warning: Some("vaccine tagging: provider returned no usable tag".into()),
                }
            } else {
                TaggedVaccines {
                    tags,
                    warning: None,
                }
            }
        }
        Err(err) => TaggedVaccines {
            tags: other,
            warning: Some(format!("vaccine tagging fell back to {{other}}: {err}")),
        },
    }
}
