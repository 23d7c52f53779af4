//! Concern categorization and per-concern topic extraction.
//!
//! Posts are grouped by concern category (taxonomy pass, optional
//! provider fallback), each group is vectorized and clustered, and every
//! cluster gets a class-based TF-IDF term signature, a label, and a size.

mod cluster;
mod ctfidf;
mod vectorize;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::{ConcernCategory, ProcessedPost};
use crate::providers::{LabelRequest, ProviderClient};

pub use cluster::{cluster, ClusterParams, OUTLIER};
pub use ctfidf::{ctfidf, CTfidfWeights, CtfidfError};
pub use vectorize::{vectorize, DocVector, VectorizeError, Vocabulary};

#[derive(Debug, Error)]
pub enum TopicsError {
    #[error(transparent)]
    Vectorize(#[from] VectorizeError),
    #[error(transparent)]
    Ctfidf(#[from] CtfidfError),
    #[error("taxonomy: {0}")]
    Taxonomy(String),
    #[error("no posts to fit")]
    EmptySlice,
    #[error("model file {path}: {reason}")]
    ModelFile { path: String, reason: String },
}

/// Trigger phrases per concern category, all lowercase, every category
/// present.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ConcernTaxonomy {
    map: BTreeMap<ConcernCategory, Vec<String>>,
}

impl ConcernTaxonomy {
    pub fn bundled() -> Self {
        Self::from_json(include_str!("../../data/lexicons/concerns.v1.json"))
            .expect("bundled taxonomy is valid")
    }

    pub fn from_file(path: &Path) -> Result<Self, TopicsError> {
        let body = std::fs::read_to_string(path)
            .map_err(|e| TopicsError::Taxonomy(format!("read {}: {e}", path.display())))?;
        Self::from_json(&body)
    }

    pub fn from_json(json: &str) -> Result<Self, TopicsError> {
        let taxonomy: ConcernTaxonomy = serde_json::from_str(json)
            .map_err(|e| TopicsError::Taxonomy(format!("parse taxonomy: {e}")))?;
        taxonomy.validate()?;
        Ok(taxonomy)
    }

    fn validate(&self) -> Result<(), TopicsError> {
        for category in ConcernCategory::ALL {
            let phrases = self
                .map
                .get(&category)
                .ok_or_else(|| TopicsError::Taxonomy(format!("missing category {category}")))?;
            if phrases.is_empty() {
                return Err(TopicsError::Taxonomy(format!("category {category} has no phrases")));
            }
            for phrase in phrases {
                if phrase != &phrase.to_lowercase() {
                    return Err(TopicsError::Taxonomy(format!(
                        "phrase {phrase:?} is not lowercase"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Categories triggered by substring match over the lowercased text.
    pub fn matches(&self, clean_text: &str) -> BTreeSet<ConcernCategory> {
        let haystack = clean_text.to_lowercase();
        self.map
            .iter()
            .filter(|(_, phrases)| phrases.iter().any(|p| haystack.contains(p.as_str())))
            .map(|(category, _)| *category)
            .collect()
    }
}

/// Concern set plus the warning raised when the provider answer was
/// unusable.
#[derive(Debug, Clone, PartialEq)]
pub struct CategorizedConcerns {
    pub concerns: BTreeSet<ConcernCategory>,
    pub warning: Option<String>,
}

/// Taxonomy pass first; when it finds nothing and the provider is
/// enabled, the provider decides. The set may legitimately stay empty.
pub fn categorize_concern(
    clean_text: &str,
    taxonomy: &ConcernTaxonomy,
    client: Option<&ProviderClient>,
    use_provider: bool,
) -> CategorizedConcerns {
    let concerns = taxonomy.matches(clean_text);
    if !concerns.is_empty() || !use_provider {
        return CategorizedConcerns {
            concerns,
            warning: None,
        };
    }
    let Some(client) = client else {
        return CategorizedConcerns {
            concerns,
            warning: None,
        };
    };
    let label_set: Vec<String> = ConcernCategory::ALL
        .iter()
        .map(|c| c.as_str().to_string())
        .collect();
    let request = LabelRequest {
        task_id: "concern.v1".into(),
        text: clean_text.to_string(),
        label_set,
        template_id: "concern.v1".into(),
    };
    match client.call(&request) {
        Ok(response) => CategorizedConcerns {
            concerns: response
                .label
                .set()
                .iter()
                .filter_map(|l| l.parse().ok())
                .collect(),
            warning: None,
        },
        Err(err) => CategorizedConcerns {
            concerns: BTreeSet::new(),
            warning: Some(format!("concern categorization returned no categories: {err}")),
        },
    }
}

/// One extracted topic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topic {
    pub id: i32,
    /// Strongest terms first; ties break lexicographically.
    pub top_terms: Vec<(String, f64)>,
    pub label: String,
    /// Number of assigned posts.
    pub size: usize,
}

/// Fitted topic model for one group of posts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicModel {
    /// Concern name, or "all" when grouping is off.
    pub group: String,
    /// Post dedup key -> cluster id (-1 = outlier).
    pub assignments: BTreeMap<String, i32>,
    pub ctfidf: CTfidfWeights,
    pub topics: Vec<Topic>,
    pub outlier_count: usize,
    pub params: ClusterParams,
    pub corpus_digest: String,
}

impl TopicModel {
    pub fn save(&self, path: &Path) -> Result<(), TopicsError> {
        let body = serde_json::to_string(self).map_err(|e| TopicsError::ModelFile {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| TopicsError::ModelFile {
                path: path.display().to_string(),
                reason: e.to_string(),
            })?;
        }
        std::fs::write(path, body).map_err(|e| TopicsError::ModelFile {
            path: path.display().to_string(),
            reason: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, TopicsError> {
        let body = std::fs::read_to_string(path).map_err(|e| TopicsError::ModelFile {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        serde_json::from_str(&body).map_err(|e| TopicsError::ModelFile {
            path: path.display().to_string(),
            reason: e.to_string(),
        })
    }
}

/// Parameters for a topic fit.
#[derive(Debug, Clone)]
pub struct FitParams {
    pub cluster: ClusterParams,
    /// Terms joined into the default label.
    pub label_terms: usize,
    pub concern_grouping: bool,
    /// Name topics through the provider when one is available.
    pub use_provider: bool,
}

impl Default for FitParams {
    fn default() -> Self {
        Self {
            cluster: ClusterParams::default(),
            label_terms: 4,
            concern_grouping: false,
            use_provider: false,
        }
    }
}

/// Result of fitting: one model per group plus skip notices.
#[derive(Debug)]
pub struct FitOutcome {
    pub models: Vec<TopicModel>,
    pub notices: Vec<String>,
}

/// Default label: top-k terms joined with ", ". With a provider, the top
/// ten terms are sent to the naming task; failures keep the default.
pub fn label_topic(
    ranked_terms: &[(String, f64)],
    k: usize,
    client: Option<&ProviderClient>,
    use_provider: bool,
) -> (String, Option<String>) {
    let default_label = ranked_terms
        .iter()
        .take(k)
        .map(|(t, _)| t.as_str())
        .collect::<Vec<_>>()
        .join(", ");
    if !use_provider {
        return (default_label, None);
    }
    let Some(client) = client else {
        return (default_label, None);
    };
    let naming_terms: Vec<String> = ranked_terms.iter().take(10).map(|(t, _)| t.clone()).collect();
    let text = naming_terms.join(", ");
    match client.complete_free("topic_name.v1", "topic_name.v1", &text, &naming_terms) {
        Ok(completion) => {
            let name = completion.text.trim();
            if name.is_empty() {
                (default_label, Some("topic naming returned empty text".into()))
            } else {
                (name.to_string(), None)
            }
        }
        Err(err) => (default_label, Some(format!("topic naming failed: {err}"))),
    }
}

/// Fits topic models over the slice. With `concern_grouping`, posts are
/// partitioned by concern (multi-concern posts joining every group they
/// belong to); groups smaller than `min_topic_size` are skipped with a
/// notice.
pub fn fit_topics(
    posts: &[&ProcessedPost],
    params: &FitParams,
    client: Option<&ProviderClient>,
) -> Result<FitOutcome, TopicsError> {
    if posts.is_empty() {
        return Err(TopicsError::EmptySlice);
    }
    let mut groups: Vec<(String, Vec<&ProcessedPost>)> = Vec::new();
    if params.concern_grouping {
        for category in ConcernCategory::ALL {
            let members: Vec<&ProcessedPost> = posts
                .iter()
                .copied()
                .filter(|p| p.concerns.contains(&category))
                .collect();
            if !members.is_empty() {
                groups.push((category.as_str().to_string(), members));
            }
        }
    } else {
        groups.push(("all".to_string(), posts.to_vec()));
    }

    let mut models = Vec::new();
    let mut notices = Vec::new();
    for (group, members) in groups {
        if members.len() < params.cluster.min_topic_size {
            notices.push(format!(
                "group {group} skipped: {} posts < min_topic_size {}",
                members.len(),
                params.cluster.min_topic_size
            ));
            continue;
        }
        let model = fit_group(&group, &members, params, client, &mut notices)?;
        models.push(model);
    }
    Ok(FitOutcome { models, notices })
}

fn fit_group(
    group: &str,
    members: &[&ProcessedPost],
    params: &FitParams,
    client: Option<&ProviderClient>,
    notices: &mut Vec<String>,
) -> Result<TopicModel, TopicsError> {
    let docs: Vec<&str> = members
        .iter()
        .map(|p| p.clean_text.as_deref().unwrap_or(""))
        .collect();
    let (vectors, _vocab) = vectorize(&docs)?;
    let assignments = cluster(&vectors, &params.cluster);
    let outlier_count = assignments.iter().filter(|&&a| a == OUTLIER).count();

    let weights = if outlier_count == assignments.len() {
        CTfidfWeights {
            weights: BTreeMap::new(),
            term_freq: BTreeMap::new(),
            total_freq: BTreeMap::new(),
            avg_words_per_class: 0.0,
        }
    } else {
        ctfidf(&docs, &assignments)?
    };

    let mut sizes: BTreeMap<i32, usize> = BTreeMap::new();
    for &a in &assignments {
        if a != OUTLIER {
            *sizes.entry(a).or_insert(0) += 1;
        }
    }
    let mut topics = Vec::new();
    for (&id, &size) in &sizes {
        let ranked = weights.ranked_terms(id);
        let top_terms: Vec<(String, f64)> = ranked.iter().take(10).cloned().collect();
        let (label, warning) = label_topic(&ranked, params.label_terms, client, params.use_provider);
        if let Some(warning) = warning {
            notices.push(format!("group {group} topic {id}: {warning}"));
        }
        topics.push(Topic {
            id,
            top_terms,
            label,
            size,
        });
    }
    topics.sort_by_key(|t| t.id);

    let mut digest = Sha256::new();
    for (post, doc) in members.iter().zip(&docs) {
        digest.update(post.dedup_key().as_bytes());
        digest.update([0x1e]);
        digest.update(doc.as_bytes());
        digest.update([0x1f]);
    }
    let corpus_digest = hex::encode(digest.finalize());

    Ok(TopicModel {
        group: group.to_string(),
        assignments: members
            .iter()
            .zip(&assignments)
            .map(|(p, &a)| (p.dedup_key(), a))
            .collect(),
        ctfidf: weights,
        topics,
        outlier_count,
        params: params.cluster.clone(),
        corpus_digest,
    })
}
