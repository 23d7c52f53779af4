//! Three-class sentiment classification with a trainable multinomial
//! naive-Bayes baseline and a confidence-gated provider fallback.
//!
//! The baseline scores unigram+bigram counts in log space with add-alpha
//! smoothing; its max posterior probability doubles as the confidence
//! that gates the fallback. The classifier machinery is label-agnostic,
//! so the relevance cascade trains the same model family over its own
//! label set.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::normalize::tokens_lower;
use crate::providers::{LabelRequest, ProviderClient};

/// Three-way sentiment polarity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SentimentLabel {
    Negative,
    Neutral,
    Positive,
}

impl SentimentLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            SentimentLabel::Negative => "negative",
            SentimentLabel::Neutral => "neutral",
            SentimentLabel::Positive => "positive",
        }
    }

    pub const ALL: [SentimentLabel; 3] = [
        SentimentLabel::Negative,
        SentimentLabel::Neutral,
        SentimentLabel::Positive,
    ];

    /// Label set in canonical order, as plain strings for providers and
    /// training.
    pub fn label_set() -> Vec<String> {
        Self::ALL.iter().map(|l| l.as_str().to_string()).collect()
    }
}

impl std::str::FromStr for SentimentLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SentimentLabel::ALL
            .iter()
            .copied()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| format!("unknown sentiment label: {s}"))
    }
}

impl std::fmt::Display for SentimentLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Which side of the ensemble answered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SentimentSource {
    Baseline,
    Fallback,
}

/// Final sentiment decision for one post.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentimentResult {
    pub label: SentimentLabel,
    /// Max posterior probability when `source` is `baseline`.
    pub confidence: f64,
    pub source: SentimentSource,
}

/// One labeled training document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingExample {
    pub clean_text: String,
    pub label: String,
}

impl TrainingExample {
    pub fn new(clean_text: &str, label: &str) -> Self {
        Self {
            clean_text: clean_text.to_string(),
            label: label.to_string(),
        }
    }
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("smoothing alpha must be positive, got {0}")]
    AlphaNonPositive(f64),
    #[error("no training examples for class {0}")]
    MissingClass(String),
    #[error("example labeled with unknown class {0}")]
    UnknownLabel(String),
    #[error("label set must be non-empty and unique")]
    BadLabelSet,
    #[error("model file {path}: {reason}")]
    ModelFile { path: String, reason: String },
}

/// Features with document frequency below this are dropped.
const MIN_DOC_FREQ: usize = 2;
/// Vocabulary cap, by total frequency with lexicographic tie-break.
const VOCAB_CAP: usize = 50_000;
const MODEL_FORMAT_VERSION: u32 = 1;

/// Multinomial naive Bayes over unigram+bigram counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineModel {
    format_version: u32,
    labels: Vec<String>,
    alpha: f64,
    /// Terms in index order (sorted lexicographically).
    vocab: Vec<String>,
    log_priors: Vec<f64>,
    /// `[class][feature]` smoothed log likelihoods.
    log_likelihood: Vec<Vec<f64>>,
}

/// Unigrams plus adjacent bigrams of the lowercased tokens.
pub fn features(clean_text: &str) -> Vec<String> {
    let tokens = tokens_lower(clean_text);
    let mut feats = Vec::with_capacity(tokens.len() * 2);
    feats.extend(tokens.iter().cloned());
    for pair in tokens.windows(2) {
        feats.push(format!("{} {}", pair[0], pair[1]));
    }
    feats
}

impl BaselineModel {
    /// Trains on counts only, so the result is independent of example
    /// order and of uniform duplication of the training set.
    pub fn train(
        labels: &[String],
        examples: &[TrainingExample],
        alpha: f64,
    ) -> Result<Self, TrainError> {
        if alpha <= 0.0 {
            return Err(TrainError::AlphaNonPositive(alpha));
        }
        if labels.is_empty() || labels.iter().collect::<BTreeSet<_>>().len() != labels.len() {
            return Err(TrainError::BadLabelSet);
        }
        let class_index: BTreeMap<&str, usize> = labels
            .iter()
            .enumerate()
            .map(|(i, l)| (l.as_str(), i))
            .collect();

        let mut class_docs = vec![0usize; labels.len()];
        let mut doc_freq: BTreeMap<String, usize> = BTreeMap::new();
        let mut total_freq: BTreeMap<String, u64> = BTreeMap::new();
        let mut docs: Vec<(usize, Vec<String>)> = Vec::with_capacity(examples.len());

        for example in examples {
            let class = *class_index
                .get(example.label.as_str())
                .ok_or_else(|| TrainError::UnknownLabel(example.label.clone()))?;
            class_docs[class] += 1;
            let feats = features(&example.clean_text);
            for feat in feats.iter().collect::<BTreeSet<_>>() {
                *doc_freq.entry((*feat).clone()).or_insert(0) += 1;
            }
            for feat in &feats {
                *total_freq.entry(feat.clone()).or_insert(0) += 1;
            }
            docs.push((class, feats));
        }
        for (label, &count) in labels.iter().zip(&class_docs) {
            if count == 0 {
                return Err(TrainError::MissingClass(label.clone()));
            }
        }

        // Vocabulary: min document frequency, then cap by total frequency
        // (lexicographic tie-break), then index in sorted-term order.
        let mut candidates: Vec<(&String, u64)> = total_freq
            .iter()
            .filter(|(term, _)| doc_freq.get(*term).copied().unwrap_or(0) >= MIN_DOC_FREQ)
            .map(|(term, &count)| (term, count))
            .collect();
        candidates.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        candidates.truncate(VOCAB_CAP);
        let mut vocab: Vec<String> = candidates.into_iter().map(|(t, _)| t.clone()).collect();
        vocab.sort_unstable();
        let vocab_index: BTreeMap<&str, usize> = vocab
            .iter()
            .enumerate()
            .map(|(i, t)| (t.as_str(), i))
            .collect();

        let mut class_feature_counts = vec![vec![0u64; vocab.len()]; labels.len()];
        for (class, feats) in &docs {
            for feat in feats {
                if let Some(&idx) = vocab_index.get(feat.as_str()) {
                    class_feature_counts[*class][idx] += 1;
                }
            }
        }

        let total_docs: usize = class_docs.iter().sum();
        let log_priors: Vec<f64> = class_docs
            .iter()
            .map(|&count| (count as f64 / total_docs as f64).ln())
            .collect();
        let vocab_len = vocab.len() as f64;
        let log_likelihood: Vec<Vec<f64>> = class_feature_counts
            .iter()
            .map(|counts| {
                let class_total: u64 = counts.iter().sum();
                let denom = class_total as f64 + alpha * vocab_len;
                counts
                    .iter()
                    .map(|&c| ((c as f64 + alpha) / denom).ln())
                    .collect()
            })
            .collect();

        Ok(Self {
            format_version: MODEL_FORMAT_VERSION,
            labels: labels.to_vec(),
            alpha,
            vocab,
            log_priors,
            log_likelihood,
        })
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn vocab_len(&self) -> usize {
        self.vocab.len()
    }

    /// Posterior over all classes, normalized. Out-of-vocabulary features
    /// are skipped; with no in-vocabulary evidence the posterior equals
    /// the class priors.
    pub fn predict(&self, clean_text: &str) -> Posterior<'_> {
        let mut counts: BTreeMap<usize, u64> = BTreeMap::new();
        for feat in features(clean_text) {
            if let Ok(idx) = self.vocab.binary_search(&feat) {
                *counts.entry(idx).or_insert(0) += 1;
            }
        }
        let mut scores = self.log_priors.clone();
        for (class, score) in scores.iter_mut().enumerate() {
            for (&idx, &count) in &counts {
                *score += count as f64 * self.log_likelihood[class][idx];
            }
        }
        // Log-sum-exp normalization keeps long documents finite.
        let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut probs: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
        let total: f64 = probs.iter().sum();
        for p in &mut probs {
            *p /= total;
        }
        Posterior {
            labels: &self.labels,
            probs,
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), TrainError> {
        let body = serde_json::to_string(self).map_err(|e| TrainError::ModelFile {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| TrainError::ModelFile {
                path: path.display().to_string(),
                reason: e.to_string(),
            })?;
        }
        std::fs::write(path, body).map_err(|e| TrainError::ModelFile {
            path: path.display().to_string(),
            reason: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, TrainError> {
        let body = std::fs::read_to_string(path).map_err(|e| TrainError::ModelFile {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        let model: BaselineModel =
            serde_json::from_str(&body).map_err(|e| TrainError::ModelFile {
                path: path.display().to_string(),
                reason: e.to_string(),
            })?;
        if model.format_version != MODEL_FORMAT_VERSION {
            return Err(TrainError::ModelFile {
                path: path.display().to_string(),
                reason: format!("unsupported format version {}", model.format_version),
            });
        }
        Ok(model)
    }
}

/// Normalized class distribution for one document.
#[derive(Debug, Clone, PartialEq)]
pub struct Posterior<'a> {
    labels: &'a [String],
    probs: Vec<f64>,
}

impl<'a> Posterior<'a> {
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn labels(&self) -> &'a [String] {
        self.labels
    }

    pub fn prob(&self, label: &str) -> Option<f64> {
        self.labels
            .iter()
            .position(|l| l == label)
            .map(|i| self.probs[i])
    }

    /// Argmax label and its probability; ties resolve to the earlier
    /// label in model order.
    pub fn top(&self) -> (&'a str, f64) {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = i;
            }
        }
        (self.labels[best].as_str(), self.probs[best])
    }
}

/// Confidence threshold and provider task for the fallback gate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FallbackPolicy {
    pub tau_s: f64,
    pub provider_task: String,
}

impl Default for FallbackPolicy {
    fn default() -> Self {
        Self {
            tau_s: 0.70,
            provider_task: "sentiment.v1".into(),
        }
    }
}

/// Outcome of a gated classification, with the degraded-mode warning when
/// the provider was needed but unreachable.
#[derive(Debug, Clone, PartialEq)]
pub struct GatedSentiment {
    pub result: SentimentResult,
    pub warning: Option<String>,
}

/// Baseline answers when its max posterior clears `tau_s`; otherwise the
/// provider decides. If the provider is down the baseline label is used
/// and a degraded-mode warning is returned.
pub fn classify_with_fallback(
    model: &BaselineModel,
    client: Option<&ProviderClient>,
    policy: &FallbackPolicy,
    clean_text: &str,
) -> GatedSentiment {
    let posterior = model.predict(clean_text);
    let (label, confidence) = posterior.top();
    let baseline_label: SentimentLabel = label.parse().expect("model trained on sentiment labels");
    if confidence >= policy.tau_s {
        return GatedSentiment {
            result: SentimentResult {
                label: baseline_label,
                confidence,
                source: SentimentSource::Baseline,
            },
            warning: None,
        };
    }
    let Some(client) = client else {
        return GatedSentiment {
            result: SentimentResult {
                label: baseline_label,
                confidence,
                source: SentimentSource::Baseline,
            },
            warning: None,
        };
    };
    let request = LabelRequest {
        task_id: policy.provider_task.clone(),
        text: clean_text.to_string(),
        label_set: SentimentLabel::label_set(),
        template_id: policy.provider_task.clone(),
    };
    match client.call(&request) {
        Ok(response) => {
            let label = response
                .label
                .single()
                .and_then(|l| l.parse::<SentimentLabel>().ok())
                .unwrap_or(baseline_label);
            GatedSentiment {
                result: SentimentResult {
                    label,
                    confidence: response.confidence.unwrap_or(confidence),
                    source: SentimentSource::Fallback,
                },
                warning: None,
            }
        }
        Err(err) => GatedSentiment {
            result: SentimentResult {
                label: baseline_label,
                confidence,
                source: SentimentSource::Baseline,
            },
            warning: Some(format!("sentiment fallback degraded to baseline: {err}")),
        },
    }
}

/// Parses labeled JSONL: any object carrying a `label` plus `clean_text`
/// (preferred) or `text`.
pub fn load_labeled(path: &Path) -> Result<Vec<TrainingExample>, TrainError> {
    let body = std::fs::read_to_string(path).map_err(|e| TrainError::ModelFile {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    let mut examples = Vec::new();
    for (line_no, line) in body.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value =
            serde_json::from_str(line).map_err(|e| TrainError::ModelFile {
                path: path.display().to_string(),
                reason: format!("line {}: {e}", line_no + 1),
            })?;
        let label = value
            .get("label")
            .and_then(|v| v.as_str())
            .ok_or_else(|| TrainError::ModelFile {
                path: path.display().to_string(),
                reason: format!("line {}: missing label", line_no + 1),
            })?;
        let text = value
            .get("clean_text")
            .and_then(|v| v.as_str())
            .or_else(|| value.get("text").and_then(|v| v.as_str()))
            .ok_or_else(|| TrainError::ModelFile {
                path: path.display().to_string(),
                reason: format!("line {}: missing clean_text/text", line_no + 1),
            })?;
        examples.push(TrainingExample::new(text, label));
    }
    Ok(examples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::providers::{MockProvider, ProviderClient, ProviderError, ResponseCache};
    use std::sync::Arc;

    fn labels() -> Vec<String> {
        SentimentLabel::label_set()
    }

    /// Six documents, two per class, with disjoint vocabularies. Each
    /// class word appears in both of its documents so it clears the
    /// min-document-frequency cutoff.
    fn six_doc_fixture() -> Vec<TrainingExample> {
        vec![
            TrainingExample::new("awful terrible dreadful", "negative"),
            TrainingExample::new("awful terrible dreadful pain", "negative"),
            TrainingExample::new("appointment scheduled clinic", "neutral"),
            TrainingExample::new("appointment scheduled clinic update", "neutral"),
            TrainingExample::new("grateful relieved wonderful", "positive"),
            TrainingExample::new("grateful relieved wonderful glad", "positive"),
        ]
    }

    /// Independent posterior computation straight from the raw examples,
    /// bypassing the model's stored parameters.
    fn oracle_posterior(
        examples: &[TrainingExample],
        labels: &[String],
        alpha: f64,
        text: &str,
    ) -> Vec<f64> {
        // Vocabulary: same selection rule, recomputed naively.
        let mut doc_freq: BTreeMap<String, usize> = BTreeMap::new();
        let mut total: BTreeMap<String, u64> = BTreeMap::new();
        for ex in examples {
            let feats = features(&ex.clean_text);
            let uniq: BTreeSet<&String> = feats.iter().collect();
            for f in uniq {
                *doc_freq.entry(f.clone()).or_insert(0) += 1;
            }
            for f in &feats {
                *total.entry(f.clone()).or_insert(0) += 1;
            }
        }
        let vocab: BTreeSet<String> = total
            .iter()
            .filter(|(t, _)| doc_freq[*t] >= 2)
            .map(|(t, _)| t.clone())
            .collect();
        let v = vocab.len() as f64;

        let mut scores = Vec::new();
        for label in labels {
            let class_examples: Vec<&TrainingExample> =
                examples.iter().filter(|e| &e.label == label).collect();
            let prior = class_examples.len() as f64 / examples.len() as f64;
            let mut class_counts: BTreeMap<String, u64> = BTreeMap::new();
            let mut class_total = 0u64;
            for ex in &class_examples {
                for f in features(&ex.clean_text) {
                    if vocab.contains(&f) {
                        *class_counts.entry(f).or_insert(0) += 1;
                        class_total += 1;
                    }
                }
            }
            let mut log_score = prior.ln();
            for f in features(text) {
                if vocab.contains(&f) {
                    let c = class_counts.get(&f).copied().unwrap_or(0);
                    log_score += ((c as f64 + alpha) / (class_total as f64 + alpha * v)).ln();
                }
            }
            scores.push(log_score);
        }
        let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut probs: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
        let sum: f64 = probs.iter().sum();
        for p in &mut probs {
            *p /= sum;
        }
        probs
    }

    #[test]
    fn predictions_match_independent_oracle() {
        let examples = six_doc_fixture();
        let model = BaselineModel::train(&labels(), &examples, 1.0).unwrap();
        for text in [
            "awful terrible day",
            "appointment scheduled",
            "grateful and relieved",
            "terrible appointment grateful",
        ] {
            let got = model.predict(text);
            let want = oracle_posterior(&examples, &labels(), 1.0, text);
            for (g, w) in got.probs().iter().zip(&want) {
                assert!((g - w).abs() < 1e-12, "{text}: {:?} vs {:?}", got.probs(), want);
            }
        }
    }

    #[test]
    fn class_vocabulary_dominates_its_class() {
        let model = BaselineModel::train(&labels(), &six_doc_fixture(), 1.0).unwrap();
        assert_eq!(model.predict("awful terrible").top().0, "negative");
        assert_eq!(model.predict("appointment scheduled clinic").top().0, "neutral");
        assert_eq!(model.predict("grateful wonderful").top().0, "positive");
    }

    #[test]
    fn duplicated_training_set_preserves_priors_and_rankings() {
        // Raw count ratios are scale-invariant, so priors are bit-equal.
        // Smoothed likelihoods are not (alpha stays fixed while counts
        // double), but per-class feature rankings and predictions on
        // in-vocabulary text survive.
        let examples = six_doc_fixture();
        let mut doubled = examples.clone();
        doubled.extend(examples.clone());
        let a = BaselineModel::train(&labels(), &examples, 1.0).unwrap();
        let b = BaselineModel::train(&labels(), &doubled, 1.0).unwrap();
        assert_eq!(a.log_priors, b.log_priors);
        for (class_a, class_b) in a.log_likelihood.iter().zip(&b.log_likelihood) {
            let rank = |values: &[f64]| {
                let mut idx: Vec<usize> = (0..values.len()).collect();
                idx.sort_by(|&i, &j| values[j].partial_cmp(&values[i]).unwrap().then(i.cmp(&j)));
                idx
            };
            // Shared vocabulary prefix: compare rankings over a's vocab.
            let shared: Vec<usize> = a
                .vocab
                .iter()
                .map(|t| b.vocab.binary_search(t).expect("doubling never drops a term"))
                .collect();
            let b_projected: Vec<f64> = shared.iter().map(|&i| class_b[i]).collect();
            assert_eq!(rank(class_a), rank(&b_projected));
        }
        for text in ["awful terrible", "appointment clinic", "grateful wonderful"] {
            assert_eq!(a.predict(text).top().0, b.predict(text).top().0);
        }
    }

    #[test]
    fn huge_alpha_flattens_likelihoods_toward_uniform() {
        let model = BaselineModel::train(&labels(), &six_doc_fixture(), 1e6).unwrap();
        let v = model.vocab_len() as f64;
        for class in model.log_likelihood.iter() {
            for &ll in class {
                assert!((ll.exp() - 1.0 / v).abs() < 1e-3, "{} vs {}", ll.exp(), 1.0 / v);
            }
        }
    }

    #[test]
    fn no_evidence_posterior_equals_priors() {
        // Unbalanced classes so the priors are distinguishable.
        let mut examples = six_doc_fixture();
        examples.push(TrainingExample::new("awful pain terrible", "negative"));
        let model = BaselineModel::train(&labels(), &examples, 1.0).unwrap();
        let posterior = model.predict("zzz qqq www");
        let want = [3.0 / 7.0, 2.0 / 7.0, 2.0 / 7.0];
        for (p, w) in posterior.probs().iter().zip(want) {
            assert!((p - w).abs() < 1e-12);
        }
        assert_eq!(posterior.top().0, "negative");
    }

    #[test]
    fn missing_class_and_bad_alpha_are_errors() {
        let examples = vec![TrainingExample::new("only negative here", "negative")];
        let err = BaselineModel::train(&labels(), &examples, 1.0).unwrap_err();
        assert!(err.to_string().contains("neutral"), "{err}");
        assert!(matches!(
            BaselineModel::train(&labels(), &six_doc_fixture(), 0.0),
            Err(TrainError::AlphaNonPositive(_))
        ));
        let unknown = vec![
            TrainingExample::new("a b", "negative"),
            TrainingExample::new("c d", "neutral"),
            TrainingExample::new("e f", "positive"),
            TrainingExample::new("g h", "angry"),
        ];
        assert!(matches!(
            BaselineModel::train(&labels(), &unknown, 1.0),
            Err(TrainError::UnknownLabel(_))
        ));
    }

    #[test]
    fn label_permutation_symmetry() {
        let examples = six_doc_fixture();
        let permuted_labels: Vec<String> =
            ["positive", "negative", "neutral"].iter().map(|s| s.to_string()).collect();
        let renamed: Vec<TrainingExample> = examples
            .iter()
            .map(|e| {
                let label = match e.label.as_str() {
                    "negative" => "positive",
                    "positive" => "negative",
                    other => other,
                };
                TrainingExample::new(&e.clean_text, label)
            })
            .collect();
        let base = BaselineModel::train(&labels(), &examples, 1.0).unwrap();
        let swapped = BaselineModel::train(&permuted_labels, &renamed, 1.0).unwrap();
        for text in ["awful terrible", "grateful wonderful", "appointment scheduled"] {
            let a = base.predict(text);
            let b = swapped.predict(text);
            assert!((a.prob("negative").unwrap() - b.prob("positive").unwrap()).abs() < 1e-12);
            assert!((a.prob("positive").unwrap() - b.prob("negative").unwrap()).abs() < 1e-12);
            assert!((a.prob("neutral").unwrap() - b.prob("neutral").unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn smoothing_keeps_every_likelihood_positive() {
        let model = BaselineModel::train(&labels(), &six_doc_fixture(), 0.5).unwrap();
        for class in &model.log_likelihood {
            for &ll in class {
                assert!(ll.is_finite());
                assert!(ll.exp() > 0.0);
            }
        }
        // Per-class likelihoods over the vocabulary sum to 1.
        for class in &model.log_likelihood {
            let sum: f64 = class.iter().map(|ll| ll.exp()).sum();
            assert!((sum - 1.0).abs() < 1e-9, "sum {sum}");
        }
        let prior_sum: f64 = model.log_priors.iter().map(|lp| lp.exp()).sum();
        assert!((prior_sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn long_documents_stay_finite_and_normalized() {
        let model = BaselineModel::train(&labels(), &six_doc_fixture(), 1.0).unwrap();
        let long_text = "awful terrible appointment grateful ".repeat(2_500);
        let posterior = model.predict(&long_text);
        let sum: f64 = posterior.probs().iter().sum();
        assert!((sum - 1.0).abs() < 1e-9);
        assert!(posterior.probs().iter().all(|p| p.is_finite()));
    }

    #[test]
    fn save_load_roundtrip_preserves_predictions() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("models").join("sentiment.v1.json");
        let model = BaselineModel::train(&labels(), &six_doc_fixture(), 1.0).unwrap();
        model.save(&path).unwrap();
        let restored = BaselineModel::load(&path).unwrap();
        assert_eq!(model, restored);
    }

    #[test]
    fn fallback_gate_routes_on_threshold() {
        let model = BaselineModel::train(&labels(), &six_doc_fixture(), 1.0).unwrap();
        let mock = Arc::new(MockProvider::single_task("sentiment.v1", &[], Some("neutral")));
        let client = ProviderClient::new(Arc::clone(&mock), ResponseCache::in_memory());
        let policy = FallbackPolicy::default();

        // Strong class vocabulary: confident, no provider call.
        let confident = classify_with_fallback(&model, Some(&client), &policy, "awful terrible dreadful");
        assert_eq!(confident.result.source, SentimentSource::Baseline);
        assert_eq!(mock.call_count(), 0);

        // No evidence: posterior equals uniform priors, below 0.70.
        let vague = classify_with_fallback(&model, Some(&client), &policy, "zzz qqq xxx yyy");
        assert_eq!(vague.result.source, SentimentSource::Fallback);
        assert_eq!(vague.result.label, SentimentLabel::Neutral);
        assert_eq!(mock.call_count(), 1);
    }

    #[test]
    fn raising_tau_never_shrinks_the_fallback_set() {
        let model = BaselineModel::train(&labels(), &six_doc_fixture(), 1.0).unwrap();
        let texts = [
            "awful terrible dreadful",
            "awful appointment",
            "zzz qqq",
            "grateful relieved wonderful glad",
            "terrible grateful",
        ];
        let fallback_set = |tau: f64| -> Vec<&str> {
            let mock = Arc::new(MockProvider::single_task("sentiment.v1", &[], Some("neutral")));
            let client = ProviderClient::new(Arc::clone(&mock), ResponseCache::in_memory());
            let policy = FallbackPolicy {
                tau_s: tau,
                ..FallbackPolicy::default()
            };
            let mut routed = Vec::new();
            for text in texts {
                let before = client.call_count();
                classify_with_fallback(&model, Some(&client), &policy, text);
                if client.call_count() > before {
                    routed.push(text);
                }
            }
            routed
        };
        let mut previous: Vec<&str> = Vec::new();
        for tau in [0.0, 0.4, 0.7, 0.9, 1.0] {
            let current = fallback_set(tau);
            assert!(
                previous.iter().all(|t| current.contains(t)),
                "tau {tau}: {previous:?} not subset of {current:?}"
            );
            previous = current;
        }
        // Extremes: tau 0 never routes, tau 1 routes everything uncertain.
        assert!(fallback_set(0.0).is_empty());
        assert_eq!(fallback_set(1.0).len(), texts.len());
    }

    #[test]
    fn provider_down_degrades_with_warning() {
        struct Down;
        impl crate::providers::Provider for Down {
            fn id(&self) -> &str {
                "down"
            }
            fn complete(
                &self,
                _c: &crate::providers::ProviderCall<'_>,
            ) -> Result<String, ProviderError> {
                Err(ProviderError::Transport {
                    provider: "down".into(),
                    reason: "refused".into(),
                })
            }
        }
        let model = BaselineModel::train(&labels(), &six_doc_fixture(), 1.0).unwrap();
        let clock = Arc::new(crate::clock::VirtualClock::new());
        let client = ProviderClient::new(Down, ResponseCache::in_memory()).with_clock(clock);
        let policy = FallbackPolicy::default();
        let out = classify_with_fallback(&model, Some(&client), &policy, "zzz qqq xxx");
        assert_eq!(out.result.source, SentimentSource::Baseline);
        assert!(out.warning.is_some());
    }

    proptest::proptest! {
        #[test]
        fn posterior_always_sums_to_one(text in "\\PC*") {
            let model = BaselineModel::train(&labels(), &six_doc_fixture(), 1.0).unwrap();
            let posterior = model.predict(&text);
            let sum: f64 = posterior.probs().iter().sum();
            proptest::prop_assert!((sum - 1.0).abs() < 1e-9);
        }
    }
}
