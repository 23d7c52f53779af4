//! Class-based TF-IDF over clustered documents.
//!
//! Each class is the concatenation of its member documents. With
//! `tf[t][c]` the count of term `t` in class `c`, `f[t]` the count of
//! `t` across all classes, and `A` the average word count per class,
//! the weight is `W[t][c] = tf[t][c] * ln(1 + A / f[t])`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::normalize::tokens_lower;

use super::cluster::OUTLIER;

#[derive(Debug, Error)]
pub enum CtfidfError {
    #[error("no non-outlier classes")]
    NoClasses,
    #[error("documents ({docs}) and assignments ({assignments}) differ in length")]
    LengthMismatch { docs: usize, assignments: usize },
}

/// Per-class term weights together with the quantities they derive from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CTfidfWeights {
    /// `W[t][c]`, stored per class; zero-weight (absent) terms omitted.
    pub weights: BTreeMap<i32, BTreeMap<String, f64>>,
    /// `tf[t][c]`.
    pub term_freq: BTreeMap<i32, BTreeMap<String, u64>>,
    /// `f[t]`: term count summed over all classes.
    pub total_freq: BTreeMap<String, u64>,
    /// `A`: total words across classes divided by the number of classes.
    pub avg_words_per_class: f64,
}

impl CTfidfWeights {
    pub fn classes(&self) -> Vec<i32> {
        self.weights.keys().copied().collect()
    }

    pub fn weight(&self, class: i32, term: &str) -> f64 {
        self.weights
            .get(&class)
            .and_then(|m| m.get(term))
            .copied()
            .unwrap_or(0.0)
    }

    /// Terms of one class sorted by weight descending, ties lexicographic.
    pub fn ranked_terms(&self, class: i32) -> Vec<(String, f64)> {
        let mut terms: Vec<(String, f64)> = self
            .weights
            .get(&class)
            .map(|m| m.iter().map(|(t, &w)| (t.clone(), w)).collect())
            .unwrap_or_default();
        terms.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| a.0.cmp(&b.0))
        });
        terms
    }
}

/// Computes class-based TF-IDF; outlier documents (assignment -1) are
/// excluded.
pub fn ctfidf(docs: &[&str], assignments: &[i32]) -> Result<CTfidfWeights, CtfidfError> {
    if docs.len() != assignments.len() {
        return Err(CtfidfError::LengthMismatch {
            docs: docs.len(),
            assignments: assignments.len(),
        });
    }
    let mut term_freq: BTreeMap<i32, BTreeMap<String, u64>> = BTreeMap::new();
    let mut total_words = 0u64;
    for (doc, &class) in docs.iter().zip(assignments) {
        if class == OUTLIER {
            continue;
        }
        let counts = term_freq.entry(class).or_default();
        for token in tokens_lower(doc) {
            *counts.entry(token).or_insert(0) += 1;
            total_words += 1;
        }
    }
    if term_freq.is_empty() {
        return Err(CtfidfError::NoClasses);
    }

    let mut total_freq: BTreeMap<String, u64> = BTreeMap::new();
    for counts in term_freq.values() {
        for (term, &count) in counts {
            *total_freq.entry(term.clone()).or_insert(0) += count;
        }
    }
    let avg_words_per_class = total_words as f64 / term_freq.len() as f64;

    let weights = term_freq
        .iter()
        .map(|(&class, counts)| {
            let class_weights = counts
                .iter()
                .map(|(term, &tf)| {
                    let f_t = total_freq[term] as f64;
                    let w = tf as f64 * (1.0 + avg_words_per_class / f_t).ln();
                    (term.clone(), w)
                })
                .collect();
            (class, class_weights)
        })
        .collect();

    Ok(CTfidfWeights {
        weights,
        term_freq,
        total_freq,
        avg_words_per_class,
    })
}
