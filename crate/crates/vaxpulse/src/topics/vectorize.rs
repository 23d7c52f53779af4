//! Per-document TF-IDF vectors over a deterministic dictionary.
//!
//! Stand-in document representation for clustering: raw term counts
//! weighted by `ln(N / df)`, features below document frequency 2 dropped,
//! vectors L2-normalized. An embedding provider can replace this behind
//! the same vector shape without touching the topic math.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::normalize::tokens_lower;

#[derive(Debug, Error)]
pub enum VectorizeError {
    #[error("no documents to vectorize")]
    NoDocuments,
    #[error("all documents are empty after tokenization")]
    AllEmpty,
}

/// Sparse document vector: `(feature index, weight)` sorted by index,
/// zero weights omitted, L2 norm cached.
#[derive(Debug, Clone, PartialEq)]
pub struct DocVector {
    entries: Vec<(u32, f64)>,
    norm: f64,
}

impl DocVector {
    pub fn from_entries(mut entries: Vec<(u32, f64)>) -> Self {
        entries.retain(|&(_, w)| w > 0.0);
        entries.sort_by_key(|&(i, _)| i);
        let norm = entries.iter().map(|&(_, w)| w * w).sum::<f64>().sqrt();
        Self { entries, norm }
    }

    /// Scales weights to unit norm (zero vectors stay zero).
    pub fn normalized(mut self) -> Self {
        if self.norm > 0.0 {
            for (_, w) in &mut self.entries {
                *w /= self.norm;
            }
            self.norm = 1.0;
        }
        self
    }

    pub fn entries(&self) -> &[(u32, f64)] {
        &self.entries
    }

    pub fn norm(&self) -> f64 {
        self.norm
    }

    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    /// Dot product by merging the sorted entry lists.
    pub fn dot(&self, other: &DocVector) -> f64 {
        let mut sum = 0.0;
        let (mut i, mut j) = (0, 0);
        while i < self.entries.len() && j < other.entries.len() {
            match self.entries[i].0.cmp(&other.entries[j].0) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    sum += self.entries[i].1 * other.entries[j].1;
                    i += 1;
                    j += 1;
                }
            }
        }
        sum
    }

    /// Cosine distance assuming both vectors are normalized; zero vectors
    /// are at distance 1 from everything.
    pub fn cosine_distance(&self, other: &DocVector) -> f64 {
        (1.0 - self.dot(other)).max(0.0)
    }

    /// Stable key for exact-duplicate detection.
    pub(crate) fn identity_key(&self) -> Vec<(u32, u64)> {
        self.entries.iter().map(|&(i, w)| (i, w.to_bits())).collect()
    }
}

/// Dictionary of retained terms in sorted order; index = position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    terms: Vec<String>,
}

impl Vocabulary {
    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn term(&self, index: u32) -> &str {
        &self.terms[index as usize]
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }
}

const MIN_DOC_FREQ: usize = 2;

/// Builds TF-IDF vectors for the documents: tf is the raw count, idf is
/// `ln(N / df)`, terms with df < 2 are dropped, vectors are normalized.
pub fn vectorize(docs: &[&str]) -> Result<(Vec<DocVector>, Vocabulary), VectorizeError> {
    if docs.is_empty() {
        return Err(VectorizeError::NoDocuments);
    }
    let tokenized: Vec<Vec<String>> = docs.iter().map(|d| tokens_lower(d)).collect();
    if tokenized.iter().all(|t| t.is_empty()) {
        return Err(VectorizeError::AllEmpty);
    }

    let mut doc_freq: BTreeMap<&str, usize> = BTreeMap::new();
    for tokens in &tokenized {
        let unique: std::collections::BTreeSet<&str> =
            tokens.iter().map(String::as_str).collect();
        for term in unique {
            *doc_freq.entry(term).or_insert(0) += 1;
        }
    }

    let n = docs.len() as f64;
    // Sorted map iteration makes the dictionary deterministic.
    let terms: Vec<String> = doc_freq
        .iter()
        .filter(|(_, &df)| df >= MIN_DOC_FREQ)
        .map(|(term, _)| term.to_string())
        .collect();
    let index: BTreeMap<&str, u32> = terms
        .iter()
        .enumerate()
        .map(|(i, t)| (t.as_str(), i as u32))
        .collect();
    let idf: Vec<f64> = terms
        .iter()
        .map(|t| (n / doc_freq[t.as_str()] as f64).ln())
        .collect();

    let vectors = tokenized
        .iter()
        .map(|tokens| {
            let mut counts: BTreeMap<u32, f64> = BTreeMap::new();
            for token in tokens {
                if let Some(&i) = index.get(token.as_str()) {
                    *counts.entry(i).or_insert(0.0) += 1.0;
                }
            }
            let entries: Vec<(u32, f64)> = counts
                .into_iter()
                .map(|(i, tf)| (i, tf * idf[i as usize]))
                .collect();
            DocVector::from_entries(entries).normalized()
        })
        .collect();
    Ok((vectors, Vocabulary { terms }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn disjoint_documents_are_orthogonal() {
        // Repeat each doc so its terms clear the df >= 2 cutoff.
        let docs = ["clot blood leg", "clot blood leg", "fever chills", "fever chills"];
        let (vectors, vocab) = vectorize(&docs).unwrap();
        assert!(!vocab.is_empty());
        assert_eq!(vectors[0].dot(&vectors[2]), 0.0);
        assert!((vectors[0].dot(&vectors[1]) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn term_in_every_document_gets_zero_weight() {
        let docs = ["vaccine clot clot", "vaccine fever fever", "vaccine ache ache"];
        let (vectors, vocab) = vectorize(&docs).unwrap();
        // "vaccine" has df = N, idf = ln(1) = 0; the other terms have
        // df = 1 and are dropped, so every vector is all-zero.
        assert_eq!(vocab.terms(), &["vaccine".to_string()]);
        for v in &vectors {
            assert!(v.is_zero());
        }
    }

    #[test]
    fn weights_match_hand_computed_tfidf() {
        // Three documents; df(clot)=2, df(fever)=2, df(pain)=1 (dropped).
        let docs = ["clot clot fever", "clot pain", "fever"];
        let (vectors, vocab) = vectorize(&docs).unwrap();
        assert_eq!(vocab.terms(), &["clot".to_string(), "fever".to_string()]);
        let idf = (3.0f64 / 2.0).ln();
        // Doc 0: tf(clot)=2, tf(fever)=1 -> raw (2·idf, 1·idf), normalized.
        let raw = [2.0 * idf, 1.0 * idf];
        let norm = (raw[0] * raw[0] + raw[1] * raw[1]).sqrt();
        let entries = vectors[0].entries();
        assert!((entries[0].1 - raw[0] / norm).abs() < 1e-9);
        assert!((entries[1].1 - raw[1] / norm).abs() < 1e-9);
        // Cached norm matches recomputation.
        let recomputed: f64 = entries.iter().map(|&(_, w)| w * w).sum::<f64>().sqrt();
        assert!((vectors[0].norm() - recomputed).abs() < 1e-9);
    }

    #[test]
    fn empty_inputs_are_errors() {
        assert!(matches!(vectorize(&[]), Err(VectorizeError::NoDocuments)));
        assert!(matches!(vectorize(&["", "  "]), Err(VectorizeError::AllEmpty)));
    }
}
