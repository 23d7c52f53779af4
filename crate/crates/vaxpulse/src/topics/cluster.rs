//! Average-linkage agglomerative clustering under cosine distance.
//!
//! Deterministic by construction: the closest pair merges first, ties
//! resolve to the lowest-index pair, and merged clusters keep the lower
//! index. Clusters smaller than `min_topic_size` become outliers (id -1);
//! surviving clusters are numbered 0..k-1 by size descending.
//!
//! Exact duplicate vectors are collapsed into weighted points before the
//! merge loop. Duplicates sit at distance zero, so with any positive
//! threshold they always merge before anything else and their average-
//! linkage distances to other clusters are unchanged; collapsing them
//! only shrinks the distance matrix.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::vectorize::DocVector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterParams {
    /// Merge while the closest pair is strictly below this cosine distance.
    pub distance_threshold: f64,
    /// Clusters smaller than this are reassigned to the outlier id -1.
    pub min_topic_size: usize,
}

impl Default for ClusterParams {
    fn default() -> Self {
        Self {
            distance_threshold: 0.6,
            min_topic_size: 10,
        }
    }
}

/// Outlier cluster id.
pub const OUTLIER: i32 = -1;

/// Clusters the vectors; returns one id per input vector (-1 = outlier).
pub fn cluster(vectors: &[DocVector], params: &ClusterParams) -> Vec<i32> {
    if vectors.is_empty() {
        return Vec::new();
    }

    // Collapse exact duplicates (only sound when merges can happen at all).
    let (reps, members) = if params.distance_threshold > 0.0 {
        collapse_duplicates(vectors)
    } else {
        (
            (0..vectors.len()).collect::<Vec<_>>(),
            (0..vectors.len()).map(|i| vec![i]).collect::<Vec<_>>(),
        )
    };

    let n = reps.len();
    let mut active: Vec<bool> = vec![true; n];
    let mut sizes: Vec<usize> = members.iter().map(Vec::len).collect();
    let mut groups: Vec<Vec<usize>> = members;

    // Dense distance matrix over representatives.
    let mut dist = vec![0.0f64; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = vectors[reps[i]].cosine_distance(&vectors[reps[j]]);
            dist[i * n + j] = d;
            dist[j * n + i] = d;
        }
    }

    loop {
        // Global minimum, lowest-index pair on ties.
        let mut best: Option<(usize, usize, f64)> = None;
        for i in 0..n {
            if !active[i] {
                continue;
            }
            for j in (i + 1)..n {
                if !active[j] {
                    continue;
                }
                let d = dist[i * n + j];
                if best.is_none_or(|(_, _, bd)| d < bd) {
                    best = Some((i, j, d));
                }
            }
        }
        let Some((i, j, d)) = best else { break };
        if d >= params.distance_threshold {
            break;
        }
        // Average linkage (Lance-Williams): new distance is the
        // size-weighted mean of the merged rows.
        let (si, sj) = (sizes[i] as f64, sizes[j] as f64);
        for k in 0..n {
            if !active[k] || k == i || k == j {
                continue;
            }
            let dik = dist[i * n + k];
            let djk = dist[j * n + k];
            let merged = (si * dik + sj * djk) / (si + sj);
            dist[i * n + k] = merged;
            dist[k * n + i] = merged;
        }
        sizes[i] += sizes[j];
        let moved = std::mem::take(&mut groups[j]);
        groups[i].extend(moved);
        active[j] = false;
    }

    // Surviving clusters, ordered by (size desc, earliest member asc).
    let mut final_clusters: Vec<(usize, usize, Vec<usize>)> = (0..n)
        .filter(|&i| active[i])
        .map(|i| {
            let first = *groups[i].iter().min().expect("cluster non-empty");
            (groups[i].len(), first, groups[i].clone())
        })
        .collect();
    final_clusters.sort_by(|a, b| b.0.cmp(&a.0).then_with(|| a.1.cmp(&b.1)));

    let mut assignments = vec![OUTLIER; vectors.len()];
    let mut next_id = 0i32;
    for (size, _, docs) in final_clusters {
        if size < params.min_topic_size {
            continue;
        }
        for doc in docs {
            assignments[doc] = next_id;
        }
        next_id += 1;
    }
    assignments
}

fn collapse_duplicates(vectors: &[DocVector]) -> (Vec<usize>, Vec<Vec<usize>>) {
    let mut seen: HashMap<Vec<(u32, u64)>, usize> = HashMap::new();
    let mut reps: Vec<usize> = Vec::new();
    let mut members: Vec<Vec<usize>> = Vec::new();
    for (i, vector) in vectors.iter().enumerate() {
        let key = vector.identity_key();
        match seen.get(&key) {
            Some(&group) => members[group].push(i),
            None => {
                seen.insert(key, reps.len());
                reps.push(i);
                members.push(vec![i]);
            }
        }
    }
    (reps, members)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topics::vectorize::vectorize;

    #[test]
    fn duplicate_heavy_corpus_forms_two_clusters() {
        // 12 copies of A plus 12 copies of B, A orthogonal to B.
        let mut docs: Vec<&str> = Vec::new();
        docs.extend(std::iter::repeat_n("clot blood leg", 12));
        docs.extend(std::iter::repeat_n("fever chills ache", 12));
        let (vectors, _) = vectorize(&docs).unwrap();
        let assignments = cluster(&vectors, &ClusterParams::default());
        assert_eq!(&assignments[..12], &[0; 12]);
        assert_eq!(&assignments[12..], &[1; 12]);
    }

    #[test]
    fn mutually_orthogonal_vectors_all_outliers() {
        // 24 singleton directions: nothing merges below the threshold,
        // every cluster stays below min_topic_size.
        let vectors: Vec<DocVector> = (0..24)
            .map(|i| DocVector::from_entries(vec![(i as u32, 1.0)]).normalized())
            .collect();
        let assignments = cluster(&vectors, &ClusterParams::default());
        assert!(assignments.iter().all(|&a| a == OUTLIER));
    }

    #[test]
    fn zero_threshold_never_merges() {
        let vectors: Vec<DocVector> = (0..4)
            .map(|_| DocVector::from_entries(vec![(0, 1.0)]).normalized())
            .collect();
        let params = ClusterParams {
            distance_threshold: 0.0,
            min_topic_size: 2,
        };
        let assignments = cluster(&vectors, &params);
        assert!(assignments.iter().all(|&a| a == OUTLIER));
    }

    #[test]
    fn ids_ordered_by_size_descending() {
        let mut docs: Vec<&str> = Vec::new();
        docs.extend(std::iter::repeat_n("small cluster words", 10));
        docs.extend(std::iter::repeat_n("big cluster other words", 14));
        let (vectors, _) = vectorize(&docs).unwrap();
        let assignments = cluster(&vectors, &ClusterParams::default());
        assert_eq!(&assignments[..10], &[1; 10]);
        assert_eq!(&assignments[10..], &[0; 14]);
    }

    #[test]
    fn small_groups_become_outliers_but_large_survive() {
        let mut docs: Vec<&str> = Vec::new();
        docs.extend(std::iter::repeat_n("keep these words", 11));
        docs.extend(std::iter::repeat_n("tiny island here", 3));
        let (vectors, _) = vectorize(&docs).unwrap();
        let assignments = cluster(&vectors, &ClusterParams::default());
        assert_eq!(&assignments[..11], &[0; 11]);
        assert_eq!(&assignments[11..], &[OUTLIER; 3]);
    }

    #[test]
    fn deterministic_across_runs() {
        // Mixed corpus with partial term overlap between families.
        let base = [
            "clot blood leg pain",
            "blood clot in my leg",
            "clot leg blood swelling",
            "fever chills ache tired",
            "chills fever tired night",
            "fever ache night sweat",
        ];
        let docs: Vec<String> = (0..60)
            .map(|i| format!("{} filler{}", base[i % base.len()], i % 5))
            .collect();
        let doc_refs: Vec<&str> = docs.iter().map(String::as_str).collect();
        let (vectors, _) = vectorize(&doc_refs).unwrap();
        let params = ClusterParams {
            distance_threshold: 0.7,
            min_topic_size: 5,
        };
        let a = cluster(&vectors, &params);
        let b = cluster(&vectors, &params);
        assert_eq!(a, b);
    }
}
