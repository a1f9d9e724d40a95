use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::ratings::{RatingGraph, RatingTriple};
use crate::error::{Error, Result};

/// Disjoint train / validation / test partition of the observed ratings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<RatingTriple>,
    pub validation: Vec<RatingTriple>,
    pub test: Vec<RatingTriple>,
    pub train_fraction: f64,
    pub seed: u64,
}

/// Record of how a split was produced, written next to the split files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub seed: u64,
    pub train_fraction: f64,
    pub train: usize,
    pub validation: usize,
    pub test: usize,
    pub input_hash: String,
}

impl DatasetSplit {
    pub fn manifest(&self, input_hash: String) -> SplitManifest {
        SplitManifest {
            seed: self.seed,
            train_fraction: self.train_fraction,
            train: self.train.len(),
            validation: self.validation.len(),
            test: self.test.len(),
            input_hash,
        }
    }
}

/// Shuffles all ratings under `seed`, then slices train, validation, test.
/// Validation and test each receive `round((1 - x) / 2 * total)` ratings,
/// at least one.
pub fn split(graph: &RatingGraph, train_fraction: f64, seed: u64) -> Result<DatasetSplit> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Config(format!("train fraction {train_fraction} outside (0, 1)")));
    }
    let total = graph.len();
    if total < 3 {
        return Err(Error::TooSmall(format!("{total} ratings; a split needs at least 3")));
    }
    let held = (((1.0 - train_fraction) / 2.0 * total as f64).round() as usize).max(1);
    let held = held.min((total - 1) / 2);

    let mut all = graph.triples().to_vec();
    all.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let test = all.split_off(total - held);
    let validation = all.split_off(total - 2 * held);
    Ok(DatasetSplit {
        train: all,
        validation,
        test,
        train_fraction,
        seed,
    })
}

/// Order-independent SHA-256 of a rating multiset, hex encoded.
pub fn content_hash(triples: &[RatingTriple]) -> String {
    let mut sorted = triples.to_vec();
    sorted.sort_unstable();
    let mut h = Sha256::new();
    for t in &sorted {
        h.update(t.user.to_le_bytes());
        h.update(t.item.to_le_bytes());
        h.update([t.rating]);
    }
    hex(&h.finalize())
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use std::collections::HashSet;

    use super::*;

    fn graph(n: usize) -> RatingGraph {
        let triples = (0..n as u32).map(|k| RatingTriple::new(k % 7, k, (k % 5 + 1) as u8)).collect();
        RatingGraph::from_triples(7, n, 5, triples).unwrap()
    }

    #[test]
    fn eighty_percent_of_ten() {
        let s = split(&graph(10), 0.8, 3).unwrap();
        assert_eq!((s.train.len(), s.validation.len(), s.test.len()), (8, 1, 1));
    }

    #[test]
    fn sixty_percent_of_ten() {
        let s = split(&graph(10), 0.6, 3).unwrap();
        assert_eq!((s.train.len(), s.validation.len(), s.test.len()), (6, 2, 2));
    }

    #[test]
    fn deterministic_partition() {
        let g = graph(101);
        let a = split(&g, 0.8, 42).unwrap();
        assert_eq!(a, split(&g, 0.8, 42).unwrap());
        assert_ne!(a.train, split(&g, 0.8, 43).unwrap().train);
        let all: HashSet<_> = a.train.iter().chain(&a.validation).chain(&a.test).collect();
        assert_eq!(all.len(), 101);
    }

    #[test]
    fn too_small_and_bad_fraction() {
        assert!(matches!(split(&graph(2), 0.8, 1), Err(Error::TooSmall(_))));
        assert!(matches!(split(&graph(10), 1.0, 1), Err(Error::Config(_))));
        let s = split(&graph(3), 0.8, 1).unwrap();
        assert_eq!((s.train.len(), s.validation.len(), s.test.len()), (1, 1, 1));
    }

    #[test]
    fn hash_ignores_order() {
        let g = graph(20);
        let mut rev = g.triples().to_vec();
        rev.reverse();
        assert_eq!(content_hash(g.triples()), content_hash(&rev));
        assert_eq!(content_hash(&rev).len(), 64);
    }
}
