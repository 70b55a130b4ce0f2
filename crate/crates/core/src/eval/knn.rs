//! Weighted k-nearest-neighbour classification on cosine similarity.

use super::retrieval::{dot, Features};
use crate::error::{input_err, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Voting {
    Uniform,
    /// Each neighbour votes `exp(sim / temperature)`.
    Exponential { temperature: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KnnConfig {
    pub k: usize,
    pub voting: Voting,
}

impl Default for KnnConfig {
    fn default() -> Self {
        Self {
            k: 20,
            voting: Voting::Exponential { temperature: 0.07 },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KnnScore {
    pub top1: f64,
    pub top5: f64,
}

/// Class ranking for one query: classes by descending vote, smaller id first on ties.
/// Neighbours are the `k` most similar training items, smaller index first on ties.
pub fn class_ranking(query: &[f64], train: &Features, labels: &[u32], classes: usize, cfg: &KnnConfig) -> Vec<u32> {
    let mut sims: Vec<(f64, usize)> = (0..train.len()).map(|i| (dot(query, train.row(i)), i)).collect();
    sims.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut votes = vec![0.0; classes];
    for &(sim, i) in sims.iter().take(cfg.k) {
        votes[labels[i] as usize] += match cfg.voting {
            Voting::Uniform => 1.0,
            Voting::Exponential { temperature } => (sim / temperature).exp(),
        };
    }
    let mut order: Vec<u32> = (0..classes as u32).collect();
    order.sort_by(|&a, &b| votes[b as usize].total_cmp(&votes[a as usize]).then(a.cmp(&b)));
    order
}

pub fn knn_classify(
    train: &Features,
    train_labels: &[u32],
    test: &Features,
    test_labels: &[u32],
    cfg: &KnnConfig,
) -> Result<KnnScore> {
    if train.is_empty() {
        return Err(input_err("k-NN needs a non-empty training set"));
    }
    if test.is_empty() {
        return Err(input_err("k-NN needs at least one test item"));
    }
    if train_labels.len() != train.len() || test_labels.len() != test.len() {
        return Err(input_err("one label per feature row is required"));
    }
    if cfg.k == 0 || cfg.k > train.len() {
        return Err(input_err(format!("k = {} must lie in 1..={}", cfg.k, train.len())));
    }
    if train.dim != test.dim {
        return Err(input_err("train and test features differ in width"));
    }
    if let Voting::Exponential { temperature } = cfg.voting {
        if !(temperature > 0.0) {
            return Err(input_err("voting temperature must be positive"));
        }
    }
    let classes = train_labels.iter().chain(test_labels).max().map_or(0, |&m| m as usize + 1);
    let (mut top1, mut top5) = (0usize, 0usize);
    for q in 0..test.len() {
        let ranking = class_ranking(test.row(q), train, train_labels, classes, cfg);
        top1 += usize::from(ranking[0] == test_labels[q]);
        top5 += usize::from(ranking.iter().take(5).any(|&c| c == test_labels[q]));
    }
    let n = test.len() as f64;
    Ok(KnnScore {
        top1: top1 as f64 / n,
        top5: top5 as f64 / n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_neighbour_copies_its_label() {
        let train = Features::new(2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let test = Features::new(2, vec![0.0, 1.0]).unwrap();
        let cfg = KnnConfig {
            k: 1,
            ..KnnConfig::default()
        };
        let s = knn_classify(&train, &[3, 5], &test, &[5], &cfg).unwrap();
        assert_eq!(s.top1, 1.0);
        assert!(knn_classify(&Features::new(2, vec![]).unwrap(), &[], &test, &[5], &cfg).is_err());
    }
}
