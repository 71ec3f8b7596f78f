//! Real AdaBoost over depth-k trees with per-tree feature subsampling.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::quantize::BinnedMatrix;
use super::tree::{train_tree, DecisionTree};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoostParams {
    pub n_trees: usize,
    pub depth: usize,
    /// Fraction of features offered to each tree, drawn without replacement.
    pub feature_fraction: f64,
    pub seed: u64,
}

/// Statistics recorded after each weak learner.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TreeStat {
    /// 0-1 error of `sign(H)` over all samples.
    pub train_error: f64,
    /// |sum of weights - 1| after renormalization.
    pub weight_sum_error: f64,
}

#[derive(Clone, Debug)]
pub struct BoostOutput {
    pub trees: Vec<DecisionTree>,
    /// Final strong-classifier score of every training sample.
    pub scores: Vec<f64>,
    pub trace: Vec<TreeStat>,
}

/// `true` when a strong-classifier score counts as a positive prediction.
#[inline]
pub fn predicts_positive(score: f64) -> bool {
    score >= 0.0
}

pub fn training_error(scores: &[f64], labels: &[i8]) -> f64 {
    if scores.is_empty() {
        return 0.0;
    }
    let wrong = scores
        .iter()
        .zip(labels)
        .filter(|(&s, &y)| predicts_positive(s) != (y > 0))
        .count();
    wrong as f64 / scores.len() as f64
}

pub fn candidate_count(n_features: usize, fraction: f64) -> usize {
    ((n_features as f64 * fraction).round() as usize).clamp(1, n_features)
}

pub fn boost(data: &BinnedMatrix, labels: &[i8], params: &BoostParams) -> Result<BoostOutput> {
    let n = data.n_samples();
    if labels.len() != n {
        return Err(Error::InvalidArgument("label count mismatch".into()));
    }
    let n_pos = labels.iter().filter(|&&y| y > 0).count();
    let n_neg = n - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::InsufficientData(format!(
            "need both classes, got {n_pos} positives and {n_neg} negatives"
        )));
    }
    if !(params.feature_fraction > 0.0 && params.feature_fraction <= 1.0) {
        return Err(Error::InvalidArgument("feature_fraction must be in (0, 1]".into()));
    }
    if data.n_features() == 0 {
        return Err(Error::InvalidArgument("no features".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let k = candidate_count(data.n_features(), params.feature_fraction);
    let mut weights: Vec<f64> = labels
        .iter()
        .map(|&y| if y > 0 { 0.5 / n_pos as f64 } else { 0.5 / n_neg as f64 })
        .collect();
    let mut scores = vec![0.0f64; n];
    let mut trees = Vec::with_capacity(params.n_trees);
    let mut trace = Vec::with_capacity(params.n_trees);

    for _ in 0..params.n_trees {
        let mut candidates = sample(&mut rng, data.n_features(), k).into_vec();
        candidates.sort_unstable();
        let trained = train_tree(data, labels, &weights, &candidates, params.depth)?;
        for i in 0..n {
            let h = trained.sample_scores[i];
            scores[i] += h;
            weights[i] *= (-(labels[i] as f64) * h).exp();
        }
        let total: f64 = weights.iter().sum();
        for w in &mut weights {
            *w /= total;
        }
        let after: f64 = weights.iter().sum();
        trace.push(TreeStat {
            train_error: training_error(&scores, labels),
            weight_sum_error: (after - 1.0).abs(),
        });
        trees.push(trained.tree);
    }
    Ok(BoostOutput {
        trees,
        scores,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boost::quantize::{quantize, FeatureMatrix};
    use rand::Rng;

    pub(crate) fn blobs(n: usize, seed: u64) -> (FeatureMatrix, Vec<i8>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = FeatureMatrix::new(2);
        let mut labels = Vec::new();
        for i in 0..n {
            let y: i8 = if i % 2 == 0 { 1 } else { -1 };
            let c = if y > 0 { 2.0 } else { -2.0 };
            m.push_row(&[
                c + rng.random_range(-1.5f32..1.5),
                c + rng.random_range(-1.5f32..1.5),
            ]);
            labels.push(y);
        }
        (m, labels)
    }

    #[test]
    fn single_tree_reduces_to_train_tree() {
        let (m, labels) = blobs(60, 1);
        let data = quantize(&m).unwrap();
        let params = BoostParams {
            n_trees: 1,
            depth: 2,
            feature_fraction: 1.0,
            seed: 3,
        };
        let out = boost(&data, &labels, &params).unwrap();
        let n_pos = labels.iter().filter(|&&y| y > 0).count() as f64;
        let n_neg = labels.len() as f64 - n_pos;
        let w: Vec<f64> = labels
            .iter()
            .map(|&y| if y > 0 { 0.5 / n_pos } else { 0.5 / n_neg })
            .collect();
        let direct = train_tree(&data, &labels, &w, &[0, 1], 2).unwrap();
        assert_eq!(out.trees[0], direct.tree);
    }

    #[test]
    fn deterministic_under_seed() {
        let (m, labels) = blobs(80, 2);
        let data = quantize(&m).unwrap();
        let params = BoostParams {
            n_trees: 10,
            depth: 2,
            feature_fraction: 0.5,
            seed: 9,
        };
        let a = boost(&data, &labels, &params).unwrap();
        let b = boost(&data, &labels, &params).unwrap();
        assert_eq!(a.trees, b.trees);
        assert_eq!(a.scores, b.scores);
    }

    #[test]
    fn separable_blobs_reach_zero_error_with_normalized_weights() {
        let (m, labels) = blobs(200, 5);
        let data = quantize(&m).unwrap();
        let params = BoostParams {
            n_trees: 32,
            depth: 2,
            feature_fraction: 1.0,
            seed: 1,
        };
        let out = boost(&data, &labels, &params).unwrap();
        assert_eq!(out.trace.last().unwrap().train_error, 0.0);
        assert!(out.trace.iter().all(|s| s.weight_sum_error < 1e-9));
    }

    #[test]
    fn one_class_is_rejected() {
        let m = FeatureMatrix::from_rows(1, [vec![0.0], vec![1.0]]);
        let data = quantize(&m).unwrap();
        let p = BoostParams {
            n_trees: 1,
            depth: 1,
            feature_fraction: 1.0,
            seed: 0,
        };
        assert!(matches!(boost(&data, &[1, 1], &p), Err(Error::InsufficientData(_))));
    }
}
