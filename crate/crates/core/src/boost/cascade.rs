//! Constant-offset soft cascade calibrated on training positives.

use super::tree::DecisionTree;

/// Offset subtracted from the per-stage minimum running score.
pub const CASCADE_MARGIN: f64 = 0.1;
/// Fraction of positives allowed to fall out of the minimum.
pub const CASCADE_DROP_FRACTION: f64 = 0.01;

/// Running (cumulative) score after each tree.
pub fn running_scores(trees: &[DecisionTree], row: &[f32]) -> Vec<f64> {
    let mut acc = 0.0f64;
    trees
        .iter()
        .map(|t| {
            acc += t.evaluate_row(row);
            acc
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct CascadeCalibration {
    pub thresholds: Vec<f64>,
    /// Which positives contributed to the per-stage minima.
    pub retained: Vec<bool>,
}

/// Cascade thresholds with every stage disabled.
pub fn disabled_cascade(n_trees: usize) -> Vec<f64> {
    vec![f64::NEG_INFINITY; n_trees]
}

/// Per-stage thresholds = min over retained positives of the running score,
/// minus `margin`.
///
/// A positive is dropped when at some stage its running score falls below
/// the stage's 1st percentile; at most `floor(n * drop_fraction)` positives
/// are dropped, those with the lowest stage rank first, so at least 99% are
/// always retained.
pub fn calibrate_cascade(trajectories: &[Vec<f64>], margin: f64, drop_fraction: f64) -> CascadeCalibration {
    let n = trajectories.len();
    let n_stages = trajectories.first().map_or(0, Vec::len);
    if n == 0 {
        return CascadeCalibration {
            thresholds: disabled_cascade(n_stages),
            retained: Vec::new(),
        };
    }
    assert!(trajectories.iter().all(|t| t.len() == n_stages));
    let max_drop = (n as f64 * drop_fraction).floor() as usize;

    // lowest rank each positive attains over all stages
    let mut worst_rank = vec![usize::MAX; n];
    let mut below = vec![false; n];
    let mut order: Vec<usize> = (0..n).collect();
    for t in 0..n_stages {
        order.sort_by(|&a, &b| {
            trajectories[a][t]
                .total_cmp(&trajectories[b][t])
                .then(a.cmp(&b))
        });
        let pct = trajectories[order[max_drop.min(n - 1)]][t];
        for (rank, &i) in order.iter().enumerate() {
            worst_rank[i] = worst_rank[i].min(rank);
            if trajectories[i][t] < pct {
                below[i] = true;
            }
        }
    }
    let mut candidates: Vec<usize> = (0..n).filter(|&i| below[i]).collect();
    candidates.sort_by_key(|&i| (worst_rank[i], i));
    let mut retained = vec![true; n];
    for &i in candidates.iter().take(max_drop) {
        retained[i] = false;
    }

    let thresholds = (0..n_stages)
        .map(|t| {
            trajectories
                .iter()
                .zip(&retained)
                .filter(|(_, &r)| r)
                .map(|(tr, _)| tr[t])
                .fold(f64::INFINITY, f64::min)
                - margin
        })
        .collect();
    CascadeCalibration {
        thresholds,
        retained,
    }
}
