//! Depth-limited decision trees trained by weighted-error split search over
//! quantized features, with Real-AdaBoost log-odds leaves.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::quantize::{BinnedMatrix, NUM_BINS};
use crate::error::{Error, Result};

/// Smoothing inside leaf log-odds.
pub const LEAF_EPSILON: f64 = 1e-4;

pub const MAX_DEPTH: usize = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeNode {
    /// Samples with `value < threshold` go to `left`.
    Split {
        feature_index: u32,
        threshold: f32,
        left: u32,
        right: u32,
    },
    Leaf {
        score: f64,
    },
}

/// Complete binary tree stored breadth-first.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub depth: usize,
    pub nodes: Vec<TreeNode>,
}

impl DecisionTree {
    /// Walk from the root, asking `feature` for the value of each split's
    /// feature. Returns the leaf score.
    #[inline]
    pub fn evaluate(&self, mut feature: impl FnMut(usize) -> f32) -> f64 {
        let mut i = 0usize;
        loop {
            match &self.nodes[i] {
                TreeNode::Leaf { score } => return *score,
                TreeNode::Split {
                    feature_index,
                    threshold,
                    left,
                    right,
                } => {
                    i = if feature(*feature_index as usize) < *threshold {
                        *left as usize
                    } else {
                        *right as usize
                    };
                }
            }
        }
    }

    pub fn evaluate_row(&self, row: &[f32]) -> f64 {
        self.evaluate(|f| row[f])
    }

    /// Pool indices used by split nodes, in node order.
    pub fn split_features(&self) -> impl Iterator<Item = usize> + '_ {
        self.nodes.iter().filter_map(|n| match n {
            TreeNode::Split { feature_index, .. } => Some(*feature_index as usize),
            TreeNode::Leaf { .. } => None,
        })
    }

    pub fn check_shape(&self, n_features: usize) -> Result<()> {
        if self.depth == 0 || self.depth > MAX_DEPTH {
            return Err(Error::InvalidArgument(format!("tree depth {}", self.depth)));
        }
        let n_internal = (1usize << self.depth) - 1;
        if self.nodes.len() != 2 * n_internal + 1 {
            return Err(Error::InvalidArgument("incomplete tree".into()));
        }
        for (i, n) in self.nodes.iter().enumerate() {
            match n {
                TreeNode::Split {
                    feature_index,
                    left,
                    right,
                    threshold,
                } if i < n_internal => {
                    if *feature_index as usize >= n_features
                        || *left as usize != 2 * i + 1
                        || *right as usize != 2 * i + 2
                        || threshold.is_nan()
                    {
                        return Err(Error::InvalidArgument(format!("bad split node {i}")));
                    }
                }
                TreeNode::Leaf { score } if i >= n_internal => {
                    if !score.is_finite() {
                        return Err(Error::InvalidArgument(format!("non-finite leaf {i}")));
                    }
                }
                _ => return Err(Error::InvalidArgument(format!("node {i} has the wrong type"))),
            }
        }
        Ok(())
    }
}

/// Real-AdaBoost leaf value.
pub fn leaf_score(w_pos: f64, w_neg: f64) -> f64 {
    0.5 * ((w_pos + LEAF_EPSILON) / (w_neg + LEAF_EPSILON)).ln()
}

/// A tree plus the leaf score each training sample landed in.
#[derive(Clone, Debug)]
pub struct TrainedTree {
    pub tree: DecisionTree,
    pub sample_scores: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct SplitChoice {
    error: f64,
    feature: usize,
    bin: u8,
}

fn better(a: SplitChoice, b: SplitChoice) -> SplitChoice {
    let key = |s: &SplitChoice| (s.error, s.feature, s.bin);
    let (ka, kb) = (key(&a), key(&b));
    match ka.0.total_cmp(&kb.0).then(ka.1.cmp(&kb.1)).then(ka.2.cmp(&kb.2)) {
        std::cmp::Ordering::Greater => b,
        _ => a,
    }
}

fn best_split_for_feature(
    column: &[u8],
    samples: &[u32],
    labels: &[i8],
    weights: &[f64],
    feature: usize,
) -> SplitChoice {
    let mut pos = [0.0f64; NUM_BINS];
    let mut neg = [0.0f64; NUM_BINS];
    for &s in samples {
        let s = s as usize;
        let b = column[s] as usize;
        if labels[s] > 0 {
            pos[b] += weights[s];
        } else {
            neg[b] += weights[s];
        }
    }
    let total_pos: f64 = pos.iter().sum();
    let total_neg: f64 = neg.iter().sum();
    let mut best = SplitChoice {
        error: f64::INFINITY,
        feature,
        bin: 0,
    };
    let (mut lp, mut ln) = (0.0f64, 0.0f64);
    for t in 0..NUM_BINS - 1 {
        lp += pos[t];
        ln += neg[t];
        let (rp, rn) = (total_pos - lp, total_neg - ln);
        let err = lp.min(ln) + rp.min(rn);
        if err < best.error {
            best = SplitChoice {
                error: err,
                feature,
                bin: t as u8,
            };
        }
    }
    best
}

/// Greedy top-down tree of the given depth. At each node the
/// `(feature, bin)` pair minimizing weighted classification error over
/// `candidates` is chosen, ties going to the lowest feature index and then
/// the lowest threshold. Nodes that receive no weight inherit their
/// parent's class distribution.
pub fn train_tree(
    data: &BinnedMatrix,
    labels: &[i8],
    weights: &[f64],
    candidates: &[usize],
    depth: usize,
) -> Result<TrainedTree> {
    let n = data.n_samples();
    if labels.len() != n || weights.len() != n {
        return Err(Error::InvalidArgument("labels/weights length mismatch".into()));
    }
    if depth == 0 || depth > MAX_DEPTH {
        return Err(Error::InvalidArgument(format!("tree depth must be in 1..={MAX_DEPTH}")));
    }
    if weights.iter().any(|&w| w < 0.0 || !w.is_finite()) || weights.iter().sum::<f64>() <= 0.0 {
        return Err(Error::InvalidArgument("weights must be non-negative with positive sum".into()));
    }
    if candidates.is_empty() || candidates.iter().any(|&f| f >= data.n_features()) {
        return Err(Error::InvalidArgument("invalid candidate feature set".into()));
    }
    let usable: Vec<usize> = candidates
        .iter()
        .copied()
        .filter(|&f| !data.is_degenerate(f))
        .collect();

    let n_internal = (1usize << depth) - 1;
    let n_nodes = 2 * n_internal + 1;
    let mut nodes: Vec<Option<TreeNode>> = vec![None; n_nodes];
    let mut members: Vec<Vec<u32>> = vec![Vec::new(); n_nodes];
    let mut dist = vec![(0.0f64, 0.0f64); n_nodes];
    members[0] = (0..n as u32).collect();

    for node in 0..n_nodes {
        let samples = std::mem::take(&mut members[node]);
        let (mut wp, mut wn) = (0.0, 0.0);
        for &s in &samples {
            if labels[s as usize] > 0 {
                wp += weights[s as usize];
            } else {
                wn += weights[s as usize];
            }
        }
        dist[node] = if wp + wn > 0.0 || node == 0 {
            (wp, wn)
        } else {
            dist[(node - 1) / 2]
        };

        if node >= n_internal {
            let (wp, wn) = dist[node];
            nodes[node] = Some(TreeNode::Leaf {
                score: leaf_score(wp, wn),
            });
            for &s in &samples {
                members[node].push(s);
            }
            continue;
        }

        let choice = if wp + wn > 0.0 && !usable.is_empty() {
            usable
                .par_iter()
                .map(|&f| best_split_for_feature(data.column(f), &samples, labels, weights, f))
                .collect::<Vec<_>>()
                .into_iter()
                .reduce(better)
        } else {
            None
        };
        let (left, right) = (2 * node + 1, 2 * node + 2);
        match choice {
            Some(c) => {
                let column = data.column(c.feature);
                let (l, r): (Vec<u32>, Vec<u32>) =
                    samples.iter().partition(|&&s| column[s as usize] <= c.bin);
                members[left] = l;
                members[right] = r;
                nodes[node] = Some(TreeNode::Split {
                    feature_index: c.feature as u32,
                    threshold: data.features[c.feature].threshold(c.bin),
                    left: left as u32,
                    right: right as u32,
                });
            }
            None => {
                // nothing to split on: route everything left
                members[left] = samples;
                nodes[node] = Some(TreeNode::Split {
                    feature_index: candidates[0] as u32,
                    threshold: f32::INFINITY,
                    left: left as u32,
                    right: right as u32,
                });
            }
        }
    }

    let nodes: Vec<TreeNode> = nodes.into_iter().map(Option::unwrap).collect();
    let mut sample_scores = vec![0.0f64; n];
    for leaf in n_internal..n_nodes {
        let TreeNode::Leaf { score } = nodes[leaf] else {
            unreachable!()
        };
        for &s in &members[leaf] {
            sample_scores[s as usize] = score;
        }
    }
    Ok(TrainedTree {
        tree: DecisionTree { depth, nodes },
        sample_scores,
    })
}
