//! Trained detector: pool, forest, cascade and the geometry needed to apply
//! it. Serialized as versioned JSON.

use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::boost::DecisionTree;
use crate::channels::{CellRect, ChannelConfig, IntegralStack, LuvScale};
use crate::error::{Error, Result};
use crate::featpool::{eval_fast, window_stats_unchecked, FeaturePool, NORM_EPSILON};

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Box in pixel coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PixelBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl PixelBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        Self { x, y, w, h }
    }

    pub fn area(&self) -> f64 {
        self.w.max(0.0) * self.h.max(0.0)
    }

    pub fn intersection(&self, o: &PixelBox) -> f64 {
        let iw = (self.x + self.w).min(o.x + o.w) - self.x.max(o.x);
        let ih = (self.y + self.h).min(o.y + o.h) - self.y.max(o.y);
        if iw <= 0.0 || ih <= 0.0 {
            0.0
        } else {
            iw * ih
        }
    }

    pub fn iou(&self, o: &PixelBox) -> f64 {
        let inter = self.intersection(o);
        let union = self.area() + o.area() - inter;
        if union <= 0.0 {
            0.0
        } else {
            inter / union
        }
    }
}

/// Detection window geometry. `object` is where a pedestrian sits inside the
/// window; detections report that box, not the padded window.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Template {
    pub window_w: usize,
    pub window_h: usize,
    pub object: PixelBox,
}

impl Default for Template {
    fn default() -> Self {
        Self {
            window_w: 64,
            window_h: 128,
            object: PixelBox::new(12.0, 14.0, 40.0, 100.0),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub enabled: bool,
    pub epsilon: f64,
    pub luv_scale: LuvScale,
}

/// Outcome of scoring one window.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WindowScore {
    pub score: f64,
    /// Index of the tree after which the cascade rejected the window.
    pub rejected_at: Option<usize>,
}

impl WindowScore {
    pub fn accepted(&self, threshold: f64) -> bool {
        self.rejected_at.is_none() && self.score >= threshold
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoostedModel {
    pub version: u32,
    pub template: Template,
    pub cell_size: usize,
    pub channel_config: ChannelConfig,
    pub normalization: Normalization,
    pub pool: FeaturePool,
    pub trees: Vec<DecisionTree>,
    #[serde(serialize_with = "ser_thresholds", deserialize_with = "de_thresholds")]
    pub cascade_thresholds: Vec<f64>,
}

fn ser_thresholds<S: Serializer>(v: &[f64], s: S) -> std::result::Result<S::Ok, S::Error> {
    let opt: Vec<Option<f64>> = v.iter().map(|t| t.is_finite().then_some(*t)).collect();
    opt.serialize(s)
}

fn de_thresholds<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<f64>, D::Error> {
    let opt: Vec<Option<f64>> = Vec::deserialize(d)?;
    Ok(opt.into_iter().map(|t| t.unwrap_or(f64::NEG_INFINITY)).collect())
}

impl BoostedModel {
    pub fn new(
        template: Template,
        cell_size: usize,
        channel_config: ChannelConfig,
        normalized: bool,
        pool: FeaturePool,
        trees: Vec<DecisionTree>,
        cascade_thresholds: Vec<f64>,
    ) -> Result<Self> {
        let m = Self {
            version: MODEL_FORMAT_VERSION,
            template,
            cell_size,
            channel_config,
            normalization: Normalization {
                enabled: normalized,
                epsilon: NORM_EPSILON,
                luv_scale: channel_config.luv_scale,
            },
            pool,
            trees,
            cascade_thresholds,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != MODEL_FORMAT_VERSION {
            return Err(Error::UnsupportedVersion {
                found: self.version,
                expected: MODEL_FORMAT_VERSION,
            });
        }
        let bad = |m: &str| Err(Error::Format(format!("invalid model: {m}")));
        if self.cell_size == 0
            || self.template.window_w != self.pool.template_w as usize * self.cell_size
            || self.template.window_h != self.pool.template_h as usize * self.cell_size
        {
            return bad("template geometry does not match pool and cell size");
        }
        if self.cascade_thresholds.len() != self.trees.len() {
            return bad("one cascade threshold per tree required");
        }
        if self.cascade_thresholds.iter().any(|t| t.is_nan() || *t == f64::INFINITY) {
            return bad("cascade thresholds must be finite or disabled");
        }
        if self.normalization.luv_scale != self.channel_config.luv_scale {
            return bad("normalization LUV scale differs from channel config");
        }
        for (i, t) in self.trees.iter().enumerate() {
            t.check_shape(self.pool.len())
                .map_err(|e| Error::Format(format!("tree {i}: {e}")))?;
        }
        Ok(())
    }

    pub fn template_cells(&self) -> (usize, usize) {
        (self.pool.template_w as usize, self.pool.template_h as usize)
    }

    pub fn cascade_enabled(&self) -> bool {
        self.cascade_thresholds.iter().any(|t| t.is_finite())
    }

    pub fn without_cascade(&self) -> Self {
        let mut m = self.clone();
        m.cascade_thresholds = vec![f64::NEG_INFINITY; m.trees.len()];
        m
    }

    /// Distinct pool indices referenced by split nodes (dummy splits with an
    /// infinite threshold excluded), ascending.
    pub fn used_features(&self) -> Vec<usize> {
        let mut used: Vec<usize> = self
            .trees
            .iter()
            .flat_map(|t| {
                t.nodes.iter().filter_map(|n| match n {
                    crate::boost::TreeNode::Split {
                        feature_index,
                        threshold,
                        ..
                    } if threshold.is_finite() => Some(*feature_index as usize),
                    _ => None,
                })
            })
            .collect();
        used.sort_unstable();
        used.dedup();
        used
    }

    /// Score the template-sized window whose top-left cell is `(x, y)`.
    pub fn score_window(&self, is: &IntegralStack, x: usize, y: usize) -> Result<WindowScore> {
        let (tw, th) = self.template_cells();
        let win = CellRect::new(x, y, tw, th);
        is.check(&win)?;
        Ok(self.score_window_unchecked(is, &win))
    }

    /// Hot-loop variant; `win` must lie inside `is`.
    #[inline]
    pub(crate) fn score_window_unchecked(&self, is: &IntegralStack, win: &CellRect) -> WindowScore {
        let ns = self
            .normalization
            .enabled
            .then(|| window_stats_unchecked(is, win));
        let descriptors = &self.pool.descriptors;
        let mut acc = 0.0f64;
        for (t, (tree, &th)) in self.trees.iter().zip(&self.cascade_thresholds).enumerate() {
            acc += tree.evaluate(|f| eval_fast(is, &descriptors[f], win, ns.as_ref()) as f32);
            if acc < th {
                return WindowScore {
                    score: acc,
                    rejected_at: Some(t),
                };
            }
        }
        WindowScore {
            score: acc,
            rejected_at: None,
        }
    }

    /// Score a precomputed full feature vector with the same cascade logic.
    pub fn score_features(&self, row: &[f32]) -> WindowScore {
        let mut acc = 0.0f64;
        for (t, (tree, &th)) in self.trees.iter().zip(&self.cascade_thresholds).enumerate() {
            acc += tree.evaluate_row(row);
            if acc < th {
                return WindowScore {
                    score: acc,
                    rejected_at: Some(t),
                };
            }
        }
        WindowScore {
            score: acc,
            rejected_at: None,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Probe {
            version: u32,
        }
        let probe: Probe = serde_json::from_str(s)?;
        if probe.version != MODEL_FORMAT_VERSION {
            return Err(Error::UnsupportedVersion {
                found: probe.version,
                expected: MODEL_FORMAT_VERSION,
            });
        }
        let m: Self = serde_json::from_str(s)?;
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::boost::TreeNode;
    use crate::channels::integrate_image;
    use crate::featpool::{eval_all, gen_pool, template_window, KindCounts, PoolConfig};
    use crate::image::RgbImage;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn small_pool(seed: u64) -> FeaturePool {
        gen_pool(&PoolConfig {
            counts: KindCounts {
                local_mean: 40,
                neighbor_diff: 40,
                sidf: 30,
                ssf: 20,
            },
            seed,
            ..PoolConfig::default()
        })
        .unwrap()
    }

    pub(crate) fn random_tree(rng: &mut ChaCha8Rng, n_features: usize, depth: usize) -> DecisionTree {
        let n_internal = (1usize << depth) - 1;
        let nodes = (0..2 * n_internal + 1)
            .map(|i| {
                if i < n_internal {
                    TreeNode::Split {
                        feature_index: rng.random_range(0..n_features) as u32,
                        threshold: rng.random_range(-0.5f32..0.5),
                        left: (2 * i + 1) as u32,
                        right: (2 * i + 2) as u32,
                    }
                } else {
                    TreeNode::Leaf {
                        score: rng.random_range(-1.0..1.0),
                    }
                }
            })
            .collect();
        DecisionTree { depth, nodes }
    }

    pub(crate) fn random_model(seed: u64, n_trees: usize, thresholds: Option<f64>) -> BoostedModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pool = small_pool(seed);
        let trees: Vec<_> = (0..n_trees).map(|_| random_tree(&mut rng, pool.len(), 2)).collect();
        let th = match thresholds {
            Some(t) => (0..n_trees).map(|i| t * (i + 1) as f64).collect(),
            None => vec![f64::NEG_INFINITY; n_trees],
        };
        BoostedModel::new(Template::default(), 2, ChannelConfig::default(), true, pool, trees, th).unwrap()
    }

    pub(crate) fn noise_image(seed: u64, w: usize, h: usize) -> RgbImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..w * h * 3).map(|_| rng.random::<u8>()).collect();
        RgbImage::new(w, h, data).unwrap()
    }

    #[test]
    fn iou_basics() {
        let a = PixelBox::new(0.0, 0.0, 10.0, 10.0);
        assert_eq!(a.iou(&a), 1.0);
        assert_eq!(a.iou(&PixelBox::new(20.0, 0.0, 5.0, 5.0)), 0.0);
        let b = PixelBox::new(5.0, 0.0, 10.0, 10.0);
        assert!((a.iou(&b) - 50.0 / 150.0).abs() < 1e-12);
    }

    #[test]
    fn stump_on_constant_image_reaches_leaf() {
        let pool = small_pool(1);
        let tree = DecisionTree {
            depth: 1,
            nodes: vec![
                TreeNode::Split {
                    feature_index: 0,
                    threshold: 1e9,
                    left: 1,
                    right: 2,
                },
                TreeNode::Leaf { score: -0.25 },
                TreeNode::Leaf { score: 0.75 },
            ],
        };
        let m = BoostedModel::new(
            Template::default(),
            2,
            ChannelConfig::default(),
            true,
            pool,
            vec![tree],
            vec![f64::NEG_INFINITY],
        )
        .unwrap();
        let is = integrate_image(&RgbImage::filled(64, 128, [90, 90, 90]), &m.channel_config, 2).unwrap();
        let s = m.score_window(&is, 0, 0).unwrap();
        assert_eq!(s.score, -0.25);
        assert_eq!(s.rejected_at, None);
    }

    #[test]
    fn window_scoring_matches_offline_feature_path() {
        let img = noise_image(4, 80, 140);
        for (seed, th) in [(1, None), (2, Some(-0.2))] {
            let m = random_model(seed, 25, th);
            let is = integrate_image(&img, &m.channel_config, 2).unwrap();
            for (x, y) in [(0, 0), (4, 3), (8, 6)] {
                let online = m.score_window(&is, x, y).unwrap();
                let row = eval_all(&is, &m.pool, &template_window(&m.pool, x, y), true).unwrap();
                let offline = m.score_features(&row);
                assert_eq!(online.rejected_at, offline.rejected_at);
                assert!((online.score - offline.score).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn disabled_cascade_equals_full_sum() {
        let m = random_model(3, 30, None);
        let is = integrate_image(&noise_image(5, 64, 128), &m.channel_config, 2).unwrap();
        let row = eval_all(&is, &m.pool, &template_window(&m.pool, 0, 0), true).unwrap();
        let full: f64 = m.trees.iter().map(|t| t.evaluate_row(&row)).sum();
        let s = m.score_window(&is, 0, 0).unwrap();
        assert_eq!(s.rejected_at, None);
        assert_eq!(s.score, full);
    }

    #[test]
    fn out_of_bounds_window() {
        let m = random_model(3, 2, None);
        let is = integrate_image(&noise_image(5, 64, 128), &m.channel_config, 2).unwrap();
        assert!(matches!(m.score_window(&is, 1, 0), Err(Error::OutOfBounds(_))));
    }

    #[test]
    fn json_round_trip_keeps_disabled_thresholds() {
        let mut m = random_model(6, 5, Some(-0.1));
        m.cascade_thresholds[2] = f64::NEG_INFINITY;
        let s = m.to_json().unwrap();
        assert!(s.contains("null"));
        let back = BoostedModel::from_json(&s).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.to_json().unwrap(), s);
    }

    #[test]
    fn unknown_version_rejected() {
        let m = random_model(6, 1, None);
        let s = m.to_json().unwrap().replacen("\"version\":1", "\"version\":99", 1);
        assert!(matches!(
            BoostedModel::from_json(&s),
            Err(Error::UnsupportedVersion { found: 99, .. })
        ));
    }

    #[test]
    fn missing_model_file_is_io_error() {
        let e = BoostedModel::load("/nonexistent/model.json").unwrap_err();
        assert_eq!(e.kind(), "IoError");
    }
}
