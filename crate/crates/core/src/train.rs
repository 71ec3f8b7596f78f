//! Multi-round training with hard-negative mining.

use std::collections::BTreeMap;
use std::io::Write;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::boost::{boost, calibrate_cascade, quantize, running_scores, BoostParams, FeatureMatrix};
use crate::boost::cascade::{CASCADE_DROP_FRACTION, CASCADE_MARGIN};
use crate::channels::{aggregate_cells, compute_channels, integrate_image, CellChannelStack, ChannelConfig, Plane};
use crate::detect::{build_level, pyramid_geometry, scan_level, window_to_image, DetectParams, LevelGeometry};
use crate::error::{Error, Result};
use crate::featpool::{eval_all, template_window, FeatureKind, FeaturePool, KindCounts};
use crate::image::RgbImage;
use crate::model::{BoostedModel, PixelBox, Template};

/// Extra pixels around a cropped window so that channel borders do not
/// reach the window.
pub const CROP_MARGIN: usize = 8;
/// Windows overlapping a ground-truth box at least this much are never
/// used as negatives.
pub const NEGATIVE_EXCLUSION_IOU: f64 = 0.2;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    /// Tree count of each round; strictly increasing.
    pub rounds: Vec<usize>,
    pub tree_depth: usize,
    pub feature_fraction: f64,
    pub negatives_per_round: usize,
    pub negative_cap: usize,
    pub initial_negatives: usize,
    pub normalize: bool,
    pub cell_size: usize,
    pub template: Template,
    pub channel_config: ChannelConfig,
    /// Stride and pyramid used while mining.
    pub mining: DetectParams,
    /// Extra copies of every positive window, each shifted by a random
    /// whole number of pixels in `[-jitter_shift, jitter_shift]` per axis
    /// and rescaled by `2^u`, `u` uniform in `[-jitter_scale, jitter_scale]`.
    /// The defaults match the misalignment between an object and the
    /// nearest window of the default stride and pyramid.
    pub jitter_count: usize,
    pub jitter_shift: i64,
    pub jitter_scale: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            rounds: vec![32, 128, 512, 2048, 4096],
            tree_depth: 2,
            feature_fraction: 1.0 / 32.0,
            negatives_per_round: 5000,
            negative_cap: 15000,
            initial_negatives: 10000,
            normalize: true,
            cell_size: 2,
            template: Template::default(),
            channel_config: ChannelConfig::default(),
            mining: DetectParams::default(),
            jitter_count: 6,
            jitter_shift: 2,
            jitter_scale: 1.0 / 16.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.rounds.is_empty() || self.rounds.windows(2).any(|w| w[1] <= w[0]) || self.rounds[0] == 0 {
            return bad("rounds must be non-empty, positive and strictly increasing");
        }
        if !(1..=4).contains(&self.tree_depth) {
            return bad("tree_depth must be in 1..=4");
        }
        if !(self.feature_fraction > 0.0 && self.feature_fraction <= 1.0) {
            return bad("feature_fraction must be in (0, 1]");
        }
        if self.negative_cap == 0 || self.initial_negatives == 0 {
            return bad("negative_cap and initial_negatives must be positive");
        }
        if self.cell_size == 0
            || self.template.window_w % self.cell_size != 0
            || self.template.window_h % self.cell_size != 0
        {
            return bad("window must be a whole number of cells");
        }
        Ok(())
    }
}

/// An image with its annotated pedestrian boxes.
#[derive(Clone, Debug)]
pub struct AnnotatedImage {
    pub image: RgbImage,
    pub boxes: Vec<PixelBox>,
}

/// One line of the training trace.
#[derive(Clone, Debug, PartialEq)]
pub struct RoundTrace {
    pub round: usize,
    pub trees: usize,
    pub n_pos: usize,
    pub n_neg: usize,
    pub train_error: f64,
    /// Hard negatives harvested after this round.
    pub mined: usize,
    pub wall_seconds: f64,
    /// False positives per negative image found by this round's detector;
    /// `None` after the final round, which is not mined.
    pub fp_per_image: Option<f64>,
}

pub const TRACE_HEADER: &str = "round,trees,n_pos,n_neg,train_error,mined,wall_seconds,fp_per_image";

pub fn write_trace<W: Write + ?Sized>(out: &mut W, trace: &[RoundTrace]) -> std::io::Result<()> {
    writeln!(out, "{TRACE_HEADER}")?;
    for t in trace {
        let fp = t.fp_per_image.map_or(String::new(), |v| format!("{v:.4}"));
        writeln!(
            out,
            "{},{},{},{},{:.6},{},{:.3},{}",
            t.round, t.trees, t.n_pos, t.n_neg, t.train_error, t.mined, t.wall_seconds, fp
        )?;
    }
    Ok(())
}

pub struct TrainOutput {
    pub model: BoostedModel,
    pub trace: Vec<RoundTrace>,
}

/// Crop the window whose top-left pixel sits at `(ox, oy)` in the image
/// rescaled by `(sx, sy)`, padded by [`CROP_MARGIN`], and evaluate the pool
/// on it.
pub fn window_features(
    img: &RgbImage,
    ox: i64,
    oy: i64,
    sx: f64,
    sy: f64,
    pool: &FeaturePool,
    cfg: &TrainConfig,
) -> Result<Vec<f32>> {
    let m = CROP_MARGIN as i64;
    let (ww, wh) = (cfg.template.window_w, cfg.template.window_h);
    let crop = img.resample(ox - m, oy - m, 1.0 / sx, 1.0 / sy, ww + 2 * CROP_MARGIN, wh + 2 * CROP_MARGIN);
    crop_features(&crop, pool, cfg)
}

fn crop_features(crop: &RgbImage, pool: &FeaturePool, cfg: &TrainConfig) -> Result<Vec<f32>> {
    let is = integrate_image(crop, &cfg.channel_config, cfg.cell_size)?;
    let c = CROP_MARGIN / cfg.cell_size;
    eval_all(&is, pool, &template_window(pool, c, c), cfg.normalize)
}

/// `(dx, dy, log2 scale)` offsets for the positive windows of `n_boxes`
/// boxes: the unshifted window followed by `jitter_count` random ones.
pub fn jitter_offsets(cfg: &TrainConfig, n_boxes: usize) -> Vec<Vec<(i64, i64, f64)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x6A17_7E25);
    let d = cfg.jitter_shift.abs();
    let s = cfg.jitter_scale.abs();
    (0..n_boxes)
        .map(|_| {
            let mut v = vec![(0, 0, 0.0)];
            for _ in 0..cfg.jitter_count {
                let dx = rng.random_range(-d..=d);
                let dy = rng.random_range(-d..=d);
                let ds = if s > 0.0 { rng.random_range(-s..=s) } else { 0.0 };
                v.push((dx, dy, ds));
            }
            v
        })
        .collect()
}

/// The box's window, rescaled so the box height matches the template
/// object and centered on it, then offset by `(dx, dy, log2 scale)`. The
/// crop carries [`CROP_MARGIN`] extra pixels on every side.
fn positive_crop(img: &RgbImage, b: &PixelBox, (dx, dy, ds): (i64, i64, f64), cfg: &TrainConfig) -> RgbImage {
    let obj = cfg.template.object;
    let m = CROP_MARGIN as i64;
    let (ww, wh) = (cfg.template.window_w, cfg.template.window_h);
    let s = obj.h / b.h * 2f64.powf(ds);
    let ox = ((b.x + b.w / 2.0) * s - (obj.x + obj.w / 2.0)).round() as i64 + dx;
    let oy = ((b.y + b.h / 2.0) * s - (obj.y + obj.h / 2.0)).round() as i64 + dy;
    img.resample(ox - m, oy - m, 1.0 / s, 1.0 / s, ww + 2 * CROP_MARGIN, wh + 2 * CROP_MARGIN)
}

/// Cell channels of every annotated box at template resolution, aligned
/// as for training and without jitter.
pub fn positive_cells(images: &[AnnotatedImage], cfg: &TrainConfig) -> Result<Vec<CellChannelStack>> {
    let c = CROP_MARGIN / cfg.cell_size;
    let (tw, th) = (cfg.template.window_w / cfg.cell_size, cfg.template.window_h / cfg.cell_size);
    let jobs: Vec<(usize, PixelBox)> = images
        .iter()
        .enumerate()
        .flat_map(|(i, a)| a.boxes.iter().map(move |b| (i, *b)))
        .collect();
    jobs.par_iter()
        .map(|&(i, b)| {
            let crop = positive_crop(&images[i].image, &b, (0, 0, 0.0), cfg);
            let cells = aggregate_cells(&compute_channels(&crop, &cfg.channel_config), cfg.cell_size)?;
            let planes = cells
                .planes
                .iter()
                .map(|p| {
                    let mut out = Plane::zeros(tw, th);
                    for y in 0..th {
                        for x in 0..tw {
                            out.set(x, y, p.get(x + c, y + c));
                        }
                    }
                    out
                })
                .collect();
            Ok(CellChannelStack {
                cell_w: tw,
                cell_h: th,
                cell_size: cfg.cell_size,
                planes,
            })
        })
        .collect()
}

/// Features of every annotated box, scaled so its height matches the
/// template object, plus the mirrored window. Each box also contributes a
/// pair per jitter offset so that training, and the cascade calibrated on
/// these samples, covers the misalignment of the detection grid.
pub fn positive_features(images: &[AnnotatedImage], pool: &FeaturePool, cfg: &TrainConfig) -> Result<FeatureMatrix> {
    let boxes: Vec<(usize, PixelBox)> = images
        .iter()
        .enumerate()
        .flat_map(|(i, a)| a.boxes.iter().map(move |b| (i, *b)))
        .collect();
    let jitter = jitter_offsets(cfg, boxes.len());
    let jobs: Vec<(usize, PixelBox, (i64, i64, f64))> = boxes
        .iter()
        .zip(&jitter)
        .flat_map(|(&(i, b), js)| js.iter().map(move |&j| (i, b, j)))
        .collect();
    let rows: Vec<Vec<Vec<f32>>> = jobs
        .par_iter()
        .map(|&(i, b, j)| {
            let crop = positive_crop(&images[i].image, &b, j, cfg);
            Ok(vec![
                crop_features(&crop, pool, cfg)?,
                crop_features(&crop.flip_horizontal(), pool, cfg)?,
            ])
        })
        .collect::<Result<_>>()?;
    Ok(FeatureMatrix::from_rows(pool.len(), rows.into_iter().flatten()))
}

fn excluded(b: &PixelBox, gts: &[PixelBox]) -> bool {
    gts.iter().any(|g| b.iou(g) >= NEGATIVE_EXCLUSION_IOU)
}

fn model_geometry(cfg: &TrainConfig, pool: &FeaturePool) -> BoostedModel {
    BoostedModel {
        version: crate::model::MODEL_FORMAT_VERSION,
        template: cfg.template,
        cell_size: cfg.cell_size,
        channel_config: cfg.channel_config,
        normalization: crate::model::Normalization {
            enabled: cfg.normalize,
            epsilon: crate::featpool::NORM_EPSILON,
            luv_scale: cfg.channel_config.luv_scale,
        },
        pool: pool.clone(),
        trees: Vec::new(),
        cascade_thresholds: Vec::new(),
    }
}

/// `count` windows drawn uniformly over images, pyramid levels and cell
/// positions, skipping windows that overlap ground truth.
pub fn random_negative_features(
    images: &[AnnotatedImage],
    count: usize,
    pool: &FeaturePool,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<FeatureMatrix> {
    let shell = model_geometry(cfg, pool);
    let (ww, wh) = (cfg.template.window_w, cfg.template.window_h);
    let geoms: Vec<Vec<LevelGeometry>> = images
        .iter()
        .map(|a| pyramid_geometry(a.image.width(), a.image.height(), ww, wh, &cfg.mining.pyramid).unwrap_or_default())
        .collect();
    if geoms.iter().all(Vec::is_empty) {
        return Err(Error::InsufficientData("no negative image fits the detection window".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picks = Vec::with_capacity(count);
    let mut attempts = 0usize;
    while picks.len() < count {
        attempts += 1;
        if attempts > count * 100 + 1000 {
            return Err(Error::InsufficientData(format!(
                "only {} of {count} random negative windows avoid ground truth",
                picks.len()
            )));
        }
        let i = rng.random_range(0..images.len());
        if geoms[i].is_empty() {
            continue;
        }
        let g = geoms[i][rng.random_range(0..geoms[i].len())];
        let cw = g.width / cfg.cell_size;
        let ch = g.height / cfg.cell_size;
        let (tw, th) = (ww / cfg.cell_size, wh / cfg.cell_size);
        if cw < tw || ch < th {
            continue;
        }
        let cx = rng.random_range(0..=cw - tw);
        let cy = rng.random_range(0..=ch - th);
        if excluded(&window_to_image(&shell, &g, cx, cy), &images[i].boxes) {
            continue;
        }
        picks.push((i, g, cx, cy));
    }
    let rows: Vec<Vec<f32>> = picks
        .par_iter()
        .map(|&(i, g, cx, cy)| {
            window_features(
                &images[i].image,
                (cx * cfg.cell_size) as i64,
                (cy * cfg.cell_size) as i64,
                g.scale_x,
                g.scale_y,
                pool,
                cfg,
            )
        })
        .collect::<Result<_>>()?;
    Ok(FeatureMatrix::from_rows(pool.len(), rows))
}

/// Positives first, then negatives; labels to match.
pub fn stack_samples(pos: &FeatureMatrix, neg: &FeatureMatrix) -> (FeatureMatrix, Vec<i8>) {
    let mut all = pos.clone();
    all.append(neg);
    let mut labels = vec![1i8; pos.n_samples()];
    labels.extend(std::iter::repeat_n(-1i8, neg.n_samples()));
    (all, labels)
}

/// Boost `n_trees` on the samples and set the cascade from the positives.
pub fn train_round(
    pos: &FeatureMatrix,
    neg: &FeatureMatrix,
    n_trees: usize,
    pool: &FeaturePool,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<(BoostedModel, f64)> {
    let (samples, labels) = stack_samples(pos, neg);
    let binned = quantize(&samples)?;
    let out = boost(
        &binned,
        &labels,
        &BoostParams {
            n_trees,
            depth: cfg.tree_depth,
            feature_fraction: cfg.feature_fraction,
            seed,
        },
    )?;
    let trajectories: Vec<Vec<f64>> = pos.rows().map(|r| running_scores(&out.trees, r)).collect();
    let cascade = calibrate_cascade(&trajectories, CASCADE_MARGIN, CASCADE_DROP_FRACTION);
    let err = out.trace.last().map_or(0.0, |t| t.train_error);
    let model = BoostedModel::new(
        cfg.template,
        cfg.cell_size,
        cfg.channel_config,
        cfg.normalize,
        pool.clone(),
        out.trees,
        cascade.thresholds,
    )?;
    Ok((model, err))
}

#[derive(Clone, Copy, Debug)]
struct Candidate {
    score: f64,
    image: usize,
    level: usize,
    cell_x: usize,
    cell_y: usize,
}

/// Result of running a detector over negative images.
pub struct MinedNegatives {
    pub features: FeatureMatrix,
    /// Accepted windows not overlapping ground truth, over all images.
    pub false_positives: usize,
}

/// Scan every image with `model`, keep the `limit` highest-scoring accepted
/// windows that avoid ground truth, and compute their features on the
/// exact pyramid level they were found on.
pub fn mine_hard_negatives(model: &BoostedModel, images: &[AnnotatedImage], limit: usize, params: &DetectParams) -> Result<MinedNegatives> {
    let step = params.stride / model.cell_size;
    if step == 0 || params.stride % model.cell_size != 0 {
        return Err(Error::InvalidArgument("mining stride must be a multiple of the cell size".into()));
    }
    let (ww, wh) = (model.template.window_w, model.template.window_h);
    let per_image: Vec<(Vec<Candidate>, usize)> = images
        .par_iter()
        .enumerate()
        .map(|(i, a)| {
            let Ok(geoms) = pyramid_geometry(a.image.width(), a.image.height(), ww, wh, &params.pyramid) else {
                return Ok((Vec::new(), 0));
            };
            let mut found = Vec::new();
            for (li, g) in geoms.iter().enumerate() {
                let level = build_level(&a.image, g, model)?;
                for h in scan_level(model, li, &level, step) {
                    if h.rejected_at.is_none()
                        && h.score >= params.accept_threshold
                        && !excluded(&window_to_image(model, g, h.cell_x, h.cell_y), &a.boxes)
                    {
                        found.push(Candidate {
                            score: h.score,
                            image: i,
                            level: li,
                            cell_x: h.cell_x,
                            cell_y: h.cell_y,
                        });
                    }
                }
            }
            let total = found.len();
            found.sort_by(|a, b| b.score.total_cmp(&a.score));
            found.truncate(limit);
            Ok((found, total))
        })
        .collect::<Result<_>>()?;
    let false_positives = per_image.iter().map(|(_, n)| n).sum();
    let mut all: Vec<Candidate> = per_image.into_iter().flat_map(|(c, _)| c).collect();
    all.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then((a.image, a.level, a.cell_y, a.cell_x).cmp(&(b.image, b.level, b.cell_y, b.cell_x)))
    });
    all.truncate(limit);

    let mut groups: BTreeMap<usize, Vec<(usize, Candidate)>> = BTreeMap::new();
    for (k, c) in all.iter().enumerate() {
        groups.entry(c.image).or_default().push((k, *c));
    }
    let groups: Vec<(usize, Vec<(usize, Candidate)>)> = groups.into_iter().collect();
    let rows: Vec<Vec<(usize, Vec<f32>)>> = groups
        .par_iter()
        .map(|(i, cands)| {
            let img = &images[*i].image;
            let geoms = pyramid_geometry(img.width(), img.height(), ww, wh, &params.pyramid)?;
            let mut out = Vec::with_capacity(cands.len());
            let mut current: Option<(usize, crate::detect::PyramidLevel)> = None;
            let mut sorted = cands.clone();
            sorted.sort_by_key(|(k, c)| (c.level, *k));
            for (k, c) in sorted {
                if current.as_ref().is_none_or(|(l, _)| *l != c.level) {
                    current = Some((c.level, build_level(img, &geoms[c.level], model)?));
                }
                let (_, level) = current.as_ref().unwrap();
                let win = template_window(&model.pool, c.cell_x, c.cell_y);
                out.push((k, eval_all(&level.integrals, &model.pool, &win, model.normalization.enabled)?));
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let mut ordered: Vec<(usize, Vec<f32>)> = rows.into_iter().flatten().collect();
    ordered.sort_by_key(|(k, _)| *k);
    Ok(MinedNegatives {
        features: FeatureMatrix::from_rows(model.pool.len(), ordered.into_iter().map(|(_, r)| r)),
        false_positives,
    })
}

/// Keep the `cap` negatives scoring highest under `model` (full scores, no
/// cascade); earlier rows win ties.
pub fn evict_negatives(neg: &mut FeatureMatrix, model: &BoostedModel, cap: usize) {
    let n = neg.n_samples();
    if n <= cap {
        return;
    }
    let scores: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| model.trees.iter().map(|t| t.evaluate_row(neg.row(i))).sum())
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut keep = vec![false; n];
    for &i in &order[..cap] {
        keep[i] = true;
    }
    neg.retain_rows(&keep);
}

fn round_seed(seed: u64, round: usize) -> u64 {
    seed ^ (0x9E37_79B9_7F4A_7C15u64.wrapping_mul(round as u64 + 1))
}

/// Train a detector: boost from scratch in every round on the positives and
/// the current negatives, then mine the round's false positives from
/// `negatives`, append them and evict down to the cap.
pub fn train_with_mining(
    positives: &[AnnotatedImage],
    negatives: &[AnnotatedImage],
    pool: &FeaturePool,
    cfg: &TrainConfig,
) -> Result<TrainOutput> {
    cfg.validate()?;
    if pool.is_empty() {
        return Err(Error::InvalidArgument("feature pool is empty".into()));
    }
    if (pool.template_w as usize * cfg.cell_size, pool.template_h as usize * cfg.cell_size)
        != (cfg.template.window_w, cfg.template.window_h)
    {
        return Err(Error::Config("pool template does not match the detection window".into()));
    }
    if positives.iter().all(|a| a.boxes.is_empty()) {
        return Err(Error::InsufficientData("no positive boxes".into()));
    }
    if negatives.is_empty() {
        return Err(Error::InsufficientData("no negative images".into()));
    }
    let pos = positive_features(positives, pool, cfg)?;
    let mut neg = random_negative_features(negatives, cfg.initial_negatives, pool, cfg, cfg.seed)?;
    evict_to_cap_unscored(&mut neg, cfg.negative_cap);

    let mut trace = Vec::new();
    let mut model = None;
    for (r, &n_trees) in cfg.rounds.iter().enumerate() {
        let start = Instant::now();
        let (m, err) = train_round(&pos, &neg, n_trees, pool, cfg, round_seed(cfg.seed, r))?;
        let n_neg = neg.n_samples();
        let last = r + 1 == cfg.rounds.len();
        let (mined, fp) = if last {
            (0, None)
        } else {
            let found = mine_hard_negatives(&m, negatives, cfg.negatives_per_round, &cfg.mining)?;
            let mined = found.features.n_samples();
            neg.append(&found.features);
            evict_negatives(&mut neg, &m, cfg.negative_cap);
            (mined, Some(found.false_positives as f64 / negatives.len() as f64))
        };
        trace.push(RoundTrace {
            round: r,
            trees: n_trees,
            n_pos: pos.n_samples(),
            n_neg,
            train_error: err,
            mined,
            wall_seconds: start.elapsed().as_secs_f64(),
            fp_per_image: fp,
        });
        model = Some(m);
    }
    Ok(TrainOutput {
        model: model.expect("at least one round"),
        trace,
    })
}

/// Before any model exists the cap keeps the earliest rows.
fn evict_to_cap_unscored(neg: &mut FeatureMatrix, cap: usize) {
    let n = neg.n_samples();
    if n > cap {
        let keep: Vec<bool> = (0..n).map(|i| i < cap).collect();
        neg.retain_rows(&keep);
    }
}

/// How often each feature kind is used by the model: split nodes, and
/// distinct descriptors.
pub fn feature_usage(model: &BoostedModel) -> (KindCounts, KindCounts) {
    let mut splits = KindCounts::default();
    for t in &model.trees {
        for n in &t.nodes {
            if let crate::boost::TreeNode::Split {
                feature_index,
                threshold,
                ..
            } = n
            {
                if threshold.is_finite() {
                    *splits.get_mut(model.pool.descriptors[*feature_index as usize].kind()) += 1;
                }
            }
        }
    }
    let mut distinct = KindCounts::default();
    for f in model.used_features() {
        *distinct.get_mut(model.pool.descriptors[f].kind()) += 1;
    }
    (splits, distinct)
}

/// Share of SIDF and SSF among `counts`.
pub fn non_neighboring_fraction(counts: &KindCounts) -> f64 {
    let total = counts.total();
    if total == 0 {
        return 0.0;
    }
    let nn: usize = FeatureKind::ALL
        .iter()
        .filter(|k| k.is_non_neighboring())
        .map(|k| counts.get(*k))
        .sum();
    nn as f64 / total as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::featpool::{gen_pool, PoolConfig};
    use crate::synth::{gen_dataset, SceneParams};

    fn tiny_pool() -> FeaturePool {
        gen_pool(&PoolConfig {
            counts: KindCounts {
                local_mean: 60,
                neighbor_diff: 60,
                sidf: 40,
                ssf: 20,
            },
            seed: 4,
            ..PoolConfig::default()
        })
        .unwrap()
    }

    fn tiny_data(n: usize, seed: u64) -> Vec<AnnotatedImage> {
        gen_dataset(seed, n, 2, &SceneParams::default())
            .unwrap()
            .into_iter()
            .map(|s| AnnotatedImage {
                image: s.image,
                boxes: s.boxes,
            })
            .collect()
    }

    fn tiny_cfg() -> TrainConfig {
        TrainConfig {
            rounds: vec![4, 16],
            feature_fraction: 0.25,
            negatives_per_round: 100,
            negative_cap: 300,
            initial_negatives: 200,
            seed: 3,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn crop_features_match_full_level_away_from_borders() {
        let data = tiny_data(1, 9);
        let pool = tiny_pool();
        let cfg = tiny_cfg();
        let img = &data[0].image;
        let shell = model_geometry(&cfg, &pool);
        let g = pyramid_geometry(img.width(), img.height(), 64, 128, &cfg.mining.pyramid).unwrap()[3];
        let level = build_level(img, &g, &shell).unwrap();
        let (cx, cy) = (20, 20);
        let full = eval_all(&level.integrals, &pool, &template_window(&pool, cx, cy), true).unwrap();
        let crop = window_features(img, (cx * 2) as i64, (cy * 2) as i64, g.scale_x, g.scale_y, &pool, &cfg).unwrap();
        for (a, b) in full.iter().zip(&crop) {
            assert!((a - b).abs() <= 1e-4 * a.abs().max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn cap_is_never_exceeded() {
        let data = tiny_data(6, 1);
        let cfg = TrainConfig {
            rounds: vec![4, 8, 16],
            negatives_per_round: 200,
            negative_cap: 150,
            initial_negatives: 100,
            ..tiny_cfg()
        };
        let out = train_with_mining(&data, &data, &tiny_pool(), &cfg).unwrap();
        assert!(out.trace.iter().all(|t| t.n_neg <= 150));
        assert_eq!(out.trace.len(), 3);
    }

    #[test]
    fn single_round_equals_plain_boost() {
        let data = tiny_data(4, 2);
        let pool = tiny_pool();
        let cfg = TrainConfig {
            rounds: vec![12],
            ..tiny_cfg()
        };
        let out = train_with_mining(&data, &data, &pool, &cfg).unwrap();
        let pos = positive_features(&data, &pool, &cfg).unwrap();
        let neg = random_negative_features(&data, cfg.initial_negatives, &pool, &cfg, cfg.seed).unwrap();
        let (samples, labels) = stack_samples(&pos, &neg);
        let plain = boost(
            &quantize(&samples).unwrap(),
            &labels,
            &BoostParams {
                n_trees: 12,
                depth: cfg.tree_depth,
                feature_fraction: cfg.feature_fraction,
                seed: round_seed(cfg.seed, 0),
            },
        )
        .unwrap();
        assert_eq!(out.model.trees, plain.trees);
        assert_eq!(out.trace[0].mined, 0);
    }

    #[test]
    fn no_positive_boxes() {
        let mut data = tiny_data(2, 2);
        for d in &mut data {
            d.boxes.clear();
        }
        assert!(matches!(
            train_with_mining(&data, &data, &tiny_pool(), &tiny_cfg()),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn trace_csv() {
        let mut buf = Vec::new();
        write_trace(
            &mut buf,
            &[RoundTrace {
                round: 0,
                trees: 8,
                n_pos: 10,
                n_neg: 20,
                train_error: 0.0,
                mined: 5,
                wall_seconds: 1.5,
                fp_per_image: Some(2.0),
            }],
        )
        .unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(s.lines().nth(1).unwrap(), "0,8,10,20,0.000000,5,1.500,2.0000");
    }

    #[test]
    fn invalid_configs() {
        let mut c = tiny_cfg();
        c.rounds = vec![8, 8];
        assert!(c.validate().is_err());
        let mut c = tiny_cfg();
        c.feature_fraction = 0.0;
        assert!(c.validate().is_err());
    }
}
