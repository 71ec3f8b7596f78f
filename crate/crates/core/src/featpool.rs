//! Candidate feature pool: local means and neighboring differences (NF),
//! side-inner differences (SIDF) and symmetrical similarity features (SSF).
//!
//! All geometry is in cells, relative to the top-left corner of the detection
//! template. Descriptors are image independent; they are evaluated against an
//! [`IntegralStack`] at a window offset.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channels::{
    mirror_channel, CellRect, IntegralStack, CH_G, CH_L, CH_U, CH_V, NUM_CHANNELS,
    TABLE_L_SQUARED,
};
use crate::error::{Error, Result};

pub const POOL_FORMAT_VERSION: u32 = 1;

/// Guard added to every normalization denominator.
pub const NORM_EPSILON: f64 = 1e-6;

/// Attempts per SSF sub-patch before falling back to the whole patch.
const SUBPATCH_ATTEMPTS: usize = 1000;

/// Axis-aligned patch in template cell coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Patch {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl Patch {
    pub const fn new(x: u32, y: u32, w: u32, h: u32) -> Self {
        Self { x, y, w, h }
    }

    pub fn area(&self) -> u32 {
        self.w * self.h
    }

    pub fn right(&self) -> u32 {
        self.x + self.w
    }

    pub fn bottom(&self) -> u32 {
        self.y + self.h
    }

    /// Reflection about the vertical axis of a template `template_w` cells wide.
    pub fn mirrored(&self, template_w: u32) -> Self {
        Self {
            x: template_w - self.x - self.w,
            ..*self
        }
    }

    pub fn fits(&self, template_w: u32, template_h: u32) -> bool {
        self.w >= 1 && self.h >= 1 && self.right() <= template_w && self.bottom() <= template_h
    }

    pub fn contains(&self, other: &Patch) -> bool {
        other.x >= self.x
            && other.y >= self.y
            && other.right() <= self.right()
            && other.bottom() <= self.bottom()
    }

    pub fn overlaps(&self, other: &Patch) -> bool {
        self.x < other.right()
            && other.x < self.right()
            && self.y < other.bottom()
            && other.y < self.bottom()
    }

    fn rect_at(&self, win: &CellRect) -> (usize, usize, usize, usize) {
        (
            win.x + self.x as usize,
            win.y + self.y as usize,
            self.w as usize,
            self.h as usize,
        )
    }
}

/// Orientation of the edge shared by the two halves of a neighboring difference.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitDirection {
    /// A and B side by side, sharing a vertical edge.
    Horizontal,
    /// A above B, sharing a horizontal edge.
    Vertical,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    LocalMean,
    NeighborDiff,
    Sidf,
    Ssf,
}

impl FeatureKind {
    pub const ALL: [FeatureKind; 4] = [
        FeatureKind::LocalMean,
        FeatureKind::NeighborDiff,
        FeatureKind::Sidf,
        FeatureKind::Ssf,
    ];

    pub fn is_non_neighboring(self) -> bool {
        matches!(self, FeatureKind::Sidf | FeatureKind::Ssf)
    }

    pub fn name(self) -> &'static str {
        match self {
            FeatureKind::LocalMean => "local_mean",
            FeatureKind::NeighborDiff => "neighbor_diff",
            FeatureKind::Sidf => "sidf",
            FeatureKind::Ssf => "ssf",
        }
    }
}

/// Geometry plus channel index of one candidate feature.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureDescriptor {
    LocalMean {
        channel: u8,
        a: Patch,
    },
    NeighborDiff {
        channel: u8,
        a: Patch,
        b: Patch,
        direction: SplitDirection,
    },
    Sidf {
        channel: u8,
        a: Patch,
        b: Patch,
    },
    /// `a` is the left patch; its mirror and the mirrored sub-patches are implied.
    Ssf {
        channel: u8,
        a: Patch,
        subpatches: [Patch; 3],
    },
}

impl FeatureDescriptor {
    pub fn kind(&self) -> FeatureKind {
        match self {
            FeatureDescriptor::LocalMean { .. } => FeatureKind::LocalMean,
            FeatureDescriptor::NeighborDiff { .. } => FeatureKind::NeighborDiff,
            FeatureDescriptor::Sidf { .. } => FeatureKind::Sidf,
            FeatureDescriptor::Ssf { .. } => FeatureKind::Ssf,
        }
    }

    pub fn channel(&self) -> usize {
        match *self {
            FeatureDescriptor::LocalMean { channel, .. }
            | FeatureDescriptor::NeighborDiff { channel, .. }
            | FeatureDescriptor::Sidf { channel, .. }
            | FeatureDescriptor::Ssf { channel, .. } => channel as usize,
        }
    }

    /// Check the kind-specific geometric invariants.
    pub fn validate(&self, limits: &PoolLimits) -> std::result::Result<(), String> {
        let (tw, th) = (limits.template_w, limits.template_h);
        let ms = limits.max_square;
        let in_square = |p: &Patch| p.w <= ms && p.h <= ms;
        if self.channel() >= NUM_CHANNELS {
            return Err(format!("channel {} out of range", self.channel()));
        }
        match self {
            FeatureDescriptor::LocalMean { a, .. } => {
                if !a.fits(tw, th) {
                    return Err(format!("patch {a:?} outside template"));
                }
                if !in_square(a) {
                    return Err(format!("patch {a:?} exceeds max square {ms}"));
                }
            }
            FeatureDescriptor::NeighborDiff {
                a, b, direction, ..
            } => {
                if !a.fits(tw, th) || !b.fits(tw, th) {
                    return Err("patch outside template".into());
                }
                let adjacent = match direction {
                    SplitDirection::Horizontal => {
                        a.y == b.y && a.h == b.h && (a.right() == b.x || b.right() == a.x)
                    }
                    SplitDirection::Vertical => {
                        a.x == b.x && a.w == b.w && (a.bottom() == b.y || b.bottom() == a.y)
                    }
                };
                if !adjacent {
                    return Err(format!("patches {a:?} {b:?} do not share a full edge"));
                }
                let (bw, bh) = match direction {
                    SplitDirection::Horizontal => (a.w + b.w, a.h),
                    SplitDirection::Vertical => (a.w, a.h + b.h),
                };
                if bw > ms || bh > ms {
                    return Err("neighboring pair exceeds max square".into());
                }
            }
            FeatureDescriptor::Sidf { a, b, .. } => {
                if !a.fits(tw, th) || !b.fits(tw, th) {
                    return Err("patch outside template".into());
                }
                if a.y != b.y || a.h != b.h {
                    return Err("SIDF patches must share a horizontal band".into());
                }
                if !in_square(a) || !in_square(b) {
                    return Err("SIDF patch exceeds max square".into());
                }
                let rule = |a: &Patch, b: &Patch| {
                    let mirror_left = a.mirrored(tw).x;
                    a.x <= b.x && b.x <= mirror_left
                };
                // Mirrored descriptors satisfy the rule in reflected coordinates.
                if !rule(a, b) && !rule(&a.mirrored(tw), &b.mirrored(tw)) {
                    return Err(format!("SIDF {a:?} {b:?} violates l(A) <= l(B) <= l(A')"));
                }
            }
            FeatureDescriptor::Ssf { a, subpatches, .. } => {
                if self.channel() > CH_G {
                    return Err("SSF restricted to L, U, V, G".into());
                }
                if !a.fits(tw, th) {
                    return Err("SSF patch outside template".into());
                }
                let range = limits.ssf_min..=limits.ssf_max;
                if !range.contains(&a.w) || !range.contains(&a.h) {
                    return Err(format!("SSF patch {a:?} outside size range"));
                }
                if a.right() > tw / 2 {
                    return Err("SSF patch must lie in the left template half".into());
                }
                for s in subpatches {
                    if !a.contains(s) || s.w == 0 || s.h == 0 {
                        return Err(format!("sub-patch {s:?} not inside {a:?}"));
                    }
                    if 2 * s.area() <= a.area() {
                        return Err(format!("sub-patch {s:?} not larger than half of {a:?}"));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Reflect a descriptor about the template's vertical axis.
///
/// Orientation channels are remapped with [`mirror_channel`] so that
/// evaluating the mirrored descriptor on the mirrored image reproduces the
/// original value. SSF descriptors are symmetric by construction and map to
/// themselves.
pub fn mirror_descriptor(d: &FeatureDescriptor, template_w: u32) -> FeatureDescriptor {
    let ch = |c: u8| mirror_channel(c as usize) as u8;
    match *d {
        FeatureDescriptor::LocalMean { channel, a } => FeatureDescriptor::LocalMean {
            channel: ch(channel),
            a: a.mirrored(template_w),
        },
        FeatureDescriptor::NeighborDiff {
            channel,
            a,
            b,
            direction,
        } => FeatureDescriptor::NeighborDiff {
            channel: ch(channel),
            a: a.mirrored(template_w),
            b: b.mirrored(template_w),
            direction,
        },
        FeatureDescriptor::Sidf { channel, a, b } => FeatureDescriptor::Sidf {
            channel: ch(channel),
            a: a.mirrored(template_w),
            b: b.mirrored(template_w),
        },
        FeatureDescriptor::Ssf { .. } => d.clone(),
    }
}

/// Geometric limits every descriptor of a pool obeys.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolLimits {
    pub template_w: u32,
    pub template_h: u32,
    pub max_square: u32,
    pub ssf_min: u32,
    pub ssf_max: u32,
}

impl Default for PoolLimits {
    fn default() -> Self {
        Self {
            template_w: 32,
            template_h: 64,
            max_square: 8,
            ssf_min: 6,
            ssf_max: 12,
        }
    }
}

/// Number of descriptors to draw per kind.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct KindCounts {
    pub local_mean: usize,
    pub neighbor_diff: usize,
    pub sidf: usize,
    pub ssf: usize,
}

impl KindCounts {
    pub fn get(&self, kind: FeatureKind) -> usize {
        match kind {
            FeatureKind::LocalMean => self.local_mean,
            FeatureKind::NeighborDiff => self.neighbor_diff,
            FeatureKind::Sidf => self.sidf,
            FeatureKind::Ssf => self.ssf,
        }
    }

    pub fn get_mut(&mut self, kind: FeatureKind) -> &mut usize {
        match kind {
            FeatureKind::LocalMean => &mut self.local_mean,
            FeatureKind::NeighborDiff => &mut self.neighbor_diff,
            FeatureKind::Sidf => &mut self.sidf,
            FeatureKind::Ssf => &mut self.ssf,
        }
    }

    pub fn total(&self) -> usize {
        self.local_mean + self.neighbor_diff + self.sidf + self.ssf
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoolConfig {
    pub limits: PoolLimits,
    pub counts: KindCounts,
    /// Probability of reflecting each generated SIDF so that both template
    /// sides are covered.
    pub sidf_mirror_fraction: f64,
    pub seed: u64,
}

impl Default for PoolConfig {
    fn default() -> Self {
        Self {
            limits: PoolLimits::default(),
            counts: KindCounts::default(),
            sidf_mirror_fraction: 0.5,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeaturePool {
    pub version: u32,
    pub template_w: u32,
    pub template_h: u32,
    pub seed: u64,
    pub limits: PoolLimits,
    pub counts: KindCounts,
    pub descriptors: Vec<FeatureDescriptor>,
}

impl FeaturePool {
    pub fn len(&self) -> usize {
        self.descriptors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.descriptors.is_empty()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let pool: FeaturePool = serde_json::from_str(s)?;
        if pool.version != POOL_FORMAT_VERSION {
            return Err(Error::UnsupportedVersion {
                found: pool.version,
                expected: POOL_FORMAT_VERSION,
            });
        }
        Ok(pool)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }
}

fn sample_local_mean(rng: &mut ChaCha8Rng, lim: &PoolLimits) -> FeatureDescriptor {
    let ms = lim.max_square.min(lim.template_w).min(lim.template_h);
    let w = rng.random_range(1..=ms);
    let h = rng.random_range(1..=ms);
    let x = rng.random_range(0..=lim.template_w - w);
    let y = rng.random_range(0..=lim.template_h - h);
    FeatureDescriptor::LocalMean {
        channel: rng.random_range(0..NUM_CHANNELS as u8),
        a: Patch::new(x, y, w, h),
    }
}

fn sample_neighbor_diff(rng: &mut ChaCha8Rng, lim: &PoolLimits) -> FeatureDescriptor {
    let ms = lim.max_square.min(lim.template_w).min(lim.template_h);
    let channel = rng.random_range(0..NUM_CHANNELS as u8);
    let direction = if rng.random_bool(0.5) {
        SplitDirection::Horizontal
    } else {
        SplitDirection::Vertical
    };
    // extent along the split axis needs two cells
    let along = rng.random_range(2..=ms);
    let across = rng.random_range(1..=ms);
    let cut = rng.random_range(1..along);
    let (bw, bh) = match direction {
        SplitDirection::Horizontal => (along, across),
        SplitDirection::Vertical => (across, along),
    };
    let x = rng.random_range(0..=lim.template_w - bw);
    let y = rng.random_range(0..=lim.template_h - bh);
    let (a, b) = match direction {
        SplitDirection::Horizontal => (
            Patch::new(x, y, cut, bh),
            Patch::new(x + cut, y, bw - cut, bh),
        ),
        SplitDirection::Vertical => (
            Patch::new(x, y, bw, cut),
            Patch::new(x, y + cut, bw, bh - cut),
        ),
    };
    FeatureDescriptor::NeighborDiff {
        channel,
        a,
        b,
        direction,
    }
}

fn sample_sidf(rng: &mut ChaCha8Rng, lim: &PoolLimits, mirror_p: f64) -> FeatureDescriptor {
    let half = lim.template_w / 2;
    let ms = lim.max_square;
    let channel = rng.random_range(0..NUM_CHANNELS as u8);
    let h = rng.random_range(1..=ms.min(lim.template_h));
    let wa = rng.random_range(1..=ms.min(half));
    let xa = rng.random_range(0..=half - wa);
    let y = rng.random_range(0..=lim.template_h - h);
    let a = Patch::new(xa, y, wa, h);
    let mirror_left = a.mirrored(lim.template_w).x;
    let wb = rng.random_range(1..=ms.min(lim.template_w));
    let xb_hi = mirror_left.min(lim.template_w - wb);
    let xb = rng.random_range(xa..=xb_hi);
    let d = FeatureDescriptor::Sidf {
        channel,
        a,
        b: Patch::new(xb, y, wb, h),
    };
    if mirror_p > 0.0 && rng.random_bool(mirror_p) {
        mirror_descriptor(&d, lim.template_w)
    } else {
        d
    }
}

fn sample_ssf(rng: &mut ChaCha8Rng, lim: &PoolLimits) -> FeatureDescriptor {
    let half = lim.template_w / 2;
    let channel = [CH_L, CH_U, CH_V, CH_G][rng.random_range(0..4)] as u8;
    let w = rng.random_range(lim.ssf_min..=lim.ssf_max);
    let h = rng.random_range(lim.ssf_min..=lim.ssf_max);
    let x = rng.random_range(0..=half - w);
    let y = rng.random_range(0..=lim.template_h - h);
    let a = Patch::new(x, y, w, h);
    let mut sub = || {
        for _ in 0..SUBPATCH_ATTEMPTS {
            let sw = rng.random_range(1..=w);
            let sh = rng.random_range(1..=h);
            if 2 * sw * sh > w * h {
                let sx = rng.random_range(0..=w - sw);
                let sy = rng.random_range(0..=h - sh);
                return Patch::new(x + sx, y + sy, sw, sh);
            }
        }
        a
    };
    let subpatches = [sub(), sub(), sub()];
    FeatureDescriptor::Ssf {
        channel,
        a,
        subpatches,
    }
}

/// Draw a randomized candidate pool. Identical configs give identical pools.
pub fn gen_pool(cfg: &PoolConfig) -> Result<FeaturePool> {
    let lim = &cfg.limits;
    if lim.template_w < 2 || lim.template_h < 1 {
        return Err(Error::InvalidArgument("template too small".into()));
    }
    if lim.max_square == 0 || lim.max_square > lim.template_w.min(lim.template_h) {
        return Err(Error::InvalidArgument(format!(
            "max_square {} must be in 1..=min(template dims)",
            lim.max_square
        )));
    }
    if cfg.counts.neighbor_diff > 0 && lim.max_square < 2 {
        return Err(Error::InvalidArgument(
            "neighboring differences need max_square >= 2".into(),
        ));
    }
    if cfg.counts.ssf > 0
        && (lim.ssf_min == 0
            || lim.ssf_min > lim.ssf_max
            || lim.ssf_max > lim.template_w / 2
            || lim.ssf_max > lim.template_h)
    {
        return Err(Error::InvalidArgument(format!(
            "SSF size range {}..={} does not fit the template half-width {}",
            lim.ssf_min,
            lim.ssf_max,
            lim.template_w / 2
        )));
    }
    if !(0.0..=1.0).contains(&cfg.sidf_mirror_fraction) {
        return Err(Error::InvalidArgument("sidf_mirror_fraction must be in [0, 1]".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut descriptors = Vec::with_capacity(cfg.counts.total());
    for _ in 0..cfg.counts.local_mean {
        descriptors.push(sample_local_mean(&mut rng, lim));
    }
    for _ in 0..cfg.counts.neighbor_diff {
        descriptors.push(sample_neighbor_diff(&mut rng, lim));
    }
    for _ in 0..cfg.counts.sidf {
        descriptors.push(sample_sidf(&mut rng, lim, cfg.sidf_mirror_fraction));
    }
    for _ in 0..cfg.counts.ssf {
        descriptors.push(sample_ssf(&mut rng, lim));
    }
    Ok(FeaturePool {
        version: POOL_FORMAT_VERSION,
        template_w: lim.template_w,
        template_h: lim.template_h,
        seed: cfg.seed,
        limits: *lim,
        counts: cfg.counts,
        descriptors,
    })
}

/// Per-window statistics used by channel-specific normalization.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormStats {
    pub mu_l: f64,
    pub sigma_l: f64,
    pub mu_g: f64,
}

/// Mean and standard deviation of L cells, and mean of G cells, over `win`.
pub fn window_stats(is: &IntegralStack, win: &CellRect) -> Result<NormStats> {
    is.check(win)?;
    if win.area() == 0 {
        return Err(Error::InvalidArgument("empty window".into()));
    }
    Ok(window_stats_unchecked(is, win))
}

#[inline]
pub(crate) fn window_stats_unchecked(is: &IntegralStack, win: &CellRect) -> NormStats {
    let n = win.area() as f64;
    let mu_l = is.sum(CH_L, win.x, win.y, win.w, win.h) / n;
    let sq = is.sum(TABLE_L_SQUARED, win.x, win.y, win.w, win.h) / n;
    let mu_g = is.sum(CH_G, win.x, win.y, win.w, win.h) / n;
    NormStats {
        mu_l,
        sigma_l: (sq - mu_l * mu_l).max(0.0).sqrt(),
        mu_g: mu_g.max(0.0),
    }
}

/// Whether a raw value is a patch mean or a difference of two means.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ValueForm {
    Mean,
    Difference,
}

/// Channel-specific normalization of one raw feature value.
///
/// L is standardized with the window's L statistics (differences only need
/// the scale, the mean cancels); U and V pass through; G and the oriented
/// planes are divided by the window's mean gradient magnitude.
pub fn normalize(x: f64, channel: usize, form: ValueForm, ns: &NormStats) -> f64 {
    match channel {
        CH_L => match form {
            ValueForm::Mean => (x - ns.mu_l) / (ns.sigma_l + NORM_EPSILON),
            ValueForm::Difference => x / (ns.sigma_l + NORM_EPSILON),
        },
        CH_U | CH_V => x,
        _ => x / (ns.mu_g + NORM_EPSILON),
    }
}

#[inline]
fn patch_mean(is: &IntegralStack, channel: usize, p: &Patch, win: &CellRect) -> f64 {
    let (x, y, w, h) = p.rect_at(win);
    is.sum(channel, x, y, w, h) / (w * h) as f64
}

fn check_window(is: &IntegralStack, win: &CellRect, limits: Option<&PoolLimits>) -> Result<()> {
    is.check(win)?;
    if let Some(l) = limits {
        if win.w < l.template_w as usize || win.h < l.template_h as usize {
            return Err(Error::OutOfBounds(format!(
                "window {win:?} smaller than the {}x{} template",
                l.template_w, l.template_h
            )));
        }
    }
    Ok(())
}

fn patches_within(d: &FeatureDescriptor, win: &CellRect) -> bool {
    let inside = |p: &Patch| (p.right() as usize) <= win.w && (p.bottom() as usize) <= win.h;
    match d {
        FeatureDescriptor::LocalMean { a, .. } => inside(a),
        FeatureDescriptor::NeighborDiff { a, b, .. } | FeatureDescriptor::Sidf { a, b, .. } => {
            inside(a) && inside(b)
        }
        FeatureDescriptor::Ssf { a, .. } => inside(a) && inside(&a.mirrored(win.w as u32)),
    }
}

fn ensure_inside(is: &IntegralStack, d: &FeatureDescriptor, win: &CellRect) -> Result<()> {
    check_window(is, win, None)?;
    if patches_within(d, win) {
        Ok(())
    } else {
        Err(Error::OutOfBounds(format!("descriptor does not fit window {win:?}")))
    }
}

/// Local mean feature, normalized when `ns` is given.
pub fn eval_local_mean(
    is: &IntegralStack,
    d: &FeatureDescriptor,
    win: &CellRect,
    ns: Option<&NormStats>,
) -> Result<f64> {
    let FeatureDescriptor::LocalMean { channel, a } = d else {
        return Err(Error::InvalidArgument("expected a local mean descriptor".into()));
    };
    ensure_inside(is, d, win)?;
    let x = patch_mean(is, *channel as usize, a, win);
    Ok(match ns {
        Some(ns) => normalize(x, *channel as usize, ValueForm::Mean, ns),
        None => x,
    })
}

/// Difference of patch means, shared by neighboring and side-inner pairs.
pub fn eval_diff(
    is: &IntegralStack,
    d: &FeatureDescriptor,
    win: &CellRect,
    ns: Option<&NormStats>,
) -> Result<f64> {
    let (channel, a, b) = match d {
        FeatureDescriptor::NeighborDiff { channel, a, b, .. }
        | FeatureDescriptor::Sidf { channel, a, b } => (*channel as usize, a, b),
        _ => return Err(Error::InvalidArgument("expected a difference descriptor".into())),
    };
    ensure_inside(is, d, win)?;
    let x = patch_mean(is, channel, a, win) - patch_mean(is, channel, b, win);
    Ok(match ns {
        Some(ns) => normalize(x, channel, ValueForm::Difference, ns),
        None => x,
    })
}

/// Symmetrical similarity: |pool(A) - pool(A')| where pool is the max of the
/// three sub-patch means (min on L and V). Never normalized.
pub fn eval_ssf(is: &IntegralStack, d: &FeatureDescriptor, win: &CellRect) -> Result<f64> {
    if !matches!(d, FeatureDescriptor::Ssf { .. }) {
        return Err(Error::InvalidArgument("expected an SSF descriptor".into()));
    }
    if d.channel() > CH_G {
        return Err(Error::InvalidArgument("SSF restricted to L, U, V, G".into()));
    }
    ensure_inside(is, d, win)?;
    Ok(ssf_value(is, d, win))
}

#[inline]
fn ssf_value(is: &IntegralStack, d: &FeatureDescriptor, win: &CellRect) -> f64 {
    let FeatureDescriptor::Ssf {
        channel,
        subpatches,
        ..
    } = d
    else {
        unreachable!()
    };
    let c = *channel as usize;
    let use_min = c == CH_L || c == CH_V;
    let tw = win.w as u32;
    let pool = |mirror: bool| {
        let mut best = if use_min { f64::INFINITY } else { f64::NEG_INFINITY };
        for s in subpatches {
            let p = if mirror { s.mirrored(tw) } else { *s };
            let m = patch_mean(is, c, &p, win);
            best = if use_min { best.min(m) } else { best.max(m) };
        }
        best
    };
    (pool(false) - pool(true)).abs()
}

/// Evaluate any descriptor on the window whose top-left cell is `win`.
/// `ns` carries the window statistics when normalization is enabled; SSF
/// ignores it.
pub fn eval_descriptor(
    is: &IntegralStack,
    d: &FeatureDescriptor,
    win: &CellRect,
    ns: Option<&NormStats>,
) -> Result<f64> {
    match d.kind() {
        FeatureKind::LocalMean => eval_local_mean(is, d, win, ns),
        FeatureKind::NeighborDiff | FeatureKind::Sidf => eval_diff(is, d, win, ns),
        FeatureKind::Ssf => eval_ssf(is, d, win),
    }
}

/// Unchecked evaluation for hot loops; the caller guarantees the window and
/// descriptor fit the integral stack.
#[inline]
pub(crate) fn eval_fast(
    is: &IntegralStack,
    d: &FeatureDescriptor,
    win: &CellRect,
    ns: Option<&NormStats>,
) -> f64 {
    match d {
        FeatureDescriptor::LocalMean { channel, a } => {
            let x = patch_mean(is, *channel as usize, a, win);
            match ns {
                Some(ns) => normalize(x, *channel as usize, ValueForm::Mean, ns),
                None => x,
            }
        }
        FeatureDescriptor::NeighborDiff { channel, a, b, .. }
        | FeatureDescriptor::Sidf { channel, a, b } => {
            let c = *channel as usize;
            let x = patch_mean(is, c, a, win) - patch_mean(is, c, b, win);
            match ns {
                Some(ns) => normalize(x, c, ValueForm::Difference, ns),
                None => x,
            }
        }
        FeatureDescriptor::Ssf { .. } => ssf_value(is, d, win),
    }
}

/// Template-sized window at cell offset `(x, y)`.
pub fn template_window(pool: &FeaturePool, x: usize, y: usize) -> CellRect {
    CellRect::new(x, y, pool.template_w as usize, pool.template_h as usize)
}

/// Evaluate a subset of the pool on one window. Window statistics are
/// computed once and shared by every descriptor.
pub fn eval_window(
    is: &IntegralStack,
    pool: &FeaturePool,
    subset: &[usize],
    win: &CellRect,
    normalized: bool,
) -> Result<Vec<f32>> {
    check_window(is, win, Some(&pool.limits))?;
    if let Some(&bad) = subset.iter().find(|&&i| i >= pool.len()) {
        return Err(Error::OutOfBounds(format!(
            "descriptor index {bad} outside pool of {}",
            pool.len()
        )));
    }
    let ns = normalized.then(|| window_stats_unchecked(is, win));
    Ok(subset
        .iter()
        .map(|&i| eval_fast(is, &pool.descriptors[i], win, ns.as_ref()) as f32)
        .collect())
}

/// Evaluate every descriptor of the pool on one window.
pub fn eval_all(is: &IntegralStack, pool: &FeaturePool, win: &CellRect, normalized: bool) -> Result<Vec<f32>> {
    check_window(is, win, Some(&pool.limits))?;
    let ns = normalized.then(|| window_stats_unchecked(is, win));
    Ok(pool
        .descriptors
        .iter()
        .map(|d| eval_fast(is, d, win, ns.as_ref()) as f32)
        .collect())
}
