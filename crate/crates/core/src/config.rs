//! `key = value` run configuration with named presets.
//!
//! ```text
//! # comment
//! preset = nnnf-l2
//! train.rounds = 8, 32, 128
//! detect.threshold = -0.5
//! ```
//!
//! The preset is applied first wherever it appears; other keys override it.

use std::path::Path;

use crate::detect::{DetectParams, DEFAULT_NMS_OVERLAP};
use crate::error::{Error, Result};
use crate::featpool::{KindCounts, PoolConfig};
use crate::train::TrainConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    NnnfL2,
    NnnfL4,
    NfOnly,
    NnnfNoNorm,
}

impl Preset {
    pub const ALL: [Preset; 4] = [Preset::NnnfL2, Preset::NnnfL4, Preset::NfOnly, Preset::NnnfNoNorm];

    pub fn name(self) -> &'static str {
        match self {
            Preset::NnnfL2 => "nnnf-l2",
            Preset::NnnfL4 => "nnnf-l4",
            Preset::NfOnly => "nf-only",
            Preset::NnnfNoNorm => "nnnf-no-norm",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown preset {s:?}")))
    }
}

/// Desk-scale candidate budget with both feature families.
pub const NNNF_COUNTS: KindCounts = KindCounts {
    local_mean: 1400,
    neighbor_diff: 1400,
    sidf: 750,
    ssf: 450,
};

/// Same budget, neighboring features only.
pub const NF_COUNTS: KindCounts = KindCounts {
    local_mean: 2000,
    neighbor_diff: 2000,
    sidf: 0,
    ssf: 0,
};

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub preset: Preset,
    pub pool: PoolConfig,
    pub train: TrainConfig,
    pub detect: DetectParams,
    pub nms_overlap: f64,
    pub eval_iou: f64,
    pub eval_min_height: Option<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::preset(Preset::NnnfL2)
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {v:?}")))
}

/// Accepts `0.25` or `1/4`.
fn parse_fraction(key: &str, v: &str) -> Result<f64> {
    match v.split_once('/') {
        Some((a, b)) => {
            let (a, b): (f64, f64) = (parse_num(key, a.trim())?, parse_num(key, b.trim())?);
            if b == 0.0 {
                return Err(Error::Config(format!("{key}: division by zero")));
            }
            Ok(a / b)
        }
        None => parse_num(key, v),
    }
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected a boolean, got {v:?}"))),
    }
}

impl RunConfig {
    pub fn preset(p: Preset) -> Self {
        let mut train = TrainConfig::default();
        let mut counts = NNNF_COUNTS;
        match p {
            Preset::NnnfL2 => {}
            Preset::NnnfL4 => {
                train.tree_depth = 4;
                train.feature_fraction = 0.5;
                train.negatives_per_round = 20000;
                train.negative_cap = 50000;
            }
            Preset::NfOnly => counts = NF_COUNTS,
            Preset::NnnfNoNorm => train.normalize = false,
        }
        Self {
            preset: p,
            pool: PoolConfig {
                counts,
                ..PoolConfig::default()
            },
            train,
            detect: DetectParams::default(),
            nms_overlap: DEFAULT_NMS_OVERLAP,
            eval_iou: crate::eval::DEFAULT_IOU_MIN,
            eval_min_height: None,
        }
    }

    /// Set the seed of both pool generation and training.
    pub fn set_seed(&mut self, seed: u64) {
        self.pool.seed = seed;
        self.train.seed = seed;
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let t = &mut self.train;
        match key {
            "preset" => *self = Self::preset(Preset::parse(v)?),
            "seed" => self.set_seed(parse_num(key, v)?),
            "pool.seed" => self.pool.seed = parse_num(key, v)?,
            "pool.local_mean" => self.pool.counts.local_mean = parse_num(key, v)?,
            "pool.neighbor_diff" => self.pool.counts.neighbor_diff = parse_num(key, v)?,
            "pool.sidf" => self.pool.counts.sidf = parse_num(key, v)?,
            "pool.ssf" => self.pool.counts.ssf = parse_num(key, v)?,
            "pool.max_square" => self.pool.limits.max_square = parse_num(key, v)?,
            "pool.ssf_min" => self.pool.limits.ssf_min = parse_num(key, v)?,
            "pool.ssf_max" => self.pool.limits.ssf_max = parse_num(key, v)?,
            "pool.sidf_mirror_fraction" => self.pool.sidf_mirror_fraction = parse_fraction(key, v)?,
            "train.seed" => t.seed = parse_num(key, v)?,
            "train.rounds" => {
                t.rounds = v
                    .split(',')
                    .map(|s| parse_num(key, s.trim()))
                    .collect::<Result<_>>()?
            }
            "train.tree_depth" => t.tree_depth = parse_num(key, v)?,
            "train.feature_fraction" => t.feature_fraction = parse_fraction(key, v)?,
            "train.negatives_per_round" => t.negatives_per_round = parse_num(key, v)?,
            "train.negative_cap" => t.negative_cap = parse_num(key, v)?,
            "train.initial_negatives" => t.initial_negatives = parse_num(key, v)?,
            "train.normalize" => t.normalize = parse_bool(key, v)?,
            "train.jitter_count" => t.jitter_count = parse_num(key, v)?,
            "train.jitter_shift" => t.jitter_shift = parse_num(key, v)?,
            "train.jitter_scale" => t.jitter_scale = parse_fraction(key, v)?,
            "detect.stride" => {
                self.detect.stride = parse_num(key, v)?;
                t.mining.stride = self.detect.stride;
            }
            "detect.scales_per_octave" => {
                self.detect.pyramid.scales_per_octave = parse_num(key, v)?;
                t.mining.pyramid = self.detect.pyramid;
            }
            "detect.upsample_octaves" => {
                self.detect.pyramid.upsample_octaves = parse_num(key, v)?;
                t.mining.pyramid = self.detect.pyramid;
            }
            "detect.threshold" => self.detect.accept_threshold = parse_num(key, v)?,
            "detect.nms_overlap" => self.nms_overlap = parse_num(key, v)?,
            "eval.iou" => self.eval_iou = parse_num(key, v)?,
            "eval.min_height" => self.eval_min_height = Some(parse_num(key, v)?),
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: i + 1,
                message: format!("expected key = value, got {line:?}"),
            })?;
            entries.push((i + 1, k.trim().to_string(), v.trim().to_string()));
        }
        let mut cfg = RunConfig::default();
        let presets: Vec<_> = entries.iter().filter(|(_, k, _)| k == "preset").collect();
        if presets.len() > 1 {
            return Err(Error::Config("preset given more than once".into()));
        }
        if let Some((line, k, v)) = presets.first() {
            cfg.set(k, v).map_err(|e| at_line(*line, e))?;
        }
        for (line, k, v) in entries.iter().filter(|(_, k, _)| k != "preset") {
            cfg.set(k, v).map_err(|e| at_line(*line, e))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if self.pool.counts.total() == 0 {
            return Err(Error::Config("pool has no descriptors".into()));
        }
        if !(0.0..=1.0).contains(&self.nms_overlap) || !(0.0..=1.0).contains(&self.eval_iou) {
            return Err(Error::Config("overlaps must lie in [0, 1]".into()));
        }
        if self.detect.pyramid.scales_per_octave == 0 {
            return Err(Error::Config("detect.scales_per_octave must be positive".into()));
        }
        Ok(())
    }
}

fn at_line(line: usize, e: Error) -> Error {
    match e {
        Error::Config(m) => Error::Config(format!("line {line}: {m}")),
        e => e,
    }
}
