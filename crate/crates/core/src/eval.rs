//! Ground-truth matching, miss rate versus false positives per image, and
//! log-average miss rate.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::detect::Detection;
use crate::error::{Error, Result};
use crate::model::PixelBox;

pub const DEFAULT_IOU_MIN: f64 = 0.5;
pub const MISS_RATE_FLOOR: f64 = 1e-4;
pub const LAMR_POINTS: usize = 9;

#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruthBox {
    pub image: String,
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
    pub ignore: bool,
}

impl GroundTruthBox {
    pub fn bbox(&self) -> PixelBox {
        PixelBox::new(self.x, self.y, self.w, self.h)
    }
}

pub const ANNOTATIONS_HEADER: &str = "image_path,x,y,w,h,ignore";

fn parse_bool(s: &str) -> Option<bool> {
    match s {
        "0" | "false" => Some(false),
        "1" | "true" => Some(true),
        _ => None,
    }
}

/// Parse `image_path,x,y,w,h[,ignore]` rows. A header, if present, must
/// name exactly those columns.
pub fn load_annotations(path: impl AsRef<Path>) -> Result<Vec<GroundTruthBox>> {
    let path = path.as_ref();
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_annotations(BufReader::new(f)).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        e => e,
    })
}

pub fn parse_annotations(reader: impl BufRead) -> Result<Vec<GroundTruthBox>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<annotations>", e))?;
        let line_no = i + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let err = |message: String| Error::Parse {
            line: line_no,
            message,
        };
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if i == 0 && fields[0] == "image_path" {
            let expected: Vec<&str> = ANNOTATIONS_HEADER.split(',').collect();
            if fields.len() < 5 || fields[..] != expected[..fields.len()] {
                return Err(err(format!("unexpected columns {fields:?}")));
            }
            continue;
        }
        if fields.len() != 5 && fields.len() != 6 {
            return Err(err(format!("expected 5 or 6 fields, found {}", fields.len())));
        }
        let mut v = [0.0f64; 4];
        for (slot, s) in v.iter_mut().zip(&fields[1..5]) {
            *slot = s.parse().map_err(|_| err(format!("invalid number {s:?}")))?;
        }
        if v.iter().any(|x| !x.is_finite()) || v[2] <= 0.0 || v[3] <= 0.0 {
            return Err(err("box must be finite with positive width and height".into()));
        }
        let ignore = match fields.get(5) {
            Some(s) => parse_bool(s).ok_or_else(|| err(format!("invalid ignore flag {s:?}")))?,
            None => false,
        };
        out.push(GroundTruthBox {
            image: fields[0].to_string(),
            x: v[0],
            y: v[1],
            w: v[2],
            h: v[3],
            ignore,
        });
    }
    Ok(out)
}

pub fn write_annotations<W: Write + ?Sized>(out: &mut W, boxes: &[GroundTruthBox]) -> std::io::Result<()> {
    writeln!(out, "{ANNOTATIONS_HEADER}")?;
    for b in boxes {
        writeln!(
            out,
            "{},{:.2},{:.2},{:.2},{:.2},{}",
            b.image, b.x, b.y, b.w, b.h, b.ignore as u8
        )?;
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DetOutcome {
    TruePositive,
    FalsePositive,
    /// Matched an ignore region: counted as neither.
    Ignored,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MatchResult {
    /// Indexed like the input detections.
    pub detections: Vec<DetOutcome>,
    /// Indexed like the input ground truth; always false for ignore boxes.
    pub gt_matched: Vec<bool>,
}

/// Match one image's detections against its ground truth. Detections are
/// visited by descending score (input order on ties); each takes the
/// unmatched non-ignore box of highest IoU ≥ `iou_min`, or failing that any
/// ignore box with IoU ≥ `iou_min`.
pub fn match_detections(dets: &[Detection], gts: &[GroundTruthBox], iou_min: f64) -> MatchResult {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].score.total_cmp(&dets[a].score));
    let mut outcome = vec![DetOutcome::FalsePositive; dets.len()];
    let mut matched = vec![false; gts.len()];
    for i in order {
        let d = dets[i].bbox();
        let mut best: Option<(usize, f64)> = None;
        for (j, g) in gts.iter().enumerate() {
            if g.ignore || matched[j] {
                continue;
            }
            let iou = d.iou(&g.bbox());
            if iou >= iou_min && best.is_none_or(|(_, b)| iou > b) {
                best = Some((j, iou));
            }
        }
        if let Some((j, _)) = best {
            matched[j] = true;
            outcome[i] = DetOutcome::TruePositive;
        } else if gts.iter().any(|g| g.ignore && d.iou(&g.bbox()) >= iou_min) {
            outcome[i] = DetOutcome::Ignored;
        }
    }
    MatchResult {
        detections: outcome,
        gt_matched: matched,
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurvePoint {
    pub threshold: f64,
    pub fppi: f64,
    pub miss_rate: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalCurve {
    /// Ordered by descending threshold; the first point (threshold +∞) has
    /// no detections.
    pub points: Vec<CurvePoint>,
    pub lamr: f64,
    pub n_images: usize,
    pub n_gt: usize,
}

/// FPPI reference points `10^(-2 + k/4)`, `k = 0..9`.
pub fn reference_fppi() -> [f64; LAMR_POINTS] {
    std::array::from_fn(|k| 10f64.powf(-2.0 + 2.0 * k as f64 / (LAMR_POINTS - 1) as f64))
}

/// Miss rate of the curve at a reference FPPI: the last point with
/// `fppi ≤ reference`, or the first point when none qualifies.
pub fn miss_rate_at(points: &[CurvePoint], reference: f64) -> f64 {
    points
        .iter()
        .rev()
        .find(|p| p.fppi <= reference)
        .or(points.first())
        .map_or(1.0, |p| p.miss_rate)
}

/// Geometric mean of the clamped miss rate at the nine reference points.
pub fn lamr(points: &[CurvePoint]) -> f64 {
    let refs = reference_fppi();
    let mean_log = refs
        .iter()
        .map(|&r| miss_rate_at(points, r).max(MISS_RATE_FLOOR).ln())
        .sum::<f64>()
        / refs.len() as f64;
    mean_log.exp()
}

/// Build the curve over every distinct detection score.
///
/// `images` lists every evaluated image (those without detections or
/// boxes count toward FPPI); images appearing only in `dets` or `gts` are
/// added.
pub fn roc(
    dets: &[(String, Detection)],
    gts: &[GroundTruthBox],
    images: &[String],
    iou_min: f64,
) -> Result<EvalCurve> {
    let n_gt = gts.iter().filter(|g| !g.ignore).count();
    if n_gt == 0 {
        return Err(Error::NoGroundTruth);
    }
    let mut all: BTreeSet<&str> = images.iter().map(String::as_str).collect();
    all.extend(dets.iter().map(|(p, _)| p.as_str()));
    all.extend(gts.iter().map(|g| g.image.as_str()));
    let n_images = all.len();

    let mut by_image: BTreeMap<&str, (Vec<Detection>, Vec<GroundTruthBox>)> = BTreeMap::new();
    for (p, d) in dets {
        by_image.entry(p).or_default().0.push(*d);
    }
    for g in gts {
        by_image.entry(&g.image).or_default().1.push(g.clone());
    }
    // (score, is_tp) for every counted detection
    let mut scored: Vec<(f64, bool)> = Vec::new();
    for (d, g) in by_image.values() {
        let m = match_detections(d, g, iou_min);
        for (det, o) in d.iter().zip(&m.detections) {
            match o {
                DetOutcome::TruePositive => scored.push((det.score, true)),
                DetOutcome::FalsePositive => scored.push((det.score, false)),
                DetOutcome::Ignored => {}
            }
        }
    }
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));

    let mut points = vec![CurvePoint {
        threshold: f64::INFINITY,
        fppi: 0.0,
        miss_rate: 1.0,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < scored.len() {
        let s = scored[i].0;
        while i < scored.len() && scored[i].0 == s {
            if scored[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(CurvePoint {
            threshold: s,
            fppi: fp as f64 / n_images as f64,
            miss_rate: 1.0 - tp as f64 / n_gt as f64,
        });
    }
    let lamr = lamr(&points);
    Ok(EvalCurve {
        points,
        lamr,
        n_images,
        n_gt,
    })
}

/// Ground truth shorter than `min_height` becomes ignore; detections shorter
/// than it are dropped.
pub fn apply_min_height(
    dets: &[(String, Detection)],
    gts: &[GroundTruthBox],
    min_height: f64,
) -> (Vec<(String, Detection)>, Vec<GroundTruthBox>) {
    let d = dets.iter().filter(|(_, d)| d.h >= min_height).cloned().collect();
    let g = gts
        .iter()
        .map(|g| GroundTruthBox {
            ignore: g.ignore || g.h < min_height,
            ..g.clone()
        })
        .collect();
    (d, g)
}

pub fn write_curve<W: Write + ?Sized>(out: &mut W, curve: &EvalCurve) -> std::io::Result<()> {
    writeln!(out, "threshold,fppi,miss_rate")?;
    for p in &curve.points {
        writeln!(out, "{},{:.6},{:.6}", p.threshold, p.fppi, p.miss_rate)?;
    }
    Ok(())
}

/// Curve sampled at the reference FPPI points, with log10 coordinates.
pub fn write_plot_data<W: Write + ?Sized>(out: &mut W, curve: &EvalCurve) -> std::io::Result<()> {
    writeln!(out, "fppi,miss_rate,log10_fppi,log10_miss_rate")?;
    for r in reference_fppi() {
        let mr = miss_rate_at(&curve.points, r).max(MISS_RATE_FLOOR);
        writeln!(out, "{r:.6},{mr:.6},{:.6},{:.6}", r.log10(), mr.log10())?;
    }
    Ok(())
}

pub fn format_lamr(lamr: f64) -> String {
    format!("LAMR={lamr:.6} ({:.2}%)", lamr * 100.0)
}
