//! Multi-scale sliding-window detection and greedy non-maximum suppression.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::channels::{integrate_image, CellRect, IntegralStack};
use crate::error::{Error, Result};
use crate::image::RgbImage;
use crate::model::{BoostedModel, PixelBox};

pub const DEFAULT_STRIDE: usize = 4;
pub const DEFAULT_NMS_OVERLAP: f64 = 0.65;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PyramidParams {
    pub upsample_octaves: u32,
    pub scales_per_octave: u32,
}

impl Default for PyramidParams {
    fn default() -> Self {
        Self {
            upsample_octaves: 1,
            scales_per_octave: 8,
        }
    }
}

/// Size of one pyramid level. `scale` is the nominal factor `2^(k/n)`;
/// `scale_x`/`scale_y` are the factors actually realized after rounding.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LevelGeometry {
    pub scale: f64,
    pub width: usize,
    pub height: usize,
    pub scale_x: f64,
    pub scale_y: f64,
}

pub struct PyramidLevel {
    pub geometry: LevelGeometry,
    pub integrals: IntegralStack,
}

/// Levels `2^(k/n)` for `k = octaves_up * n, ..., k_min`, keeping every
/// level at least `min_w x min_h` pixels before rounding.
pub fn pyramid_geometry(
    width: usize,
    height: usize,
    min_w: usize,
    min_h: usize,
    params: &PyramidParams,
) -> Result<Vec<LevelGeometry>> {
    if params.scales_per_octave == 0 {
        return Err(Error::InvalidArgument("scales_per_octave must be positive".into()));
    }
    let n = params.scales_per_octave as i64;
    let mut levels = Vec::new();
    let mut k = params.upsample_octaves as i64 * n;
    loop {
        let s = 2f64.powf(k as f64 / n as f64);
        let (fw, fh) = (width as f64 * s, height as f64 * s);
        if fw < min_w as f64 || fh < min_h as f64 {
            break;
        }
        let (w, h) = (fw.round() as usize, fh.round() as usize);
        levels.push(LevelGeometry {
            scale: s,
            width: w,
            height: h,
            scale_x: w as f64 / width as f64,
            scale_y: h as f64 / height as f64,
        });
        k -= 1;
    }
    if levels.is_empty() {
        return Err(Error::ImageTooSmall {
            width,
            height,
            min_w,
            min_h,
        });
    }
    Ok(levels)
}

/// Closed form of the level count produced by [`pyramid_geometry`].
pub fn level_count(width: usize, height: usize, min_w: usize, min_h: usize, params: &PyramidParams) -> usize {
    let n = params.scales_per_octave as f64;
    let r = (width as f64 / min_w as f64).min(height as f64 / min_h as f64);
    let c = (params.upsample_octaves as f64 * n + (n * r.log2()).floor() + 1.0).max(0.0);
    c as usize
}

pub fn build_level(img: &RgbImage, g: &LevelGeometry, model: &BoostedModel) -> Result<PyramidLevel> {
    let scaled = if g.width == img.width() && g.height == img.height() {
        img.clone()
    } else {
        img.resize(g.width, g.height)
    };
    Ok(PyramidLevel {
        geometry: *g,
        integrals: integrate_image(&scaled, &model.channel_config, model.cell_size)?,
    })
}

pub fn build_pyramid(img: &RgbImage, model: &BoostedModel, params: &PyramidParams) -> Result<Vec<PyramidLevel>> {
    let t = &model.template;
    pyramid_geometry(img.width(), img.height(), t.window_w, t.window_h, params)?
        .par_iter()
        .map(|g| build_level(img, g, model))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DetectParams {
    /// Window step in pixels; must be a multiple of the cell size.
    pub stride: usize,
    pub pyramid: PyramidParams,
    pub accept_threshold: f64,
}

impl Default for DetectParams {
    fn default() -> Self {
        Self {
            stride: DEFAULT_STRIDE,
            pyramid: PyramidParams::default(),
            accept_threshold: 0.0,
        }
    }
}

/// A detection in original-image pixel coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Detection {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
    pub score: f64,
    pub scale: f64,
}

impl Detection {
    pub fn bbox(&self) -> PixelBox {
        PixelBox::new(self.x, self.y, self.w, self.h)
    }
}

/// One scored window of one level.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WindowHit {
    pub level: usize,
    pub cell_x: usize,
    pub cell_y: usize,
    pub score: f64,
    pub rejected_at: Option<usize>,
}

fn stride_cells(model: &BoostedModel, stride: usize) -> Result<usize> {
    if stride == 0 || stride % model.cell_size != 0 {
        return Err(Error::InvalidArgument(format!(
            "stride {stride} must be a positive multiple of the cell size {}",
            model.cell_size
        )));
    }
    Ok(stride / model.cell_size)
}

/// Cell positions of all windows on an `cw x ch` cell grid.
pub fn window_positions(cw: usize, ch: usize, tw: usize, th: usize, step: usize) -> Vec<(usize, usize)> {
    if cw < tw || ch < th {
        return Vec::new();
    }
    (0..=ch - th)
        .step_by(step)
        .flat_map(|y| (0..=cw - tw).step_by(step).map(move |x| (x, y)))
        .collect()
}

/// Score every window of one level, rows in parallel, output in (y, x)
/// order.
pub fn scan_level(model: &BoostedModel, level_index: usize, level: &PyramidLevel, step: usize) -> Vec<WindowHit> {
    let (tw, th) = model.template_cells();
    let is = &level.integrals;
    if is.cell_w < tw || is.cell_h < th {
        return Vec::new();
    }
    let rows: Vec<usize> = (0..=is.cell_h - th).step_by(step).collect();
    rows.par_iter()
        .map(|&y| {
            (0..=is.cell_w - tw)
                .step_by(step)
                .map(|x| {
                    let s = model.score_window_unchecked(is, &CellRect::new(x, y, tw, th));
                    WindowHit {
                        level: level_index,
                        cell_x: x,
                        cell_y: y,
                        score: s.score,
                        rejected_at: s.rejected_at,
                    }
                })
                .collect::<Vec<_>>()
        })
        .collect::<Vec<_>>()
        .concat()
}

/// Score every window of every level. Levels are built and scanned one at a
/// time to bound memory; `visit` sees each level's hits in (y, x) order.
pub fn scan_image(
    model: &BoostedModel,
    img: &RgbImage,
    params: &DetectParams,
    mut visit: impl FnMut(&LevelGeometry, &[WindowHit]),
) -> Result<Vec<LevelGeometry>> {
    let step = stride_cells(model, params.stride)?;
    let t = &model.template;
    let geoms = pyramid_geometry(img.width(), img.height(), t.window_w, t.window_h, &params.pyramid)?;
    for (i, g) in geoms.iter().enumerate() {
        let level = build_level(img, g, model)?;
        let hits = scan_level(model, i, &level, step);
        visit(g, &hits);
    }
    Ok(geoms)
}

/// Object box of the window at `(cell_x, cell_y)` of a level, in original
/// image coordinates.
pub fn window_to_image(model: &BoostedModel, g: &LevelGeometry, cell_x: usize, cell_y: usize) -> PixelBox {
    let o = &model.template.object;
    let cs = model.cell_size as f64;
    PixelBox::new(
        (cell_x as f64 * cs + o.x) / g.scale_x,
        (cell_y as f64 * cs + o.y) / g.scale_y,
        o.w / g.scale_x,
        o.h / g.scale_y,
    )
}

/// Cascade rejection statistics gathered while detecting.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ScanStats {
    pub windows: u64,
    /// `depth_histogram[t]` counts windows rejected after tree `t`; the last
    /// bucket counts windows that passed every stage.
    pub depth_histogram: Vec<u64>,
}

/// Pre-NMS detections with cascade score ≥ `accept_threshold`, ordered by
/// (level, y, x).
pub fn detect(model: &BoostedModel, img: &RgbImage, params: &DetectParams) -> Result<Vec<Detection>> {
    detect_with_stats(model, img, params).map(|(d, _)| d)
}

pub fn detect_with_stats(
    model: &BoostedModel,
    img: &RgbImage,
    params: &DetectParams,
) -> Result<(Vec<Detection>, ScanStats)> {
    let mut dets = Vec::new();
    let mut stats = ScanStats {
        windows: 0,
        depth_histogram: vec![0; model.trees.len() + 1],
    };
    scan_image(model, img, params, |g, hits| {
        for h in hits {
            stats.windows += 1;
            stats.depth_histogram[h.rejected_at.unwrap_or(model.trees.len())] += 1;
            if h.rejected_at.is_none() && h.score >= params.accept_threshold {
                let b = window_to_image(model, g, h.cell_x, h.cell_y);
                dets.push(Detection {
                    x: b.x,
                    y: b.y,
                    w: b.w,
                    h: b.h,
                    score: h.score,
                    scale: g.scale,
                });
            }
        }
    })?;
    Ok((dets, stats))
}

/// Greedy suppression: visit boxes by descending score (input order on
/// ties) and drop any whose IoU with an already kept box exceeds `overlap`.
pub fn nms(dets: &[Detection], overlap: f64) -> Vec<Detection> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].score.total_cmp(&dets[a].score));
    let mut kept: Vec<Detection> = Vec::new();
    for i in order {
        let b = dets[i].bbox();
        if kept.iter().all(|k| k.bbox().iou(&b) <= overlap) {
            kept.push(dets[i]);
        }
    }
    kept
}

pub const DETECTIONS_HEADER: &str = "image_path,x,y,w,h,score";

pub fn write_detections<W: Write + ?Sized>(out: &mut W, rows: &[(String, Detection)]) -> std::io::Result<()> {
    writeln!(out, "{DETECTIONS_HEADER}")?;
    for (path, d) in rows {
        writeln!(out, "{path},{:.2},{:.2},{:.2},{:.2},{:.4}", d.x, d.y, d.w, d.h, d.score)?;
    }
    Ok(())
}

pub fn read_detections(path: impl AsRef<Path>) -> Result<Vec<(String, Detection)>> {
    let path = path.as_ref();
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line_no = i + 1;
        let line = line.trim();
        if line.is_empty() || (i == 0 && line.starts_with("image_path")) {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            line: line_no,
            message,
        };
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(parse_err(format!("expected 6 fields, found {}", fields.len())));
        }
        let mut v = [0.0f64; 5];
        for (slot, s) in v.iter_mut().zip(&fields[1..]) {
            *slot = s
                .trim()
                .parse()
                .map_err(|_| parse_err(format!("invalid number {s:?}")))?;
        }
        if !(v[2] > 0.0 && v[3] > 0.0) || v.iter().any(|x| !x.is_finite()) {
            return Err(parse_err("box must be finite with positive size".into()));
        }
        rows.push((
            fields[0].to_string(),
            Detection {
                x: v[0],
                y: v[1],
                w: v[2],
                h: v[3],
                score: v[4],
                scale: 1.0,
            },
        ));
    }
    Ok(rows)
}
