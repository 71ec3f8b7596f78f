//! Synthetic pedestrian scenes and the ternary-model feature analysis.
//!
//! Figures are left-right symmetric with constant-colored head, torso and
//! leg regions and a darker contour. Distractors break symmetry.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channels::{CellChannelStack, Plane, CH_G};
use crate::error::{Error, Result};
use crate::eval::{write_annotations, GroundTruthBox};
use crate::featpool::{FeatureDescriptor, Patch};
use crate::image::{write_ppm, RgbImage};
use crate::model::PixelBox;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SceneParams {
    pub width: usize,
    pub height: usize,
    pub n_targets: usize,
    /// 0 = plain background, 1 = dense distractors and strong noise.
    pub clutter: f64,
    pub min_height: usize,
    pub max_height: usize,
    /// Clear space between each figure and the scene border, as a fraction
    /// of the figure height, so that a detection window centered on the
    /// figure lies inside the scene.
    pub border: f64,
}

impl Default for SceneParams {
    fn default() -> Self {
        Self {
            width: 320,
            height: 256,
            n_targets: 1,
            clutter: 0.5,
            min_height: 56,
            max_height: 160,
            border: 0.16,
        }
    }
}

/// Smallest scene accepted: twice the 64x128 window.
pub const MIN_SCENE_W: usize = 128;
pub const MIN_SCENE_H: usize = 256;

#[derive(Clone, Debug)]
pub struct SynthScene {
    pub image: RgbImage,
    pub boxes: Vec<PixelBox>,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Part {
    Head,
    Torso,
    Legs,
}

/// Figure region of a pixel in a `w x h` figure box, symmetric about the
/// vertical center line.
fn figure_part(u: usize, v: usize, w: usize, h: usize) -> Option<Part> {
    let (wf, hf) = (w as f64, h as f64);
    let dx = ((u as f64 + 0.5) - wf / 2.0).abs();
    let fy = (v as f64 + 0.5) / hf;
    if fy < 0.2 {
        // head: ellipse of half-width 0.25w
        let t = (fy - 0.1) / 0.1;
        let hw = 0.25 * wf * (1.0 - t * t).max(0.0).sqrt();
        (dx <= hw.max(0.5)).then_some(Part::Head)
    } else if fy < 0.58 {
        // shoulders ramp up to full width
        let hw = if fy < 0.25 {
            wf * (0.15 + 0.35 * (fy - 0.2) / 0.05)
        } else {
            wf * 0.5
        };
        (dx <= hw).then_some(Part::Torso)
    } else {
        (dx >= 0.05 * wf && dx <= 0.42 * wf).then_some(Part::Legs)
    }
}

/// Figure-like but asymmetric: head shifted sideways and a single leg.
fn distractor_part(u: usize, v: usize, w: usize, h: usize, side: bool) -> Option<Part> {
    let (wf, hf) = (w as f64, h as f64);
    let mut x = u as f64 + 0.5 - wf / 2.0;
    if side {
        x = -x;
    }
    let fy = (v as f64 + 0.5) / hf;
    if fy < 0.2 {
        let t = (fy - 0.1) / 0.1;
        let hw = 0.25 * wf * (1.0 - t * t).max(0.0).sqrt();
        ((x - 0.22 * wf).abs() <= hw.max(0.5)).then_some(Part::Head)
    } else if fy < 0.58 {
        (x.abs() <= 0.5 * wf && x < 0.3 * wf).then_some(Part::Torso)
    } else {
        (x >= -0.42 * wf && x <= -0.05 * wf).then_some(Part::Legs)
    }
}

fn darker(c: [u8; 3], f: f64) -> [u8; 3] {
    c.map(|v| (v as f64 * f).round() as u8)
}

fn random_color(rng: &mut ChaCha8Rng, lo: u8, hi: u8) -> [u8; 3] {
    [0; 3].map(|_| rng.random_range(lo..=hi))
}

/// Paint a shape given by `part_of` into `img` at `(x0, y0)` with a dark
/// contour of thickness `t`.
fn paint(
    img: &mut RgbImage,
    x0: usize,
    y0: usize,
    w: usize,
    h: usize,
    t: usize,
    colors: [[u8; 3]; 3],
    part_of: &dyn Fn(usize, usize) -> Option<Part>,
) {
    let inside = |u: isize, v: isize| {
        u >= 0 && v >= 0 && (u as usize) < w && (v as usize) < h && part_of(u as usize, v as usize).is_some()
    };
    for v in 0..h {
        for u in 0..w {
            let Some(p) = part_of(u, v) else { continue };
            let (x, y) = (x0 + u, y0 + v);
            if x >= img.width() || y >= img.height() {
                continue;
            }
            let ti = t as isize;
            let edge = (-ti..=ti).any(|dv| (-ti..=ti).any(|du| !inside(u as isize + du, v as isize + dv)));
            let base = colors[p as usize];
            img.put(x, y, if edge { darker(base, 0.4) } else { base });
        }
    }
}

fn background(rng: &mut ChaCha8Rng, w: usize, h: usize, clutter: f64) -> RgbImage {
    let base = [0; 3].map(|_| rng.random_range(100.0..150.0f64));
    let mut img = RgbImage::filled(w, h, [0, 0, 0]);
    // two octaves of bilinear value noise
    let octaves: Vec<(usize, Vec<[f64; 3]>, usize, usize, f64)> = [(32usize, 30.0), (8, 12.0 * (0.5 + clutter))]
        .iter()
        .map(|&(cell, amp)| {
            let gw = w / cell + 2;
            let gh = h / cell + 2;
            let g = (0..gw * gh)
                .map(|_| [0; 3].map(|_| rng.random_range(-amp..amp)))
                .collect();
            (cell, g, gw, gh, amp)
        })
        .collect();
    for y in 0..h {
        for x in 0..w {
            let mut c = base;
            for (cell, g, gw, _, _) in &octaves {
                let fx = x as f64 / *cell as f64;
                let fy = y as f64 / *cell as f64;
                let (ix, iy) = (fx as usize, fy as usize);
                let (ax, ay) = (fx - ix as f64, fy - iy as f64);
                for k in 0..3 {
                    let v00 = g[iy * gw + ix][k];
                    let v10 = g[iy * gw + ix + 1][k];
                    let v01 = g[(iy + 1) * gw + ix][k];
                    let v11 = g[(iy + 1) * gw + ix + 1][k];
                    c[k] += (1.0 - ay) * ((1.0 - ax) * v00 + ax * v10) + ay * ((1.0 - ax) * v01 + ax * v11);
                }
            }
            img.put(x, y, c.map(|v| v.clamp(0.0, 255.0).round() as u8));
        }
    }
    img
}

fn paint_polygon_distractor(img: &mut RgbImage, rng: &mut ChaCha8Rng, x0: usize, y0: usize, w: usize, h: usize) {
    let color = random_color(rng, 20, 235);
    let kind = rng.random_range(0..2);
    let flip = rng.random_bool(0.5);
    for v in 0..h {
        for u in 0..w {
            let (fx, fy) = ((u as f64 + 0.5) / w as f64, (v as f64 + 0.5) / h as f64);
            let fx = if flip { 1.0 - fx } else { fx };
            let on = match kind {
                // right triangle
                0 => fx <= fy,
                // L shape
                _ => fx < 0.35 || fy > 0.7,
            };
            let (x, y) = (x0 + u, y0 + v);
            if on && x < img.width() && y < img.height() {
                img.put(x, y, color);
            }
        }
    }
}

fn add_noise(img: &mut RgbImage, rng: &mut ChaCha8Rng, amp: f64) {
    if amp <= 0.0 {
        return;
    }
    for y in 0..img.height() {
        for x in 0..img.width() {
            let c = img.get(x, y);
            let n = rng.random_range(-amp..amp);
            img.put(x, y, c.map(|v| (v as f64 + n).clamp(0.0, 255.0).round() as u8));
        }
    }
}

fn overlaps_any(b: &PixelBox, others: &[PixelBox], pad: f64) -> bool {
    let p = PixelBox::new(b.x - pad, b.y - pad, b.w + 2.0 * pad, b.h + 2.0 * pad);
    others.iter().any(|o| p.intersection(o) > 0.0)
}

/// Render one scene. Annotation boxes are the exact extents of the figures.
pub fn gen_scene(seed: u64, p: &SceneParams) -> Result<SynthScene> {
    if p.width < MIN_SCENE_W || p.height < MIN_SCENE_H {
        return Err(Error::InvalidArgument(format!(
            "scene {}x{} smaller than {MIN_SCENE_W}x{MIN_SCENE_H}",
            p.width, p.height
        )));
    }
    if !(0.0..=1.0).contains(&p.clutter) {
        return Err(Error::InvalidArgument("clutter must be in [0, 1]".into()));
    }
    let pad = |h: usize| ((h as f64) * p.border).ceil() as usize + 1;
    if !(p.border >= 0.0) || p.min_height < 20 || p.min_height > p.max_height || p.max_height + 2 * pad(p.max_height) > p.height {
        return Err(Error::InvalidArgument("invalid figure height range".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut img = background(&mut rng, p.width, p.height, p.clutter);

    let mut boxes: Vec<PixelBox> = Vec::new();
    for _ in 0..p.n_targets {
        let mut placed = false;
        for _ in 0..1000 {
            let h = rng.random_range(p.min_height..=p.max_height);
            let w = ((h as f64) * 0.4).round() as usize;
            let m = pad(h);
            if w + 2 * m > p.width {
                continue;
            }
            let x = rng.random_range(m..=p.width - w - m);
            let y = rng.random_range(m..=p.height - h - m);
            let b = PixelBox::new(x as f64, y as f64, w as f64, h as f64);
            if !overlaps_any(&b, &boxes, 6.0) {
                boxes.push(b);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::InvalidArgument(format!(
                "cannot place {} figures in a {}x{} scene",
                p.n_targets, p.width, p.height
            )));
        }
    }

    let n_distractors = (p.clutter * 10.0).round() as usize;
    for i in 0..n_distractors {
        for _ in 0..50 {
            let figure_like = i % 2 == 0;
            let h = rng.random_range(p.min_height..=p.max_height);
            let w = if figure_like {
                ((h as f64) * 0.4).round() as usize
            } else {
                rng.random_range(h / 4..=h / 2).max(8)
            };
            if w + 2 > p.width {
                continue;
            }
            let x = rng.random_range(0..=p.width - w);
            let y = rng.random_range(0..=p.height - h);
            let b = PixelBox::new(x as f64, y as f64, w as f64, h as f64);
            if overlaps_any(&b, &boxes, 4.0) {
                continue;
            }
            if figure_like {
                let colors = [
                    random_color(&mut rng, 140, 230),
                    random_color(&mut rng, 20, 235),
                    random_color(&mut rng, 20, 200),
                ];
                let side = rng.random_bool(0.5);
                let t = (h / 30).max(1);
                paint(&mut img, x, y, w, h, t, colors, &|u, v| distractor_part(u, v, w, h, side));
            } else {
                paint_polygon_distractor(&mut img, &mut rng, x, y, w, h);
            }
            break;
        }
    }

    for b in &boxes {
        let (x, y, w, h) = (b.x as usize, b.y as usize, b.w as usize, b.h as usize);
        let colors = [
            [
                rng.random_range(170..=225),
                rng.random_range(120..=170),
                rng.random_range(90..=140),
            ],
            random_color(&mut rng, 20, 235),
            random_color(&mut rng, 20, 200),
        ];
        let t = (h / 30).max(1);
        paint(&mut img, x, y, w, h, t, colors, &|u, v| figure_part(u, v, w, h));
    }
    add_noise(&mut img, &mut rng, 2.0 + 8.0 * p.clutter);
    Ok(SynthScene { image: img, boxes, seed })
}

/// `count` scenes with 1..=`max_targets` figures each; per-scene seeds are
/// drawn from `seed`.
pub fn gen_dataset(seed: u64, count: usize, max_targets: usize, base: &SceneParams) -> Result<Vec<SynthScene>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let seeds: Vec<(u64, usize)> = (0..count)
        .map(|_| (rng.random(), rng.random_range(1..=max_targets.max(1))))
        .collect();
    use rayon::prelude::*;
    seeds
        .par_iter()
        .map(|&(s, n)| {
            gen_scene(
                s,
                &SceneParams {
                    n_targets: if max_targets == 0 { 0 } else { n },
                    ..*base
                },
            )
        })
        .collect()
}

pub fn scene_file_name(index: usize) -> String {
    format!("scene_{index:04}.ppm")
}

/// Write scenes as PPM files plus `annotations.csv` into `dir`.
pub fn write_dataset(dir: impl AsRef<Path>, scenes: &[SynthScene]) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut gts = Vec::new();
    for (i, s) in scenes.iter().enumerate() {
        let name = scene_file_name(i);
        write_ppm(dir.join(&name), &s.image)?;
        gts.extend(s.boxes.iter().map(|b| GroundTruthBox {
            image: name.clone(),
            x: b.x,
            y: b.y,
            w: b.w,
            h: b.h,
            ignore: false,
        }));
    }
    let path = dir.join("annotations.csv");
    let mut f = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    write_annotations(&mut f, &gts).map_err(|e| Error::io(&path, e))
}

/// Elementwise mean of template-sized cell stacks.
pub fn average_positive_channels(positives: &[CellChannelStack]) -> Result<CellChannelStack> {
    let first = positives
        .first()
        .ok_or_else(|| Error::EmptyInput("no positive windows".into()))?;
    if positives
        .iter()
        .any(|p| p.cell_w != first.cell_w || p.cell_h != first.cell_h || p.planes.len() != first.planes.len())
    {
        return Err(Error::InvalidArgument("positive windows differ in size".into()));
    }
    let n = positives.len() as f64;
    let planes = (0..first.planes.len())
        .map(|c| {
            let mut sum = vec![0.0f64; first.cell_w * first.cell_h];
            for p in positives {
                for (s, &v) in sum.iter_mut().zip(&p.planes[c].data) {
                    *s += v as f64;
                }
            }
            Plane {
                width: first.cell_w,
                height: first.cell_h,
                data: sum.into_iter().map(|s| (s / n) as f32).collect(),
            }
        })
        .collect();
    Ok(CellChannelStack {
        cell_w: first.cell_w,
        cell_h: first.cell_h,
        cell_size: first.cell_size,
        planes,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TernaryLabel {
    Background,
    ContourBody,
    InnerBody,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TernaryModel {
    pub width: usize,
    pub height: usize,
    pub labels: Vec<TernaryLabel>,
}

impl TernaryModel {
    pub fn get(&self, x: usize, y: usize) -> TernaryLabel {
        self.labels[y * self.width + x]
    }

    pub fn count(&self, l: TernaryLabel) -> usize {
        self.labels.iter().filter(|&&x| x == l).count()
    }
}

/// Value at quantile `q` (nearest rank on the sorted data).
pub fn percentile(values: &[f32], q: f64) -> f64 {
    let mut v: Vec<f32> = values.to_vec();
    v.sort_by(f32::total_cmp);
    let idx = ((v.len() - 1) as f64 * q).round() as usize;
    v[idx] as f64
}

/// Contour = cells above `high`; inner = cells at or below `low` lying
/// strictly between the leftmost and rightmost contour cell of their row;
/// everything else background. Thresholds default to the 70th and 30th
/// percentiles.
pub fn build_ternary_model(avg_g: &Plane, thresholds: Option<(f64, f64)>) -> Result<TernaryModel> {
    let (min, max) = avg_g.min_max();
    if avg_g.data.is_empty() || min == max {
        return Err(Error::DegeneratePlane);
    }
    let (high, low) = thresholds.unwrap_or_else(|| (percentile(&avg_g.data, 0.7), percentile(&avg_g.data, 0.3)));
    let strict = avg_g.data.iter().any(|&v| v as f64 > high);
    let is_contour = |v: f32| if strict { v as f64 > high } else { v as f64 >= high };
    let (w, h) = (avg_g.width, avg_g.height);
    let mut labels = vec![TernaryLabel::Background; w * h];
    for y in 0..h {
        let row = &avg_g.data[y * w..(y + 1) * w];
        let contour: Vec<usize> = (0..w).filter(|&x| is_contour(row[x])).collect();
        for &x in &contour {
            labels[y * w + x] = TernaryLabel::ContourBody;
        }
        if let (Some(&l), Some(&r)) = (contour.first(), contour.last()) {
            for x in l + 1..r {
                if !is_contour(row[x]) && row[x] as f64 <= low {
                    labels[y * w + x] = TernaryLabel::InnerBody;
                }
            }
        }
    }
    Ok(TernaryModel {
        width: w,
        height: h,
        labels,
    })
}

/// Ternary model from the G plane of averaged positives.
pub fn ternary_from_average(avg: &CellChannelStack) -> Result<TernaryModel> {
    build_ternary_model(&avg.planes[CH_G], None)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SidfClass {
    /// Contour paired with inner body.
    CI,
    /// Background paired with body.
    BP,
    /// Everything else.
    O,
}

/// Majority label of the patch's cells. Ties go to Background, then
/// ContourBody.
pub fn patch_label(p: &Patch, tm: &TernaryModel) -> TernaryLabel {
    let mut counts = [0usize; 3];
    for y in p.y..p.bottom() {
        for x in p.x..p.right() {
            let l = tm.get(x as usize, y as usize);
            counts[l as usize] += 1;
        }
    }
    let order = [TernaryLabel::Background, TernaryLabel::ContourBody, TernaryLabel::InnerBody];
    let mut best = order[0];
    for l in order {
        if counts[l as usize] > counts[best as usize] {
            best = l;
        }
    }
    best
}

/// Class of a SIDF; `None` for other kinds.
pub fn classify_sidf(d: &FeatureDescriptor, tm: &TernaryModel) -> Option<SidfClass> {
    use TernaryLabel::*;
    let FeatureDescriptor::Sidf { a, b, .. } = d else {
        return None;
    };
    Some(match (patch_label(a, tm), patch_label(b, tm)) {
        (ContourBody, InnerBody) | (InnerBody, ContourBody) => SidfClass::CI,
        (Background, ContourBody | InnerBody) | (ContourBody | InnerBody, Background) => SidfClass::BP,
        _ => SidfClass::O,
    })
}

/// Fraction of CI, BP and O among the SIDFs in `descriptors`.
pub fn sidf_class_fractions<'a>(
    descriptors: impl IntoIterator<Item = &'a FeatureDescriptor>,
    tm: &TernaryModel,
) -> ([f64; 3], usize) {
    let mut counts = [0usize; 3];
    for d in descriptors {
        if let Some(c) = classify_sidf(d, tm) {
            counts[c as usize] += 1;
        }
    }
    let n: usize = counts.iter().sum();
    let f = counts.map(|c| if n == 0 { 0.0 } else { c as f64 / n as f64 });
    (f, n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::{aggregate_cells, compute_channels, ChannelConfig};

    fn mask_bbox(w: usize, h: usize) -> (usize, usize, usize, usize) {
        let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
        for v in 0..h {
            for u in 0..w {
                if figure_part(u, v, w, h).is_some() {
                    x0 = x0.min(u);
                    y0 = y0.min(v);
                    x1 = x1.max(u + 1);
                    y1 = y1.max(v + 1);
                }
            }
        }
        (x0, y0, x1, y1)
    }

    #[test]
    fn figure_mask_is_symmetric_and_fills_its_box() {
        for h in [56, 77, 100, 160] {
            let w = ((h as f64) * 0.4).round() as usize;
            for v in 0..h {
                for u in 0..w {
                    assert_eq!(figure_part(u, v, w, h), figure_part(w - 1 - u, v, w, h));
                }
            }
            let (x0, y0, x1, y1) = mask_bbox(w, h);
            let inter = ((x1 - x0) * (y1 - y0)) as f64;
            assert!(inter / (w * h) as f64 >= 0.9, "h={h}");
        }
    }

    #[test]
    fn empty_scene_has_no_annotations() {
        let s = gen_scene(
            1,
            &SceneParams {
                n_targets: 0,
                ..SceneParams::default()
            },
        )
        .unwrap();
        assert!(s.boxes.is_empty());
    }

    #[test]
    fn single_figure_is_mirror_symmetric() {
        let p = SceneParams {
            n_targets: 1,
            clutter: 0.0,
            ..SceneParams::default()
        };
        let s = gen_scene(3, &p).unwrap();
        assert_eq!(s.boxes.len(), 1);
        let b = s.boxes[0];
        let (x0, y0, w, h) = (b.x as usize, b.y as usize, b.w as usize, b.h as usize);
        let mut diff = 0.0;
        for v in 0..h {
            for u in 0..w / 2 {
                let l = s.image.get(x0 + u, y0 + v);
                let r = s.image.get(x0 + w - 1 - u, y0 + v);
                diff += (0..3).map(|k| (l[k] as f64 - r[k] as f64).abs()).sum::<f64>();
            }
        }
        // only sensor noise and background behind the legs differ
        assert!(diff / ((w / 2) * h * 3) as f64 <= 8.0);
    }

    #[test]
    fn scenes_are_deterministic_and_differ_by_seed() {
        let p = SceneParams::default();
        let a = gen_scene(5, &p).unwrap();
        let b = gen_scene(5, &p).unwrap();
        let c = gen_scene(6, &p).unwrap();
        assert_eq!(a.image, b.image);
        assert_eq!(a.boxes, b.boxes);
        assert_ne!(a.image, c.image);
        let mean = |s: &SynthScene| s.image.as_bytes().iter().map(|&v| v as f64).sum::<f64>() / s.image.as_bytes().len() as f64;
        let (ma, mc) = (mean(&a), mean(&c));
        assert!((ma - mc).abs() / ma.max(mc) < 0.1, "{ma} {mc}");
    }

    #[test]
    fn too_small_scene_rejected() {
        let p = SceneParams {
            width: 100,
            ..SceneParams::default()
        };
        assert!(matches!(gen_scene(1, &p), Err(Error::InvalidArgument(_))));
    }

    fn stack_of(img: &RgbImage) -> CellChannelStack {
        aggregate_cells(&compute_channels(img, &ChannelConfig::default()), 2).unwrap()
    }

    #[test]
    fn average_of_one_is_identity_and_mirror_pair_is_symmetric() {
        let s = gen_scene(9, &SceneParams::default()).unwrap();
        let crop = s.image.resample(10, 10, 1.0, 1.0, 64, 128);
        let st = stack_of(&crop);
        let avg = average_positive_channels(std::slice::from_ref(&st)).unwrap();
        assert_eq!(avg.planes, st.planes);
        let pair = average_positive_channels(&[st.clone(), st.mirrored()]).unwrap();
        let m = pair.mirrored();
        for (a, b) in pair.planes.iter().zip(&m.planes) {
            for (x, y) in a.data.iter().zip(&b.data) {
                assert!((x - y).abs() <= 1e-5);
            }
        }
        assert!(matches!(average_positive_channels(&[]), Err(Error::EmptyInput(_))));
    }

    fn ring_plane() -> Plane {
        let mut p = Plane::zeros(10, 10);
        for y in 2..8 {
            for x in 2..8 {
                if x == 2 || x == 7 || y == 2 || y == 7 {
                    p.set(x, y, 1.0);
                }
            }
        }
        p
    }

    #[test]
    fn ring_ternary_model() {
        use TernaryLabel::*;
        let tm = build_ternary_model(&ring_plane(), None).unwrap();
        for y in 0..10 {
            for x in 0..10 {
                let ring = (2..8).contains(&x) && (2..8).contains(&y) && (x == 2 || x == 7 || y == 2 || y == 7);
                let inside = (3..7).contains(&x) && (3..7).contains(&y);
                let expected = if ring {
                    ContourBody
                } else if inside {
                    InnerBody
                } else {
                    Background
                };
                assert_eq!(tm.get(x, y), expected, "({x},{y})");
            }
        }
        assert!(matches!(
            build_ternary_model(&Plane::zeros(4, 4), None),
            Err(Error::DegeneratePlane)
        ));
    }

    #[test]
    fn sidf_classes() {
        let tm = build_ternary_model(&ring_plane(), None).unwrap();
        let sidf = |a: Patch, b: Patch| FeatureDescriptor::Sidf { channel: 0, a, b };
        // contour column x=2, inner block (3..7)
        let contour = Patch::new(2, 3, 1, 4);
        let inner = Patch::new(4, 4, 2, 2);
        let bg = Patch::new(0, 0, 2, 2);
        assert_eq!(classify_sidf(&sidf(contour, inner), &tm), Some(SidfClass::CI));
        assert_eq!(classify_sidf(&sidf(bg, inner), &tm), Some(SidfClass::BP));
        assert_eq!(classify_sidf(&sidf(bg, Patch::new(8, 8, 2, 2)), &tm), Some(SidfClass::O));
        let lm = FeatureDescriptor::LocalMean { channel: 0, a: bg };
        assert_eq!(classify_sidf(&lm, &tm), None);
    }

    #[test]
    fn patch_label_ties_prefer_background() {
        let tm = build_ternary_model(&ring_plane(), None).unwrap();
        // one background cell (1,3) and one contour cell (2,3)
        assert_eq!(patch_label(&Patch::new(1, 3, 2, 1), &tm), TernaryLabel::Background);
    }
}
