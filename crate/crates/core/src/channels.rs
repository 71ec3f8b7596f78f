//! Ten-channel image representation (LUV, normalized gradient magnitude,
//! six oriented-gradient planes), cell aggregation and summed-area tables.

use std::f32::consts::PI;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{write_pgm, RgbImage};

pub const NUM_CHANNELS: usize = 10;
pub const NUM_ORIENTATIONS: usize = 6;

pub const CH_L: usize = 0;
pub const CH_U: usize = 1;
pub const CH_V: usize = 2;
pub const CH_G: usize = 3;
/// First oriented-gradient plane; bin `k` lives at `CH_O0 + k`.
pub const CH_O0: usize = 4;
/// Extra integral table holding squared L cell values.
pub const TABLE_L_SQUARED: usize = NUM_CHANNELS;
pub const NUM_TABLES: usize = NUM_CHANNELS + 1;

pub const CHANNEL_NAMES: [&str; NUM_CHANNELS] =
    ["L", "U", "V", "G", "O1", "O2", "O3", "O4", "O5", "O6"];

/// Channel index obtained by reflecting orientation bins about pi/2, which is
/// what a horizontal flip of the image does to gradient orientations.
/// Color and magnitude channels map to themselves.
pub fn mirror_channel(channel: usize) -> usize {
    if channel >= CH_O0 {
        let k = channel - CH_O0;
        CH_O0 + (NUM_ORIENTATIONS - k) % NUM_ORIENTATIONS
    } else {
        channel
    }
}

/// Affine range used to map each LUV component onto [0, 1].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LuvScale {
    pub l: [f32; 2],
    pub u: [f32; 2],
    pub v: [f32; 2],
}

impl Default for LuvScale {
    /// Bounds enclose the full 8-bit sRGB gamut under D65.
    fn default() -> Self {
        Self {
            l: [0.0, 100.0],
            u: [-84.0, 176.0],
            v: [-135.0, 108.0],
        }
    }
}

/// Constants controlling channel computation. Stored in model files so that
/// detection recomputes channels exactly as training did.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelConfig {
    pub luv_scale: LuvScale,
    /// Half-width of the box used to estimate local gradient magnitude.
    pub grad_norm_radius: usize,
    pub grad_norm_eps: f32,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            luv_scale: LuvScale::default(),
            grad_norm_radius: 5,
            grad_norm_eps: 0.005,
        }
    }
}

/// Row-major scalar plane.
#[derive(Clone, Debug, PartialEq)]
pub struct Plane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl Plane {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f32) {
        self.data[y * self.width + x] = v;
    }

    pub fn flip_horizontal(&self) -> Self {
        let mut out = self.clone();
        for row in out.data.chunks_mut(self.width) {
            row.reverse();
        }
        out
    }

    pub fn min_max(&self) -> (f32, f32) {
        self.data
            .iter()
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }
}

/// The ten per-pixel channel planes, ordered `[L, U, V, G, O1..O6]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelStack {
    pub width: usize,
    pub height: usize,
    pub planes: Vec<Plane>,
}

impl ChannelStack {
    pub fn plane(&self, channel: usize) -> &Plane {
        &self.planes[channel]
    }

    /// Channels of the horizontally mirrored image: every plane flipped and
    /// orientation planes permuted by [`mirror_channel`].
    pub fn mirrored(&self) -> Self {
        let planes = (0..NUM_CHANNELS)
            .map(|c| self.planes[mirror_channel(c)].flip_horizontal())
            .collect();
        Self {
            width: self.width,
            height: self.height,
            planes,
        }
    }
}

/// Per-cell sums of each channel.
#[derive(Clone, Debug, PartialEq)]
pub struct CellChannelStack {
    pub cell_w: usize,
    pub cell_h: usize,
    pub cell_size: usize,
    pub planes: Vec<Plane>,
}

impl CellChannelStack {
    pub fn mirrored(&self) -> Self {
        let planes = (0..NUM_CHANNELS)
            .map(|c| self.planes[mirror_channel(c)].flip_horizontal())
            .collect();
        Self {
            planes,
            ..self.clone()
        }
    }
}

fn srgb_to_linear_lut() -> [f32; 256] {
    let mut lut = [0.0f32; 256];
    for (i, v) in lut.iter_mut().enumerate() {
        let c = i as f64 / 255.0;
        *v = if c <= 0.04045 {
            c / 12.92
        } else {
            ((c + 0.055) / 1.055).powf(2.4)
        } as f32;
    }
    lut
}

/// CIE L*u*v* (D65) of one sRGB pixel, unscaled.
pub fn srgb_to_luv(rgb: [u8; 3]) -> [f32; 3] {
    let lut = srgb_to_linear_lut();
    luv_with_lut(&lut, rgb)
}

#[inline]
fn luv_with_lut(lut: &[f32; 256], rgb: [u8; 3]) -> [f32; 3] {
    const UN: f32 = 0.197_839_8;
    const VN: f32 = 0.468_336_3;
    let (r, g, b) = (lut[rgb[0] as usize], lut[rgb[1] as usize], lut[rgb[2] as usize]);
    let x = 0.412_456_4 * r + 0.357_576_1 * g + 0.180_437_5 * b;
    let y = 0.212_672_9 * r + 0.715_152_2 * g + 0.072_175_0 * b;
    let z = 0.019_333_9 * r + 0.119_192_0 * g + 0.950_304_1 * b;
    let l = if y > 0.008_856_452 {
        116.0 * y.cbrt() - 16.0
    } else {
        903.296_3 * y
    };
    let denom = x + 15.0 * y + 3.0 * z;
    if denom <= 0.0 {
        return [l, 0.0, 0.0];
    }
    let up = 4.0 * x / denom;
    let vp = 9.0 * y / denom;
    [l, 13.0 * l * (up - UN), 13.0 * l * (vp - VN)]
}

#[inline]
fn rescale(v: f32, range: [f32; 2]) -> f32 {
    ((v - range[0]) / (range[1] - range[0])).clamp(0.0, 1.0)
}

/// Arctangent of `z` in `[0, 1]`, single-precision accurate. Written with
/// selects rather than branches: gradient directions are unpredictable.
#[inline]
fn atan_unit(z: f32) -> f32 {
    const TAN_PI_8: f32 = 0.414_213_57;
    let big = z > TAN_PI_8;
    let reduced = (z - 1.0) / (z + 1.0);
    let t = if big { reduced } else { z };
    let base = if big { PI / 4.0 } else { 0.0 };
    let t2 = t * t;
    let p = (((8.053_744_5e-2 * t2 - 1.387_768_6e-1) * t2 + 1.997_771_1e-1) * t2 - 3.333_295e-1) * t2 * t + t;
    base + p
}

/// Orientation of the nonzero gradient `(dx, dy)` folded into `[0, pi)`.
#[inline]
fn unsigned_angle(dx: f32, dy: f32) -> f32 {
    // (dx, dy) and (-dx, -dy) share an orientation
    let flip = dy < 0.0 || (dy == 0.0 && dx < 0.0);
    let dx = if flip { -dx } else { dx };
    let dy = if flip { -dy } else { dy };
    let ax = dx.abs();
    let steep = dy > ax;
    let (num, den) = if steep { (ax, dy) } else { (dy, ax) };
    let a0 = atan_unit(num / den);
    let a = if steep { PI / 2.0 - a0 } else { a0 };
    let theta = if dx < 0.0 { PI - a } else { a };
    if theta >= PI {
        0.0
    } else {
        theta
    }
}

/// Compute the ten channel planes of an image.
pub fn compute_channels(img: &RgbImage, cfg: &ChannelConfig) -> ChannelStack {
    let (w, h) = (img.width(), img.height());
    let n = w * h;
    let lut = srgb_to_linear_lut();
    let scale = cfg.luv_scale;
    let (mut l, mut u, mut v) = (Plane::zeros(w, h), Plane::zeros(w, h), Plane::zeros(w, h));
    for (px, ((lo, uo), vo)) in img
        .as_bytes()
        .chunks_exact(3)
        .zip(l.data.iter_mut().zip(u.data.iter_mut()).zip(v.data.iter_mut()))
    {
        let [ll, uu, vv] = luv_with_lut(&lut, [px[0], px[1], px[2]]);
        *lo = rescale(ll, scale.l);
        *uo = rescale(uu, scale.u);
        *vo = rescale(vv, scale.v);
    }

    // centered [-1, 0, 1] differences with border replication; the
    // orientation of each pixel is kept as a bin and a fraction toward the
    // next bin until the magnitude is normalized
    let mut mag = Plane::zeros(w, h);
    let mut bins = vec![0u8; n];
    let mut fracs = vec![0.0f32; n];
    let bin_width = PI / NUM_ORIENTATIONS as f32;
    for y in 0..h {
        let (yu, yd) = (y.saturating_sub(1), (y + 1).min(h - 1));
        let row = &l.data[y * w..(y + 1) * w];
        let up = &l.data[yu * w..(yu + 1) * w];
        let down = &l.data[yd * w..(yd + 1) * w];
        let out = y * w..(y + 1) * w;
        let (m_row, b_row, f_row) = (&mut mag.data[out.clone()], &mut bins[out.clone()], &mut fracs[out]);
        for x in 0..w {
            let dx = row[(x + 1).min(w - 1)] - row[x.saturating_sub(1)];
            let dy = down[x] - up[x];
            let m = (dx * dx + dy * dy).sqrt();
            m_row[x] = m;
            if m == 0.0 {
                continue;
            }
            let o = unsigned_angle(dx, dy) / bin_width;
            let lo = o.floor();
            let b = lo as usize;
            b_row[x] = if b >= NUM_ORIENTATIONS { b - NUM_ORIENTATIONS } else { b } as u8;
            f_row[x] = o - lo;
        }
    }

    let local = box_mean(&mag, cfg.grad_norm_radius);
    let mut g = Plane::zeros(w, h);
    for ((gv, &m), &lm) in g.data.iter_mut().zip(&mag.data).zip(&local.data) {
        *gv = m / (lm + cfg.grad_norm_eps);
    }

    // each pixel splits its magnitude between its bin and the next one
    let orient: Vec<Plane> = (0..NUM_ORIENTATIONS)
        .map(|k| {
            let prev = ((k + NUM_ORIENTATIONS - 1) % NUM_ORIENTATIONS) as u8;
            let k = k as u8;
            let mut p = Plane::zeros(w, h);
            for (((o, &m), &b), &f) in p.data.iter_mut().zip(&g.data).zip(&bins).zip(&fracs) {
                *o = if b == k {
                    m * (1.0 - f)
                } else if b == prev {
                    m * f
                } else {
                    0.0
                };
            }
            p
        })
        .collect();

    let mut planes = vec![l, u, v, g];
    planes.extend(orient);
    ChannelStack {
        width: w,
        height: h,
        planes,
    }
}

/// Mean over the (2r+1)^2 box clipped to the plane.
fn box_mean(p: &Plane, r: usize) -> Plane {
    let (w, h) = (p.width, p.height);
    let stride = w + 1;
    let mut table = vec![0.0f64; stride * (h + 1)];
    for y in 0..h {
        let mut row = 0.0f64;
        for x in 0..w {
            row += p.data[y * w + x] as f64;
            table[(y + 1) * stride + x + 1] = table[y * stride + x + 1] + row;
        }
    }
    let mut out = Plane::zeros(w, h);
    for y in 0..h {
        let y0 = y.saturating_sub(r);
        let y1 = (y + r + 1).min(h);
        for x in 0..w {
            let x0 = x.saturating_sub(r);
            let x1 = (x + r + 1).min(w);
            let s = table[y1 * stride + x1] - table[y0 * stride + x1] - table[y1 * stride + x0]
                + table[y0 * stride + x0];
            let n = ((y1 - y0) * (x1 - x0)) as f64;
            out.set(x, y, (s / n).max(0.0) as f32);
        }
    }
    out
}

/// Sum each `cell_size` x `cell_size` pixel block; partial trailing cells are dropped.
pub fn aggregate_cells(cs: &ChannelStack, cell_size: usize) -> Result<CellChannelStack> {
    if cell_size == 0 {
        return Err(Error::InvalidArgument("cell_size must be >= 1".into()));
    }
    let cell_w = cs.width / cell_size;
    let cell_h = cs.height / cell_size;
    let planes = cs
        .planes
        .iter()
        .map(|p| {
            let mut out = Plane::zeros(cell_w, cell_h);
            for (cy, out_row) in out.data.chunks_exact_mut(cell_w.max(1)).enumerate().take(cell_h) {
                for y in cy * cell_size..(cy + 1) * cell_size {
                    let src = &p.data[y * cs.width..y * cs.width + cell_w * cell_size];
                    for (o, block) in out_row.iter_mut().zip(src.chunks_exact(cell_size)) {
                        for &x in block {
                            *o += x;
                        }
                    }
                }
            }
            out
        })
        .collect();
    Ok(CellChannelStack {
        cell_w,
        cell_h,
        cell_size,
        planes,
    })
}

/// Rectangle in cell coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CellRect {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl CellRect {
    pub fn new(x: usize, y: usize, w: usize, h: usize) -> Self {
        Self { x, y, w, h }
    }

    pub fn area(&self) -> usize {
        self.w * self.h
    }
}

/// Summed-area tables for the ten channels plus squared L.
#[derive(Clone, Debug)]
pub struct IntegralStack {
    pub cell_w: usize,
    pub cell_h: usize,
    stride: usize,
    tables: Vec<Vec<f64>>,
}

impl IntegralStack {
    /// Raw table entry `I(x, y)`: sum over cells `[0, x) x [0, y)`.
    #[inline]
    pub fn entry(&self, table: usize, x: usize, y: usize) -> f64 {
        self.tables[table][y * self.stride + x]
    }

    /// Rectangle sum without bounds checking beyond debug assertions.
    #[inline]
    pub fn sum(&self, table: usize, x: usize, y: usize, w: usize, h: usize) -> f64 {
        debug_assert!(x + w <= self.cell_w && y + h <= self.cell_h);
        let t = &self.tables[table];
        let s = self.stride;
        let (x1, y1) = (x + w, y + h);
        t[y1 * s + x1] - t[y * s + x1] - t[y1 * s + x] + t[y * s + x]
    }

    pub fn contains(&self, r: &CellRect) -> bool {
        r.x + r.w <= self.cell_w && r.y + r.h <= self.cell_h
    }

    pub fn check(&self, r: &CellRect) -> Result<()> {
        if self.contains(r) {
            Ok(())
        } else {
            Err(Error::OutOfBounds(format!(
                "rect {r:?} outside {}x{} cells",
                self.cell_w, self.cell_h
            )))
        }
    }

    /// Checked rectangle sum of one table.
    pub fn rect_sum(&self, table: usize, r: &CellRect) -> Result<f64> {
        if table >= NUM_TABLES {
            return Err(Error::OutOfBounds(format!("no table {table}")));
        }
        if r.w == 0 || r.h == 0 {
            return Err(Error::InvalidArgument("empty rectangle".into()));
        }
        self.check(r)?;
        Ok(self.sum(table, r.x, r.y, r.w, r.h))
    }
}

pub fn build_integrals(ccs: &CellChannelStack) -> IntegralStack {
    let (w, h) = (ccs.cell_w, ccs.cell_h);
    let stride = w + 1;
    let build = |value: &dyn Fn(usize) -> f64| {
        let mut t = vec![0.0f64; stride * (h + 1)];
        for y in 0..h {
            let mut row = 0.0f64;
            for x in 0..w {
                row += value(y * w + x);
                t[(y + 1) * stride + x + 1] = t[y * stride + x + 1] + row;
            }
        }
        t
    };
    let mut tables: Vec<Vec<f64>> = ccs
        .planes
        .iter()
        .map(|p| build(&|i| p.data[i] as f64))
        .collect();
    let l = &ccs.planes[CH_L];
    tables.push(build(&|i| {
        let v = l.data[i] as f64;
        v * v
    }));
    IntegralStack {
        cell_w: w,
        cell_h: h,
        stride,
        tables,
    }
}

/// Image -> channels -> cells -> integral tables.
pub fn integrate_image(img: &RgbImage, cfg: &ChannelConfig, cell_size: usize) -> Result<IntegralStack> {
    let cs = compute_channels(img, cfg);
    Ok(build_integrals(&aggregate_cells(&cs, cell_size)?))
}

/// Write every plane as an 8-bit PGM scaled to [0, 255], plus `ranges.txt`
/// recording the min/max used for each.
pub fn dump_channels(cs: &ChannelStack, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut sidecar = String::from("channel,min,max\n");
    for (c, p) in cs.planes.iter().enumerate() {
        let (lo, hi) = p.min_max();
        let span = if hi > lo { hi - lo } else { 1.0 };
        let bytes: Vec<u8> = p
            .data
            .iter()
            .map(|&v| (((v - lo) / span) * 255.0).round().clamp(0.0, 255.0) as u8)
            .collect();
        let name = CHANNEL_NAMES[c];
        write_pgm(dir.join(format!("{c:02}_{name}.pgm")), p.width, p.height, &bytes)?;
        sidecar.push_str(&format!("{name},{lo},{hi}\n"));
    }
    let path = dir.join("ranges.txt");
    fs::write(&path, sidecar).map_err(|e| Error::io(path, e))
}
