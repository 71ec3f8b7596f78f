//! 256-bin equal-width feature quantization for split search.

use rayon::prelude::*;

use crate::error::{Error, Result};

pub const NUM_BINS: usize = 256;

/// Dense sample-major matrix of raw feature values.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FeatureMatrix {
    n_features: usize,
    data: Vec<f32>,
}

impl FeatureMatrix {
    pub fn new(n_features: usize) -> Self {
        Self {
            n_features,
            data: Vec::new(),
        }
    }

    pub fn from_rows(n_features: usize, rows: impl IntoIterator<Item = Vec<f32>>) -> Self {
        let mut m = Self::new(n_features);
        for r in rows {
            m.push_row(&r);
        }
        m
    }

    pub fn push_row(&mut self, row: &[f32]) {
        assert_eq!(row.len(), self.n_features, "row width mismatch");
        self.data.extend_from_slice(row);
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_samples(&self) -> usize {
        if self.n_features == 0 {
            0
        } else {
            self.data.len() / self.n_features
        }
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks(self.n_features.max(1))
    }

    /// Keep only the rows whose index satisfies `keep`, preserving order.
    pub fn retain_rows(&mut self, keep: &[bool]) {
        assert_eq!(keep.len(), self.n_samples());
        let nf = self.n_features;
        let mut out = Vec::with_capacity(self.data.len());
        for (i, &k) in keep.iter().enumerate() {
            if k {
                out.extend_from_slice(&self.data[i * nf..(i + 1) * nf]);
            }
        }
        self.data = out;
    }

    pub fn append(&mut self, other: &FeatureMatrix) {
        assert_eq!(self.n_features, other.n_features);
        self.data.extend_from_slice(&other.data);
    }
}

/// Bin edges of one feature. `edges[t]` is the raw value separating bin `t`
/// from bin `t + 1`, so `bin(x) <= t` exactly when `x < edges[t]`.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureBins {
    pub min: f32,
    pub max: f32,
    pub edges: Vec<f32>,
    pub degenerate: bool,
}

impl FeatureBins {
    fn fit(min: f32, max: f32) -> Self {
        let degenerate = min >= max;
        let edges = if degenerate {
            Vec::new()
        } else {
            let (lo, range) = (min as f64, max as f64 - min as f64);
            (1..NUM_BINS)
                .map(|k| (lo + range * (k as f64 / (NUM_BINS - 1) as f64)) as f32)
                .collect()
        };
        Self {
            min,
            max,
            edges,
            degenerate,
        }
    }

    /// Number of edges not exceeding `x`, i.e. the bin index.
    #[inline]
    pub fn bin(&self, x: f32) -> u8 {
        if self.degenerate {
            return 0;
        }
        self.edges.partition_point(|&e| e <= x) as u8
    }

    /// Raw split threshold for "bin <= t goes left".
    pub fn threshold(&self, t: u8) -> f32 {
        self.edges[t as usize]
    }
}

/// Quantized training data, stored feature-major for split search.
#[derive(Clone, Debug)]
pub struct BinnedMatrix {
    n_samples: usize,
    bins: Vec<Vec<u8>>,
    pub features: Vec<FeatureBins>,
}

impl BinnedMatrix {
    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn n_features(&self) -> usize {
        self.features.len()
    }

    #[inline]
    pub fn column(&self, f: usize) -> &[u8] {
        &self.bins[f]
    }

    pub fn is_degenerate(&self, f: usize) -> bool {
        self.features[f].degenerate
    }
}

/// Quantize every feature into 256 equal-width bins between its observed
/// minimum and maximum. Constant features are flagged degenerate.
pub fn quantize(m: &FeatureMatrix) -> Result<BinnedMatrix> {
    let n = m.n_samples();
    let nf = m.n_features();
    if let Some(bad) = m.data.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "non-finite feature value at sample {}, feature {}",
            bad / nf,
            bad % nf
        )));
    }
    let columns: Vec<(FeatureBins, Vec<u8>)> = (0..nf)
        .into_par_iter()
        .map(|f| {
            let (mut lo, mut hi) = (f32::INFINITY, f32::NEG_INFINITY);
            for i in 0..n {
                let v = m.data[i * nf + f];
                lo = lo.min(v);
                hi = hi.max(v);
            }
            if n == 0 {
                lo = 0.0;
                hi = 0.0;
            }
            let fb = FeatureBins::fit(lo, hi);
            let col = (0..n).map(|i| fb.bin(m.data[i * nf + f])).collect();
            (fb, col)
        })
        .collect();
    let (features, bins) = columns.into_iter().unzip();
    Ok(BinnedMatrix {
        n_samples: n,
        bins,
        features,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn endpoints_map_to_extreme_bins() {
        let m = FeatureMatrix::from_rows(1, [vec![0.0], vec![1.0]]);
        let b = quantize(&m).unwrap();
        assert_eq!(b.column(0), &[0, 255]);
        assert!(!b.is_degenerate(0));
    }

    #[test]
    fn constant_column_is_degenerate() {
        let m = FeatureMatrix::from_rows(2, [vec![3.0, 1.0], vec![3.0, 2.0]]);
        let b = quantize(&m).unwrap();
        assert!(b.is_degenerate(0));
        assert!(!b.is_degenerate(1));
    }

    #[test]
    fn bins_follow_direct_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let vals: Vec<f32> = (0..500).map(|_| rng.random_range(-3.0f32..7.0)).collect();
        let m = FeatureMatrix::from_rows(1, vals.iter().map(|&v| vec![v]));
        let b = quantize(&m).unwrap();
        let (lo, hi) = vals.iter().fold((f32::MAX, f32::MIN), |(l, h), &v| (l.min(v), h.max(v)));
        let mut mismatches = 0;
        for (i, &v) in vals.iter().enumerate() {
            let expect = ((255.0 * (v as f64 - lo as f64) / (hi as f64 - lo as f64)).floor())
                .clamp(0.0, 255.0) as u8;
            let got = b.column(0)[i];
            // exact except for values that sit on an edge within f32 rounding
            if got != expect {
                mismatches += 1;
                assert!((got as i32 - expect as i32).abs() == 1);
            }
        }
        assert_eq!(mismatches, 0);
    }

    #[test]
    fn thresholds_agree_with_bins() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let vals: Vec<f32> = (0..300).map(|_| rng.random::<f32>() * 10.0).collect();
        let m = FeatureMatrix::from_rows(1, vals.iter().map(|&v| vec![v]));
        let b = quantize(&m).unwrap();
        let fb = &b.features[0];
        for t in [0u8, 17, 128, 254] {
            for (i, &v) in vals.iter().enumerate() {
                assert_eq!(b.column(0)[i] <= t, v < fb.threshold(t));
            }
        }
    }

    #[test]
    fn non_finite_rejected() {
        let m = FeatureMatrix::from_rows(1, [vec![f32::NAN]]);
        assert!(quantize(&m).is_err());
    }
}
