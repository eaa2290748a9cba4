//! Time-weighted frequency representation: per-bin descending rank pooling
//! with normalized geometric weights, interpolating max (r=0) and average
//! (r=1) pooling and extending to r = 1.10.

use crate::error::{Error, Result};
use crate::spectrogram::Spectrogram;

pub const R_MAX: f64 = 1.10;

/// Pooling exponent r, restricted to the selection range [0, 1.10].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoolingExponent(f64);

impl PoolingExponent {
    pub fn new(r: f64) -> Result<Self> {
        if !(0.0..=R_MAX).contains(&r) {
            return Err(Error::InvalidConfig(format!(
                "pooling exponent must lie in [0, {R_MAX}], got {r}"
            )));
        }
        Ok(PoolingExponent(r))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Pooled M-dimensional representation of one clip.
#[derive(Debug, Clone, PartialEq)]
pub struct TwfrVector(pub Vec<f64>);

impl TwfrVector {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Sort each mel-bin row independently in descending energy order.
/// Stable among ties: earlier frames come first.
pub fn ranking(spec: &Spectrogram) -> Spectrogram {
    let n = spec.n_frames();
    let mut values = Vec::with_capacity(spec.n_mels() * n);
    for row in spec.rows() {
        let mut sorted = row.to_vec();
        sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
        values.extend_from_slice(&sorted);
    }
    Spectrogram::from_rows(values, spec.n_mels(), n).expect("shape preserved")
}

/// Normalized geometric weights [r^0, ..., r^{N-1}] / z(r),
/// z(r) = Σ r^{n-1}. With 0^0 = 1, r = 0 gives [1, 0, ..., 0].
pub fn weights(r: PoolingExponent, n_frames: usize) -> Vec<f64> {
    assert!(n_frames >= 1);
    let r = r.value();
    let mut w = Vec::with_capacity(n_frames);
    let mut pow = 1.0; // r^0, also for r = 0
    let mut z = 0.0;
    for _ in 0..n_frames {
        w.push(pow);
        z += pow;
        pow *= r;
    }
    for v in &mut w {
        *v /= z;
    }
    w
}

/// R(X): ranked spectrogram times the weight vector.
pub fn twfr(spec: &Spectrogram, r: PoolingExponent) -> TwfrVector {
    twfr_ranked(&ranking(spec), r)
}

/// Same as [`twfr`] but takes an already-ranked spectrogram, so the sort can
/// be shared across a grid of r values.
pub fn twfr_ranked(ranked: &Spectrogram, r: PoolingExponent) -> TwfrVector {
    let w = weights(r, ranked.n_frames());
    let values = ranked
        .rows()
        .map(|row| row.iter().zip(&w).map(|(x, wi)| x * wi).sum())
        .collect();
    TwfrVector(values)
}
