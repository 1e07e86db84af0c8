//! Orthonormal 3-D DCT-II / inverse, frequency-band masks, and the
//! band-filtered gradient operator used by the frequency-modulated
//! optimizer.
//!
//! The transform is separable: one orthonormal N x N cosine basis per axis,
//! applied along T, H, W in turn. With the orthonormal scaling the inverse
//! is exactly the transpose, Parseval holds, and a constant signal
//! concentrates all of its energy in the (0,0,0) coefficient.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Per-volume transform plan: the three basis matrices for a fixed
/// (T, H, W). Immutable and shareable; the transforms are pure.
#[derive(Debug, Clone)]
pub struct DctPlan<S: Scalar> {
    dims: [usize; 3],
    bases: [Vec<S>; 3],
    bases_t: [Vec<S>; 3],
}

/// Orthonormal DCT-II basis, row-major with rows indexed by frequency k:
/// `basis[k][n] = c_k * sqrt(2/N) * cos((2n+1) k pi / (2N))`,
/// `c_0 = 1/sqrt(2)`, `c_k = 1` otherwise.
fn dct_basis<S: Scalar>(n: usize) -> Vec<S> {
    let nf = n as f64;
    let scale = (2.0 / nf).sqrt();
    let mut basis = vec![S::zero(); n * n];
    for k in 0..n {
        let ck = if k == 0 { 1.0 / 2f64.sqrt() } else { 1.0 };
        for j in 0..n {
            let angle = (2.0 * j as f64 + 1.0) * k as f64 * std::f64::consts::PI / (2.0 * nf);
            basis[k * n + j] = S::from_f64(ck * scale * angle.cos());
        }
    }
    basis
}

fn transpose<S: Scalar>(m: &[S], n: usize) -> Vec<S> {
    let mut t = vec![S::zero(); n * n];
    for r in 0..n {
        for c in 0..n {
            t[c * n + r] = m[r * n + c];
        }
    }
    t
}

impl<S: Scalar> DctPlan<S> {
    pub fn new(t: usize, h: usize, w: usize) -> Self {
        let bases = [dct_basis(t), dct_basis(h), dct_basis(w)];
        let bases_t = [
            transpose(&bases[0], t),
            transpose(&bases[1], h),
            transpose(&bases[2], w),
        ];
        DctPlan {
            dims: [t, h, w],
            bases,
            bases_t,
        }
    }

    pub fn for_tensor(g: &Tensor<S>) -> Result<Self> {
        let s = g.shape();
        if s.len() != 3 {
            return Err(Error::InvalidArgument(format!(
                "DCT plan needs a rank-3 tensor, got rank {}",
                s.len()
            )));
        }
        Ok(Self::new(s[0], s[1], s[2]))
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    fn check_shape(&self, g: &Tensor<S>, context: &str) -> Result<()> {
        if g.shape() != self.dims {
            return Err(Error::shape_mismatch(context, &self.dims, g.shape()));
        }
        Ok(())
    }

    /// Forward 3-D DCT of a T x H x W tensor.
    pub fn dct3(&self, g: &Tensor<S>) -> Result<Tensor<S>> {
        self.check_shape(g, "dct3")?;
        let mut out = g.apply_along_axis(0, &self.bases[0])?;
        out = out.apply_along_axis(1, &self.bases[1])?;
        out.apply_along_axis(2, &self.bases[2])
    }

    /// Inverse 3-D DCT; exactly the transposed bases, so
    /// `idct3(dct3(x)) == x` up to rounding.
    pub fn idct3(&self, g: &Tensor<S>) -> Result<Tensor<S>> {
        self.check_shape(g, "idct3")?;
        let mut out = g.apply_along_axis(0, &self.bases_t[0])?;
        out = out.apply_along_axis(1, &self.bases_t[1])?;
        out.apply_along_axis(2, &self.bases_t[2])
    }
}

/// Keep-ratios for the low and high frequency bands.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GfmConfig {
    pub r_l: f64,
    pub r_h: f64,
}

impl GfmConfig {
    pub fn new(r_l: f64, r_h: f64) -> Result<Self> {
        let cfg = GfmConfig { r_l, r_h };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.r_l.is_finite() || !self.r_h.is_finite() || self.r_l < 0.0 || self.r_h < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "band ratios must be >= 0, got r_l={}, r_h={}",
                self.r_l, self.r_h
            )));
        }
        if self.r_l + self.r_h > 1.0 {
            return Err(Error::InvalidArgument(format!(
                "band ratios must satisfy r_l + r_h <= 1, got r_l={}, r_h={}",
                self.r_l, self.r_h
            )));
        }
        Ok(())
    }
}

/// Binary low-band (corner cube) and high-band (cube complement) masks over
/// a T x H x W coefficient volume.
#[derive(Debug, Clone)]
pub struct BandMaskPair<S: Scalar> {
    pub low: Tensor<S>,
    pub high: Tensor<S>,
}

/// Snaps float noise near integers so ratios like 0.3 on an axis of 10 hit
/// the exact boundary before ceil/floor.
fn snap(x: f64) -> f64 {
    if (x - x.round()).abs() < 1e-9 {
        x.round()
    } else {
        x
    }
}

fn low_cut(r_l: f64, n: usize) -> usize {
    (snap(r_l * n as f64).ceil() as usize).min(n)
}

fn high_cut(r_h: f64, n: usize) -> usize {
    (snap((1.0 - r_h) * n as f64).floor().max(0.0) as usize).min(n)
}

/// Builds the band masks: low keeps indices `i < ceil(r_l * N)` on every
/// axis (conjunction), high keeps indices `i >= floor((1 - r_h) * N)` on
/// any axis (disjunction). Zero-based throughout.
pub fn build_band_masks<S: Scalar>(
    cfg: &GfmConfig,
    dims: (usize, usize, usize),
) -> Result<BandMaskPair<S>> {
    cfg.validate()?;
    let (t, h, w) = dims;
    let lo = [low_cut(cfg.r_l, t), low_cut(cfg.r_l, h), low_cut(cfg.r_l, w)];
    let hi = [high_cut(cfg.r_h, t), high_cut(cfg.r_h, h), high_cut(cfg.r_h, w)];
    let shape = [t, h, w];
    let low = Tensor::from_fn(&shape, |idx| {
        if idx[0] < lo[0] && idx[1] < lo[1] && idx[2] < lo[2] {
            S::one()
        } else {
            S::zero()
        }
    })?;
    let high = Tensor::from_fn(&shape, |idx| {
        if idx[0] >= hi[0] || idx[1] >= hi[1] || idx[2] >= hi[2] {
            S::one()
        } else {
            S::zero()
        }
    })?;
    Ok(BandMaskPair { low, high })
}

/// Band-filters a gradient map: transform, keep the two bands, transform
/// each back, and sum. Linear in the input; with full low band it is the
/// identity up to rounding.
pub fn modulate_gradient<S: Scalar>(
    plan: &DctPlan<S>,
    grad: &Tensor<S>,
    masks: &BandMaskPair<S>,
) -> Result<Tensor<S>> {
    let freq = plan.dct3(grad)?;
    let low_part = plan.idct3(&freq.mul(&masks.low)?)?;
    let high_part = plan.idct3(&freq.mul(&masks.high)?)?;
    low_part.add(&high_part)
}
