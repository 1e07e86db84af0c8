//! The perturbation operator (mask-weighted blend of a clip with its
//! Gaussian-blurred copy), the coarse-grid smooth mask parameterization,
//! and the sorted-vector area regularizer with its gradient.

use crate::error::{Error, Result};
use crate::scalar::{logistic, Scalar};
use crate::tensor::Tensor;

/// Mask parameterization defaults for full-resolution (112px-class) inputs.
pub const FULL_SCALE_STEP: usize = 13;
pub const FULL_SCALE_SMOOTH_SIGMA: f64 = 23.0;
pub const FULL_SCALE_BLUR_SIGMA: f64 = 10.0;

/// Desk-preset equivalents for 16x16 frames (same ratio to frame size).
pub const DESK_STEP: usize = 2;
pub const DESK_SMOOTH_SIGMA: f64 = 3.0;
pub const DESK_BLUR_SIGMA: f64 = 2.0;

/// Truncated separable Gaussian, radius `ceil(3 sigma)`, weights
/// normalized to sum 1.
#[derive(Debug, Clone)]
pub struct BlurKernel<S: Scalar> {
    sigma: f64,
    radius: usize,
    weights: Vec<S>,
}

impl<S: Scalar> BlurKernel<S> {
    pub fn new(sigma: f64) -> Result<Self> {
        if !sigma.is_finite() || sigma <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "blur sigma must be > 0, got {}",
                sigma
            )));
        }
        let radius = (3.0 * sigma).ceil() as usize;
        let mut raw = Vec::with_capacity(2 * radius + 1);
        let mut total = 0.0;
        for d in -(radius as i64)..=(radius as i64) {
            let v = (-(d * d) as f64 / (2.0 * sigma * sigma)).exp();
            total += v;
            raw.push(v);
        }
        let weights = raw.into_iter().map(|v| S::from_f64(v / total)).collect();
        Ok(BlurKernel {
            sigma,
            radius,
            weights,
        })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn weights(&self) -> &[S] {
        &self.weights
    }
}

/// Symmetric (edge-repeating) reflection; total mass is preserved under
/// this boundary for a normalized kernel.
fn reflect(mut i: i64, n: i64) -> usize {
    loop {
        if i < 0 {
            i = -i - 1;
        } else if i >= n {
            i = 2 * n - 1 - i;
        } else {
            return i as usize;
        }
    }
}

fn blur_line<S: Scalar>(src: &[S], dst: &mut [S], kernel: &BlurKernel<S>) {
    let n = src.len() as i64;
    let r = kernel.radius as i64;
    for (i, out) in dst.iter_mut().enumerate() {
        let mut acc = S::zero();
        for (ki, &w) in kernel.weights.iter().enumerate() {
            let offset = ki as i64 - r;
            acc += w * src[reflect(i as i64 + offset, n)];
        }
        *out = acc;
    }
}

/// Spatial Gaussian blur of a rank-4 clip: each frame and channel is
/// blurred separably along height then width. Frames never mix.
pub fn gaussian_blur<S: Scalar>(clip: &Tensor<S>, kernel: &BlurKernel<S>) -> Result<Tensor<S>> {
    if clip.rank() != 4 {
        return Err(Error::InvalidArgument(format!(
            "gaussian_blur needs a rank-4 clip, got rank {}",
            clip.rank()
        )));
    }
    let (t, c, h, w) = (
        clip.shape()[0],
        clip.shape()[1],
        clip.shape()[2],
        clip.shape()[3],
    );
    let mut out = clip.data().to_vec();
    let mut col_src = vec![S::zero(); h];
    let mut col_dst = vec![S::zero(); h];
    let mut row_dst = vec![S::zero(); w];
    for plane in 0..t * c {
        let base = plane * h * w;
        // rows
        for hi in 0..h {
            let line = &out[base + hi * w..base + (hi + 1) * w];
            blur_line(line, &mut row_dst, kernel);
            out[base + hi * w..base + (hi + 1) * w].copy_from_slice(&row_dst);
        }
        // columns
        for wi in 0..w {
            for hi in 0..h {
                col_src[hi] = out[base + hi * w + wi];
            }
            blur_line(&col_src, &mut col_dst, kernel);
            for hi in 0..h {
                out[base + hi * w + wi] = col_dst[hi];
            }
        }
    }
    Tensor::new(clip.shape().to_vec(), out)
}

/// Blends a clip with its blurred copy under a T x 1 x H x W mask:
/// `out = m * clip + (1 - m) * blur(clip)`. Mask value 1 keeps the pixel
/// bit-exact, 0 fully perturbs it.
pub fn perturb<S: Scalar>(
    clip: &Tensor<S>,
    mask: &Tensor<S>,
    kernel: &BlurKernel<S>,
) -> Result<Tensor<S>> {
    let blurred = gaussian_blur(clip, kernel)?;
    perturb_with_blurred(clip, &blurred, mask)
}

/// Same blend with the blurred clip precomputed (the optimizer reuses it
/// across iterations).
pub fn perturb_with_blurred<S: Scalar>(
    clip: &Tensor<S>,
    blurred: &Tensor<S>,
    mask: &Tensor<S>,
) -> Result<Tensor<S>> {
    check_mask_shape(clip, mask, "perturb")?;
    let (t, c, h, w) = (
        clip.shape()[0],
        clip.shape()[1],
        clip.shape()[2],
        clip.shape()[3],
    );
    let frame = h * w;
    let mut out = Vec::with_capacity(clip.len());
    for ti in 0..t {
        let mbase = ti * frame;
        for ci in 0..c {
            let base = (ti * c + ci) * frame;
            for p in 0..frame {
                let m = mask.data()[mbase + p];
                let x = clip.data()[base + p];
                let b = blurred.data()[base + p];
                out.push(m * x + (S::one() - m) * b);
            }
        }
    }
    Tensor::new(clip.shape().to_vec(), out)
}

fn check_mask_shape<S: Scalar>(clip: &Tensor<S>, mask: &Tensor<S>, context: &str) -> Result<()> {
    let ok = clip.rank() == 4
        && mask.rank() == 4
        && mask.shape()[1] == 1
        && mask.shape()[0] == clip.shape()[0]
        && mask.shape()[2] == clip.shape()[2]
        && mask.shape()[3] == clip.shape()[3];
    if !ok {
        return Err(Error::shape_mismatch(context, clip.shape(), mask.shape()));
    }
    Ok(())
}

/// Unconstrained coarse grid behind a saliency mask: `grid` holds logits on
/// a T x 1 x Hg x Wg lattice with `step`-pixel spacing, expanded to full
/// resolution by normalized Gaussian interpolation of width `smooth_sigma`
/// (no temporal smoothing).
#[derive(Debug, Clone)]
pub struct MaskParams<S: Scalar> {
    pub grid: Tensor<S>,
    pub step: usize,
    pub smooth_sigma: f64,
}

pub fn grid_len(full: usize, step: usize) -> usize {
    full.div_ceil(step)
}

impl<S: Scalar> MaskParams<S> {
    /// Grid filled with a single logit value, sized for the given full
    /// (T, H, W) resolution.
    pub fn uniform(full: (usize, usize, usize), step: usize, smooth_sigma: f64, value: S) -> Result<Self> {
        if step == 0 {
            return Err(Error::InvalidArgument("mask step must be >= 1".into()));
        }
        if !smooth_sigma.is_finite() || smooth_sigma < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "mask smooth sigma must be >= 0, got {}",
                smooth_sigma
            )));
        }
        let (t, h, w) = full;
        let grid = Tensor::filled(&[t, 1, grid_len(h, step), grid_len(w, step)], value)?;
        Ok(MaskParams {
            grid,
            step,
            smooth_sigma,
        })
    }
}

/// Precomputed interpolation operator between a coarse grid and full
/// resolution, with the transpose used for gradient pull-back.
#[derive(Debug, Clone)]
pub struct MaskExpander<S: Scalar> {
    t: usize,
    h: usize,
    w: usize,
    hg: usize,
    wg: usize,
    /// H x Hg row-normalized weights.
    u: Vec<S>,
    /// W x Wg row-normalized weights.
    v: Vec<S>,
}

fn interp_matrix<S: Scalar>(full: usize, grid: usize, step: usize, sigma: f64) -> Vec<S> {
    let mut m = vec![S::zero(); full * grid];
    for p in 0..full {
        if sigma <= 0.0 {
            // Nearest-node limit.
            let g = (((p as f64) / step as f64).round() as usize).min(grid - 1);
            m[p * grid + g] = S::one();
            continue;
        }
        let mut total = 0.0;
        let mut raw = vec![0.0f64; grid];
        for (g, slot) in raw.iter_mut().enumerate() {
            let d = p as f64 - (g * step) as f64;
            *slot = (-d * d / (2.0 * sigma * sigma)).exp();
            total += *slot;
        }
        for (g, &v) in raw.iter().enumerate() {
            m[p * grid + g] = S::from_f64(v / total);
        }
    }
    m
}

impl<S: Scalar> MaskExpander<S> {
    pub fn new(full: (usize, usize, usize), params: &MaskParams<S>) -> Result<Self> {
        let (t, h, w) = full;
        let hg = grid_len(h, params.step);
        let wg = grid_len(w, params.step);
        let expect = [t, 1, hg, wg];
        if params.grid.shape() != expect {
            return Err(Error::shape_mismatch(
                "mask grid",
                &expect,
                params.grid.shape(),
            ));
        }
        Ok(MaskExpander {
            t,
            h,
            w,
            hg,
            wg,
            u: interp_matrix(h, hg, params.step, params.smooth_sigma),
            v: interp_matrix(w, wg, params.step, params.smooth_sigma),
        })
    }

    /// Squashes the grid through the logistic function and interpolates up
    /// to a T x 1 x H x W mask in [0, 1].
    pub fn expand(&self, params: &MaskParams<S>) -> Result<Tensor<S>> {
        let mut out = vec![S::zero(); self.t * self.h * self.w];
        let mut squashed = vec![S::zero(); self.hg * self.wg];
        let mut tmp = vec![S::zero(); self.h * self.wg];
        for ti in 0..self.t {
            let gbase = ti * self.hg * self.wg;
            for (i, slot) in squashed.iter_mut().enumerate() {
                *slot = logistic(params.grid.data()[gbase + i]);
            }
            // rows: (H x Hg) * (Hg x Wg)
            for hi in 0..self.h {
                for gx in 0..self.wg {
                    let mut acc = S::zero();
                    for gy in 0..self.hg {
                        acc += self.u[hi * self.hg + gy] * squashed[gy * self.wg + gx];
                    }
                    tmp[hi * self.wg + gx] = acc;
                }
            }
            // cols: (H x Wg) * (Wg x W)^T
            let obase = ti * self.h * self.w;
            for hi in 0..self.h {
                for wi in 0..self.w {
                    let mut acc = S::zero();
                    for gx in 0..self.wg {
                        acc += self.v[wi * self.wg + gx] * tmp[hi * self.wg + gx];
                    }
                    out[obase + hi * self.w + wi] = acc;
                }
            }
        }
        Tensor::new(vec![self.t, 1, self.h, self.w], out)
    }

    /// Chain rule from a full-resolution T x H x W mask gradient back to
    /// the grid: transpose-interpolate, then scale by the logistic
    /// derivative at the current grid.
    pub fn pull_back(&self, params: &MaskParams<S>, mask_grad: &Tensor<S>) -> Result<Tensor<S>> {
        let expect = [self.t, self.h, self.w];
        if mask_grad.shape() != expect {
            return Err(Error::shape_mismatch("pull_back", &expect, mask_grad.shape()));
        }
        let mut out = vec![S::zero(); self.t * self.hg * self.wg];
        let mut tmp = vec![S::zero(); self.hg * self.w];
        for ti in 0..self.t {
            let gbase = ti * self.h * self.w;
            // U^T * grad: (Hg x H) * (H x W)
            for gy in 0..self.hg {
                for wi in 0..self.w {
                    let mut acc = S::zero();
                    for hi in 0..self.h {
                        acc += self.u[hi * self.hg + gy] * mask_grad.data()[gbase + hi * self.w + wi];
                    }
                    tmp[gy * self.w + wi] = acc;
                }
            }
            // * V: (Hg x W) * (W x Wg)
            let obase = ti * self.hg * self.wg;
            for gy in 0..self.hg {
                for gx in 0..self.wg {
                    let mut acc = S::zero();
                    for wi in 0..self.w {
                        acc += tmp[gy * self.w + wi] * self.v[wi * self.wg + gx];
                    }
                    out[obase + gy * self.wg + gx] = acc;
                }
            }
        }
        // Logistic derivative at the current grid values.
        let grid = params.grid.data();
        for (i, slot) in out.iter_mut().enumerate() {
            let s = logistic(grid[i]);
            *slot *= s * (S::one() - s);
        }
        Tensor::new(vec![self.t, 1, self.hg, self.wg], out)
    }
}

/// Expands a coarse mask grid to the full (T, H, W) resolution.
pub fn expand_mask<S: Scalar>(
    params: &MaskParams<S>,
    full: (usize, usize, usize),
) -> Result<Tensor<S>> {
    MaskExpander::new(full, params)?.expand(params)
}

/// Target area fraction and regularizer weight.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AreaConfig {
    pub area: f64,
    pub lambda: f64,
}

impl AreaConfig {
    pub fn new(area: f64, lambda: f64) -> Result<Self> {
        let cfg = AreaConfig { area, lambda };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.area > 0.0 && self.area < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "area fraction must lie in (0, 1), got {}",
                self.area
            )));
        }
        if !self.lambda.is_finite() || self.lambda < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "lambda must be >= 0, got {}",
                self.lambda
            )));
        }
        Ok(())
    }

    fn ones_count(&self, n: usize) -> usize {
        ((self.area * n as f64).round() as usize).min(n)
    }
}

/// Indices of the mask entries sorted by value descending, ties broken by
/// flat index (stable sort).
fn descending_order<S: Scalar>(values: &[S]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].partial_cmp(&values[a]).unwrap());
    order
}

/// Squared distance between the descending-sorted mask vector and a
/// template of `round(a*N)` ones followed by zeros.
pub fn area_loss<S: Scalar>(mask: &Tensor<S>, cfg: &AreaConfig) -> S {
    let values = mask.data();
    let order = descending_order(values);
    let ones = cfg.ones_count(values.len());
    let mut loss = S::zero();
    for (rank, &idx) in order.iter().enumerate() {
        let target = if rank < ones { S::one() } else { S::zero() };
        let d = values[idx] - target;
        loss += d * d;
    }
    loss
}

/// Gradient of [`area_loss`] with respect to each mask entry:
/// `2 (m_sorted - r)` scattered back through the sorting permutation.
pub fn area_loss_grad<S: Scalar>(mask: &Tensor<S>, cfg: &AreaConfig) -> Result<Tensor<S>> {
    let values = mask.data();
    let order = descending_order(values);
    let ones = cfg.ones_count(values.len());
    let two = S::from_f64(2.0);
    let mut grad = vec![S::zero(); values.len()];
    for (rank, &idx) in order.iter().enumerate() {
        let target = if rank < ones { S::one() } else { S::zero() };
        grad[idx] = two * (values[idx] - target);
    }
    Tensor::new(mask.shape().to_vec(), grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_clip(shape: &[usize], seed: u64) -> Tensor<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let volume = shape.iter().product();
        let data = (0..volume).map(|_| rng.gen_range(0.0..1.0)).collect();
        Tensor::new(shape.to_vec(), data).unwrap()
    }

    #[test]
    fn kernel_weights_sum_to_one() {
        for sigma in [0.5, 1.0, 2.0, 10.0] {
            let k = BlurKernel::<f64>::new(sigma).unwrap();
            let total: f64 = k.weights().iter().sum();
            assert!((total - 1.0).abs() < 1e-12);
            assert_eq!(k.radius(), (3.0 * sigma).ceil() as usize);
        }
    }

    #[test]
    fn blur_of_constant_clip_is_constant() {
        let clip = Tensor::filled(&[2, 1, 8, 8], 0.37).unwrap();
        let k = BlurKernel::new(1.5).unwrap();
        let out = gaussian_blur(&clip, &k).unwrap();
        assert!(clip.max_abs_diff(&out) < 1e-12);
    }

    #[test]
    fn single_pixel_center_is_product_of_1d_weights() {
        let k = BlurKernel::<f64>::new(1.0).unwrap();
        let n = 16;
        let mut data = vec![0.0; n * n];
        data[8 * n + 8] = 1.0;
        let clip = Tensor::new(vec![1, 1, n, n], data).unwrap();
        let out = gaussian_blur(&clip, &k).unwrap();
        let center_w = k.weights()[k.radius()];
        assert!((out.get(&[0, 0, 8, 8]) - center_w * center_w).abs() < 1e-12);
    }

    #[test]
    fn blur_matches_dense_2d_convolution_oracle() {
        let clip = random_clip(&[1, 1, 7, 9], 20);
        let k = BlurKernel::<f64>::new(1.0).unwrap();
        let out = gaussian_blur(&clip, &k).unwrap();
        let r = k.radius() as i64;
        for h in 0..7usize {
            for w in 0..9usize {
                let mut acc = 0.0;
                for dh in -r..=r {
                    for dw in -r..=r {
                        let wh = k.weights()[(dh + r) as usize];
                        let ww = k.weights()[(dw + r) as usize];
                        let sh = reflect(h as i64 + dh, 7);
                        let sw = reflect(w as i64 + dw, 9);
                        acc += wh * ww * clip.get(&[0, 0, sh, sw]);
                    }
                }
                assert!((out.get(&[0, 0, h, w]) - acc).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn blur_preserves_frame_mass() {
        let clip = random_clip(&[3, 2, 10, 12], 21);
        let k = BlurKernel::new(2.0).unwrap();
        let out = gaussian_blur(&clip, &k).unwrap();
        assert!((clip.sum() - out.sum()).abs() < 1e-10);
    }

    #[test]
    fn blur_commutes_with_transposing_square_frames() {
        let clip = random_clip(&[2, 1, 9, 9], 22);
        let k = BlurKernel::new(1.2).unwrap();
        let transposed = Tensor::from_fn(clip.shape(), |i| clip.get(&[i[0], i[1], i[3], i[2]])).unwrap();
        let a = gaussian_blur(&transposed, &k).unwrap();
        let b = gaussian_blur(&clip, &k).unwrap();
        let b_t = Tensor::from_fn(b.shape(), |i| b.get(&[i[0], i[1], i[3], i[2]])).unwrap();
        assert!(a.max_abs_diff(&b_t) < 1e-12);
    }

    #[test]
    fn perturb_limits() {
        let clip = random_clip(&[2, 3, 6, 6], 23);
        let k = BlurKernel::new(1.0).unwrap();
        let ones = Tensor::filled(&[2, 1, 6, 6], 1.0).unwrap();
        let zeros = Tensor::zeros(&[2, 1, 6, 6]);
        let keep = perturb(&clip, &ones, &k).unwrap();
        assert_eq!(keep, clip);
        let drop = perturb(&clip, &zeros, &k).unwrap();
        assert_eq!(drop, gaussian_blur(&clip, &k).unwrap());
    }

    #[test]
    fn perturb_midpoint_is_convex_blend() {
        let clip = random_clip(&[2, 2, 5, 5], 24);
        let k = BlurKernel::new(1.0).unwrap();
        let half = Tensor::filled(&[2, 1, 5, 5], 0.5).unwrap();
        let out = perturb(&clip, &half, &k).unwrap();
        let blurred = gaussian_blur(&clip, &k).unwrap();
        let mid = clip.add(&blurred).unwrap().scale(0.5).unwrap();
        assert!(out.max_abs_diff(&mid) < 1e-12);
    }

    #[test]
    fn perturb_is_affine_in_the_mask() {
        let clip = random_clip(&[2, 1, 6, 6], 25);
        let k = BlurKernel::new(1.0).unwrap();
        let m1 = random_clip(&[2, 1, 6, 6], 26);
        let m2 = random_clip(&[2, 1, 6, 6], 27);
        let alpha = 0.3;
        let blend_mask = m1
            .scale(alpha)
            .unwrap()
            .add(&m2.scale(1.0 - alpha).unwrap())
            .unwrap();
        let lhs = perturb(&clip, &blend_mask, &k).unwrap();
        let rhs = perturb(&clip, &m1, &k)
            .unwrap()
            .scale(alpha)
            .unwrap()
            .add(&perturb(&clip, &m2, &k).unwrap().scale(1.0 - alpha).unwrap())
            .unwrap();
        assert!(lhs.max_abs_diff(&rhs) < 1e-12);
    }

    #[test]
    fn perturb_rejects_bad_mask_shape() {
        let clip = random_clip(&[2, 1, 6, 6], 28);
        let k = BlurKernel::new(1.0).unwrap();
        let mask = Tensor::zeros(&[2, 1, 5, 6]);
        assert!(perturb(&clip, &mask, &k).is_err());
    }

    #[test]
    fn saturated_grid_expands_to_saturated_mask() {
        let params = MaskParams::<f64>::uniform((2, 8, 8), 2, 3.0, 20.0).unwrap();
        let mask = expand_mask(&params, (2, 8, 8)).unwrap();
        assert!(mask.data().iter().all(|&v| v >= 0.999));
    }

    #[test]
    fn zero_grid_expands_to_exactly_half() {
        let params = MaskParams::<f64>::uniform((2, 8, 8), 2, 3.0, 0.0).unwrap();
        let mask = expand_mask(&params, (2, 8, 8)).unwrap();
        for &v in mask.data() {
            assert!((v - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn step_one_nearest_expansion_is_logistic_of_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let grid = Tensor::<f64>::new(
            vec![2, 1, 6, 6],
            (0..72).map(|_| rng.gen_range(-3.0..3.0)).collect(),
        )
        .unwrap();
        let params = MaskParams {
            grid: grid.clone(),
            step: 1,
            smooth_sigma: 0.0,
        };
        let mask = expand_mask(&params, (2, 6, 6)).unwrap();
        for (m, g) in mask.data().iter().zip(grid.data()) {
            assert!((m - logistic(*g)).abs() < 1e-12);
        }
    }

    #[test]
    fn expanded_mask_stays_in_unit_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(30);
        let grid = Tensor::<f64>::new(
            vec![3, 1, 4, 4],
            (0..48).map(|_| rng.gen_range(-30.0..30.0)).collect(),
        )
        .unwrap();
        let params = MaskParams {
            grid,
            step: 3,
            smooth_sigma: 2.0,
        };
        let mask = expand_mask(&params, (3, 10, 10)).unwrap();
        assert!(mask.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn pull_back_matches_finite_differences_of_expansion() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let grid = Tensor::<f64>::new(
            vec![1, 1, 3, 3],
            (0..9).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        let params = MaskParams {
            grid,
            step: 2,
            smooth_sigma: 1.5,
        };
        let full = (1usize, 6usize, 6usize);
        let expander = MaskExpander::new(full, &params).unwrap();
        // Downstream objective: weighted sum of the expanded mask.
        let weights = random_clip(&[1, 6, 6], 32);
        let grad = expander.pull_back(&params, &weights).unwrap();
        let delta = 1e-6;
        for gi in 0..9 {
            let bump = |sign: f64| {
                let mut data = params.grid.data().to_vec();
                data[gi] += sign * delta;
                let p = MaskParams {
                    grid: Tensor::new(vec![1, 1, 3, 3], data).unwrap(),
                    step: 2,
                    smooth_sigma: 1.5,
                };
                let m = expander.expand(&p).unwrap();
                m.data()
                    .iter()
                    .zip(weights.data())
                    .map(|(a, b)| a * b)
                    .sum::<f64>()
            };
            let fd = (bump(1.0) - bump(-1.0)) / (2.0 * delta);
            assert!(
                (fd - grad.data()[gi]).abs() < 1e-6,
                "grid {}: fd {} vs analytic {}",
                gi,
                fd,
                grad.data()[gi]
            );
        }
    }

    #[test]
    fn area_loss_hand_example() {
        let m = Tensor::<f64>::new(vec![3], vec![0.9, 0.1, 0.5]).unwrap();
        let cfg = AreaConfig::new(1.0 / 3.0, 1.0).unwrap();
        let loss = area_loss(&m, &cfg);
        assert!((loss - 0.27).abs() < 1e-12);
        let grad = area_loss_grad(&m, &cfg).unwrap();
        let expect = [-0.2, 0.2, 1.0];
        for (g, e) in grad.data().iter().zip(expect) {
            assert!((g - e).abs() < 1e-12);
        }
    }

    #[test]
    fn area_loss_zero_at_matching_pattern() {
        let m = Tensor::<f64>::new(vec![4], vec![1.0, 0.0, 1.0, 0.0]).unwrap();
        let cfg = AreaConfig::new(0.5, 1.0).unwrap();
        assert_eq!(area_loss(&m, &cfg), 0.0);
        let grad = area_loss_grad(&m, &cfg).unwrap();
        assert!(grad.max_abs() == 0.0);
    }

    #[test]
    fn area_loss_matches_naive_sort_oracle() {
        let m = random_clip(&[4, 1, 6, 6], 33);
        let cfg = AreaConfig::new(0.25, 1.0).unwrap();
        let mut sorted: Vec<f64> = m.data().to_vec();
        sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let ones = (0.25 * sorted.len() as f64).round() as usize;
        let naive: f64 = sorted
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let r = if i < ones { 1.0 } else { 0.0 };
                (v - r) * (v - r)
            })
            .sum();
        assert!((area_loss(&m, &cfg) - naive).abs() < 1e-12);
    }

    #[test]
    fn area_loss_is_permutation_invariant() {
        let m = Tensor::<f64>::new(vec![5], vec![0.9, 0.2, 0.7, 0.1, 0.4]).unwrap();
        let p = Tensor::<f64>::new(vec![5], vec![0.1, 0.9, 0.4, 0.7, 0.2]).unwrap();
        let cfg = AreaConfig::new(0.4, 1.0).unwrap();
        assert!((area_loss(&m, &cfg) - area_loss(&p, &cfg)).abs() < 1e-15);
    }

    #[test]
    fn area_grad_matches_finite_differences_away_from_ties() {
        // Entries spaced well apart so the sort order is locally stable.
        let n = 24;
        let mut rng = ChaCha8Rng::seed_from_u64(34);
        let mut values: Vec<f64> = (0..n)
            .map(|i| 0.05 + 0.9 * (i as f64 + rng.gen_range(0.1..0.9)) / n as f64)
            .collect();
        // Shuffle deterministically.
        for i in (1..n).rev() {
            let j = rng.gen_range(0..=i);
            values.swap(i, j);
        }
        let m = Tensor::new(vec![n], values.clone()).unwrap();
        let cfg = AreaConfig::new(0.3, 1.0).unwrap();
        let grad = area_loss_grad(&m, &cfg).unwrap();
        let delta = 1e-6;
        for i in 0..n {
            let bump = |sign: f64| {
                let mut v = values.clone();
                v[i] += sign * delta;
                area_loss(&Tensor::new(vec![n], v).unwrap(), &cfg)
            };
            let fd = (bump(1.0) - bump(-1.0)) / (2.0 * delta);
            let denom = fd.abs().max(grad.data()[i].abs()).max(1e-8);
            assert!(
                ((fd - grad.data()[i]).abs() / denom) < 1e-6,
                "entry {}: fd {} vs analytic {}",
                i,
                fd,
                grad.data()[i]
            );
        }
    }
}
