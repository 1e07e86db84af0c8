//! Dense row-major tensors over a generic real scalar.
//!
//! Every pipeline object — clips, masks, gradient maps, frequency maps, box
//! volumes — is one of these. Tensors are immutable values after
//! construction and are validated to hold only finite values, so downstream
//! numeric code never sees NaN/Inf.
//!
//! Layout is row-major: the flat index of `(t, c, h, w)` in a rank-4 tensor
//! is `((t*C + c)*H + h)*W + w`.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Frame count / channels / height / width of a video clip.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ClipShape {
    pub t: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl ClipShape {
    pub fn new(t: usize, c: usize, h: usize, w: usize) -> Result<Self> {
        if t == 0 || c == 0 || h == 0 || w == 0 {
            return Err(Error::InvalidArgument(format!(
                "clip shape axes must all be >= 1, got {}x{}x{}x{}",
                t, c, h, w
            )));
        }
        Ok(ClipShape { t, c, h, w })
    }

    pub fn dims(&self) -> [usize; 4] {
        [self.t, self.c, self.h, self.w]
    }

    pub fn volume(&self) -> usize {
        self.t * self.c * self.h * self.w
    }

    /// The (T, H, W) dims masks and gradient maps live on.
    pub fn spatial(&self) -> (usize, usize, usize) {
        (self.t, self.h, self.w)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<S: Scalar> {
    shape: Vec<usize>,
    data: Vec<S>,
}

impl<S: Scalar> Tensor<S> {
    /// Builds a tensor, checking the shape/length contract and finiteness.
    pub fn new(shape: Vec<usize>, data: Vec<S>) -> Result<Self> {
        let volume = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::InvalidArgument(format!("shape {:?} overflows", shape)))?;
        if volume != data.len() {
            return Err(Error::InvalidArgument(format!(
                "shape {:?} implies {} elements, data has {}",
                shape,
                volume,
                data.len()
            )));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("tensor construction".into()));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let volume = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![S::zero(); volume],
        }
    }

    pub fn filled(shape: &[usize], value: S) -> Result<Self> {
        let volume = shape.iter().product();
        Tensor::new(shape.to_vec(), vec![value; volume])
    }

    /// Builds a tensor from a function of the multi-index.
    pub fn from_fn(shape: &[usize], mut f: impl FnMut(&[usize]) -> S) -> Result<Self> {
        let volume: usize = shape.iter().product();
        let mut data = Vec::with_capacity(volume);
        let mut idx = vec![0usize; shape.len()];
        for _ in 0..volume {
            data.push(f(&idx));
            for ax in (0..shape.len()).rev() {
                idx[ax] += 1;
                if idx[ax] < shape[ax] {
                    break;
                }
                idx[ax] = 0;
            }
        }
        Tensor::new(shape.to_vec(), data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.shape.len());
        let mut flat = 0usize;
        for (ax, &i) in idx.iter().enumerate() {
            debug_assert!(i < self.shape[ax]);
            flat = flat * self.shape[ax] + i;
        }
        flat
    }

    pub fn get(&self, idx: &[usize]) -> S {
        self.data[self.flat_index(idx)]
    }

    /// Applies `f` elementwise; the result is checked for finiteness.
    pub fn map(&self, f: impl Fn(S) -> S) -> Result<Self> {
        Tensor::new(self.shape.clone(), self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn scale(&self, factor: S) -> Result<Self> {
        self.map(|v| v * factor)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        elementwise(|a, b| a + b, self, other)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        elementwise(|a, b| a - b, self, other)
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        elementwise(|a, b| a * b, self, other)
    }

    pub fn sum(&self) -> S {
        self.data.iter().fold(S::zero(), |acc, &v| acc + v)
    }

    pub fn dot(&self, other: &Self) -> Result<S> {
        if self.shape != other.shape {
            return Err(Error::shape_mismatch("dot", &self.shape, &other.shape));
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .fold(S::zero(), |acc, (&a, &b)| acc + a * b))
    }

    pub fn norm2(&self) -> S {
        self.data
            .iter()
            .fold(S::zero(), |acc, &v| acc + v * v)
            .sqrt()
    }

    pub fn max_abs(&self) -> S {
        self.data
            .iter()
            .fold(S::zero(), |acc, &v| acc.max(v.abs()))
    }

    /// Largest absolute elementwise difference; panics on shape mismatch.
    pub fn max_abs_diff(&self, other: &Self) -> S {
        assert_eq!(self.shape, other.shape, "max_abs_diff shape mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .fold(S::zero(), |acc, (&a, &b)| acc.max((a - b).abs()))
    }

    pub fn cast<T: Scalar>(&self) -> Tensor<T> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| T::from_f64(v.to_f64())).collect(),
        }
    }

    /// Reshapes without moving data; the volume must match.
    pub fn reshape(&self, shape: &[usize]) -> Result<Self> {
        let volume: usize = shape.iter().product();
        if volume != self.data.len() {
            return Err(Error::shape_mismatch("reshape", shape, &self.shape));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data: self.data.clone(),
        })
    }

    /// Replaces every 1-D fiber along `axis` with `matrix * fiber`, where
    /// `matrix` is square N x N (row-major) and N equals the axis length.
    pub fn apply_along_axis(&self, axis: usize, matrix: &[S]) -> Result<Self> {
        let n = self.axis_len(axis)?;
        if matrix.len() != n * n {
            return Err(Error::InvalidArgument(format!(
                "apply_along_axis: matrix has {} entries, axis {} needs {}x{}",
                matrix.len(),
                axis,
                n,
                n
            )));
        }
        self.lin_map_axis(axis, matrix, n, n)
    }

    /// General axis-wise linear map: fibers of length `cols` along `axis`
    /// are replaced by `matrix * fiber` of length `rows` (`matrix` is
    /// rows x cols, row-major).
    pub fn lin_map_axis(&self, axis: usize, matrix: &[S], rows: usize, cols: usize) -> Result<Self> {
        let n = self.axis_len(axis)?;
        if n != cols || matrix.len() != rows * cols {
            return Err(Error::InvalidArgument(format!(
                "lin_map_axis: axis {} has length {}, matrix is {}x{} with {} entries",
                axis,
                n,
                rows,
                cols,
                matrix.len()
            )));
        }
        let mut out_shape = self.shape.clone();
        out_shape[axis] = rows;

        let inner: usize = self.shape[axis + 1..].iter().product();
        let outer: usize = self.shape[..axis].iter().product();
        let mut out = vec![S::zero(); outer * rows * inner];
        let mut fiber = vec![S::zero(); cols];
        for o in 0..outer {
            let in_base = o * cols * inner;
            let out_base = o * rows * inner;
            for i in 0..inner {
                for (k, slot) in fiber.iter_mut().enumerate() {
                    *slot = self.data[in_base + k * inner + i];
                }
                for r in 0..rows {
                    let row = &matrix[r * cols..(r + 1) * cols];
                    let mut acc = S::zero();
                    for (k, &m) in row.iter().enumerate() {
                        acc += m * fiber[k];
                    }
                    out[out_base + r * inner + i] = acc;
                }
            }
        }
        Tensor::new(out_shape, out)
    }

    /// Collapses the channel axis of a rank-4 T x C x H x W tensor by
    /// summation, yielding T x H x W.
    pub fn reduce_channels(&self) -> Result<Self> {
        if self.rank() != 4 {
            return Err(Error::InvalidArgument(format!(
                "reduce_channels needs a rank-4 tensor, got rank {}",
                self.rank()
            )));
        }
        let [t, c, h, w] = [self.shape[0], self.shape[1], self.shape[2], self.shape[3]];
        let frame = h * w;
        let mut out = vec![S::zero(); t * frame];
        for ti in 0..t {
            for ci in 0..c {
                let src = (ti * c + ci) * frame;
                let dst = ti * frame;
                for p in 0..frame {
                    out[dst + p] += self.data[src + p];
                }
            }
        }
        Tensor::new(vec![t, h, w], out)
    }

    fn axis_len(&self, axis: usize) -> Result<usize> {
        self.shape.get(axis).copied().ok_or_else(|| {
            Error::InvalidArgument(format!(
                "axis {} out of range for rank-{} tensor",
                axis,
                self.rank()
            ))
        })
    }
}

/// Elementwise combination of two tensors. Shapes must match exactly, or
/// `rhs` may be a rank-4 T x 1 x H x W tensor broadcast along the channel
/// axis of a rank-4 `lhs`.
pub fn elementwise<S: Scalar>(
    op: impl Fn(S, S) -> S,
    lhs: &Tensor<S>,
    rhs: &Tensor<S>,
) -> Result<Tensor<S>> {
    if lhs.shape == rhs.shape {
        let data = lhs
            .data
            .iter()
            .zip(&rhs.data)
            .map(|(&a, &b)| op(a, b))
            .collect();
        return Tensor::new(lhs.shape.clone(), data);
    }
    let broadcastable = lhs.rank() == 4
        && rhs.rank() == 4
        && rhs.shape[1] == 1
        && lhs.shape[0] == rhs.shape[0]
        && lhs.shape[2] == rhs.shape[2]
        && lhs.shape[3] == rhs.shape[3];
    if !broadcastable {
        return Err(Error::shape_mismatch("elementwise", &lhs.shape, &rhs.shape));
    }
    let [t, c, h, w] = [lhs.shape[0], lhs.shape[1], lhs.shape[2], lhs.shape[3]];
    let frame = h * w;
    let mut data = Vec::with_capacity(lhs.len());
    for ti in 0..t {
        let rbase = ti * frame;
        for ci in 0..c {
            let lbase = (ti * c + ci) * frame;
            for p in 0..frame {
                data.push(op(lhs.data[lbase + p], rhs.data[rbase + p]));
            }
        }
    }
    Tensor::new(lhs.shape.clone(), data)
}
