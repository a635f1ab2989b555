//! Dense row-major tensors and the hand-written forward/backward kernels the
//! network is assembled from.
//!
//! There is no tape. Each layer exposes a forward function that returns its
//! output (plus whatever it must remember) and a backward function that maps
//! an upstream gradient to gradients for its input and parameters.
//!
//! Batched tensors carry the batch as the leading axis: `[N, C, H, W, T]` for
//! feature maps, `[N, F]` for vectors.

mod activation;
mod adam;
mod conv;
mod dense;
mod gemm;
mod gradcheck;
mod loss;
mod norm;
mod pool;

pub use activation::{
    elu, elu_backward, elu_backward_from_output, elu_backward_from_output_owned, elu_owned, elu_scalar, sigmoid,
    sigmoid_backward, softmax,
};
pub use adam::{AdamConfig, AdamState};
pub use conv::{conv_backward, conv_forward, ConvGrads, ConvSpec};
pub use dense::{dense, dense_backward, DenseGrads};
pub use gradcheck::{grad_check, relative_error};
pub use loss::{mse_pair_loss, mse_pair_loss_grad};
pub use norm::{BatchNorm, BnCache, BnGrads, BnStats, Mode};
pub use pool::{
    avg_pool_time, avg_pool_time_backward, global_avg_pool, global_avg_pool_backward,
};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
    grad: Option<Vec<f64>>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; n],
            grad: None,
        }
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        let mut t = Tensor::zeros(shape);
        t.data.fill(value);
        t
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if shape.iter().any(|&d| d == 0) {
            return Err(Error::shape("tensor", format!("zero extent in {shape:?}")));
        }
        if n != data.len() {
            return Err(Error::shape(
                "tensor",
                format!("shape {shape:?} holds {n} values, data has {}", data.len()),
            ));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
            grad: None,
        })
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

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn grad(&self) -> Option<&[f64]> {
        self.grad.as_deref()
    }

    /// Gradient buffer, allocated as zeros on first access.
    pub fn grad_mut(&mut self) -> &mut [f64] {
        let n = self.data.len();
        self.grad.get_or_insert_with(|| vec![0.0; n])
    }

    pub fn zero_grad(&mut self) {
        if let Some(g) = self.grad.as_mut() {
            g.fill(0.0);
        }
    }

    pub fn take_grad(&mut self) -> Option<Vec<f64>> {
        self.grad.take()
    }

    /// Add `delta` into the gradient buffer.
    pub fn accumulate_grad(&mut self, delta: &[f64]) -> Result<()> {
        if delta.len() != self.data.len() {
            return Err(Error::dim("gradient accumulation", "element", self.data.len(), delta.len()));
        }
        for (g, d) in self.grad_mut().iter_mut().zip(delta) {
            *g += d;
        }
        Ok(())
    }

    /// Values and gradient side by side (gradient zero-filled if absent).
    pub fn data_and_grad(&mut self) -> (&mut [f64], &[f64]) {
        let n = self.data.len();
        let g = self.grad.get_or_insert_with(|| vec![0.0; n]);
        (&mut self.data, g)
    }

    /// Reinterpret the same data under a new shape.
    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.data.len() {
            return Err(Error::shape(
                "reshape",
                format!("cannot view {:?} as {shape:?}", self.shape),
            ));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Slice of one sample along the leading (batch) axis.
    pub fn sample(&self, i: usize) -> &[f64] {
        let per = self.data.len() / self.shape[0];
        &self.data[i * per..(i + 1) * per]
    }

    pub fn sample_mut(&mut self, i: usize) -> &mut [f64] {
        let per = self.data.len() / self.shape[0];
        &mut self.data[i * per..(i + 1) * per]
    }

    /// Stack equally shaped tensors along a new leading axis.
    pub fn stack(items: &[&Tensor]) -> Result<Tensor> {
        let first = items
            .first()
            .ok_or_else(|| Error::shape("stack", "no tensors to stack"))?;
        let mut shape = vec![items.len()];
        shape.extend_from_slice(first.shape());
        let mut data = Vec::with_capacity(first.len() * items.len());
        for t in items {
            if t.shape() != first.shape() {
                return Err(Error::shape(
                    "stack",
                    format!("{:?} vs {:?}", t.shape(), first.shape()),
                ));
            }
            data.extend_from_slice(t.data());
        }
        Tensor::from_vec(&shape, data)
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Sum with four independent accumulators so the loop vectorizes.
pub(crate) fn sum4(a: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let chunks = a.chunks_exact(4);
    let tail: f64 = chunks.remainder().iter().sum();
    for c in chunks {
        for l in 0..4 {
            acc[l] += c[l];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Dot product, accumulated like [`sum4`].
pub(crate) fn dot4(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for l in 0..4 {
            acc[l] += x[l] * y[l];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Promote `[C, H, W, T]` to `[1, C, H, W, T]`; pass 5-D through.
pub(crate) fn as_batched(shape: &[usize], context: &str) -> Result<[usize; 5]> {
    match *shape {
        [c, h, w, t] => Ok([1, c, h, w, t]),
        [n, c, h, w, t] => Ok([n, c, h, w, t]),
        _ => Err(Error::shape(
            context,
            format!("expected C×H×W×T or N×C×H×W×T, got {shape:?}"),
        )),
    }
}
