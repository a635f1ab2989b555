use super::Tensor;
use crate::error::{Error, Result};

/// ELU with alpha = 1.
#[inline]
pub fn elu_scalar(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        // exp − 1 rather than exp_m1: same to within 1e-16 absolute, and
        // markedly cheaper over feature maps of millions of values
        x.exp() - 1.0
    }
}

pub fn elu(input: &Tensor) -> Tensor {
    elu_owned(input.clone())
}

/// ELU applied in place to a tensor the caller no longer needs.
pub fn elu_owned(mut input: Tensor) -> Tensor {
    input.data_mut().iter_mut().for_each(|v| *v = elu_scalar(*v));
    input
}

/// Gradient through ELU given the pre-activation input.
pub fn elu_backward(input: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
    if input.shape() != grad_out.shape() {
        return Err(Error::shape(
            "elu backward",
            format!("{:?} vs {:?}", input.shape(), grad_out.shape()),
        ));
    }
    let mut out = grad_out.clone();
    for (g, &x) in out.data_mut().iter_mut().zip(input.data()) {
        if x <= 0.0 {
            *g *= x.exp();
        }
    }
    Ok(out)
}

/// ELU backward written in terms of the activation's output: for `x <= 0`
/// the derivative `exp(x)` equals `y + 1`.
pub fn elu_backward_from_output(output: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
    if output.shape() != grad_out.shape() {
        return Err(Error::shape(
            "elu backward",
            format!("{:?} vs {:?}", output.shape(), grad_out.shape()),
        ));
    }
    elu_backward_from_output_owned(output, grad_out.clone())
}

/// [`elu_backward_from_output`] reusing the upstream gradient's buffer.
pub fn elu_backward_from_output_owned(output: &Tensor, mut grad_out: Tensor) -> Result<Tensor> {
    if output.shape() != grad_out.shape() {
        return Err(Error::shape(
            "elu backward",
            format!("{:?} vs {:?}", output.shape(), grad_out.shape()),
        ));
    }
    for (g, &y) in grad_out.data_mut().iter_mut().zip(output.data()) {
        if y <= 0.0 {
            *g *= y + 1.0;
        }
    }
    Ok(grad_out)
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// d sigmoid / dx expressed through the forward output.
#[inline]
pub fn sigmoid_backward(output: f64, grad_out: f64) -> f64 {
    grad_out * output * (1.0 - output)
}

/// Max-subtracted softmax.
pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}
