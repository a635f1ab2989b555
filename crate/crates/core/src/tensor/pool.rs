use super::Tensor;
use crate::error::{Error, Result};

fn last_axis(shape: &[usize], context: &str) -> Result<(usize, usize)> {
    let (&t, lead) = shape
        .split_last()
        .ok_or_else(|| Error::shape(context, "scalar input"))?;
    Ok((lead.iter().product(), t))
}

fn pooled_shape(shape: &[usize], out_t: usize) -> Vec<usize> {
    let mut s = shape.to_vec();
    *s.last_mut().unwrap() = out_t;
    s
}

/// Mean over windows along the last (time) axis.
pub fn avg_pool_time(input: &Tensor, window: usize, stride: usize) -> Result<Tensor> {
    if window == 0 || stride == 0 {
        return Err(Error::Parameter("pool window and stride must be positive".into()));
    }
    let (rows, t) = last_axis(input.shape(), "avg pool")?;
    if window > t {
        return Err(Error::dim("avg pool", "time", window, t));
    }
    let out_t = (t - window) / stride + 1;
    let mut out = Tensor::zeros(&pooled_shape(input.shape(), out_t));
    let x = input.data();
    let y = out.data_mut();
    let inv = 1.0 / window as f64;
    for r in 0..rows {
        for o in 0..out_t {
            let start = r * t + o * stride;
            y[r * out_t + o] = x[start..start + window].iter().sum::<f64>() * inv;
        }
    }
    Ok(out)
}

pub fn avg_pool_time_backward(
    input_shape: &[usize],
    grad_out: &Tensor,
    window: usize,
    stride: usize,
) -> Result<Tensor> {
    let (rows, t) = last_axis(input_shape, "avg pool backward")?;
    if window == 0 || stride == 0 || window > t {
        return Err(Error::dim("avg pool backward", "time", window, t));
    }
    let out_t = (t - window) / stride + 1;
    if grad_out.shape() != pooled_shape(input_shape, out_t).as_slice() {
        return Err(Error::shape(
            "avg pool backward",
            format!("grad {:?} for input {input_shape:?}", grad_out.shape()),
        ));
    }
    let mut dx = Tensor::zeros(input_shape);
    let g = grad_out.data();
    let d = dx.data_mut();
    let inv = 1.0 / window as f64;
    for r in 0..rows {
        for o in 0..out_t {
            let v = g[r * out_t + o] * inv;
            let start = r * t + o * stride;
            d[start..start + window].iter_mut().for_each(|x| *x += v);
        }
    }
    Ok(dx)
}

/// Per-channel mean over every non-channel axis: `[N, C, ...] -> [N, C]`.
pub fn global_avg_pool(input: &Tensor) -> Result<Tensor> {
    let s = input.shape();
    if s.len() < 2 {
        return Err(Error::shape("global avg pool", format!("expected [N, C, ...], got {s:?}")));
    }
    let (n, c) = (s[0], s[1]);
    let r: usize = s[2..].iter().product();
    let x = input.data();
    let data = (0..n * c)
        .map(|i| x[i * r..(i + 1) * r].iter().sum::<f64>() / r as f64)
        .collect();
    Tensor::from_vec(&[n, c], data)
}

pub fn global_avg_pool_backward(input_shape: &[usize], grad_out: &Tensor) -> Result<Tensor> {
    if input_shape.len() < 2 || grad_out.shape() != &input_shape[..2] {
        return Err(Error::shape(
            "global avg pool backward",
            format!("grad {:?} for input {input_shape:?}", grad_out.shape()),
        ));
    }
    let r: usize = input_shape[2..].iter().product();
    let mut dx = Tensor::zeros(input_shape);
    let inv = 1.0 / r as f64;
    for (i, &g) in grad_out.data().iter().enumerate() {
        dx.data_mut()[i * r..(i + 1) * r].fill(g * inv);
    }
    Ok(dx)
}
