use super::gemm::{gemm_nn, gemm_nt_acc};
use super::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct DenseGrads {
    pub input: Tensor,
    pub weights: Tensor,
    pub bias: Tensor,
}

fn check(input: &Tensor, weights: &Tensor, context: &str) -> Result<(usize, usize, usize)> {
    let [out, inp] = weights.shape() else {
        return Err(Error::shape(context, format!("weights must be 2-D, got {:?}", weights.shape())));
    };
    let (n, len) = match *input.shape() {
        [len] => (1, len),
        [n, len] => (n, len),
        _ => return Err(Error::shape(context, format!("input must be 1-D or 2-D, got {:?}", input.shape()))),
    };
    if len != *inp {
        return Err(Error::dim(context, "feature", *inp, len));
    }
    Ok((n, *inp, *out))
}

/// `y = W x + b` for a vector `x` or each row of a batch `[N, in]`.
pub fn dense(input: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (n, inp, out) = check(input, weights, "dense")?;
    if bias.len() != out {
        return Err(Error::dim("dense bias", "feature", out, bias.len()));
    }
    // y[N, out] = x[N, in] · Wᵀ
    let mut y = vec![0.0; n * out];
    for i in 0..n {
        y[i * out..(i + 1) * out].copy_from_slice(bias.data());
    }
    gemm_nt_acc(n, inp, out, input.data(), weights.data(), &mut y);
    let shape: Vec<usize> = if input.rank() == 1 { vec![out] } else { vec![n, out] };
    Tensor::from_vec(&shape, y)
}

pub fn dense_backward(grad_out: &Tensor, input: &Tensor, weights: &Tensor) -> Result<DenseGrads> {
    let (n, inp, out) = check(input, weights, "dense backward")?;
    if grad_out.len() != n * out {
        return Err(Error::dim("dense backward", "feature", n * out, grad_out.len()));
    }
    let gy = grad_out.data();
    // dx[N, in] = gy[N, out] · W[out, in]
    let mut dx = vec![0.0; n * inp];
    gemm_nn(n, out, inp, gy, weights.data(), 0.0, &mut dx);
    // dW[out, in] = gyᵀ · x
    let mut dw = vec![0.0; out * inp];
    for i in 0..n {
        for o in 0..out {
            let g = gy[i * out + o];
            if g != 0.0 {
                let row = &mut dw[o * inp..(o + 1) * inp];
                for (w, x) in row.iter_mut().zip(&input.data()[i * inp..(i + 1) * inp]) {
                    *w += g * x;
                }
            }
        }
    }
    let mut db = vec![0.0; out];
    for i in 0..n {
        for o in 0..out {
            db[o] += gy[i * out + o];
        }
    }
    Ok(DenseGrads {
        input: Tensor::from_vec(input.shape(), dx)?,
        weights: Tensor::from_vec(&[out, inp], dw)?,
        bias: Tensor::from_vec(&[out], db)?,
    })
}
