use serde::{Deserialize, Serialize};

use super::{dot4, sum4, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    /// Normalize with batch statistics and update the running estimates.
    Train,
    /// Normalize with the running estimates; no state changes.
    Eval,
}

/// Per-channel batch normalization over `[N, C, ...]` tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub gamma: Tensor,
    pub beta: Tensor,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    /// False until a train-mode pass (or an explicit freeze) has filled the
    /// running statistics.
    pub populated: bool,
    pub momentum: f64,
    pub eps: f64,
}

#[derive(Debug, Clone)]
pub struct BnCache {
    mode: Mode,
    shape: Vec<usize>,
    xhat: Vec<f64>,
    inv_std: Vec<f64>,
}

/// Biased per-channel statistics of one batch.
#[derive(Debug, Clone, PartialEq)]
pub struct BnStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct BnGrads {
    pub input: Tensor,
    pub gamma: Tensor,
    pub beta: Tensor,
}

fn layout(shape: &[usize], channels: usize) -> Result<(usize, usize)> {
    if shape.len() < 2 {
        return Err(Error::shape("batch norm", format!("expected [N, C, ...], got {shape:?}")));
    }
    if shape[1] != channels {
        return Err(Error::dim("batch norm", "channel", channels, shape[1]));
    }
    Ok((shape[0], shape[2..].iter().product()))
}

impl BatchNorm {
    pub fn new(channels: usize) -> Self {
        BatchNorm {
            gamma: Tensor::filled(&[channels], 1.0),
            beta: Tensor::zeros(&[channels]),
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            populated: false,
            momentum: 0.1,
            eps: 1e-5,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    /// Biased per-channel mean and variance of a batch.
    pub fn batch_stats(&self, input: &Tensor) -> Result<(Vec<f64>, Vec<f64>)> {
        let c = self.channels();
        let (n, r) = layout(input.shape(), c)?;
        let x = input.data();
        let count = (n * r) as f64;
        // sweep in memory order; per-channel slices are short and strided
        let mut mean = vec![0.0; c];
        for (k, row) in x.chunks(r).enumerate() {
            mean[k % c] += sum4(row);
        }
        mean.iter_mut().for_each(|m| *m /= count);
        let mut var = vec![0.0; c];
        for (k, row) in x.chunks(r).enumerate() {
            let m = mean[k % c];
            let mut acc = [0.0; 4];
            let chunks = row.chunks_exact(4);
            let tail: f64 = chunks.remainder().iter().map(|v| (v - m) * (v - m)).sum();
            for q in chunks {
                for l in 0..4 {
                    acc[l] += (q[l] - m) * (q[l] - m);
                }
            }
            var[k % c] += (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail;
        }
        var.iter_mut().for_each(|v| *v /= count);
        Ok((mean, var))
    }

    /// Overwrite the running statistics with this batch's statistics.
    pub fn freeze_from_batch(&mut self, input: &Tensor) -> Result<()> {
        let (mean, var) = self.batch_stats(input)?;
        self.set_running(&BnStats { mean, var });
        Ok(())
    }

    pub fn forward(&mut self, input: &Tensor, mode: Mode) -> Result<(Tensor, BnCache)> {
        match mode {
            Mode::Train => self.forward_train(input),
            Mode::Eval => self.forward_eval(input),
        }
    }

    pub fn forward_train(&mut self, input: &Tensor) -> Result<(Tensor, BnCache)> {
        let (out, cache, stats) = self.normalize_batch(input)?;
        self.update_running(&stats);
        Ok((out, cache))
    }

    /// Train-mode normalization without touching the running statistics.
    pub fn normalize_batch(&self, input: &Tensor) -> Result<(Tensor, BnCache, BnStats)> {
        self.normalize_batch_owned(input.clone())
    }

    /// [`Self::normalize_batch`] writing the output over the input's buffer.
    pub fn normalize_batch_owned(&self, input: Tensor) -> Result<(Tensor, BnCache, BnStats)> {
        let (mean, var) = self.batch_stats(&input)?;
        let (out, cache) = self.normalize(input, &mean, &var, Mode::Train)?;
        Ok((out, cache, BnStats { mean, var }))
    }

    /// Momentum update of the running statistics.
    pub fn update_running(&mut self, stats: &BnStats) {
        let m = self.momentum;
        for ch in 0..self.channels() {
            self.running_mean[ch] = (1.0 - m) * self.running_mean[ch] + m * stats.mean[ch];
            self.running_var[ch] = (1.0 - m) * self.running_var[ch] + m * stats.var[ch];
        }
        self.populated = true;
    }

    /// Replace the running statistics outright.
    pub fn set_running(&mut self, stats: &BnStats) {
        self.running_mean.clone_from(&stats.mean);
        self.running_var.clone_from(&stats.var);
        self.populated = true;
    }

    pub fn forward_eval(&self, input: &Tensor) -> Result<(Tensor, BnCache)> {
        self.forward_eval_owned(input.clone())
    }

    pub fn forward_eval_owned(&self, input: Tensor) -> Result<(Tensor, BnCache)> {
        if !self.populated {
            return Err(Error::Protocol(
                "batch norm evaluated before running statistics were populated".into(),
            ));
        }
        self.normalize(input, &self.running_mean, &self.running_var, Mode::Eval)
    }

    fn normalize(&self, mut input: Tensor, mean: &[f64], var: &[f64], mode: Mode) -> Result<(Tensor, BnCache)> {
        let c = self.channels();
        let (_, r) = layout(input.shape(), c)?;
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + self.eps).sqrt()).collect();
        let shape = input.shape().to_vec();
        let mut xhat = vec![0.0; input.len()];
        let y = input.data_mut();
        for (k, (row, xh)) in y.chunks_mut(r).zip(xhat.chunks_mut(r)).enumerate() {
            let ch = k % c;
            let (g, b, m, s) = (self.gamma.data()[ch], self.beta.data()[ch], mean[ch], inv_std[ch]);
            for (v, h) in row.iter_mut().zip(xh) {
                *h = (*v - m) * s;
                *v = g * *h + b;
            }
        }
        Ok((
            input,
            BnCache {
                mode,
                shape,
                xhat,
                inv_std,
            },
        ))
    }

    pub fn backward(&self, cache: &BnCache, grad_out: &Tensor) -> Result<BnGrads> {
        self.backward_owned(cache, grad_out.clone())
    }

    /// [`Self::backward`] writing the input gradient over `grad_out`.
    pub fn backward_owned(&self, cache: &BnCache, mut grad_out: Tensor) -> Result<BnGrads> {
        if grad_out.shape() != cache.shape.as_slice() {
            return Err(Error::shape(
                "batch norm backward",
                format!("grad {:?} vs cached {:?}", grad_out.shape(), cache.shape),
            ));
        }
        let c = self.channels();
        let (n, r) = layout(&cache.shape, c)?;
        let xhat = &cache.xhat;
        let count = (n * r) as f64;
        let mut dgamma = Tensor::zeros(&[c]);
        let mut dbeta = Tensor::zeros(&[c]);
        let mut sum_dy = vec![0.0; c];
        let mut sum_dy_xhat = vec![0.0; c];
        let dy = grad_out.data_mut();
        for (k, (row, xh)) in dy.chunks(r).zip(xhat.chunks(r)).enumerate() {
            sum_dy[k % c] += sum4(row);
            sum_dy_xhat[k % c] += dot4(row, xh);
        }
        for (k, (row, xh)) in dy.chunks_mut(r).zip(xhat.chunks(r)).enumerate() {
            let ch = k % c;
            let scale = self.gamma.data()[ch] * cache.inv_std[ch];
            match cache.mode {
                Mode::Train => {
                    let (mean_dy, mean_dy_xhat) = (sum_dy[ch] / count, sum_dy_xhat[ch] / count);
                    for (d, &h) in row.iter_mut().zip(xh) {
                        *d = scale * (*d - mean_dy - h * mean_dy_xhat);
                    }
                }
                Mode::Eval => row.iter_mut().for_each(|d| *d *= scale),
            }
        }
        dgamma.data_mut().copy_from_slice(&sum_dy_xhat);
        dbeta.data_mut().copy_from_slice(&sum_dy);
        Ok(BnGrads {
            input: grad_out,
            gamma: dgamma,
            beta: dbeta,
        })
    }
}
