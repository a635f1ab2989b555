//! Embedding module: temporal conv → spatial depthwise conv → strided
//! temporal depthwise conv, each followed by batch norm and ELU.

use crate::error::{Error, Result};
use crate::tensor::{
    conv_backward, conv_forward, elu_backward_from_output_owned, elu_owned, BnCache, BnStats, Tensor,
};

use super::config::GrnConfig;
use super::params::{encoder_specs, EncoderParams};

/// Eval-mode forward passes are run in chunks of this many trials.
const EVAL_CHUNK: usize = 32;

/// Stack `[5, 5, T]` grids into the encoder input `[N, 1, 5, 5, T]`.
pub fn stack_grids(cfg: &GrnConfig, grids: &[&Tensor]) -> Result<Tensor> {
    if grids.is_empty() {
        return Err(Error::shape("encoder input", "no trials"));
    }
    let g = cfg.grid();
    for grid in grids {
        match *grid.shape() {
            [h, w, t] => {
                if h != g {
                    return Err(Error::dim("encoder input", "height", g, h));
                }
                if w != g {
                    return Err(Error::dim("encoder input", "width", g, w));
                }
                if t != cfg.input_samples {
                    return Err(Error::dim("encoder input", "time", cfg.input_samples, t));
                }
            }
            ref s => return Err(Error::shape("encoder input", format!("expected 5×5×T, got {s:?}"))),
        }
    }
    let stacked = Tensor::stack(grids)?;
    stacked.reshape(&[grids.len(), 1, g, g, cfg.input_samples])
}

/// What the backward pass needs from a train-mode forward pass.
#[derive(Debug, Clone)]
pub struct EncoderCache {
    input: Tensor,
    bn: Vec<BnCache>,
    /// Post-ELU output of each layer.
    acts: Vec<Tensor>,
}

impl EncoderCache {
    /// Output shape of each of the three blocks, `[N, C, H, W, T]`.
    pub fn layer_shapes(&self) -> Vec<Vec<usize>> {
        self.acts.iter().map(|a| a.shape().to_vec()).collect()
    }

    /// Post-ELU output of block `layer` (0-based).
    pub fn activation(&self, layer: usize) -> &Tensor {
        &self.acts[layer]
    }
}

/// Result of a train-mode encoder pass.
#[derive(Debug, Clone)]
pub struct EncoderPass {
    /// `[N, G, C, T]`
    pub embeddings: Tensor,
    pub cache: EncoderCache,
    /// Batch statistics of the three BN layers.
    pub stats: Vec<BnStats>,
}

fn embedding_view(cfg: &GrnConfig, act: Tensor) -> Result<Tensor> {
    let s = cfg.shapes()?;
    let n = act.shape()[0];
    act.reshape(&[n, s.embedding_groups, s.embedding_channels, s.embedding_time])
}

impl EncoderParams {
    fn convs(&self) -> [&Tensor; 3] {
        [&self.conv1, &self.conv2, &self.conv3]
    }

    /// Train-mode pass: BN uses the statistics of this batch. Running
    /// statistics are left untouched; apply `stats` separately.
    pub fn forward_train(&self, cfg: &GrnConfig, input: &Tensor) -> Result<EncoderPass> {
        let specs = encoder_specs(cfg)?;
        let bns = [&self.bn1, &self.bn2, &self.bn3];
        let mut bn_caches = Vec::with_capacity(3);
        let mut acts: Vec<Tensor> = Vec::with_capacity(3);
        let mut stats = Vec::with_capacity(3);
        for l in 0..3 {
            let x = if l == 0 { input } else { &acts[l - 1] };
            let z = conv_forward(x, &specs[l], self.convs()[l], None)
                .map_err(|e| stage(e, l))?;
            let (y, cache, st) = bns[l].normalize_batch_owned(z)?;
            acts.push(elu_owned(y));
            bn_caches.push(cache);
            stats.push(st);
        }
        let embeddings = embedding_view(cfg, acts[2].clone())?;
        Ok(EncoderPass {
            embeddings,
            cache: EncoderCache {
                input: input.clone(),
                bn: bn_caches,
                acts,
            },
            stats,
        })
    }

    /// Eval-mode pass with running statistics; pure.
    pub fn forward_eval(&self, cfg: &GrnConfig, input: &Tensor) -> Result<Tensor> {
        let n = input.shape()[0];
        let per = input.len() / n;
        let mut out = Vec::new();
        let mut s0 = 0;
        while s0 < n {
            let cur = EVAL_CHUNK.min(n - s0);
            let mut shape = input.shape().to_vec();
            shape[0] = cur;
            let chunk = Tensor::from_vec(&shape, input.data()[s0 * per..(s0 + cur) * per].to_vec())?;
            out.extend_from_slice(self.eval_layers(cfg, &chunk, 3)?.data());
            s0 += cur;
        }
        let s = cfg.shapes()?;
        Tensor::from_vec(&[n, s.embedding_groups, s.embedding_channels, s.embedding_time], out)
    }

    /// Eval-mode output of the first `layers` blocks.
    pub fn eval_layers(&self, cfg: &GrnConfig, input: &Tensor, layers: usize) -> Result<Tensor> {
        let specs = encoder_specs(cfg)?;
        let bns = [&self.bn1, &self.bn2, &self.bn3];
        let mut x = input.clone();
        for l in 0..layers.min(3) {
            let z = conv_forward(&x, &specs[l], self.convs()[l], None).map_err(|e| stage(e, l))?;
            let (y, _) = bns[l].forward_eval_owned(z)?;
            x = elu_owned(y);
        }
        Ok(x)
    }

    /// Momentum update of the running statistics from a train-mode pass.
    pub fn update_running(&mut self, stats: &[BnStats]) {
        for (bn, st) in [&mut self.bn1, &mut self.bn2, &mut self.bn3].into_iter().zip(stats) {
            bn.update_running(st);
        }
    }

    /// Replace the running statistics with those of a train-mode pass.
    pub fn set_running(&mut self, stats: &[BnStats]) {
        for (bn, st) in [&mut self.bn1, &mut self.bn2, &mut self.bn3].into_iter().zip(stats) {
            bn.set_running(st);
        }
    }

    /// Accumulate parameter gradients given `d loss / d embeddings`.
    pub fn backward(&mut self, cfg: &GrnConfig, cache: &EncoderCache, grad: &Tensor) -> Result<()> {
        let specs = encoder_specs(cfg)?;
        let top = &cache.acts[2];
        if grad.len() != top.len() {
            return Err(Error::dim("encoder backward", "element", top.len(), grad.len()));
        }
        let mut g = grad.clone().reshape(top.shape())?;
        for l in (0..3).rev() {
            let gy = elu_backward_from_output_owned(&cache.acts[l], g)?;
            let bn = match l {
                0 => &mut self.bn1,
                1 => &mut self.bn2,
                _ => &mut self.bn3,
            };
            let bg = bn.backward_owned(&cache.bn[l], gy)?;
            bn.gamma.accumulate_grad(bg.gamma.data())?;
            bn.beta.accumulate_grad(bg.beta.data())?;
            let x = if l == 0 { &cache.input } else { &cache.acts[l - 1] };
            let w = self.convs()[l];
            let cg = conv_backward(&bg.input, x, &specs[l], w, l > 0)?;
            let w = match l {
                0 => &mut self.conv1,
                1 => &mut self.conv2,
                _ => &mut self.conv3,
            };
            w.accumulate_grad(cg.weights.data())?;
            match cg.input {
                Some(dx) => g = dx,
                None => break,
            }
        }
        Ok(())
    }
}

fn stage(e: Error, layer: usize) -> Error {
    match e {
        Error::Dimension { axis, expected, actual, .. } => Error::Dimension {
            context: format!("encoder layer {}", layer + 1),
            axis,
            expected,
            actual,
        },
        other => other,
    }
}
