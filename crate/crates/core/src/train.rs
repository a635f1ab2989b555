//! Few-shot training: sample a support set, then repeatedly score every
//! ordered pair of support trials, sum the squared errors against the
//! same-class indicator and take one Adam step per sweep.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{compute_prototypes, stack_grids, GrnConfig, GrnParams, Prototype};
use crate::rng::{derive_seed, SplitMix64};
use crate::tensor::{mse_pair_loss, mse_pair_loss_grad, AdamConfig, AdamState, Mode, Tensor};

/// Indices of the chosen support trials, class-major, `n` per class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SupportSet {
    pub n_shots: usize,
    pub n_classes: usize,
    pub indices: Vec<usize>,
}

impl SupportSet {
    /// Class of the `i`-th support trial.
    pub fn label(&self, i: usize) -> usize {
        i / self.n_shots
    }

    pub fn labels(&self) -> Vec<usize> {
        (0..self.indices.len()).map(|i| self.label(i)).collect()
    }

    /// Pairs per epoch, `(nK)²`.
    pub fn pair_count(&self) -> usize {
        self.indices.len() * self.indices.len()
    }
}

/// Draw `n` trials per class without replacement (partial Fisher–Yates
/// over each class's trials in dataset order). With `n` equal to the class
/// size the whole class is returned in dataset order.
pub fn sample_support(labels: &[usize], n_classes: usize, n: usize, seed: u64) -> Result<SupportSet> {
    if n == 0 {
        return Err(Error::Parameter("shots per class must be positive".into()));
    }
    let mut rng = SplitMix64::new(seed);
    let mut indices = Vec::with_capacity(n * n_classes);
    for k in 0..n_classes {
        let mut pool: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == k).collect();
        if pool.len() < n {
            return Err(Error::Protocol(format!(
                "class {k} has {} trials, {n} needed for the support set",
                pool.len()
            )));
        }
        if n == pool.len() {
            indices.extend(pool);
            continue;
        }
        for i in 0..n {
            let j = i + rng.below(pool.len() - i);
            pool.swap(i, j);
        }
        indices.extend_from_slice(&pool[..n]);
    }
    Ok(SupportSet {
        n_shots: n,
        n_classes,
        indices,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub max_epochs: usize,
    /// Stop once the mean pair loss drops below this.
    pub target_loss: f64,
    pub adam: AdamConfig,
    /// Divergence: loss above `divergence_factor` × initial loss ...
    pub divergence_factor: f64,
    /// ... for this many consecutive epochs.
    pub divergence_patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            max_epochs: 300,
            target_loss: 1e-3,
            adam: AdamConfig::default(),
            divergence_factor: 10.0,
            divergence_patience: 20,
        }
    }
}

/// Loss and side products of one forward/backward sweep over all pairs.
#[derive(Debug, Clone)]
pub struct Sweep {
    pub mean_loss: f64,
    pub scores: Vec<f64>,
    /// Train-mode prototypes of this sweep.
    pub prototypes: Vec<Prototype>,
}

fn all_pairs(n: usize) -> Vec<(usize, usize)> {
    (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).collect()
}

/// Forward every ordered support pair in train mode and accumulate into the
/// parameters' gradient buffers the gradient of `Σ_p weight_p · loss_p`
/// (all weights 1 gives the summed epoch loss). Running statistics are
/// updated with momentum when `update_running` is set.
pub fn accumulate_gradient(
    params: &mut GrnParams,
    input: &Tensor,
    labels: &[usize],
    weights: Option<&[f64]>,
    update_running: bool,
    epoch: usize,
) -> Result<Sweep> {
    let cfg = params.config.clone();
    let enc = params.encoder.forward_train(&cfg, input)?;
    let n = labels.len();
    let pairs = all_pairs(n);
    let rel = params
        .relation
        .score_pairs(&cfg, &enc.embeddings, &enc.embeddings, &pairs, Mode::Train)?;
    let mut total = 0.0;
    let mut dr = vec![0.0; pairs.len()];
    for (p, &(i, j)) in pairs.iter().enumerate() {
        let r = rel.scores[p];
        let same = labels[i] == labels[j];
        let loss = mse_pair_loss(r, same);
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!("loss at epoch {epoch}, pair ({i}, {j}): {loss}")));
        }
        total += loss;
        dr[p] = mse_pair_loss_grad(r, same) * weights.map_or(1.0, |w| w[p]);
    }
    let (dl, dright) = params.relation.backward(&cfg, &rel.cache, &dr)?;
    let mut demb = dl;
    demb.data_mut().iter_mut().zip(dright.data()).for_each(|(a, b)| *a += b);
    params.encoder.backward(&cfg, &enc.cache, &demb)?;
    if update_running {
        params.encoder.update_running(&enc.stats);
        params.relation.update_running(&rel.stats);
    }
    let prototypes = compute_prototypes(&enc.embeddings, labels, cfg.n_classes)?;
    Ok(Sweep {
        mean_loss: total / pairs.len() as f64,
        scores: rel.scores,
        prototypes,
    })
}

/// Summed pair loss with train-mode batch statistics. Pure.
pub fn support_loss(params: &GrnParams, input: &Tensor, labels: &[usize]) -> Result<f64> {
    let cfg = &params.config;
    let enc = params.encoder.forward_train(cfg, input)?;
    let pairs = all_pairs(labels.len());
    let rel = params
        .relation
        .score_pairs(cfg, &enc.embeddings, &enc.embeddings, &pairs, Mode::Train)?;
    Ok(pairs
        .iter()
        .zip(&rel.scores)
        .map(|(&(i, j), &r)| mse_pair_loss(r, labels[i] == labels[j]))
        .sum())
}

/// One epoch: full pair sweep, one Adam step on the summed gradient.
/// Returns the mean pair loss.
pub fn train_epoch(
    params: &mut GrnParams,
    adam: &mut AdamState,
    input: &Tensor,
    labels: &[usize],
    epoch: usize,
) -> Result<Sweep> {
    params.zero_grad();
    let sweep = accumulate_gradient(params, input, labels, None, true, epoch)?;
    let blocks: Vec<(String, &mut Tensor)> = params.learnable_mut();
    let mut views = Vec::with_capacity(blocks.len());
    for (name, t) in blocks {
        let (v, g) = t.data_and_grad();
        views.push((name, v, g));
    }
    adam.update(views.iter_mut().map(|(n, v, g)| (n.as_str(), &mut **v, &**g)))?;
    Ok(sweep)
}

/// Replace every BN running statistic with the batch statistics of the
/// support set under the current parameters, so eval-mode outputs on the
/// support equal the train-mode ones.
pub fn freeze_statistics(params: &mut GrnParams, input: &Tensor, n_trials: usize) -> Result<()> {
    let cfg = params.config.clone();
    let enc = params.encoder.forward_train(&cfg, input)?;
    let rel = params
        .relation
        .score_pairs(&cfg, &enc.embeddings, &enc.embeddings, &all_pairs(n_trials), Mode::Train)?;
    params.encoder.set_running(&enc.stats);
    params.relation.set_running(&rel.stats);
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    TargetLoss,
    MaxEpochs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean pair loss of each epoch (before its update).
    pub losses: Vec<f64>,
    pub final_loss: Option<f64>,
    pub epochs: usize,
    pub seed: u64,
    pub stop: StopReason,
    pub wall_time_s: f64,
    pub support: SupportSet,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub params: GrnParams,
    /// Eval-mode prototypes of the final parameters.
    pub prototypes: Vec<Prototype>,
    pub report: TrainReport,
}

/// Seed streams derived from the run seed.
fn support_seed(seed: u64) -> u64 {
    derive_seed(seed, 0x5u64)
}

fn init_seed(seed: u64) -> u64 {
    derive_seed(seed, 0x1u64)
}

/// Train from scratch on an `n`-shot support drawn from `grids`/`labels`.
pub fn fit(
    grids: &[&Tensor],
    labels: &[usize],
    n_shots: usize,
    config: &GrnConfig,
    train: &TrainConfig,
    seed: u64,
) -> Result<FitResult> {
    if grids.len() != labels.len() {
        return Err(Error::dim("fit", "trial", labels.len(), grids.len()));
    }
    let support = sample_support(labels, config.n_classes, n_shots, support_seed(seed))?;
    let chosen: Vec<&Tensor> = support.indices.iter().map(|&i| grids[i]).collect();
    fit_support(&chosen, support, config, train, seed)
}

/// Train on an explicit support set (`grids` in support order).
pub fn fit_support(
    grids: &[&Tensor],
    support: SupportSet,
    config: &GrnConfig,
    train: &TrainConfig,
    seed: u64,
) -> Result<FitResult> {
    let start = Instant::now();
    let labels = support.labels();
    let input = stack_grids(config, grids)?;
    let mut params = GrnParams::init(config, init_seed(seed))?;
    let mut adam = AdamState::new(train.adam);
    let mut losses = Vec::new();
    let mut stop = StopReason::MaxEpochs;
    let mut above = 0;
    for epoch in 0..train.max_epochs {
        let sweep = train_epoch(&mut params, &mut adam, &input, &labels, epoch)?;
        let loss = sweep.mean_loss;
        losses.push(loss);
        if loss > train.divergence_factor * losses[0] {
            above += 1;
            if above >= train.divergence_patience {
                return Err(Error::Divergence {
                    epoch,
                    loss,
                    initial: losses[0],
                });
            }
        } else {
            above = 0;
        }
        if loss < train.target_loss {
            stop = StopReason::TargetLoss;
            break;
        }
    }
    params.zero_grad();
    freeze_statistics(&mut params, &input, labels.len())?;
    let emb = params.encoder.forward_eval(config, &input)?;
    let prototypes = compute_prototypes(&emb, &labels, config.n_classes)?;
    Ok(FitResult {
        params,
        prototypes,
        report: TrainReport {
            final_loss: losses.last().copied(),
            epochs: losses.len(),
            losses,
            seed,
            stop,
            wall_time_s: start.elapsed().as_secs_f64(),
            support,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn support_sampling() {
        let labels: Vec<usize> = (0..150).map(|i| i / 50).collect();
        let s = sample_support(&labels, 3, 25, 11).unwrap();
        assert_eq!(s.indices.len(), 75);
        for k in 0..3 {
            let chunk = &s.indices[k * 25..(k + 1) * 25];
            assert!(chunk.iter().all(|&i| labels[i] == k));
            let mut c = chunk.to_vec();
            c.sort();
            c.dedup();
            assert_eq!(c.len(), 25);
        }
        assert_eq!(s, sample_support(&labels, 3, 25, 11).unwrap());
        assert_ne!(s, sample_support(&labels, 3, 25, 12).unwrap());
        let all = sample_support(&labels, 3, 50, 1).unwrap();
        assert_eq!(all.indices, (0..150).collect::<Vec<_>>());
        let err = sample_support(&labels, 3, 51, 1).unwrap_err().to_string();
        assert!(err.contains("class 0") && err.contains("50"), "{err}");
    }

    #[test]
    fn pair_counts() {
        let s = SupportSet { n_shots: 1, n_classes: 3, indices: vec![0, 1, 2] };
        assert_eq!(s.pair_count(), 9);
        let s = SupportSet { n_shots: 5, n_classes: 3, indices: (0..15).collect() };
        assert_eq!(s.pair_count(), 225);
        assert_eq!(s.labels()[5], 1);
    }
}
