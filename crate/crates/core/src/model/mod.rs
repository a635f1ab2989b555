//! The gradual relation network: encoder, prototypes, relation module and
//! softmax prediction.

mod checkpoint;
mod config;
mod encoder;
mod params;
mod relation;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointMeta};
pub use config::{GrnConfig, Shapes};
pub use encoder::{stack_grids, EncoderCache, EncoderPass};
pub use params::{
    encoder_specs, relation1_half_spec, relation1_spec, relation2_spec, ConvNorm, EncoderParams, GrnParams,
    RelationParams,
};
pub use relation::{interleave_groups, RelationCache, RelationPass, RelationShapes};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{softmax, Mode, Tensor};

/// Mean support embedding of one class, `[G, C, T]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Prototype {
    pub class_id: usize,
    pub embedding: Tensor,
}

/// Per-class means of `[N, G, C, T]` embeddings. Sums run in trial order,
/// so the result does not depend on anything but the inputs.
pub fn compute_prototypes(embeddings: &Tensor, labels: &[usize], n_classes: usize) -> Result<Vec<Prototype>> {
    let n = embeddings.shape().first().copied().unwrap_or(0);
    if n != labels.len() {
        return Err(Error::dim("prototypes", "trial", labels.len(), n));
    }
    let per = embeddings.len() / n.max(1);
    let item_shape = &embeddings.shape()[1..];
    let mut out = Vec::with_capacity(n_classes);
    for k in 0..n_classes {
        let members: Vec<usize> = (0..n).filter(|&i| labels[i] == k).collect();
        if members.is_empty() {
            return Err(Error::Protocol(format!("class {k} has no support trials")));
        }
        let mut sum = vec![0.0; per];
        for &i in &members {
            sum.iter_mut().zip(embeddings.sample(i)).for_each(|(s, v)| *s += v);
        }
        let inv = members.len() as f64;
        sum.iter_mut().for_each(|s| *s /= inv);
        out.push(Prototype {
            class_id: k,
            embedding: Tensor::from_vec(item_shape, sum)?,
        });
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= n_classes) {
        return Err(Error::Protocol(format!("label {bad} outside {n_classes} classes")));
    }
    Ok(out)
}

/// A classification: softmax of the per-class relation scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub class: usize,
    pub probabilities: Vec<f64>,
    pub scores: Vec<f64>,
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

impl Prediction {
    pub fn from_scores(scores: Vec<f64>) -> Prediction {
        let probabilities = softmax(&scores);
        Prediction {
            class: argmax(&probabilities),
            probabilities,
            scores,
        }
    }
}

fn check_prototypes(prototypes: &[Prototype], n_classes: usize) -> Result<()> {
    for k in 0..n_classes {
        if !prototypes.iter().any(|p| p.class_id == k) {
            return Err(Error::Protocol(format!("no prototype for class {k}")));
        }
    }
    Ok(())
}

impl GrnParams {
    /// Embed one `[5, 5, T]` grid. Eval mode uses running statistics; train
    /// mode normalizes with this single trial's statistics.
    pub fn encode(&self, grid: &Tensor, mode: Mode) -> Result<Tensor> {
        let x = stack_grids(&self.config, &[grid])?;
        let emb = match mode {
            Mode::Eval => self.encoder.forward_eval(&self.config, &x)?,
            Mode::Train => self.encoder.forward_train(&self.config, &x)?.embeddings,
        };
        let shape = emb.shape()[1..].to_vec();
        emb.reshape(&shape)
    }

    /// Eval-mode embeddings `[N, G, C, T]` for a batch of grids.
    pub fn encode_batch(&self, grids: &[&Tensor]) -> Result<Tensor> {
        let x = stack_grids(&self.config, grids)?;
        self.encoder.forward_eval(&self.config, &x)
    }

    /// Single (query, prototype) relation score; see
    /// [`RelationParams::relation_score`].
    pub fn relation_score(&self, query: &Tensor, proto: &Prototype, mode: Mode) -> Result<f64> {
        self.relation.relation_score(&self.config, query, &proto.embedding, mode)
    }

    /// Eval-mode relation scores `[Q][K]` of query embeddings against prototypes.
    pub fn score_embeddings(&self, queries: &Tensor, prototypes: &[Prototype]) -> Result<Vec<Vec<f64>>> {
        let k = self.config.n_classes;
        check_prototypes(prototypes, k)?;
        let ordered: Vec<&Tensor> = (0..k)
            .map(|c| &prototypes.iter().find(|p| p.class_id == c).expect("checked").embedding)
            .collect();
        let protos = Tensor::stack(&ordered)?;
        let q = if queries.rank() == 3 {
            let mut s = vec![1];
            s.extend_from_slice(queries.shape());
            queries.clone().reshape(&s)?
        } else {
            queries.clone()
        };
        let nq = q.shape()[0];
        let pairs: Vec<(usize, usize)> = (0..nq).flat_map(|i| (0..k).map(move |j| (i, j))).collect();
        let pass = self.relation.score_pairs(&self.config, &q, &protos, &pairs, Mode::Eval)?;
        Ok(pass.scores.chunks(k).map(<[f64]>::to_vec).collect())
    }

    pub fn predict(&self, grid: &Tensor, prototypes: &[Prototype]) -> Result<Prediction> {
        Ok(self.predict_batch(&[grid], prototypes)?.remove(0))
    }

    pub fn predict_batch(&self, grids: &[&Tensor], prototypes: &[Prototype]) -> Result<Vec<Prediction>> {
        check_prototypes(prototypes, self.config.n_classes)?;
        let emb = self.encode_batch(grids)?;
        Ok(self
            .score_embeddings(&emb, prototypes)?
            .into_iter()
            .map(Prediction::from_scores)
            .collect())
    }
}
