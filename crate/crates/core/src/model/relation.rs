//! Relation module: group-wise comparison of a query embedding with a
//! prototype, then a dense combination of all compared groups down to one
//! score in (0, 1).
//!
//! Two routes compute the first layer. [`RelationParams::score_pairs`]
//! splits each group's filter into the half that sees the query channels and
//! the half that sees the prototype channels, convolves each side once, and
//! adds the halves per pair; this is what training uses, since a support set
//! of `N` trials yields `N²` pairs but only `N` distinct inputs per side.
//! [`RelationParams::relation_score`] interleaves explicitly and runs the
//! full grouped convolution, matching the textbook description one pair at a
//! time.

use crate::error::{Error, Result};
use crate::tensor::{
    avg_pool_time, avg_pool_time_backward, conv_backward, conv_forward, dense, dense_backward,
    elu_backward_from_output_owned, elu_owned, global_avg_pool, global_avg_pool_backward, sigmoid, sigmoid_backward,
    BnCache, BnStats, Mode, Tensor,
};

use super::config::GrnConfig;
use super::params::{relation1_half_spec, relation1_spec, relation2_spec, ConvNorm, RelationParams};

/// Concatenate two embeddings group by group: output group `g` holds the
/// channels of `a`'s group `g` followed by those of `b`'s group `g`.
/// Accepts `[G, C, T]` or batched `[N, G, C, T]`.
pub fn interleave_groups(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.shape() != b.shape() {
        return Err(Error::shape(
            "interleave groups",
            format!("{:?} vs {:?}", a.shape(), b.shape()),
        ));
    }
    let (n, g, c, t) = match *a.shape() {
        [g, c, t] => (1, g, c, t),
        [n, g, c, t] => (n, g, c, t),
        ref s => return Err(Error::shape("interleave groups", format!("expected [G, C, T], got {s:?}"))),
    };
    let block = c * t;
    let mut out = Vec::with_capacity(2 * a.len());
    for i in 0..n {
        for grp in 0..g {
            let at = (i * g + grp) * block;
            out.extend_from_slice(&a.data()[at..at + block]);
            out.extend_from_slice(&b.data()[at..at + block]);
        }
    }
    let mut shape = a.shape().to_vec();
    let rank = shape.len();
    shape[rank - 2] = 2 * c;
    Tensor::from_vec(&shape, out)
}

/// Intermediate extents of one relation pass.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelationShapes {
    /// After the grouped first conv, `[P, R, 1, 1, T]`.
    pub layer1: Vec<usize>,
    pub pooled: Vec<usize>,
    /// Before global average pooling.
    pub pre_gap: Vec<usize>,
    pub gap: Vec<usize>,
}

#[derive(Debug, Clone)]
struct HeadCache {
    bn1: Option<BnCache>,
    y1: Tensor,
    pooled: Tensor,
    bn2: Option<BnCache>,
    y2: Tensor,
    v: Tensor,
    h: Tensor,
    r: Vec<f64>,
}

#[derive(Debug, Clone)]
struct HeadOut {
    cache: HeadCache,
    stats: Vec<BnStats>,
}

/// Everything the backward pass of [`RelationParams::score_pairs`] needs.
#[derive(Debug, Clone)]
pub struct RelationCache {
    left: Tensor,
    right: Tensor,
    pairs: Vec<(usize, usize)>,
    head: HeadCache,
}

impl RelationCache {
    pub fn shapes(&self) -> RelationShapes {
        self.head.shapes()
    }
}

impl HeadCache {
    fn shapes(&self) -> RelationShapes {
        RelationShapes {
            layer1: self.y1.shape().to_vec(),
            pooled: self.pooled.shape().to_vec(),
            pre_gap: self.y2.shape().to_vec(),
            gap: self.v.shape().to_vec(),
        }
    }
}

/// Output of a relation pass over a list of pairs.
#[derive(Debug, Clone)]
pub struct RelationPass {
    pub scores: Vec<f64>,
    pub cache: RelationCache,
    /// Batch statistics of the relation BN layers (train mode only).
    pub stats: Vec<BnStats>,
}

fn add_channel_bias(z: &mut Tensor, bias: &Tensor) {
    let c = bias.len();
    let r = z.len() / (z.shape()[0] * c);
    for (k, chunk) in z.data_mut().chunks_mut(r).enumerate() {
        let b = bias.data()[k % c];
        chunk.iter_mut().for_each(|v| *v += b);
    }
}

fn normalize(norm: &ConvNorm, z: Tensor, mode: Mode, stats: &mut Vec<BnStats>) -> Result<(Tensor, Option<BnCache>)> {
    match norm {
        ConvNorm::Bn(bn) => match mode {
            Mode::Train => {
                let (y, cache, st) = bn.normalize_batch_owned(z)?;
                stats.push(st);
                Ok((y, Some(cache)))
            }
            Mode::Eval => {
                let (y, cache) = bn.forward_eval_owned(z)?;
                Ok((y, Some(cache)))
            }
        },
        ConvNorm::Bias(b) => {
            let mut z = z;
            add_channel_bias(&mut z, b);
            Ok((z, None))
        }
    }
}

/// Backward through a [`ConvNorm`], accumulating its parameter gradients.
fn normalize_backward(norm: &mut ConvNorm, cache: Option<&BnCache>, grad: Tensor) -> Result<Tensor> {
    match (norm, cache) {
        (ConvNorm::Bn(bn), Some(c)) => {
            let g = bn.backward_owned(c, grad)?;
            bn.gamma.accumulate_grad(g.gamma.data())?;
            bn.beta.accumulate_grad(g.beta.data())?;
            Ok(g.input)
        }
        (ConvNorm::Bias(b), None) => {
            let c = b.len();
            let r = grad.len() / (grad.shape()[0] * c);
            let mut db = vec![0.0; c];
            for (k, chunk) in grad.data().chunks(r).enumerate() {
                db[k % c] += chunk.iter().sum::<f64>();
            }
            b.accumulate_grad(&db)?;
            Ok(grad)
        }
        _ => Err(Error::shape("relation backward", "cache does not match normalization layers")),
    }
}

fn stage(e: Error, name: &str) -> Error {
    match e {
        Error::Dimension { axis, expected, actual, .. } => Error::Dimension {
            context: name.to_string(),
            axis,
            expected,
            actual,
        },
        Error::Shape { message, .. } => Error::Shape {
            context: name.to_string(),
            message,
        },
        other => other,
    }
}

/// View `[N, G, C, T]` embeddings as conv input `[N, G·C, 1, 1, T]`.
fn as_conv_input(cfg: &GrnConfig, emb: &Tensor, what: &str) -> Result<Tensor> {
    let s = cfg.shapes()?;
    let want = [s.embedding_groups, s.embedding_channels, s.embedding_time];
    let (n, dims) = match *emb.shape() {
        [g, c, t] => (1, [g, c, t]),
        [n, g, c, t] => (n, [g, c, t]),
        ref sh => return Err(Error::shape(what, format!("expected [G, C, T] embeddings, got {sh:?}"))),
    };
    for (axis, (&w, &d)) in ["group", "channel", "time"].iter().zip(want.iter().zip(&dims)) {
        if w != d {
            return Err(Error::dim(what, *axis, w, d));
        }
    }
    emb.clone().reshape(&[n, dims[0] * dims[1], 1, 1, dims[2]])
}

impl RelationParams {
    /// Split layer-1 filters into the query half and the prototype half.
    fn split_conv1(&self, cfg: &GrnConfig) -> Result<(Tensor, Tensor)> {
        let spec = relation1_half_spec(cfg)?;
        let half = spec.fan_in();
        let mut wa = Vec::with_capacity(spec.out_channels * half);
        let mut wb = Vec::with_capacity(spec.out_channels * half);
        for row in self.conv1.data().chunks(2 * half) {
            wa.extend_from_slice(&row[..half]);
            wb.extend_from_slice(&row[half..]);
        }
        let shape = spec.weight_shape();
        Ok((Tensor::from_vec(&shape, wa)?, Tensor::from_vec(&shape, wb)?))
    }

    /// Everything after the first convolution, starting from its output
    /// (biasless when BN follows).
    fn head(&self, cfg: &GrnConfig, z1: Tensor, mode: Mode) -> Result<HeadOut> {
        let mut stats = Vec::new();
        let (y, bn1) = normalize(&self.norm1, z1, mode, &mut stats)?;
        let y1 = elu_owned(y);
        let pooled = avg_pool_time(&y1, cfg.pool_window, cfg.pool_stride).map_err(|e| stage(e, "relation pooling"))?;
        let spec2 = relation2_spec(cfg)?;
        let z2 = conv_forward(&pooled, &spec2, &self.conv2, None).map_err(|e| stage(e, "relation layer 2"))?;
        let (y, bn2) = normalize(&self.norm2, z2, mode, &mut stats)?;
        let y2 = elu_owned(y);
        let v = global_avg_pool(&y2)?;
        let h = elu_owned(dense(&v, &self.fc1_w, &self.fc1_b).map_err(|e| stage(e, "relation fc1"))?);
        let o = dense(&h, &self.fc2_w, &self.fc2_b).map_err(|e| stage(e, "relation fc2"))?;
        let r = o.data().iter().map(|&x| sigmoid(x)).collect();
        Ok(HeadOut {
            cache: HeadCache { bn1, y1, pooled, bn2, y2, v, h, r },
            stats,
        })
    }

    /// Backward through [`Self::head`]; returns `d loss / d z1`.
    fn head_backward(&mut self, cfg: &GrnConfig, cache: &HeadCache, dr: &[f64]) -> Result<Tensor> {
        let p = cache.r.len();
        if dr.len() != p {
            return Err(Error::dim("relation backward", "pair", p, dr.len()));
        }
        let ds: Vec<f64> = cache.r.iter().zip(dr).map(|(&r, &g)| sigmoid_backward(r, g)).collect();
        let ds = Tensor::from_vec(&[p, 1], ds)?;
        let g2 = dense_backward(&ds, &cache.h, &self.fc2_w)?;
        self.fc2_w.accumulate_grad(g2.weights.data())?;
        self.fc2_b.accumulate_grad(g2.bias.data())?;
        let dh = elu_backward_from_output_owned(&cache.h, g2.input)?;
        let g1 = dense_backward(&dh, &cache.v, &self.fc1_w)?;
        self.fc1_w.accumulate_grad(g1.weights.data())?;
        self.fc1_b.accumulate_grad(g1.bias.data())?;
        let dy2 = global_avg_pool_backward(cache.y2.shape(), &g1.input)?;
        let dz2 = elu_backward_from_output_owned(&cache.y2, dy2)?;
        let dz2 = normalize_backward(&mut self.norm2, cache.bn2.as_ref(), dz2)?;
        let spec2 = relation2_spec(cfg)?;
        let cg = conv_backward(&dz2, &cache.pooled, &spec2, &self.conv2, true)?;
        self.conv2.accumulate_grad(cg.weights.data())?;
        let dpooled = cg.input.expect("input gradient requested");
        let dy1 = avg_pool_time_backward(cache.y1.shape(), &dpooled, cfg.pool_window, cfg.pool_stride)?;
        let dz1 = elu_backward_from_output_owned(&cache.y1, dy1)?;
        normalize_backward(&mut self.norm1, cache.bn1.as_ref(), dz1)
    }

    /// Scores for `(left[i], right[j])` pairs. `left` and `right` are
    /// `[A, G, C, T]` and `[B, G, C, T]`; `left` takes the query slot.
    /// In train mode BN uses statistics over all listed pairs.
    pub fn score_pairs(
        &self,
        cfg: &GrnConfig,
        left: &Tensor,
        right: &Tensor,
        pairs: &[(usize, usize)],
        mode: Mode,
    ) -> Result<RelationPass> {
        if pairs.is_empty() {
            return Err(Error::shape("relation module", "no pairs to score"));
        }
        let left = as_conv_input(cfg, left, "relation input (query)")?;
        let right = as_conv_input(cfg, right, "relation input (prototype)")?;
        let (na, nb) = (left.shape()[0], right.shape()[0]);
        if let Some(&(i, j)) = pairs.iter().find(|&&(i, j)| i >= na || j >= nb) {
            return Err(Error::shape("relation module", format!("pair ({i}, {j}) out of range {na}×{nb}")));
        }
        let half = relation1_half_spec(cfg)?;
        let (wa, wb) = self.split_conv1(cfg)?;
        let pa = conv_forward(&left, &half, &wa, None).map_err(|e| stage(e, "relation layer 1"))?;
        let pb = conv_forward(&right, &half, &wb, None).map_err(|e| stage(e, "relation layer 1"))?;
        let per = pa.len() / na;
        let mut shape = pa.shape().to_vec();
        shape[0] = pairs.len();
        let mut z1 = Tensor::zeros(&shape);
        for (p, &(i, j)) in pairs.iter().enumerate() {
            let a = pa.sample(i);
            let b = pb.sample(j);
            for ((z, x), y) in z1.sample_mut(p).iter_mut().zip(a).zip(b) {
                *z = x + y;
            }
        }
        debug_assert_eq!(per, z1.len() / pairs.len());
        let head = self.head(cfg, z1, mode)?;
        Ok(RelationPass {
            scores: head.cache.r.clone(),
            cache: RelationCache {
                left,
                right,
                pairs: pairs.to_vec(),
                head: head.cache,
            },
            stats: head.stats,
        })
    }

    /// Accumulate parameter gradients from `d loss / d r` per pair and return
    /// the gradients with respect to the left and right embeddings.
    pub fn backward(&mut self, cfg: &GrnConfig, cache: &RelationCache, dr: &[f64]) -> Result<(Tensor, Tensor)> {
        let dz1 = self.head_backward(cfg, &cache.head, dr)?;
        let (na, nb) = (cache.left.shape()[0], cache.right.shape()[0]);
        let per = dz1.len() / cache.pairs.len();
        let mut shape = dz1.shape().to_vec();
        shape[0] = na;
        let mut dpa = Tensor::zeros(&shape);
        shape[0] = nb;
        let mut dpb = Tensor::zeros(&shape);
        for (p, &(i, j)) in cache.pairs.iter().enumerate() {
            let g = &dz1.data()[p * per..(p + 1) * per];
            dpa.sample_mut(i).iter_mut().zip(g).for_each(|(d, v)| *d += v);
            dpb.sample_mut(j).iter_mut().zip(g).for_each(|(d, v)| *d += v);
        }
        let half = relation1_half_spec(cfg)?;
        let (wa, wb) = self.split_conv1(cfg)?;
        let ga = conv_backward(&dpa, &cache.left, &half, &wa, true)?;
        let gb = conv_backward(&dpb, &cache.right, &half, &wb, true)?;
        let k = half.fan_in();
        let mut dw = Vec::with_capacity(self.conv1.len());
        for (a, b) in ga.weights.data().chunks(k).zip(gb.weights.data().chunks(k)) {
            dw.extend_from_slice(a);
            dw.extend_from_slice(b);
        }
        self.conv1.accumulate_grad(&dw)?;
        let s = cfg.shapes()?;
        let emb = |t: Tensor| {
            let n = t.shape()[0];
            t.reshape(&[n, s.embedding_groups, s.embedding_channels, s.embedding_time])
        };
        Ok((emb(ga.input.expect("requested"))?, emb(gb.input.expect("requested"))?))
    }

    /// Score of one (query, prototype) pair via explicit interleaving and the
    /// full grouped convolution. Pure in both modes; in train mode BN
    /// statistics come from this single pair.
    pub fn relation_score(&self, cfg: &GrnConfig, query: &Tensor, proto: &Tensor, mode: Mode) -> Result<f64> {
        Ok(self.relation_trace(cfg, query, proto, mode)?.0)
    }

    /// [`Self::relation_score`] plus the intermediate extents.
    pub fn relation_trace(
        &self,
        cfg: &GrnConfig,
        query: &Tensor,
        proto: &Tensor,
        mode: Mode,
    ) -> Result<(f64, RelationShapes)> {
        let q = as_conv_input(cfg, query, "relation input (query)")?;
        let p = as_conv_input(cfg, proto, "relation input (prototype)")?;
        if q.shape()[0] != 1 || p.shape()[0] != 1 {
            return Err(Error::shape("relation score", "expects a single query and prototype"));
        }
        let s = cfg.shapes()?;
        let dims = [1, s.embedding_groups, s.embedding_channels, s.embedding_time];
        let joined = interleave_groups(&q.reshape(&dims)?, &p.reshape(&dims)?)?;
        let x = joined.reshape(&[1, 2 * s.embedding_channels * s.embedding_groups, 1, 1, s.embedding_time])?;
        let spec = relation1_spec(cfg)?;
        let z1 = conv_forward(&x, &spec, &self.conv1, None).map_err(|e| stage(e, "relation layer 1"))?;
        let head = self.head(cfg, z1, mode)?;
        Ok((head.cache.r[0], head.cache.shapes()))
    }

    /// Momentum update of relation BN running statistics.
    pub fn update_running(&mut self, stats: &[BnStats]) {
        let mut it = stats.iter();
        for norm in [&mut self.norm1, &mut self.norm2] {
            if let (Some(bn), Some(st)) = (norm.bn_mut(), it.next()) {
                bn.update_running(st);
            }
        }
    }

    pub fn set_running(&mut self, stats: &[BnStats]) {
        let mut it = stats.iter();
        for norm in [&mut self.norm1, &mut self.norm2] {
            if let (Some(bn), Some(st)) = (norm.bn_mut(), it.next()) {
                bn.set_running(st);
            }
        }
    }
}
