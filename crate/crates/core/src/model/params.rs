use crate::error::Result;
use crate::rng::SplitMix64;
use crate::tensor::{BatchNorm, ConvSpec, Tensor};

use super::config::GrnConfig;

/// Convolution geometry of the three encoder layers.
pub fn encoder_specs(cfg: &GrnConfig) -> Result<[ConvSpec; 3]> {
    let s = cfg.shapes()?;
    let k = cfg.temporal_kernel;
    let g = cfg.grid();
    Ok([
        ConvSpec::dense(1, s.layer1_filters, [1, 1, k], [1, 1, 1])?,
        ConvSpec::depthwise(s.layer1_filters, cfg.depth_multiplier, [g, g, 1], [1, 1, 1])?,
        ConvSpec::depthwise(s.spatial_channels, 1, [1, 1, k], [1, 1, cfg.temporal_stride3])?,
    ])
}

/// Relation layer 1 on interleaved input: each group sees its `2c`
/// concatenated channels.
pub fn relation1_spec(cfg: &GrnConfig) -> Result<ConvSpec> {
    let s = cfg.shapes()?;
    ConvSpec::new(
        2 * s.embedding_channels * cfg.n_groups,
        s.relation_channels,
        [1, 1, cfg.relation_conv_kernel],
        [1, 1, 1],
        cfg.n_groups,
    )
}

/// Relation layer 1 applied to one side only (half of each group's filter).
pub fn relation1_half_spec(cfg: &GrnConfig) -> Result<ConvSpec> {
    let s = cfg.shapes()?;
    ConvSpec::new(
        s.embedding_channels * cfg.n_groups,
        s.relation_channels,
        [1, 1, cfg.relation_conv_kernel],
        [1, 1, 1],
        cfg.n_groups,
    )
}

/// Relation layer 2: dense across every compared group.
pub fn relation2_spec(cfg: &GrnConfig) -> Result<ConvSpec> {
    let s = cfg.shapes()?;
    ConvSpec::dense(
        s.relation_channels,
        s.relation_channels,
        [1, 1, cfg.relation_conv_kernel],
        [1, 1, 1],
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub conv1: Tensor,
    pub bn1: BatchNorm,
    pub conv2: Tensor,
    pub bn2: BatchNorm,
    pub conv3: Tensor,
    pub bn3: BatchNorm,
}

/// Each relation conv is followed either by batch norm (no conv bias, it
/// would be cancelled) or, with `relation_bn` off, by a plain bias.
#[derive(Debug, Clone, PartialEq)]
pub enum ConvNorm {
    Bn(BatchNorm),
    Bias(Tensor),
}

impl ConvNorm {
    pub fn bn(&self) -> Option<&BatchNorm> {
        match self {
            ConvNorm::Bn(b) => Some(b),
            ConvNorm::Bias(_) => None,
        }
    }

    pub fn bn_mut(&mut self) -> Option<&mut BatchNorm> {
        match self {
            ConvNorm::Bn(b) => Some(b),
            ConvNorm::Bias(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelationParams {
    pub conv1: Tensor,
    pub norm1: ConvNorm,
    pub conv2: Tensor,
    pub norm2: ConvNorm,
    pub fc1_w: Tensor,
    pub fc1_b: Tensor,
    pub fc2_w: Tensor,
    pub fc2_b: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GrnParams {
    pub config: GrnConfig,
    pub encoder: EncoderParams,
    pub relation: RelationParams,
}

fn he_normal(shape: &[usize], fan_in: usize, rng: &mut SplitMix64) -> Tensor {
    let std = (2.0 / fan_in as f64).sqrt();
    let mut t = Tensor::zeros(shape);
    t.data_mut().iter_mut().for_each(|v| *v = std * rng.normal());
    t
}

fn conv_weights(spec: &ConvSpec, rng: &mut SplitMix64) -> Tensor {
    he_normal(&spec.weight_shape(), spec.fan_in(), rng)
}

impl GrnParams {
    /// He-normal weights, zero biases, unit BN scale. Deterministic in `seed`.
    pub fn init(config: &GrnConfig, seed: u64) -> Result<Self> {
        let s = config.shapes()?;
        let mut rng = SplitMix64::new(seed);
        let [e1, e2, e3] = encoder_specs(config)?;
        let encoder = EncoderParams {
            conv1: conv_weights(&e1, &mut rng),
            bn1: BatchNorm::new(e1.out_channels),
            conv2: conv_weights(&e2, &mut rng),
            bn2: BatchNorm::new(e2.out_channels),
            conv3: conv_weights(&e3, &mut rng),
            bn3: BatchNorm::new(e3.out_channels),
        };
        let r1 = relation1_spec(config)?;
        let r2 = relation2_spec(config)?;
        let rc = s.relation_channels;
        let norm = |c: usize| {
            if config.relation_bn {
                ConvNorm::Bn(BatchNorm::new(c))
            } else {
                ConvNorm::Bias(Tensor::zeros(&[c]))
            }
        };
        let relation = RelationParams {
            conv1: conv_weights(&r1, &mut rng),
            norm1: norm(rc),
            conv2: conv_weights(&r2, &mut rng),
            norm2: norm(rc),
            fc1_w: he_normal(&[config.fc_hidden, rc], rc, &mut rng),
            fc1_b: Tensor::zeros(&[config.fc_hidden]),
            fc2_w: he_normal(&[1, config.fc_hidden], config.fc_hidden, &mut rng),
            fc2_b: Tensor::zeros(&[1]),
        };
        Ok(GrnParams {
            config: config.clone(),
            encoder,
            relation,
        })
    }

    /// Every trainable tensor with a stable name, in a fixed order.
    pub fn learnable(&self) -> Vec<(String, &Tensor)> {
        let e = &self.encoder;
        let r = &self.relation;
        let mut out: Vec<(String, &Tensor)> = vec![
            ("enc.conv1.w".into(), &e.conv1),
            ("enc.bn1.gamma".into(), &e.bn1.gamma),
            ("enc.bn1.beta".into(), &e.bn1.beta),
            ("enc.conv2.w".into(), &e.conv2),
            ("enc.bn2.gamma".into(), &e.bn2.gamma),
            ("enc.bn2.beta".into(), &e.bn2.beta),
            ("enc.conv3.w".into(), &e.conv3),
            ("enc.bn3.gamma".into(), &e.bn3.gamma),
            ("enc.bn3.beta".into(), &e.bn3.beta),
        ];
        for (i, (w, norm)) in [(&r.conv1, &r.norm1), (&r.conv2, &r.norm2)].into_iter().enumerate() {
            out.push((format!("rel.conv{}.w", i + 1), w));
            match norm {
                ConvNorm::Bn(bn) => {
                    out.push((format!("rel.bn{}.gamma", i + 1), &bn.gamma));
                    out.push((format!("rel.bn{}.beta", i + 1), &bn.beta));
                }
                ConvNorm::Bias(b) => out.push((format!("rel.conv{}.b", i + 1), b)),
            }
        }
        out.extend([
            ("rel.fc1.w".into(), &r.fc1_w),
            ("rel.fc1.b".into(), &r.fc1_b),
            ("rel.fc2.w".into(), &r.fc2_w),
            ("rel.fc2.b".into(), &r.fc2_b),
        ]);
        out
    }

    /// Mutable counterpart of [`GrnParams::learnable`], same order.
    pub fn learnable_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let e = &mut self.encoder;
        let r = &mut self.relation;
        let mut out: Vec<(String, &mut Tensor)> = vec![
            ("enc.conv1.w".into(), &mut e.conv1),
            ("enc.bn1.gamma".into(), &mut e.bn1.gamma),
            ("enc.bn1.beta".into(), &mut e.bn1.beta),
            ("enc.conv2.w".into(), &mut e.conv2),
            ("enc.bn2.gamma".into(), &mut e.bn2.gamma),
            ("enc.bn2.beta".into(), &mut e.bn2.beta),
            ("enc.conv3.w".into(), &mut e.conv3),
            ("enc.bn3.gamma".into(), &mut e.bn3.gamma),
            ("enc.bn3.beta".into(), &mut e.bn3.beta),
        ];
        for (i, (w, norm)) in [(&mut r.conv1, &mut r.norm1), (&mut r.conv2, &mut r.norm2)]
            .into_iter()
            .enumerate()
        {
            out.push((format!("rel.conv{}.w", i + 1), w));
            match norm {
                ConvNorm::Bn(bn) => {
                    out.push((format!("rel.bn{}.gamma", i + 1), &mut bn.gamma));
                    out.push((format!("rel.bn{}.beta", i + 1), &mut bn.beta));
                }
                ConvNorm::Bias(b) => out.push((format!("rel.conv{}.b", i + 1), b)),
            }
        }
        out.extend([
            ("rel.fc1.w".into(), &mut r.fc1_w),
            ("rel.fc1.b".into(), &mut r.fc1_b),
            ("rel.fc2.w".into(), &mut r.fc2_w),
            ("rel.fc2.b".into(), &mut r.fc2_b),
        ]);
        out
    }

    /// Every batch-norm layer, encoder first.
    pub fn batch_norms(&self) -> Vec<(&'static str, &BatchNorm)> {
        let mut out = vec![
            ("enc.bn1", &self.encoder.bn1),
            ("enc.bn2", &self.encoder.bn2),
            ("enc.bn3", &self.encoder.bn3),
        ];
        if let Some(bn) = self.relation.norm1.bn() {
            out.push(("rel.bn1", bn));
        }
        if let Some(bn) = self.relation.norm2.bn() {
            out.push(("rel.bn2", bn));
        }
        out
    }

    pub fn batch_norms_mut(&mut self) -> Vec<(&'static str, &mut BatchNorm)> {
        let mut out = vec![
            ("enc.bn1", &mut self.encoder.bn1),
            ("enc.bn2", &mut self.encoder.bn2),
            ("enc.bn3", &mut self.encoder.bn3),
        ];
        if let Some(bn) = self.relation.norm1.bn_mut() {
            out.push(("rel.bn1", bn));
        }
        if let Some(bn) = self.relation.norm2.bn_mut() {
            out.push(("rel.bn2", bn));
        }
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.learnable().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        for (_, t) in self.learnable_mut() {
            t.take_grad();
        }
    }

    /// All learnable values concatenated in [`GrnParams::learnable`] order.
    pub fn flat_values(&self) -> Vec<f64> {
        self.learnable().iter().flat_map(|(_, t)| t.data().iter().copied()).collect()
    }

    /// Accumulated gradients in the same layout (zeros where none).
    pub fn flat_grads(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.parameter_count());
        for (_, t) in self.learnable() {
            match t.grad() {
                Some(g) => out.extend_from_slice(g),
                None => out.extend(std::iter::repeat(0.0).take(t.len())),
            }
        }
        out
    }

    /// Overwrite learnable values from a flat vector.
    pub fn set_flat_values(&mut self, values: &[f64]) -> Result<()> {
        let total = self.parameter_count();
        if values.len() != total {
            return Err(crate::error::Error::dim("flat parameters", "element", total, values.len()));
        }
        let mut at = 0;
        for (_, t) in self.learnable_mut() {
            let n = t.len();
            t.data_mut().copy_from_slice(&values[at..at + n]);
            at += n;
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.learnable().iter().all(|(_, t)| t.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_are_unique_and_orders_agree() {
        for bn in [true, false] {
            let cfg = GrnConfig { relation_bn: bn, ..GrnConfig::compact() };
            let mut p = GrnParams::init(&cfg, 1).unwrap();
            let a: Vec<String> = p.learnable().into_iter().map(|(n, _)| n).collect();
            let b: Vec<String> = p.learnable_mut().into_iter().map(|(n, _)| n).collect();
            assert_eq!(a, b);
            let mut sorted = a.clone();
            sorted.sort();
            sorted.dedup();
            assert_eq!(sorted.len(), a.len());
        }
    }

    #[test]
    fn default_weight_shapes() {
        let p = GrnParams::init(&GrnConfig::default(), 0).unwrap();
        assert_eq!(p.encoder.conv1.shape(), &[36, 1, 1, 1, 65]);
        assert_eq!(p.encoder.conv2.shape(), &[72, 1, 5, 5, 1]);
        assert_eq!(p.encoder.conv3.shape(), &[72, 1, 1, 1, 65]);
        assert_eq!(p.relation.conv1.shape(), &[288, 16, 1, 1, 10]);
        assert_eq!(p.relation.conv2.shape(), &[288, 288, 1, 1, 10]);
        assert_eq!(p.relation.fc1_w.shape(), &[8, 288]);
        assert_eq!(p.relation.fc2_w.shape(), &[1, 8]);
    }

    #[test]
    fn init_is_seeded() {
        let cfg = GrnConfig::compact();
        let a = GrnParams::init(&cfg, 3).unwrap();
        assert_eq!(a, GrnParams::init(&cfg, 3).unwrap());
        assert_ne!(a.flat_values(), GrnParams::init(&cfg, 4).unwrap().flat_values());
    }

    #[test]
    fn flat_round_trip() {
        let mut p = GrnParams::init(&GrnConfig::compact(), 9).unwrap();
        let mut v = p.flat_values();
        v.iter_mut().for_each(|x| *x *= 2.0);
        p.set_flat_values(&v).unwrap();
        assert_eq!(p.flat_values(), v);
        assert!(p.set_flat_values(&v[1..]).is_err());
    }
}
