#![allow(dead_code)]

use grn::model::GrnConfig;
use grn::rng::SplitMix64;
use grn::tensor::Tensor;

/// Two groups, 100 samples, kernels shrunk so every stage keeps a few
/// time steps: 100 → 92 → 28 → 25 → 12 → 9.
pub fn reduced_config() -> GrnConfig {
    GrnConfig {
        n_groups: 2,
        channels_per_group: 2,
        input_samples: 100,
        temporal_kernel: 9,
        temporal_stride3: 3,
        relation_conv_kernel: 4,
        relation_channels_per_group: 4,
        fc_hidden: 4,
        ..GrnConfig::default()
    }
}

pub fn random_tensor(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = SplitMix64::new(seed);
    let mut t = Tensor::zeros(shape);
    t.data_mut().iter_mut().for_each(|v| *v = rng.normal());
    t
}

pub fn random_grids(n: usize, samples: usize, seed: u64) -> Vec<Tensor> {
    (0..n).map(|i| random_tensor(&[5, 5, samples], seed * 1000 + i as u64)).collect()
}

pub mod gradients;
pub mod oracle;
pub mod session;
