//! Check the hand-written backward pass of the whole network against
//! central finite differences on a small configuration.
//!
//!     cargo run --release --example gradient_check

use grn::model::{stack_grids, GrnConfig, GrnParams};
use grn::rng::SplitMix64;
use grn::tensor::{grad_check, Tensor};
use grn::train::{accumulate_gradient, support_loss};

fn main() -> grn::Result<()> {
    let cfg = GrnConfig {
        n_groups: 2,
        channels_per_group: 2,
        input_samples: 100,
        temporal_kernel: 9,
        temporal_stride3: 3,
        relation_conv_kernel: 4,
        relation_channels_per_group: 4,
        fc_hidden: 4,
        ..GrnConfig::default()
    };
    let mut rng = SplitMix64::new(7);
    let grids: Vec<Tensor> = (0..3)
        .map(|_| {
            let data = (0..25 * cfg.input_samples).map(|_| rng.normal()).collect();
            Tensor::from_vec(&[5, 5, cfg.input_samples], data)
        })
        .collect::<grn::Result<_>>()?;
    let refs: Vec<&Tensor> = grids.iter().collect();
    let x = stack_grids(&cfg, &refs)?;
    let labels = [0, 1, 2];

    let mut p = GrnParams::init(&cfg, 1)?;
    p.zero_grad();
    accumulate_gradient(&mut p, &x, &labels, None, false, 0)?;
    let analytic = p.flat_grads();
    let theta = p.flat_values();
    println!("{} parameters", theta.len());

    let probe = p.clone();
    let loss = |v: &[f64]| {
        let mut q = probe.clone();
        q.set_flat_values(v).expect("same layout");
        support_loss(&q, &x, &labels).expect("finite loss")
    };
    let mut at = 0;
    for (name, t) in p.learnable() {
        let idx: Vec<usize> = (at..at + t.len()).step_by((t.len() / 5).max(1)).collect();
        let err = grad_check(loss, &theta, &analytic, 1e-5, Some(&idx))?;
        println!("{name:<28} {:>5} values, worst relative error {err:.2e}", t.len());
        at += t.len();
    }
    Ok(())
}
