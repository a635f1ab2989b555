//! Finite-difference checks of every layer's backward pass and of the
//! end-to-end pair loss.

use grn::model::{encoder_specs, relation1_spec, relation2_spec, stack_grids, GrnConfig, GrnParams};
use grn::rng::SplitMix64;
use grn::tensor::{
    avg_pool_time, avg_pool_time_backward, conv_backward, conv_forward, dense, dense_backward, elu, elu_backward,
    global_avg_pool, global_avg_pool_backward, grad_check, mse_pair_loss, mse_pair_loss_grad, sigmoid,
    sigmoid_backward, BatchNorm, ConvSpec, Tensor,
};
use grn::train::{accumulate_gradient, support_loss};

use super::{random_grids, random_tensor, reduced_config};

const H: f64 = 1e-5;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// At most `max` evenly spaced coordinates of a `len`-vector.
fn spread(len: usize, max: usize) -> Vec<usize> {
    if len <= max {
        return (0..len).collect();
    }
    (0..max).map(|i| i * (len - 1) / (max - 1)).collect()
}

fn with(t: &Tensor, values: &[f64]) -> Tensor {
    Tensor::from_vec(t.shape(), values.to_vec()).unwrap()
}

/// Conv input and weight gradients of `Σ conv(x, w) · r`.
fn conv_case(spec: &ConvSpec, x: &Tensor, seed: u64) -> f64 {
    let w = random_tensor(&spec.weight_shape(), seed);
    let y = conv_forward(x, spec, &w, None).unwrap();
    let r = random_tensor(y.shape(), seed + 1);
    let g = conv_backward(&r, x, spec, &w, true).unwrap();
    let fx = |v: &[f64]| dot(conv_forward(&with(x, v), spec, &w, None).unwrap().data(), r.data());
    let fw = |v: &[f64]| dot(conv_forward(x, spec, &with(&w, v), None).unwrap().data(), r.data());
    let ex = grad_check(fx, x.data(), g.input.unwrap().data(), H, Some(&spread(x.len(), 200))).unwrap();
    let ew = grad_check(fw, w.data(), g.weights.data(), H, Some(&spread(w.len(), 200))).unwrap();
    ex.max(ew)
}

fn bn_case(seed: u64) -> f64 {
    let x = random_tensor(&[4, 3, 2, 5], seed);
    let mut bn = BatchNorm::new(3);
    bn.gamma = random_tensor(&[3], seed + 1);
    bn.beta = random_tensor(&[3], seed + 2);
    let (y, cache, _) = bn.normalize_batch(&x).unwrap();
    let r = random_tensor(y.shape(), seed + 3);
    let g = bn.backward(&cache, &r).unwrap();
    let f = |bn: &BatchNorm, x: &Tensor| dot(bn.normalize_batch(x).unwrap().0.data(), r.data());
    let ex = grad_check(|v| f(&bn, &with(&x, v)), x.data(), g.input.data(), H, None).unwrap();
    let eg = grad_check(
        |v| {
            let mut b = bn.clone();
            b.gamma = with(&bn.gamma, v);
            f(&b, &x)
        },
        bn.gamma.data(),
        g.gamma.data(),
        H,
        None,
    )
    .unwrap();
    let eb = grad_check(
        |v| {
            let mut b = bn.clone();
            b.beta = with(&bn.beta, v);
            f(&b, &x)
        },
        bn.beta.data(),
        g.beta.data(),
        H,
        None,
    )
    .unwrap();
    ex.max(eg).max(eb)
}

fn elu_case(seed: u64) -> f64 {
    let x = random_tensor(&[3, 40], seed);
    let r = random_tensor(&[3, 40], seed + 1);
    let g = elu_backward(&x, &r).unwrap();
    grad_check(|v| dot(elu(&with(&x, v)).data(), r.data()), x.data(), g.data(), H, None).unwrap()
}

fn pool_case(seed: u64) -> f64 {
    let x = random_tensor(&[2, 3, 17], seed);
    let y = avg_pool_time(&x, 2, 2).unwrap();
    let r = random_tensor(y.shape(), seed + 1);
    let g = avg_pool_time_backward(x.shape(), &r, 2, 2).unwrap();
    let e1 = grad_check(|v| dot(avg_pool_time(&with(&x, v), 2, 2).unwrap().data(), r.data()), x.data(), g.data(), H, None).unwrap();
    let rg = random_tensor(&[2, 3], seed + 2);
    let gg = global_avg_pool_backward(x.shape(), &rg).unwrap();
    let e2 = grad_check(|v| dot(global_avg_pool(&with(&x, v)).unwrap().data(), rg.data()), x.data(), gg.data(), H, None).unwrap();
    e1.max(e2)
}

fn dense_case(seed: u64) -> f64 {
    let x = random_tensor(&[3, 7], seed);
    let w = random_tensor(&[4, 7], seed + 1);
    let b = random_tensor(&[4], seed + 2);
    let r = random_tensor(&[3, 4], seed + 3);
    let g = dense_backward(&r, &x, &w).unwrap();
    let ex = grad_check(|v| dot(dense(&with(&x, v), &w, &b).unwrap().data(), r.data()), x.data(), g.input.data(), H, None).unwrap();
    let ew = grad_check(|v| dot(dense(&x, &with(&w, v), &b).unwrap().data(), r.data()), w.data(), g.weights.data(), H, None).unwrap();
    let eb = grad_check(|v| dot(dense(&x, &w, &with(&b, v)).unwrap().data(), r.data()), b.data(), g.bias.data(), H, None).unwrap();
    ex.max(ew).max(eb)
}

fn score_loss_case(seed: u64) -> f64 {
    let mut rng = SplitMix64::new(seed);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let x = rng.uniform(-4.0, 4.0);
        let same = rng.below(2) == 0;
        let s = sigmoid(x);
        let analytic = sigmoid_backward(s, mse_pair_loss_grad(s, same));
        let e = grad_check(|v| mse_pair_loss(sigmoid(v[0]), same), &[x], &[analytic], H, None).unwrap();
        worst = worst.max(e);
    }
    worst
}

fn end_to_end_case(relation_bn: bool, seed: u64) -> f64 {
    let cfg = GrnConfig {
        relation_bn,
        ..reduced_config()
    };
    let grids = random_grids(4, cfg.input_samples, seed);
    let refs: Vec<&Tensor> = grids.iter().collect();
    let x = stack_grids(&cfg, &refs).unwrap();
    let labels = [0, 0, 1, 2];
    let mut p = GrnParams::init(&cfg, seed).unwrap();
    p.zero_grad();
    accumulate_gradient(&mut p, &x, &labels, None, false, 0).unwrap();
    let analytic = p.flat_grads();
    let theta = p.flat_values();
    let probe = p.clone();
    let loss = |v: &[f64]| {
        let mut q = probe.clone();
        q.set_flat_values(v).unwrap();
        support_loss(&q, &x, &labels).unwrap()
    };
    let mut idx = Vec::new();
    let mut at = 0;
    for (_, t) in p.learnable() {
        idx.extend(spread(t.len(), 6).into_iter().map(|k| at + k));
        at += t.len();
    }
    grad_check(loss, &theta, &analytic, H, Some(&idx)).unwrap()
}

/// Worst relative error per layer on the reduced configuration.
pub fn layer_suite() -> Vec<(String, f64)> {
    let cfg = reduced_config();
    let s = cfg.shapes().unwrap();
    let specs = encoder_specs(&cfg).unwrap();
    let grid = 5;
    let mut out = Vec::new();
    let x1 = random_tensor(&[2, 1, grid, grid, cfg.input_samples], 11);
    out.push(("encoder conv 1 (temporal)".to_string(), conv_case(&specs[0], &x1, 12)));
    let x2 = random_tensor(&[2, s.layer1_filters, grid, grid, s.layer1_time], 13);
    out.push(("encoder conv 2 (spatial depthwise)".to_string(), conv_case(&specs[1], &x2, 14)));
    let x3 = random_tensor(&[2, s.spatial_channels, 1, 1, s.layer1_time], 15);
    out.push(("encoder conv 3 (temporal depthwise, strided)".to_string(), conv_case(&specs[2], &x3, 16)));
    let r1 = relation1_spec(&cfg).unwrap();
    let xr1 = random_tensor(&[2, r1.in_channels, 1, 1, s.embedding_time], 17);
    out.push(("relation conv 1 (grouped)".to_string(), conv_case(&r1, &xr1, 18)));
    let r2 = relation2_spec(&cfg).unwrap();
    let xr2 = random_tensor(&[2, r2.in_channels, 1, 1, s.pooled_time], 19);
    out.push(("relation conv 2".to_string(), conv_case(&r2, &xr2, 20)));
    out.push(("batch norm (train mode)".to_string(), bn_case(21)));
    out.push(("elu".to_string(), elu_case(22)));
    out.push(("average pooling".to_string(), pool_case(23)));
    out.push(("dense".to_string(), dense_case(24)));
    out.push(("sigmoid + pair loss".to_string(), score_loss_case(25)));
    out.push(("end-to-end pair loss, relation bn".to_string(), end_to_end_case(true, 26)));
    out.push(("end-to-end pair loss, plain relation".to_string(), end_to_end_case(false, 27)));
    out
}

/// Relative error of the end-to-end gradient at `count` random parameters
/// of the full default network on a three-trial support.
pub fn default_spot_check(count: usize, seed: u64) -> f64 {
    let cfg = GrnConfig::default();
    let grids = random_grids(3, cfg.input_samples, seed);
    let refs: Vec<&Tensor> = grids.iter().collect();
    let x = stack_grids(&cfg, &refs).unwrap();
    let labels = [0, 1, 2];
    let mut p = GrnParams::init(&cfg, seed).unwrap();
    p.zero_grad();
    accumulate_gradient(&mut p, &x, &labels, None, false, 0).unwrap();
    let analytic = p.flat_grads();
    let theta = p.flat_values();
    let mut rng = SplitMix64::new(seed ^ 0xabc);
    let idx: Vec<usize> = (0..count).map(|_| rng.below(theta.len())).collect();
    let probe = p.clone();
    let loss = |v: &[f64]| {
        let mut q = probe.clone();
        q.set_flat_values(v).unwrap();
        support_loss(&q, &x, &labels).unwrap()
    };
    grad_check(loss, &theta, &analytic, H, Some(&idx)).unwrap()
}
