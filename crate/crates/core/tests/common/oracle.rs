//! Naive reference implementations and randomized comparisons against the
//! library's optimized kernels.

use grn::online::fuse;
use grn::rng::SplitMix64;
use grn::tensor::{
    avg_pool_time, avg_pool_time_backward, conv_backward, conv_forward, global_avg_pool, global_avg_pool_backward,
    softmax, ConvSpec, Tensor,
};

fn randn(shape: &[usize], rng: &mut SplitMix64) -> Tensor {
    let mut t = Tensor::zeros(shape);
    t.data_mut().iter_mut().for_each(|v| *v = rng.normal());
    t
}

fn idx5(s: &[usize], a: usize, b: usize, c: usize, d: usize, e: usize) -> usize {
    (((a * s[1] + b) * s[2] + c) * s[3] + d) * s[4] + e
}

pub struct ConvGradsNaive {
    pub out: Tensor,
    pub input: Tensor,
    pub weights: Tensor,
    pub bias: Vec<f64>,
}

/// Direct loops over every output element and kernel tap, with the
/// gradients of `Σ out · g` accumulated alongside.
pub fn conv_naive(x: &Tensor, spec: &ConvSpec, w: &Tensor, bias: &[f64], g: Option<&Tensor>) -> ConvGradsNaive {
    let xs = x.shape().to_vec();
    let [n, _, h, wd, t] = [xs[0], xs[1], xs[2], xs[3], xs[4]];
    let [kh, kw, kt] = spec.kernel;
    let [sh, sw, st] = spec.stride;
    let (oh, ow, ot) = ((h - kh) / sh + 1, (wd - kw) / sw + 1, (t - kt) / st + 1);
    let os = [n, spec.out_channels, oh, ow, ot];
    let ws = w.shape().to_vec();
    let ipg = spec.in_per_group();
    let opg = spec.out_per_group();
    let mut out = Tensor::zeros(&os);
    let mut dx = Tensor::zeros(&xs);
    let mut dw = Tensor::zeros(&ws);
    let mut db = vec![0.0; spec.out_channels];
    for b in 0..n {
        for o in 0..spec.out_channels {
            let grp = o / opg;
            for i in 0..oh {
                for j in 0..ow {
                    for k in 0..ot {
                        let oi = idx5(&os, b, o, i, j, k);
                        let go = g.map_or(0.0, |g| g.data()[oi]);
                        let mut acc = bias[o];
                        db[o] += go;
                        for ci in 0..ipg {
                            let c = grp * ipg + ci;
                            for a in 0..kh {
                                for bb in 0..kw {
                                    for cc in 0..kt {
                                        let xi = idx5(&xs, b, c, i * sh + a, j * sw + bb, k * st + cc);
                                        let wi = idx5(&ws, o, ci, a, bb, cc);
                                        acc += x.data()[xi] * w.data()[wi];
                                        dx.data_mut()[xi] += go * w.data()[wi];
                                        dw.data_mut()[wi] += go * x.data()[xi];
                                    }
                                }
                            }
                        }
                        out.data_mut()[oi] = acc;
                    }
                }
            }
        }
    }
    ConvGradsNaive {
        out,
        input: dx,
        weights: dw,
        bias: db,
    }
}

/// A random small convolution. `kind` cycles through the shapes the
/// library treats specially: general grouped, pointwise over the full
/// spatial extent, and per-channel temporal windows.
pub fn random_conv_case(kind: usize, rng: &mut SplitMix64) -> (Tensor, ConvSpec) {
    let r = |rng: &mut SplitMix64, lo: usize, hi: usize| lo + rng.below(hi - lo + 1);
    let n = r(rng, 1, 3);
    match kind % 3 {
        0 => {
            let groups = r(rng, 1, 3);
            let ipg = r(rng, 1, 2);
            let opg = r(rng, 1, 3);
            let (h, w, t) = (r(rng, 1, 4), r(rng, 1, 4), r(rng, 3, 12));
            let kernel = [r(rng, 1, h), r(rng, 1, w), r(rng, 1, t)];
            let stride = [r(rng, 1, 2), r(rng, 1, 2), r(rng, 1, 3)];
            let spec = ConvSpec::new(groups * ipg, groups * opg, kernel, stride, groups).unwrap();
            (randn(&[n, groups * ipg, h, w, t], rng), spec)
        }
        1 => {
            let groups = r(rng, 1, 3);
            let ipg = r(rng, 1, 3);
            let opg = r(rng, 1, 3);
            let (h, w, t) = (r(rng, 1, 4), r(rng, 1, 4), r(rng, 1, 8));
            let spec = ConvSpec::new(groups * ipg, groups * opg, [h, w, 1], [1, 1, 1], groups).unwrap();
            (randn(&[n, groups * ipg, h, w, t], rng), spec)
        }
        _ => {
            let c = r(rng, 1, 3);
            let m = r(rng, 4, 6);
            let (h, w, t) = (r(rng, 1, 3), r(rng, 1, 3), r(rng, 6, 20));
            let kt = r(rng, 1, t.min(9));
            let st = r(rng, 1, 3);
            let spec = ConvSpec::depthwise(c, m, [1, 1, kt], [1, 1, st]).unwrap();
            (randn(&[n, c, h, w, t], rng), spec)
        }
    }
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Worst absolute difference between the library convolution (forward,
/// input, weight and bias gradients) and [`conv_naive`] over `cases`
/// random instances.
pub fn conv_max_error(cases: usize, seed: u64) -> f64 {
    let mut rng = SplitMix64::new(seed);
    let mut worst = 0.0f64;
    for case in 0..cases {
        let (x, spec) = random_conv_case(case, &mut rng);
        let w = randn(&spec.weight_shape(), &mut rng);
        let bias = randn(&[spec.out_channels], &mut rng);
        let y = conv_forward(&x, &spec, &w, Some(&bias)).unwrap();
        let g = randn(y.shape(), &mut rng);
        let naive = conv_naive(&x, &spec, &w, bias.data(), Some(&g));
        assert_eq!(y.shape(), naive.out.shape());
        worst = worst.max(max_diff(y.data(), naive.out.data()));
        let need_input = case % 2 == 0;
        let grads = conv_backward(&g, &x, &spec, &w, need_input).unwrap();
        worst = worst.max(max_diff(grads.weights.data(), naive.weights.data()));
        worst = worst.max(max_diff(grads.bias.data(), &naive.bias));
        match grads.input {
            Some(dx) => worst = worst.max(max_diff(dx.data(), naive.input.data())),
            None => assert!(!need_input),
        }
    }
    worst
}

/// Worst difference of time pooling, its backward, and global average
/// pooling against direct loops.
pub fn pool_max_error(cases: usize, seed: u64) -> f64 {
    let mut rng = SplitMix64::new(seed);
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let (n, c, t) = (1 + rng.below(3), 1 + rng.below(4), 2 + rng.below(20));
        let window = 1 + rng.below(t.min(4));
        let stride = 1 + rng.below(3);
        let x = randn(&[n, c, t], &mut rng);
        let y = avg_pool_time(&x, window, stride).unwrap();
        let ot = (t - window) / stride + 1;
        let g = randn(&[n, c, ot], &mut rng);
        let dx = avg_pool_time_backward(x.shape(), &g, window, stride).unwrap();
        let mut want_dx = vec![0.0; n * c * t];
        for row in 0..n * c {
            for o in 0..ot {
                let mut s = 0.0;
                for k in 0..window {
                    s += x.data()[row * t + o * stride + k];
                    want_dx[row * t + o * stride + k] += g.data()[row * ot + o] / window as f64;
                }
                worst = worst.max((y.data()[row * ot + o] - s / window as f64).abs());
            }
        }
        worst = worst.max(max_diff(dx.data(), &want_dx));

        let gap = global_avg_pool(&x).unwrap();
        let gg = randn(&[n, c], &mut rng);
        let dgap = global_avg_pool_backward(x.shape(), &gg).unwrap();
        for row in 0..n * c {
            let mean = x.data()[row * t..(row + 1) * t].iter().sum::<f64>() / t as f64;
            worst = worst.max((gap.data()[row] - mean).abs());
            for k in 0..t {
                worst = worst.max((dgap.data()[row * t + k] - gg.data()[row] / t as f64).abs());
            }
        }
    }
    worst
}

/// Softmax against the textbook formula without max subtraction.
pub fn softmax_max_error(cases: usize, seed: u64) -> f64 {
    let mut rng = SplitMix64::new(seed);
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let k = 1 + rng.below(8);
        let scores: Vec<f64> = (0..k).map(|_| rng.uniform(-20.0, 20.0)).collect();
        let p = softmax(&scores);
        let z: f64 = scores.iter().map(|s| s.exp()).sum();
        for (pi, s) in p.iter().zip(&scores) {
            worst = worst.max((pi - s.exp() / z).abs());
        }
    }
    worst
}

/// Window fusion against a per-class average and first-maximum scan.
/// Returns the worst difference and whether every argmax agreed.
pub fn fusion_max_error(cases: usize, seed: u64) -> (f64, bool) {
    let mut rng = SplitMix64::new(seed);
    let mut worst = 0.0f64;
    let mut same_cmd = true;
    for case in 0..cases {
        let k = 2 + rng.below(4);
        let w = 1 + rng.below(6);
        let rows: Vec<Vec<f64>> = (0..w)
            .map(|_| {
                let s: Vec<f64> = (0..k).map(|_| rng.uniform(-3.0, 3.0)).collect();
                softmax(&s)
            })
            .collect();
        // exact ties every few cases
        let rows = if case % 7 == 0 { vec![vec![1.0 / k as f64; k]; w] } else { rows };
        let (fused, cmd) = fuse(&rows).unwrap();
        let mut mean = vec![0.0; k];
        for row in &rows {
            for c in 0..k {
                mean[c] += row[c];
            }
        }
        mean.iter_mut().for_each(|m| *m /= w as f64);
        let mut best = 0;
        for c in 1..k {
            if mean[c] > mean[best] {
                best = c;
            }
        }
        worst = worst.max(max_diff(&fused, &mean));
        same_cmd &= best == cmd;
    }
    (worst, same_cmd)
}
