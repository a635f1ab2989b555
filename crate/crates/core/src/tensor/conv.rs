//! Grouped 3-D cross-correlation with valid padding.
//!
//! Feature maps are `[C, H, W, T]` (or batched `[N, C, H, W, T]`); weights are
//! `[C_out, C_in / groups, kh, kw, kt]`. Output channel `o` belongs to group
//! `o / (C_out / groups)` and only sees that group's input channels, so a
//! depthwise layer with multiplier `m` maps input channel `c` to outputs
//! `c*m .. c*m + m`.
//!
//! Both passes lower each group to a GEMM over an im2col buffer built for a
//! chunk of samples at a time. When the kernel spans the whole spatial
//! extent with a single temporal tap (the encoder's spatial layer), a
//! sample's group slice already is that matrix and the buffer is skipped.

use serde::{Deserialize, Serialize};

use super::gemm::{gemm_nn, gemm_nt_acc, gemm_tn, gemm_view, View};
use super::{as_batched, dot4, sum4, Tensor};
use crate::error::{Error, Result};

/// Upper bound on im2col buffer size (in values) per chunk.
const COLS_BUDGET: usize = 1 << 15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    /// `(kh, kw, kt)`
    pub kernel: [usize; 3],
    /// `(sh, sw, st)`
    pub stride: [usize; 3],
    pub groups: usize,
    /// Outputs per group; equals the depth multiplier for depthwise layers.
    pub depth_multiplier: usize,
}

impl ConvSpec {
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel: [usize; 3],
        stride: [usize; 3],
        groups: usize,
    ) -> Result<Self> {
        if in_channels == 0 || out_channels == 0 || groups == 0 {
            return Err(Error::Parameter(format!(
                "conv channels/groups must be positive (in {in_channels}, out {out_channels}, groups {groups})"
            )));
        }
        if kernel.contains(&0) || stride.contains(&0) {
            return Err(Error::Parameter(format!(
                "conv kernel {kernel:?} and stride {stride:?} must be positive"
            )));
        }
        if in_channels % groups != 0 || out_channels % groups != 0 {
            return Err(Error::Parameter(format!(
                "groups {groups} must divide in_channels {in_channels} and out_channels {out_channels}"
            )));
        }
        Ok(ConvSpec {
            in_channels,
            out_channels,
            kernel,
            stride,
            groups,
            depth_multiplier: out_channels / groups,
        })
    }

    pub fn dense(in_channels: usize, out_channels: usize, kernel: [usize; 3], stride: [usize; 3]) -> Result<Self> {
        ConvSpec::new(in_channels, out_channels, kernel, stride, 1)
    }

    pub fn depthwise(channels: usize, multiplier: usize, kernel: [usize; 3], stride: [usize; 3]) -> Result<Self> {
        ConvSpec::new(channels, channels * multiplier, kernel, stride, channels)
    }

    pub fn in_per_group(&self) -> usize {
        self.in_channels / self.groups
    }

    pub fn out_per_group(&self) -> usize {
        self.out_channels / self.groups
    }

    /// Length of one filter: `C_in/groups · kh · kw · kt`.
    pub fn fan_in(&self) -> usize {
        self.in_per_group() * self.kernel.iter().product::<usize>()
    }

    pub fn weight_shape(&self) -> [usize; 5] {
        let [kh, kw, kt] = self.kernel;
        [self.out_channels, self.in_per_group(), kh, kw, kt]
    }

    /// Output extents for an `[h, w, t]` input.
    pub fn output_dims(&self, dims: [usize; 3]) -> Result<[usize; 3]> {
        let axes = ["height", "width", "time"];
        let mut out = [0; 3];
        for a in 0..3 {
            if dims[a] < self.kernel[a] {
                return Err(Error::dim("conv input", axes[a], self.kernel[a], dims[a]));
            }
            out[a] = (dims[a] - self.kernel[a]) / self.stride[a] + 1;
        }
        Ok(out)
    }

    fn check_weights(&self, weights: &Tensor) -> Result<()> {
        if weights.shape() != self.weight_shape() {
            return Err(Error::shape(
                "conv weights",
                format!("expected {:?}, got {:?}", self.weight_shape(), weights.shape()),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct ConvGrads {
    /// `None` when the caller did not ask for it (first layer).
    pub input: Option<Tensor>,
    pub weights: Tensor,
    pub bias: Tensor,
}

struct Geometry {
    n: usize,
    in_dims: [usize; 3],
    out_dims: [usize; 3],
    k: usize,
    l: usize,
}

fn geometry(spec: &ConvSpec, input_shape: &[usize]) -> Result<Geometry> {
    let [n, c, h, w, t] = as_batched(input_shape, "conv input")?;
    if c != spec.in_channels {
        return Err(Error::dim("conv input", "channel", spec.in_channels, c));
    }
    let out_dims = spec.output_dims([h, w, t])?;
    Ok(Geometry {
        n,
        in_dims: [h, w, t],
        out_dims,
        k: spec.fan_in(),
        l: out_dims.iter().product(),
    })
}

fn output_shape(input_shape: &[usize], channels: usize, dims: [usize; 3]) -> Vec<usize> {
    let mut s = Vec::with_capacity(5);
    if input_shape.len() == 5 {
        s.push(input_shape[0]);
    }
    s.push(channels);
    s.extend_from_slice(&dims);
    s
}

fn add_bias(out: &mut [f64], bias: &[f64], l: usize) {
    for (k, row) in out.chunks_mut(l).enumerate() {
        let b = bias[k % bias.len()];
        row.iter_mut().for_each(|v| *v += b);
    }
}

fn bias_grad(gy: &[f64], channels: usize, l: usize) -> Tensor {
    let mut db = Tensor::zeros(&[channels]);
    for (k, row) in gy.chunks(l).enumerate() {
        db.data_mut()[k % channels] += sum4(row);
    }
    db
}

/// Kernel covers all of `h × w` with one temporal tap, so the group's input
/// slice of one sample is the `[K, T]` column matrix itself.
fn is_pointwise(spec: &ConvSpec, g: &Geometry) -> bool {
    spec.kernel == [g.in_dims[0], g.in_dims[1], 1] && spec.stride[2] == 1
}

/// Purely temporal kernel on single-input groups with enough outputs per
/// group to feed a GEMM: each signal is viewed as an overlapping window
/// matrix instead of being copied into an im2col buffer.
fn is_windowed(spec: &ConvSpec) -> bool {
    spec.kernel[..2] == [1, 1] && spec.stride[..2] == [1, 1] && spec.in_per_group() == 1 && spec.out_per_group() >= 4
}

fn windowed_forward(x: &[f64], spec: &ConvSpec, g: &Geometry, w: &[f64], out: &mut [f64]) {
    let og = spec.out_per_group();
    let kt = spec.kernel[2];
    let t = g.in_dims[2];
    let hw = g.in_dims[0] * g.in_dims[1];
    let ot = g.out_dims[2];
    for s in 0..g.n {
        for group in 0..spec.groups {
            let a = View { data: w, offset: group * og * kt, rs: kt, cs: 1 };
            for pos in 0..hw {
                let b = View { data: x, offset: ((s * spec.in_channels + group) * hw + pos) * t, rs: 1, cs: spec.stride[2] };
                let at = ((s * spec.out_channels + group * og) * hw + pos) * ot;
                gemm_view(og, kt, ot, a, b, 0.0, out, (at, hw * ot, 1));
            }
        }
    }
}

/// Weight gradient of [`windowed_forward`], accumulated into `dw`.
fn windowed_weight_grad(x: &[f64], spec: &ConvSpec, g: &Geometry, gy: &[f64], dw: &mut [f64]) {
    let og = spec.out_per_group();
    let kt = spec.kernel[2];
    let t = g.in_dims[2];
    let hw = g.in_dims[0] * g.in_dims[1];
    let ot = g.out_dims[2];
    for s in 0..g.n {
        for group in 0..spec.groups {
            for pos in 0..hw {
                let a = View { data: gy, offset: ((s * spec.out_channels + group * og) * hw + pos) * ot, rs: hw * ot, cs: 1 };
                let b = View { data: x, offset: ((s * spec.in_channels + group) * hw + pos) * t, rs: spec.stride[2], cs: 1 };
                gemm_view(og, ot, kt, a, b, 1.0, dw, (group * og * kt, kt, 1));
            }
        }
    }
}

fn chunk_len(g: &Geometry) -> usize {
    (COLS_BUDGET / (g.k * g.l).max(1)).clamp(1, g.n)
}

/// Fill `cols[K, chunk·L]` for samples `s0..s0+chunk` of group `group`.
fn im2col(x: &[f64], spec: &ConvSpec, g: &Geometry, group: usize, s0: usize, chunk: usize, cols: &mut [f64]) {
    let [h, w, t] = g.in_dims;
    let [oh_n, ow_n, ot_n] = g.out_dims;
    let [kh, kw, kt] = spec.kernel;
    let [sh, sw, st] = spec.stride;
    let cg = spec.in_per_group();
    let width = chunk * g.l;
    let sample_len = spec.in_channels * h * w * t;
    for s in 0..chunk {
        let xs = &x[(s0 + s) * sample_len..(s0 + s + 1) * sample_len];
        for c in 0..cg {
            let xc = &xs[(group * cg + c) * h * w * t..];
            for dh in 0..kh {
                for dw in 0..kw {
                    for dt in 0..kt {
                        let row = ((c * kh + dh) * kw + dw) * kt + dt;
                        let dst = &mut cols[row * width + s * g.l..row * width + (s + 1) * g.l];
                        let mut col = 0;
                        for oh in 0..oh_n {
                            for ow in 0..ow_n {
                                let base = ((oh * sh + dh) * w + (ow * sw + dw)) * t + dt;
                                if st == 1 {
                                    dst[col..col + ot_n].copy_from_slice(&xc[base..base + ot_n]);
                                } else {
                                    for ot in 0..ot_n {
                                        dst[col + ot] = xc[base + ot * st];
                                    }
                                }
                                col += ot_n;
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Scatter-add `cols[K, chunk·L]` back into the input-gradient buffer.
fn col2im(dcols: &[f64], spec: &ConvSpec, g: &Geometry, group: usize, s0: usize, chunk: usize, dx: &mut [f64]) {
    let [h, w, t] = g.in_dims;
    let [oh_n, ow_n, ot_n] = g.out_dims;
    let [kh, kw, kt] = spec.kernel;
    let [sh, sw, st] = spec.stride;
    let cg = spec.in_per_group();
    let width = chunk * g.l;
    let sample_len = spec.in_channels * h * w * t;
    for s in 0..chunk {
        let xs = &mut dx[(s0 + s) * sample_len..(s0 + s + 1) * sample_len];
        for c in 0..cg {
            let xc = &mut xs[(group * cg + c) * h * w * t..(group * cg + c + 1) * h * w * t];
            for dh in 0..kh {
                for dw in 0..kw {
                    for dt in 0..kt {
                        let row = ((c * kh + dh) * kw + dw) * kt + dt;
                        let src = &dcols[row * width + s * g.l..row * width + (s + 1) * g.l];
                        let mut col = 0;
                        for oh in 0..oh_n {
                            for ow in 0..ow_n {
                                let base = ((oh * sh + dh) * w + (ow * sw + dw)) * t + dt;
                                for ot in 0..ot_n {
                                    xc[base + ot * st] += src[col + ot];
                                }
                                col += ot_n;
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Valid cross-correlation of `input` (`[C,H,W,T]` or `[N,C,H,W,T]`).
pub fn conv_forward(input: &Tensor, spec: &ConvSpec, weights: &Tensor, bias: Option<&Tensor>) -> Result<Tensor> {
    spec.check_weights(weights)?;
    if let Some(b) = bias {
        if b.len() != spec.out_channels {
            return Err(Error::dim("conv bias", "channel", spec.out_channels, b.len()));
        }
    }
    let g = geometry(spec, input.shape())?;
    let og = spec.out_per_group();
    let mut out = Tensor::zeros(&output_shape(input.shape(), spec.out_channels, g.out_dims));
    if is_pointwise(spec, &g) {
        pointwise_forward(input.data(), spec, &g, weights.data(), out.data_mut());
        if let Some(b) = bias {
            add_bias(out.data_mut(), b.data(), g.l);
        }
        return Ok(out);
    }
    if is_windowed(spec) {
        windowed_forward(input.data(), spec, &g, weights.data(), out.data_mut());
        if let Some(b) = bias {
            add_bias(out.data_mut(), b.data(), g.l);
        }
        return Ok(out);
    }
    let chunk = chunk_len(&g);
    let mut cols = vec![0.0; g.k * chunk * g.l];
    let mut tmp = vec![0.0; og * chunk * g.l];
    let x = input.data();
    let w = weights.data();
    let out_sample = spec.out_channels * g.l;
    for group in 0..spec.groups {
        let wg = &w[group * og * g.k..(group + 1) * og * g.k];
        let mut s0 = 0;
        while s0 < g.n {
            let cur = chunk.min(g.n - s0);
            let width = cur * g.l;
            im2col(x, spec, &g, group, s0, cur, &mut cols);
            gemm_nn(og, g.k, width, wg, &cols[..g.k * width], 0.0, &mut tmp[..og * width]);
            let od = out.data_mut();
            for s in 0..cur {
                for o in 0..og {
                    let ch = group * og + o;
                    let dst = &mut od[(s0 + s) * out_sample + ch * g.l..(s0 + s) * out_sample + (ch + 1) * g.l];
                    dst.copy_from_slice(&tmp[o * width + s * g.l..o * width + (s + 1) * g.l]);
                    if let Some(b) = bias {
                        let bv = b.data()[ch];
                        dst.iter_mut().for_each(|v| *v += bv);
                    }
                }
            }
            s0 += cur;
        }
    }
    Ok(out)
}

/// Gradients of [`conv_forward`] given the upstream gradient and the cached
/// forward input.
pub fn conv_backward(
    grad_out: &Tensor,
    cached_input: &Tensor,
    spec: &ConvSpec,
    weights: &Tensor,
    need_input_grad: bool,
) -> Result<ConvGrads> {
    spec.check_weights(weights)?;
    let g = geometry(spec, cached_input.shape())?;
    let expected = output_shape(cached_input.shape(), spec.out_channels, g.out_dims);
    if grad_out.shape() != expected.as_slice() {
        return Err(Error::shape(
            "conv backward",
            format!("grad_out {:?} does not match forward output {expected:?}", grad_out.shape()),
        ));
    }
    if is_pointwise(spec, &g) {
        return Ok(pointwise_backward(grad_out, cached_input, spec, &g, weights, need_input_grad));
    }
    if is_windowed(spec) && !need_input_grad {
        let mut dw = Tensor::zeros(weights.shape());
        windowed_weight_grad(cached_input.data(), spec, &g, grad_out.data(), dw.data_mut());
        return Ok(ConvGrads {
            input: None,
            weights: dw,
            bias: bias_grad(grad_out.data(), spec.out_channels, g.l),
        });
    }
    let og = spec.out_per_group();
    let chunk = chunk_len(&g);
    let mut cols = vec![0.0; g.k * chunk * g.l];
    let mut dy = vec![0.0; og * chunk * g.l];
    let mut dcols = if need_input_grad { vec![0.0; g.k * chunk * g.l] } else { Vec::new() };
    let mut dw = Tensor::zeros(weights.shape());
    let mut db = Tensor::zeros(&[spec.out_channels]);
    let mut dx = need_input_grad.then(|| Tensor::zeros(cached_input.shape()));
    let x = cached_input.data();
    let w = weights.data();
    let gy = grad_out.data();
    let out_sample = spec.out_channels * g.l;
    for group in 0..spec.groups {
        let wg = &w[group * og * g.k..(group + 1) * og * g.k];
        let mut s0 = 0;
        while s0 < g.n {
            let cur = chunk.min(g.n - s0);
            let width = cur * g.l;
            for s in 0..cur {
                for o in 0..og {
                    let ch = group * og + o;
                    let src = &gy[(s0 + s) * out_sample + ch * g.l..(s0 + s) * out_sample + (ch + 1) * g.l];
                    dy[o * width + s * g.l..o * width + (s + 1) * g.l].copy_from_slice(src);
                }
            }
            for o in 0..og {
                db.data_mut()[group * og + o] += dy[o * width..(o + 1) * width].iter().sum::<f64>();
            }
            im2col(x, spec, &g, group, s0, cur, &mut cols);
            let dwg = &mut dw.data_mut()[group * og * g.k..(group + 1) * og * g.k];
            gemm_nt_acc(og, width, g.k, &dy[..og * width], &cols[..g.k * width], dwg);
            if let Some(dx) = dx.as_mut() {
                gemm_tn(g.k, og, width, wg, &dy[..og * width], &mut dcols[..g.k * width]);
                col2im(&dcols, spec, &g, group, s0, cur, dx.data_mut());
            }
            s0 += cur;
        }
    }
    Ok(ConvGrads {
        input: dx,
        weights: dw,
        bias: db,
    })
}

fn pointwise_forward(x: &[f64], spec: &ConvSpec, g: &Geometry, w: &[f64], out: &mut [f64]) {
    let og = spec.out_per_group();
    let in_sample = spec.in_channels * g.in_dims[0] * g.in_dims[1] * g.l;
    let out_sample = spec.out_channels * g.l;
    for s in 0..g.n {
        for group in 0..spec.groups {
            let xs = &x[s * in_sample + group * g.k * g.l..s * in_sample + (group + 1) * g.k * g.l];
            let ys = &mut out[s * out_sample + group * og * g.l..s * out_sample + (group + 1) * og * g.l];
            // few outputs per group: plain axpy loops beat a skinny GEMM
            for (o, y) in ys.chunks_mut(g.l).enumerate() {
                let wo = &w[(group * og + o) * g.k..(group * og + o + 1) * g.k];
                for (&wk, xk) in wo.iter().zip(xs.chunks(g.l)) {
                    y.iter_mut().zip(xk).for_each(|(a, b)| *a += wk * b);
                }
            }
        }
    }
}

fn pointwise_backward(
    grad_out: &Tensor,
    cached_input: &Tensor,
    spec: &ConvSpec,
    g: &Geometry,
    weights: &Tensor,
    need_input_grad: bool,
) -> ConvGrads {
    let og = spec.out_per_group();
    let in_sample = spec.in_channels * g.in_dims[0] * g.in_dims[1] * g.l;
    let out_sample = spec.out_channels * g.l;
    let mut dw = Tensor::zeros(weights.shape());
    let mut dx = need_input_grad.then(|| Tensor::zeros(cached_input.shape()));
    let (x, w, gy) = (cached_input.data(), weights.data(), grad_out.data());
    for s in 0..g.n {
        for group in 0..spec.groups {
            let xr = s * in_sample + group * g.k * g.l..s * in_sample + (group + 1) * g.k * g.l;
            let dys = &gy[s * out_sample + group * og * g.l..s * out_sample + (group + 1) * og * g.l];
            let wr = group * og * g.k..(group + 1) * og * g.k;
            let dwg = &mut dw.data_mut()[wr.clone()];
            for (o, dyo) in dys.chunks(g.l).enumerate() {
                for (k, xk) in x[xr.clone()].chunks(g.l).enumerate() {
                    dwg[o * g.k + k] += dot4(xk, dyo);
                }
            }
            if let Some(dx) = dx.as_mut() {
                let dxs = &mut dx.data_mut()[xr];
                for (o, dyo) in dys.chunks(g.l).enumerate() {
                    let wo = &w[wr.start + o * g.k..wr.start + (o + 1) * g.k];
                    for (&wk, dxk) in wo.iter().zip(dxs.chunks_mut(g.l)) {
                        dxk.iter_mut().zip(dyo).for_each(|(a, b)| *a += wk * b);
                    }
                }
            }
        }
    }
    ConvGrads {
        input: dx,
        weights: dw,
        bias: bias_grad(gy, spec.out_channels, g.l),
    }
}
