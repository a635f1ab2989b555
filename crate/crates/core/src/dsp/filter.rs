//! IIR design as cascaded second-order sections, and zero-phase application.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One normalized section: `(b0 + b1 z⁻¹ + b2 z⁻²) / (1 + a1 z⁻¹ + a2 z⁻²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Biquad {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub a1: f64,
    pub a2: f64,
}

impl Biquad {
    pub fn response(&self, z_inv: Complex64) -> Complex64 {
        let z2 = z_inv * z_inv;
        (self.b0 + self.b1 * z_inv + self.b2 * z2) / (1.0 + self.a1 * z_inv + self.a2 * z2)
    }

    /// Roots of `z² + a1 z + a2`.
    pub fn poles(&self) -> [Complex64; 2] {
        let disc = Complex64::new(self.a1 * self.a1 - 4.0 * self.a2, 0.0).sqrt();
        [(-self.a1 + disc) / 2.0, (-self.a1 - disc) / 2.0]
    }

    /// Transposed direct form II state reached after a unit step settles.
    fn step_state(&self) -> [f64; 2] {
        let dc = (self.b0 + self.b1 + self.b2) / (1.0 + self.a1 + self.a2);
        let z2 = self.b2 - self.a2 * dc;
        let z1 = self.b1 - self.a1 * dc + z2;
        [z1, z2]
    }

    fn dc_gain(&self) -> f64 {
        (self.b0 + self.b1 + self.b2) / (1.0 + self.a1 + self.a2)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiquadChain {
    pub sections: Vec<Biquad>,
    pub description: String,
}

impl BiquadChain {
    /// Total filter order (two per section).
    pub fn order(&self) -> usize {
        2 * self.sections.len()
    }

    pub fn response(&self, freq_hz: f64, fs: f64) -> Complex64 {
        let z_inv = Complex64::from_polar(1.0, -2.0 * PI * freq_hz / fs);
        self.sections.iter().map(|s| s.response(z_inv)).product()
    }

    pub fn magnitude(&self, freq_hz: f64, fs: f64) -> f64 {
        self.response(freq_hz, fs).norm()
    }

    pub fn magnitude_db(&self, freq_hz: f64, fs: f64) -> f64 {
        20.0 * self.magnitude(freq_hz, fs).log10()
    }

    pub fn poles(&self) -> Vec<Complex64> {
        self.sections.iter().flat_map(|s| s.poles()).collect()
    }

    pub fn max_pole_radius(&self) -> f64 {
        self.poles().iter().map(|p| p.norm()).fold(0.0, f64::max)
    }

    pub fn is_stable(&self) -> bool {
        self.max_pole_radius() < 1.0 - 1e-9
    }

    /// Causal cascade with initial state scaled to the first sample, so a
    /// constant input starts in steady state.
    pub fn apply(&self, signal: &[f64]) -> Vec<f64> {
        let mut y = signal.to_vec();
        let mut level = signal.first().copied().unwrap_or(0.0);
        for s in &self.sections {
            let [z1, z2] = s.step_state();
            let (mut z1, mut z2) = (z1 * level, z2 * level);
            for v in y.iter_mut() {
                let x = *v;
                let out = s.b0 * x + z1;
                z1 = s.b1 * x - s.a1 * out + z2;
                z2 = s.b2 * x - s.a2 * out;
                *v = out;
            }
            level *= s.dc_gain();
        }
        y
    }
}

fn check_band(what: &str, f: f64, fs: f64) -> Result<()> {
    if !(fs > 0.0) || !fs.is_finite() {
        return Err(Error::Parameter(format!("sampling rate must be positive, got {fs}")));
    }
    if !(f > 0.0 && f < fs / 2.0) {
        return Err(Error::Parameter(format!(
            "{what} {f} Hz must lie strictly between 0 and Nyquist ({} Hz)",
            fs / 2.0
        )));
    }
    Ok(())
}

/// Butterworth band-pass; `order` is the low-pass prototype order, giving
/// `order` sections (`2 * order` poles).
pub fn design_bandpass(low_hz: f64, high_hz: f64, fs: f64, order: usize) -> Result<BiquadChain> {
    check_band("low cutoff", low_hz, fs)?;
    check_band("high cutoff", high_hz, fs)?;
    if low_hz >= high_hz {
        return Err(Error::Parameter(format!("low cutoff {low_hz} Hz must be below high cutoff {high_hz} Hz")));
    }
    if order == 0 {
        return Err(Error::Parameter("filter order must be at least 1".into()));
    }

    // Pre-warped analog edges.
    let w1 = 2.0 * fs * (PI * low_hz / fs).tan();
    let w2 = 2.0 * fs * (PI * high_hz / fs).tan();
    let bw = w2 - w1;
    let w0 = (w1 * w2).sqrt();

    let mut analog = Vec::with_capacity(2 * order);
    for k in 0..order {
        let theta = PI * (2 * k + order + 1) as f64 / (2 * order) as f64;
        let p = Complex64::from_polar(1.0, theta);
        let half = p * (bw / 2.0);
        let root = (half * half - w0 * w0).sqrt();
        analog.push(half + root);
        analog.push(half - root);
    }
    let k2 = 2.0 * fs;
    let digital: Vec<Complex64> = analog.iter().map(|s| (k2 + s) / (k2 - s)).collect();

    // Conjugate pairs first, then pair the remaining real poles.
    let tol = 1e-9;
    let mut sections = Vec::with_capacity(order);
    let mut reals: Vec<f64> = Vec::new();
    for p in &digital {
        if p.im > tol {
            sections.push(Biquad {
                b0: 1.0,
                b1: 0.0,
                b2: -1.0,
                a1: -2.0 * p.re,
                a2: p.norm_sqr(),
            });
        } else if p.im.abs() <= tol {
            reals.push(p.re);
        }
    }
    reals.sort_by(|a, b| b.partial_cmp(a).unwrap());
    for pair in reals.chunks(2) {
        let (r1, r2) = (pair[0], *pair.get(1).unwrap_or(&0.0));
        sections.push(Biquad {
            b0: 1.0,
            b1: 0.0,
            b2: -1.0,
            a1: -(r1 + r2),
            a2: r1 * r2,
        });
    }
    if sections.len() != order {
        return Err(Error::Parameter(format!(
            "band {low_hz}-{high_hz} Hz at {fs} Hz could not be factored into {order} sections"
        )));
    }

    // Unit gain at the digital image of the analog centre frequency.
    let centre_hz = fs / PI * (w0 / k2).atan();
    let mut chain = BiquadChain {
        sections,
        description: format!("butterworth band-pass {low_hz}-{high_hz} Hz, order {order}, fs {fs} Hz"),
    };
    let g = chain.magnitude(centre_hz, fs).powf(-1.0 / order as f64);
    for s in &mut chain.sections {
        s.b0 *= g;
        s.b1 *= g;
        s.b2 *= g;
    }
    Ok(chain)
}

/// Second-order notch at `f0_hz` with quality factor `q`.
pub fn design_notch(f0_hz: f64, q: f64, fs: f64) -> Result<BiquadChain> {
    check_band("notch frequency", f0_hz, fs)?;
    if !(q > 0.0) {
        return Err(Error::Parameter(format!("notch Q must be positive, got {q}")));
    }
    let w0 = 2.0 * PI * f0_hz / fs;
    let beta = (w0 / q / 2.0).tan();
    let gain = 1.0 / (1.0 + beta);
    let c = w0.cos();
    Ok(BiquadChain {
        sections: vec![Biquad {
            b0: gain,
            b1: -2.0 * gain * c,
            b2: gain,
            a1: -2.0 * gain * c,
            a2: 2.0 * gain - 1.0,
        }],
        description: format!("notch {f0_hz} Hz, Q {q}, fs {fs} Hz"),
    })
}

fn odd_extend(x: &[f64], pad: usize) -> Vec<f64> {
    let n = x.len();
    let mut out = Vec::with_capacity(n + 2 * pad);
    out.extend((1..=pad).rev().map(|i| 2.0 * x[0] - x[i]));
    out.extend_from_slice(x);
    out.extend((1..=pad).map(|i| 2.0 * x[n - 1] - x[n - 1 - i]));
    out
}

fn reversed(mut v: Vec<f64>) -> Vec<f64> {
    v.reverse();
    v
}

/// Zero-phase filtering with odd-reflected edges of `3 × order` samples.
///
/// The forward-backward and backward-forward passes are averaged, so
/// filtering a time-reversed signal yields exactly the time-reversed output.
pub fn filtfilt(chain: &BiquadChain, signal: &[f64]) -> Result<Vec<f64>> {
    let pad = 3 * chain.order();
    if signal.len() <= pad {
        return Err(Error::Length {
            context: "filtfilt".into(),
            required: pad + 1,
            actual: signal.len(),
        });
    }
    let ext = odd_extend(signal, pad);
    let fb = reversed(chain.apply(&reversed(chain.apply(&ext))));
    let bf = chain.apply(&reversed(chain.apply(&reversed(ext))));
    Ok(fb[pad..pad + signal.len()]
        .iter()
        .zip(&bf[pad..pad + signal.len()])
        .map(|(a, b)| 0.5 * (a + b))
        .collect())
}
