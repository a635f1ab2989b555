//! Synthetic motor-imagery EEG.
//!
//! Every trial is 1/f background noise on each channel plus, for each rhythm
//! band used by any class, a band-limited oscillation shared by all
//! channels. The oscillation's waveform is fixed per session and band; each
//! trial sees it with a small random latency shift, so it is time-locked to
//! the cue only up to that jitter. During a trial of class `k` the oscillation in `k`'s band is
//! attenuated around `k`'s focal scalp position (event-related
//! desynchronization): channel `c` keeps a fraction
//! `1 − depth · exp(−d² / 2σ²)` of its amplitude, `d` being the distance
//! from `c` to the focus in grid units. Classes that share a band differ
//! only in where the attenuation sits.
//!
//! Trial `i` (class-major order) draws all of its randomness from
//! `SplitMix64::new(derive_seed(seed, i))`, so trials can be produced in any
//! order, or in parallel, with identical results.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::dsp::montage::{scalp_position, MONTAGE_60};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, SplitMix64};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rhythm {
    /// 8–12 Hz
    Mu,
    /// 12–30 Hz
    Beta,
}

impl Rhythm {
    pub fn band_hz(self) -> (f64, f64) {
        match self {
            Rhythm::Mu => (8.0, 12.0),
            Rhythm::Beta => (12.0, 30.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSpec {
    pub name: String,
    /// Focal point `(row, col)` in grid units (F3 = (0, 0), Cz = (2, 2)).
    pub focus: (f64, f64),
    pub rhythm: Rhythm,
    /// Fractional amplitude drop at the focus, in [0, 1].
    pub depth: f64,
}

impl ClassSpec {
    pub fn new(name: &str, focus: (f64, f64), rhythm: Rhythm, depth: f64) -> Self {
        ClassSpec {
            name: name.into(),
            focus,
            rhythm,
            depth,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub seed: u64,
    pub fs: f64,
    pub duration_s: f64,
    pub channel_names: Vec<String>,
    pub trials_per_class: usize,
    /// RMS of the 1/f background per channel, µV.
    pub noise_rms: f64,
    /// Rhythm RMS relative to the background RMS.
    pub snr_db: f64,
    /// Spatial spread σ of the attenuation, grid units.
    pub focus_sigma: f64,
    /// Relative per-trial spread of rhythm amplitude and attenuation depth.
    pub jitter: f64,
    /// Number of sinusoids summed per rhythm.
    pub components: usize,
    /// Per-trial latency shift of the rhythm waveform, uniform in ± this
    /// many seconds.
    pub latency_jitter_s: f64,
    /// RMS of 60 Hz mains interference, µV.
    pub line_noise_rms: f64,
    pub classes: Vec<ClassSpec>,
}

/// Three representative classes, one per upper-extremity sub-part.
pub fn representative_classes() -> Vec<ClassSpec> {
    vec![
        ClassSpec::new("forward_reach", (2.0, 0.5), Rhythm::Mu, 0.6),
        ClassSpec::new("left_twist", (1.0, 2.0), Rhythm::Beta, 0.6),
        ClassSpec::new("cylindrical_grasp", (2.5, 3.5), Rhythm::Mu, 0.6),
    ]
}

/// The eight untrained classes: same generators as their sub-part's
/// representative with shifted focus and depth.
pub fn candidate_classes() -> Vec<ClassSpec> {
    vec![
        ClassSpec::new("backward_reach", (2.3, 0.7), Rhythm::Mu, 0.55),
        ClassSpec::new("left_reach", (1.8, 0.3), Rhythm::Mu, 0.6),
        ClassSpec::new("right_reach", (2.2, 0.8), Rhythm::Mu, 0.5),
        ClassSpec::new("upward_reach", (1.7, 0.6), Rhythm::Mu, 0.55),
        ClassSpec::new("downward_reach", (2.4, 0.4), Rhythm::Mu, 0.6),
        ClassSpec::new("right_twist", (1.3, 2.2), Rhythm::Beta, 0.55),
        ClassSpec::new("lateral_grasp", (2.7, 3.3), Rhythm::Mu, 0.55),
        ClassSpec::new("spherical_grasp", (2.3, 3.7), Rhythm::Mu, 0.6),
    ]
}

impl Default for SynthConfig {
    fn default() -> Self {
        let mut classes = representative_classes();
        classes.extend(candidate_classes());
        SynthConfig {
            seed: 0,
            fs: 2500.0,
            duration_s: 3.0,
            channel_names: MONTAGE_60.iter().map(|s| s.to_string()).collect(),
            trials_per_class: 50,
            noise_rms: 10.0,
            snr_db: 6.0,
            focus_sigma: 1.0,
            jitter: 0.2,
            components: 4,
            latency_jitter_s: 0.01,
            line_noise_rms: 2.0,
            classes,
        }
    }
}

impl SynthConfig {
    /// The fixed 3-class reference dataset.
    pub fn reference() -> Self {
        SynthConfig {
            seed: 20_240_601,
            classes: representative_classes(),
            ..SynthConfig::default()
        }
    }

    pub fn n_samples(&self) -> usize {
        (self.fs * self.duration_s).round() as usize
    }

    pub fn n_trials(&self) -> usize {
        self.classes.len() * self.trials_per_class
    }

    pub fn class_names(&self) -> Vec<String> {
        self.classes.iter().map(|c| c.name.clone()).collect()
    }

    /// Class of trial `i` (class-major order).
    pub fn label(&self, i: usize) -> usize {
        i / self.trials_per_class
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials_per_class == 0 {
            return Err(Error::Parameter("trials_per_class must be at least 1".into()));
        }
        if self.classes.is_empty() {
            return Err(Error::Parameter("at least one class is required".into()));
        }
        if !(self.fs > 0.0) || !(self.duration_s > 0.0) || self.n_samples() == 0 {
            return Err(Error::Parameter("sampling rate and duration must be positive".into()));
        }
        if !(self.noise_rms >= 0.0) || !(self.focus_sigma > 0.0) || !(0.0..1.0).contains(&self.jitter) {
            return Err(Error::Parameter("noise_rms ≥ 0, focus_sigma > 0 and jitter in [0, 1) required".into()));
        }
        if !(self.latency_jitter_s >= 0.0) {
            return Err(Error::Parameter("latency_jitter_s must be non-negative".into()));
        }
        if self.components == 0 {
            return Err(Error::Parameter("components must be positive".into()));
        }
        for c in &self.classes {
            if !(0.0..=1.0).contains(&c.depth) {
                return Err(Error::Parameter(format!("class {}: depth {} outside [0, 1]", c.name, c.depth)));
            }
        }
        if let Some(bad) = self.channel_names.iter().find(|n| scalp_position(n).is_none()) {
            return Err(Error::Parameter(format!("channel {bad} has no known scalp position")));
        }
        Ok(())
    }
}

/// Produces trials one at a time.
#[derive(Debug, Clone)]
pub struct Generator {
    config: SynthConfig,
    positions: Vec<(f64, f64)>,
    /// Each band in use with its `(frequency, phase)` components.
    rhythms: Vec<(Rhythm, Vec<(f64, f64)>)>,
}

/// Pink noise by Paul Kellet's economy filter over white noise, rescaled to
/// the requested RMS.
fn pink_noise(rng: &mut SplitMix64, n: usize, rms: f64) -> Vec<f64> {
    const BURN_IN: usize = 1000;
    let (mut b0, mut b1, mut b2) = (0.0, 0.0, 0.0);
    let mut out = Vec::with_capacity(n);
    for i in 0..n + BURN_IN {
        let w = rng.normal();
        b0 = 0.99765 * b0 + w * 0.0990460;
        b1 = 0.96300 * b1 + w * 0.2965164;
        b2 = 0.57000 * b2 + w * 1.0526913;
        if i >= BURN_IN {
            out.push(b0 + b1 + b2 + w * 0.1848);
        }
    }
    let mean = out.iter().sum::<f64>() / n as f64;
    let sd = (out.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64).sqrt();
    let scale = if sd > 0.0 { rms / sd } else { 0.0 };
    out.iter_mut().for_each(|v| *v = (*v - mean) * scale);
    out
}

/// Sum of the given sinusoids shifted by `shift` seconds, unit RMS.
fn rhythm_wave(parts: &[(f64, f64)], shift: f64, fs: f64, n: usize) -> Vec<f64> {
    let norm = (2.0 / parts.len() as f64).sqrt();
    (0..n)
        .map(|t| {
            let time = t as f64 / fs + shift;
            norm * parts.iter().map(|&(f, ph)| (TAU * f * time + ph).sin()).sum::<f64>()
        })
        .collect()
}

impl Generator {
    pub fn new(config: SynthConfig) -> Result<Self> {
        config.validate()?;
        let positions = config
            .channel_names
            .iter()
            .map(|n| scalp_position(n).expect("validated"))
            .collect();
        let mut rhythms: Vec<(Rhythm, Vec<(f64, f64)>)> = Vec::new();
        for c in &config.classes {
            if rhythms.iter().all(|(r, _)| *r != c.rhythm) {
                // waveforms come from their own stream, away from trial seeds
                let mut rng = SplitMix64::new(derive_seed(config.seed, u64::MAX - rhythms.len() as u64));
                let band = c.rhythm.band_hz();
                let parts = (0..config.components)
                    .map(|_| (rng.uniform(band.0, band.1), rng.uniform(0.0, TAU)))
                    .collect();
                rhythms.push((c.rhythm, parts));
            }
        }
        Ok(Generator {
            config,
            positions,
            rhythms,
        })
    }

    pub fn config(&self) -> &SynthConfig {
        &self.config
    }

    /// Spatial gain of class `k`'s rhythm at channel `c` for a given depth.
    pub fn attenuation(&self, k: usize, c: usize, depth: f64) -> f64 {
        let spec = &self.config.classes[k];
        let (r, col) = self.positions[c];
        let d2 = (r - spec.focus.0).powi(2) + (col - spec.focus.1).powi(2);
        1.0 - depth * (-d2 / (2.0 * self.config.focus_sigma.powi(2))).exp()
    }

    /// Trial `i`: its label and `channels × samples` microvolts.
    pub fn trial(&self, i: usize) -> (usize, Vec<Vec<f64>>) {
        let label = self.config.label(i);
        (label, self.trial_as(label, i as u64))
    }

    /// A trial of class `label` drawn from random stream `stream`. Streams
    /// past the session's trial count give fresh trials from the same
    /// session (same rhythm waveforms).
    pub fn trial_as(&self, label: usize, stream: u64) -> Vec<Vec<f64>> {
        let cfg = &self.config;
        let n = cfg.n_samples();
        let mut rng = SplitMix64::new(derive_seed(cfg.seed, stream));
        let amp = cfg.noise_rms * 10f64.powf(cfg.snr_db / 20.0);
        let waves: Vec<(Rhythm, f64, Vec<f64>)> = self
            .rhythms
            .iter()
            .map(|(rh, parts)| {
                let gain = amp * (1.0 + cfg.jitter * rng.uniform(-1.0, 1.0));
                let shift = rng.uniform(-cfg.latency_jitter_s, cfg.latency_jitter_s);
                (*rh, gain, rhythm_wave(parts, shift, cfg.fs, n))
            })
            .collect();
        let spec = &cfg.classes[label];
        let depth = (spec.depth * (1.0 + cfg.jitter * rng.uniform(-1.0, 1.0))).clamp(0.0, 1.0);
        let line_phase = rng.uniform(0.0, TAU);
        let line_amp = cfg.line_noise_rms * std::f64::consts::SQRT_2;
        let mut channels = Vec::with_capacity(cfg.channel_names.len());
        for c in 0..cfg.channel_names.len() {
            let mut x = pink_noise(&mut rng, n, cfg.noise_rms);
            for (rh, gain, wave) in &waves {
                let g = if *rh == spec.rhythm {
                    gain * self.attenuation(label, c, depth)
                } else {
                    *gain
                };
                x.iter_mut().zip(wave).for_each(|(v, w)| *v += g * w);
            }
            if line_amp > 0.0 {
                for (t, v) in x.iter_mut().enumerate() {
                    *v += line_amp * (TAU * 60.0 * t as f64 / cfg.fs + line_phase).sin();
                }
            }
            channels.push(x);
        }
        channels
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_layout() {
        let cfg = SynthConfig::default();
        assert_eq!(cfg.n_trials(), 550);
        assert_eq!(cfg.n_samples(), 7500);
        assert_eq!(cfg.channel_names.len(), 60);
        assert_eq!(cfg.label(49), 0);
        assert_eq!(cfg.label(50), 1);
    }

    #[test]
    fn trials_are_reproducible_in_any_order() {
        let cfg = SynthConfig {
            trials_per_class: 2,
            duration_s: 0.2,
            ..SynthConfig::reference()
        };
        let g = Generator::new(cfg).unwrap();
        let late = g.trial(5);
        let _ = g.trial(0);
        assert_eq!(g.trial(5), late);
        assert_ne!(g.trial(4).1, late.1);
        assert_eq!(late.0, 2);
    }

    #[test]
    fn validation() {
        let mut cfg = SynthConfig::reference();
        cfg.classes[0].depth = 1.5;
        assert!(Generator::new(cfg).is_err());
        let cfg = SynthConfig { trials_per_class: 0, ..SynthConfig::reference() };
        assert!(Generator::new(cfg).is_err());
    }

    #[test]
    fn pink_noise_has_requested_rms() {
        let mut rng = SplitMix64::new(1);
        let x = pink_noise(&mut rng, 5000, 10.0);
        let rms = (x.iter().map(|v| v * v).sum::<f64>() / 5000.0).sqrt();
        assert!((rms - 10.0).abs() < 1e-9);
    }
}
