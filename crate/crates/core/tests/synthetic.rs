use grn::data::{Generator, Rhythm, SynthConfig};
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

/// Welch power spectral density: Hann segments of `seg` samples with 50 %
/// overlap, averaged. Returns power per bin `k · fs / seg`.
fn welch(x: &[f64], seg: usize) -> Vec<f64> {
    let fft = FftPlanner::new().plan_fft_forward(seg);
    let hann: Vec<f64> = (0..seg)
        .map(|i| 0.5 - 0.5 * (std::f64::consts::TAU * i as f64 / seg as f64).cos())
        .collect();
    let mut psd = vec![0.0; seg / 2 + 1];
    let mut count = 0;
    let mut start = 0;
    while start + seg <= x.len() {
        let mut buf: Vec<Complex64> = x[start..start + seg]
            .iter()
            .zip(&hann)
            .map(|(v, w)| Complex64::new(v * w, 0.0))
            .collect();
        fft.process(&mut buf);
        for (p, c) in psd.iter_mut().zip(&buf) {
            *p += c.norm_sqr();
        }
        count += 1;
        start += seg / 2;
    }
    psd.iter_mut().for_each(|p| *p /= count as f64);
    psd
}

fn band_power(x: &[f64], fs: f64, band: (f64, f64)) -> f64 {
    let seg = fs as usize;
    let psd = welch(x, seg);
    psd.iter()
        .enumerate()
        .filter(|(k, _)| {
            let f = *k as f64 * fs / seg as f64;
            f >= band.0 && f <= band.1
        })
        .map(|(_, p)| p)
        .sum()
}

/// Most and least attenuated channels of class `k`.
fn focal_and_distant(gen: &Generator, k: usize) -> (usize, usize) {
    let n = gen.config().channel_names.len();
    let depth = gen.config().classes[k].depth;
    let a: Vec<f64> = (0..n).map(|c| gen.attenuation(k, c, depth)).collect();
    let focal = (0..n).min_by(|&i, &j| a[i].total_cmp(&a[j])).unwrap();
    let distant = (0..n).max_by(|&i, &j| a[i].total_cmp(&a[j])).unwrap();
    (focal, distant)
}

/// Depth implied by the measured band-power ratio, `1 − √(P_focal / P_distant)`,
/// over `trials` trials of class `k`, and the depth the generator applies.
fn measured_depth(cfg: &SynthConfig, k: usize, trials: u64) -> (f64, f64) {
    let gen = Generator::new(cfg.clone()).unwrap();
    let (focal, distant) = focal_and_distant(&gen, k);
    let band = cfg.classes[k].rhythm.band_hz();
    let (mut pf, mut pd) = (0.0, 0.0);
    for s in 0..trials {
        let x = gen.trial_as(k, s);
        pf += band_power(&x[focal], cfg.fs, band);
        pd += band_power(&x[distant], cfg.fs, band);
    }
    let depth = cfg.classes[k].depth;
    let expected = 1.0 - gen.attenuation(k, focal, depth) / gen.attenuation(k, distant, depth);
    (1.0 - (pf / pd).sqrt(), expected)
}

#[test]
fn beta_class_attenuation_matches_configured_depth() {
    let cfg = SynthConfig::reference();
    let k = cfg.classes.iter().position(|c| c.rhythm == Rhythm::Beta).unwrap();
    let (measured, expected) = measured_depth(&cfg, k, 50);
    assert!(expected > 0.5, "expected depth {expected}");
    let rel = (measured - expected).abs() / expected;
    assert!(rel < 0.2, "measured {measured:.3}, configured {expected:.3}, relative {rel:.3}");
}

#[test]
fn mu_class_attenuation_matches_configured_depth() {
    let cfg = SynthConfig::reference();
    let (measured, expected) = measured_depth(&cfg, 0, 50);
    let rel = (measured - expected).abs() / expected;
    assert!(rel < 0.2, "measured {measured:.3}, configured {expected:.3}, relative {rel:.3}");
}

#[test]
fn zero_depth_leaves_no_spatial_contrast() {
    let mut cfg = SynthConfig::reference();
    cfg.classes.iter_mut().for_each(|c| c.depth = 0.0);
    let cfg_depth = SynthConfig::reference();
    let k = 1;
    // measure at the channels the real class would attenuate
    let gen = Generator::new(cfg_depth).unwrap();
    let (focal, distant) = focal_and_distant(&gen, k);
    let flat = Generator::new(cfg.clone()).unwrap();
    let band = cfg.classes[k].rhythm.band_hz();
    let (mut pf, mut pd) = (0.0, 0.0);
    for s in 0..30 {
        let x = flat.trial_as(k, s);
        pf += band_power(&x[focal], cfg.fs, band);
        pd += band_power(&x[distant], cfg.fs, band);
    }
    let contrast = 1.0 - (pf / pd).sqrt();
    assert!(contrast.abs() < 0.05, "contrast {contrast:.3}");
}

#[test]
fn attenuation_never_amplifies() {
    let gen = Generator::new(SynthConfig::default()).unwrap();
    for k in 0..gen.config().classes.len() {
        for c in 0..gen.config().channel_names.len() {
            let a = gen.attenuation(k, c, gen.config().classes[k].depth);
            assert!((0.0..=1.0).contains(&a));
        }
    }
}

#[test]
fn sessions_are_reproducible_and_seed_dependent() {
    let cfg = SynthConfig {
        duration_s: 0.5,
        ..SynthConfig::reference()
    };
    let a = Generator::new(cfg.clone()).unwrap();
    let b = Generator::new(cfg.clone()).unwrap();
    assert_eq!(a.trial(4), b.trial(4));
    let c = Generator::new(SynthConfig { seed: cfg.seed + 1, ..cfg }).unwrap();
    assert_ne!(a.trial(4).1, c.trial(4).1);
}
