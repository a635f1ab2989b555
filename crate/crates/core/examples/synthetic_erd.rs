//! Generate a short synthetic session and measure the band-power drop each
//! class produces over its focal channel.
//!
//!     cargo run --release --example synthetic_erd

use grn::data::{generate_session, save_dataset, load_dataset, Generator, SynthConfig};
use grn::dsp::{design_bandpass, filtfilt};

/// Mean power of `x` after removing its mean.
fn power(x: &[f64]) -> f64 {
    let m = x.iter().sum::<f64>() / x.len() as f64;
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / x.len() as f64
}

fn main() -> grn::Result<()> {
    let cfg = SynthConfig {
        trials_per_class: 10,
        ..SynthConfig::reference()
    };
    let gen = Generator::new(cfg.clone())?;
    let n_ch = cfg.channel_names.len();

    for (k, class) in cfg.classes.iter().enumerate() {
        let a: Vec<f64> = (0..n_ch).map(|c| gen.attenuation(k, c, class.depth)).collect();
        let focal = (0..n_ch).min_by(|&i, &j| a[i].total_cmp(&a[j])).unwrap();
        let distant = (0..n_ch).max_by(|&i, &j| a[i].total_cmp(&a[j])).unwrap();
        let (lo, hi) = class.rhythm.band_hz();
        let band = design_bandpass(lo, hi, cfg.fs, 4)?;
        let (mut pf, mut pd) = (0.0, 0.0);
        for s in 0..20 {
            let x = gen.trial_as(k, s);
            pf += power(&filtfilt(&band, &x[focal])?);
            pd += power(&filtfilt(&band, &x[distant])?);
        }
        println!(
            "{:<18} {lo}-{hi} Hz, focal {:>4} vs {:>4}: band power ratio {:.3}, amplitude drop {:.3} (configured {:.3})",
            class.name,
            cfg.channel_names[focal],
            cfg.channel_names[distant],
            pf / pd,
            1.0 - (pf / pd).sqrt(),
            1.0 - a[focal] / a[distant]
        );
    }

    let ds = generate_session(&SynthConfig {
        duration_s: 1.0,
        ..cfg
    })?;
    let dir = std::env::temp_dir().join("grn-synthetic-erd");
    let path = dir.join("session.json");
    let sum = save_dataset(&ds, &path)?;
    let back = load_dataset(&path)?;
    println!(
        "saved {} trials x {} channels to {} (checksum {sum:016x}, reload equal: {})",
        ds.n_trials(),
        ds.n_channels(),
        path.display(),
        back == ds
    );
    Ok(())
}
