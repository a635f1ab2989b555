//! Design the preprocessing filters and look at their responses, then run
//! one raw trial through the full pipeline onto the 5x5 grid.
//!
//!     cargo run --release --example filter_design

use grn::data::{Generator, SynthConfig};
use grn::dsp::{PreprocessConfig, Preprocessor, RawRecord};

fn main() -> grn::Result<()> {
    let synth = SynthConfig::reference();
    let pre = Preprocessor::new(PreprocessConfig::default(), synth.fs)?;
    println!(
        "band-pass {}-{} Hz, {} sections; notch {} Hz; decimation x{}",
        pre.config.band_low_hz,
        pre.config.band_high_hz,
        pre.bandpass.sections.len(),
        pre.config.notch_hz,
        pre.factor
    );
    println!("{:>8} {:>12} {:>12}", "Hz", "band-pass dB", "notch dB");
    for f in [0.1, 0.5, 1.0, 10.0, 20.0, 40.0, 50.0, 60.0, 80.0, 200.0] {
        println!(
            "{f:>8.1} {:>12.2} {:>12.2}",
            pre.bandpass.magnitude_db(f, synth.fs),
            pre.notch.magnitude_db(f, synth.fs)
        );
    }
    println!(
        "largest pole radius: band-pass {:.6}, notch {:.6}",
        pre.bandpass.max_pole_radius(),
        pre.notch.max_pole_radius()
    );

    let gen = Generator::new(synth.clone())?;
    let (label, channels) = gen.trial(0);
    let rec = RawRecord::new(synth.fs, synth.channel_names.clone(), channels)?;
    let epoch = pre.grid(&rec, label)?;
    println!(
        "{} channels x {} samples at {} Hz -> grid {:?} at {} Hz",
        rec.channel_names.len(),
        rec.n_samples(),
        synth.fs,
        epoch.grid.shape(),
        epoch.fs
    );
    Ok(())
}
