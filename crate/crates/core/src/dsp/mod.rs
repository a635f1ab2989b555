//! Signal preprocessing: raw multichannel records in, 5×5×T grid epochs out.

mod filter;
pub mod montage;
mod spectrum;
mod window;

pub use filter::{design_bandpass, design_notch, filtfilt, Biquad, BiquadChain};
pub use montage::{grid_names, select_and_grid, GRID_SIZE, MONTAGE_60};
pub use spectrum::{band_report, beta_fraction, peak_frequency, Band, BandReport};
pub use window::{sliding_windows, window_offsets};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Keep every `factor`-th sample starting at index 0.
pub fn decimate(signal: &[f64], factor: usize) -> Result<Vec<f64>> {
    if factor == 0 {
        return Err(Error::Parameter("decimation factor must be positive".into()));
    }
    Ok(signal.iter().step_by(factor).copied().collect())
}

/// One raw multichannel epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRecord {
    pub fs: f64,
    pub channel_names: Vec<String>,
    /// channels × time, microvolts
    pub samples: Vec<Vec<f64>>,
}

impl RawRecord {
    pub fn new(fs: f64, channel_names: Vec<String>, samples: Vec<Vec<f64>>) -> Result<Self> {
        if !(fs > 0.0) {
            return Err(Error::Parameter(format!("sampling rate must be positive, got {fs}")));
        }
        if channel_names.len() != samples.len() {
            return Err(Error::dim("raw record", "channel", channel_names.len(), samples.len()));
        }
        let t = samples.first().map_or(0, Vec::len);
        if t == 0 || samples.iter().any(|c| c.len() != t) {
            return Err(Error::shape("raw record", "channels must share a positive length"));
        }
        Ok(RawRecord {
            fs,
            channel_names,
            samples,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.samples[0].len()
    }
}

/// A labelled 5×5×T grid epoch, the model input.
#[derive(Debug, Clone, PartialEq)]
pub struct GridEpoch {
    /// `[5, 5, T]`
    pub grid: Tensor,
    pub label: usize,
    pub fs: f64,
}

impl GridEpoch {
    pub fn new(grid: Tensor, label: usize, fs: f64) -> Result<Self> {
        match grid.shape() {
            [GRID_SIZE, GRID_SIZE, t] if *t > 0 => Ok(GridEpoch { grid, label, fs }),
            s => Err(Error::shape("grid epoch", format!("expected 5×5×T, got {s:?}"))),
        }
    }

    pub fn n_samples(&self) -> usize {
        self.grid.shape()[2]
    }

    /// Build from 25 grid-ordered channel series.
    pub fn from_channels(channels: &[Vec<f64>], label: usize, fs: f64) -> Result<Self> {
        if channels.len() != GRID_SIZE * GRID_SIZE {
            return Err(Error::dim("grid epoch", "channel", GRID_SIZE * GRID_SIZE, channels.len()));
        }
        let t = channels[0].len();
        if channels.iter().any(|c| c.len() != t) {
            return Err(Error::shape("grid epoch", "channels differ in length"));
        }
        let data = channels.concat();
        GridEpoch::new(Tensor::from_vec(&[GRID_SIZE, GRID_SIZE, t], data)?, label, fs)
    }

    /// The 25 channel series in grid order.
    pub fn channels(&self) -> Vec<Vec<f64>> {
        let t = self.n_samples();
        self.grid.data().chunks(t).map(<[f64]>::to_vec).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    pub notch_hz: f64,
    pub notch_q: f64,
    pub band_low_hz: f64,
    pub band_high_hz: f64,
    pub band_order: usize,
    pub target_fs: f64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            notch_hz: 60.0,
            notch_q: 30.0,
            band_low_hz: 0.5,
            band_high_hz: 40.0,
            band_order: 4,
            target_fs: 250.0,
        }
    }
}

/// Notch → band-pass (both zero-phase) → decimation → grid, with filters
/// designed once for a given input rate.
#[derive(Debug, Clone)]
pub struct Preprocessor {
    pub config: PreprocessConfig,
    pub fs_in: f64,
    pub notch: BiquadChain,
    pub bandpass: BiquadChain,
    pub factor: usize,
}

impl Preprocessor {
    pub fn new(config: PreprocessConfig, fs_in: f64) -> Result<Self> {
        let ratio = fs_in / config.target_fs;
        let factor = ratio.round() as usize;
        if factor == 0 || (ratio - factor as f64).abs() > 1e-9 {
            return Err(Error::Parameter(format!(
                "input rate {fs_in} Hz is not an integer multiple of {} Hz",
                config.target_fs
            )));
        }
        if config.band_high_hz >= config.target_fs / 2.0 {
            return Err(Error::Parameter(format!(
                "band-pass upper edge {} Hz must be below the decimated Nyquist {} Hz",
                config.band_high_hz,
                config.target_fs / 2.0
            )));
        }
        let notch = design_notch(config.notch_hz, config.notch_q, fs_in)?;
        let bandpass = design_bandpass(config.band_low_hz, config.band_high_hz, fs_in, config.band_order)?;
        Ok(Preprocessor {
            config,
            fs_in,
            notch,
            bandpass,
            factor,
        })
    }

    pub fn channel(&self, signal: &[f64]) -> Result<Vec<f64>> {
        let x = filtfilt(&self.notch, signal)?;
        let x = filtfilt(&self.bandpass, &x)?;
        decimate(&x, self.factor)
    }

    /// Full pipeline for one record. Only the 25 grid channels are filtered.
    pub fn grid(&self, record: &RawRecord, label: usize) -> Result<GridEpoch> {
        if (record.fs - self.fs_in).abs() > 1e-9 {
            return Err(Error::Parameter(format!(
                "record sampled at {} Hz, preprocessor built for {} Hz",
                record.fs, self.fs_in
            )));
        }
        let grid = select_and_grid(&record.channel_names)?;
        let channels = grid
            .iter()
            .flatten()
            .map(|&idx| self.channel(&record.samples[idx]))
            .collect::<Result<Vec<_>>>()?;
        GridEpoch::from_channels(&channels, label, self.config.target_fs)
    }
}
