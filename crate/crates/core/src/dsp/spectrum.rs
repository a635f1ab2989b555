//! Peak-frequency band analysis of learned temporal feature maps.

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Band {
    /// [0, 4) Hz
    Delta,
    /// [4, 8) Hz
    Theta,
    /// [8, 12) Hz
    AlphaMu,
    /// [12, 30] Hz
    Beta,
    /// above 30 Hz
    Gamma,
}

impl Band {
    pub fn classify(freq_hz: f64) -> Band {
        if freq_hz < 4.0 {
            Band::Delta
        } else if freq_hz < 8.0 {
            Band::Theta
        } else if freq_hz < 12.0 {
            Band::AlphaMu
        } else if freq_hz <= 30.0 {
            Band::Beta
        } else {
            Band::Gamma
        }
    }

    pub const ALL: [Band; 5] = [Band::Delta, Band::Theta, Band::AlphaMu, Band::Beta, Band::Gamma];
}

/// Frequency of the largest non-DC magnitude bin after zero-padding to the
/// next power of two. Earliest bin wins ties.
pub fn peak_frequency(series: &[f64], fs: f64) -> Result<f64> {
    if series.len() < 8 {
        return Err(Error::Length {
            context: "peak frequency".into(),
            required: 8,
            actual: series.len(),
        });
    }
    let n = series.len().next_power_of_two();
    let mut buf: Vec<Complex64> = series.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    buf.resize(n, Complex64::new(0.0, 0.0));
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let mut best = 1;
    let mut best_mag = f64::NEG_INFINITY;
    for (k, c) in buf.iter().enumerate().take(n / 2 + 1).skip(1) {
        let m = c.norm();
        if m > best_mag {
            best_mag = m;
            best = k;
        }
    }
    Ok(best as f64 * fs / n as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandReport {
    pub filters: usize,
    /// Fraction of filters whose peak falls in each band, in [`Band::ALL`] order.
    pub fractions: [f64; 5],
    pub peak_hz: Vec<f64>,
}

impl BandReport {
    pub fn fraction(&self, band: Band) -> f64 {
        self.fractions[Band::ALL.iter().position(|b| *b == band).unwrap()]
    }
}

pub fn band_report(feature_maps: &[Vec<f64>], fs_feature: f64) -> Result<BandReport> {
    if feature_maps.is_empty() {
        return Err(Error::Parameter("band analysis needs at least one feature map".into()));
    }
    let peak_hz = feature_maps
        .iter()
        .map(|m| peak_frequency(m, fs_feature))
        .collect::<Result<Vec<_>>>()?;
    let mut fractions = [0.0; 5];
    for &f in &peak_hz {
        let b = Band::classify(f);
        fractions[Band::ALL.iter().position(|x| *x == b).unwrap()] += 1.0;
    }
    fractions.iter_mut().for_each(|v| *v /= peak_hz.len() as f64);
    Ok(BandReport {
        filters: peak_hz.len(),
        fractions,
        peak_hz,
    })
}

/// Fraction of filters whose spectral peak lies in the beta band.
pub fn beta_fraction(feature_maps: &[Vec<f64>], fs_feature: f64) -> Result<f64> {
    Ok(band_report(feature_maps, fs_feature)?.fraction(Band::Beta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn tone(f: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| (2.0 * PI * f * i as f64 / 250.0).sin()).collect()
    }

    #[test]
    fn band_edges() {
        assert_eq!(Band::classify(0.0), Band::Delta);
        assert_eq!(Band::classify(4.0), Band::Theta);
        assert_eq!(Band::classify(11.99), Band::AlphaMu);
        assert_eq!(Band::classify(12.0), Band::Beta);
        assert_eq!(Band::classify(30.0), Band::Beta);
        assert_eq!(Band::classify(30.1), Band::Gamma);
    }

    #[test]
    fn pure_beta_and_mixed() {
        let maps: Vec<_> = (0..6).map(|_| tone(20.0, 686)).collect();
        assert_eq!(beta_fraction(&maps, 250.0).unwrap(), 1.0);
        let mut maps: Vec<_> = (0..4).map(|_| tone(20.0, 686)).collect();
        maps.extend((0..4).map(|_| tone(5.0, 686)));
        assert_eq!(beta_fraction(&maps, 250.0).unwrap(), 0.5);
        let r = band_report(&maps, 250.0).unwrap();
        assert_eq!(r.fraction(Band::Theta), 0.5);
    }

    #[test]
    fn rejects_empty_and_short() {
        assert!(matches!(beta_fraction(&[], 250.0), Err(Error::Parameter(_))));
        assert!(matches!(beta_fraction(&[vec![0.0; 7]], 250.0), Err(Error::Length { .. })));
    }
}
