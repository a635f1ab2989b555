//! Datasets in memory and on disk, plus the synthetic generator.
//!
//! On disk a dataset is a JSON manifest and a payload of little-endian
//! `f32` values ordered trial, then channel, then time. The manifest stores
//! the FNV-1a 64 checksum of the payload.

pub mod synth;

pub use synth::{candidate_classes, representative_classes, ClassSpec, Generator, Rhythm, SynthConfig};

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::codec::{decode_f32, encode_f32, fnv1a64, payload_name, read_bytes, read_json, read_payload, sibling, write_bytes, write_json};
use crate::dsp::{grid_names, GridEpoch, Preprocessor, RawRecord, GRID_SIZE};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const FORMAT: &str = "grn-dataset";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    /// Arbitrary channels at the recording rate.
    Raw,
    /// The 25 grid channels, preprocessed, in grid order.
    Grid,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub kind: DatasetKind,
    pub fs: f64,
    pub channel_names: Vec<String>,
    pub class_names: Vec<String>,
    pub labels: Vec<usize>,
    pub n_samples: usize,
    /// Where the data came from (generator config, import note, ...).
    pub provenance: serde_json::Value,
    data: Vec<f32>,
}

impl Dataset {
    pub fn new(
        kind: DatasetKind,
        fs: f64,
        channel_names: Vec<String>,
        class_names: Vec<String>,
        n_samples: usize,
        provenance: serde_json::Value,
    ) -> Result<Self> {
        if !(fs > 0.0) || n_samples == 0 || channel_names.is_empty() {
            return Err(Error::Parameter("dataset needs a positive rate, length and channel count".into()));
        }
        if kind == DatasetKind::Grid && channel_names != grid_names() {
            return Err(Error::Parameter("grid datasets must list the 25 grid channels in grid order".into()));
        }
        Ok(Dataset {
            kind,
            fs,
            channel_names,
            class_names,
            labels: Vec::new(),
            n_samples,
            provenance,
            data: Vec::new(),
        })
    }

    pub fn n_trials(&self) -> usize {
        self.labels.len()
    }

    pub fn n_channels(&self) -> usize {
        self.channel_names.len()
    }

    fn trial_len(&self) -> usize {
        self.n_channels() * self.n_samples
    }

    /// Append one trial given as `channels × samples`. Values are stored as `f32`.
    pub fn push(&mut self, label: usize, channels: &[Vec<f64>]) -> Result<()> {
        if channels.len() != self.n_channels() {
            return Err(Error::dim("dataset trial", "channel", self.n_channels(), channels.len()));
        }
        if let Some(c) = channels.iter().find(|c| c.len() != self.n_samples) {
            return Err(Error::dim("dataset trial", "time", self.n_samples, c.len()));
        }
        if label >= self.class_names.len() {
            return Err(Error::Parameter(format!("label {label} has no class name")));
        }
        self.data.extend(channels.iter().flatten().map(|&v| v as f32));
        self.labels.push(label);
        Ok(())
    }

    /// Stored values of trial `i`, channel-major.
    pub fn trial_values(&self, i: usize) -> &[f32] {
        let n = self.trial_len();
        &self.data[i * n..(i + 1) * n]
    }

    pub fn channels(&self, i: usize) -> Vec<Vec<f64>> {
        self.trial_values(i)
            .chunks(self.n_samples)
            .map(|c| c.iter().map(|&v| v as f64).collect())
            .collect()
    }

    pub fn record(&self, i: usize) -> Result<RawRecord> {
        RawRecord::new(self.fs, self.channel_names.clone(), self.channels(i))
    }

    /// Trial `i` of a grid dataset as a `[5, 5, T]` tensor.
    pub fn grid(&self, i: usize) -> Result<Tensor> {
        if self.kind != DatasetKind::Grid {
            return Err(Error::Parameter("dataset holds raw trials; preprocess it first".into()));
        }
        let data = self.trial_values(i).iter().map(|&v| v as f64).collect();
        Tensor::from_vec(&[GRID_SIZE, GRID_SIZE, self.n_samples], data)
    }

    pub fn grids(&self) -> Result<Vec<Tensor>> {
        (0..self.n_trials()).map(|i| self.grid(i)).collect()
    }

    /// Indices of the trials of class `k`.
    pub fn class_indices(&self, k: usize) -> Vec<usize> {
        (0..self.n_trials()).filter(|&i| self.labels[i] == k).collect()
    }

    /// Keep only the named classes, relabelled `0..` in the given order.
    pub fn select_classes(&self, names: &[&str]) -> Result<Dataset> {
        let map: Vec<usize> = names
            .iter()
            .map(|n| {
                self.class_names
                    .iter()
                    .position(|c| c == n)
                    .ok_or_else(|| Error::Parameter(format!("dataset has no class {n:?}")))
            })
            .collect::<Result<_>>()?;
        let mut out = Dataset {
            class_names: names.iter().map(|s| s.to_string()).collect(),
            labels: Vec::new(),
            data: Vec::new(),
            ..self.clone_header()
        };
        for (i, &l) in self.labels.iter().enumerate() {
            if let Some(new) = map.iter().position(|&m| m == l) {
                out.labels.push(new);
                out.data.extend_from_slice(self.trial_values(i));
            }
        }
        Ok(out)
    }

    fn clone_header(&self) -> Dataset {
        Dataset {
            kind: self.kind,
            fs: self.fs,
            channel_names: self.channel_names.clone(),
            class_names: self.class_names.clone(),
            labels: Vec::new(),
            n_samples: self.n_samples,
            provenance: self.provenance.clone(),
            data: Vec::new(),
        }
    }

    /// Preprocess every trial into a grid dataset.
    pub fn preprocess(&self, pre: &Preprocessor) -> Result<Dataset> {
        if self.kind != DatasetKind::Raw {
            return Err(Error::Parameter("dataset is already preprocessed".into()));
        }
        let mut out: Option<Dataset> = None;
        for i in 0..self.n_trials() {
            let ep = pre.grid(&self.record(i)?, self.labels[i])?;
            push_epoch(&mut out, self, &ep, serde_json::json!({
                "preprocessed_from": self.provenance,
                "preprocess": pre.config,
            }))?;
        }
        out.ok_or_else(|| Error::Parameter("dataset has no trials".into()))
    }

    /// Byte payload in the on-disk layout.
    pub fn payload(&self) -> Vec<u8> {
        encode_f32(self.data.iter().map(|&v| v as f64))
    }

    pub fn checksum(&self) -> u64 {
        fnv1a64(&self.payload())
    }
}

fn push_epoch(out: &mut Option<Dataset>, src: &Dataset, ep: &GridEpoch, provenance: serde_json::Value) -> Result<()> {
    if out.is_none() {
        *out = Some(Dataset::new(
            DatasetKind::Grid,
            ep.fs,
            grid_names(),
            src.class_names.clone(),
            ep.n_samples(),
            provenance,
        )?);
    }
    out.as_mut().expect("set above").push(ep.label, &ep.channels())
}

/// Generate the full raw session described by `config`.
pub fn generate_session(config: &SynthConfig) -> Result<Dataset> {
    let gen = Generator::new(config.clone())?;
    let mut ds = Dataset::new(
        DatasetKind::Raw,
        config.fs,
        config.channel_names.clone(),
        config.class_names(),
        config.n_samples(),
        serde_json::json!({ "synthetic": config }),
    )?;
    for i in 0..config.n_trials() {
        let (label, channels) = gen.trial(i);
        ds.push(label, &channels)?;
    }
    Ok(ds)
}

/// Generate and preprocess trial by trial, never holding the raw session.
pub fn generate_grid_session(config: &SynthConfig, pre: &Preprocessor) -> Result<Dataset> {
    let gen = Generator::new(config.clone())?;
    let mut out = Dataset::new(
        DatasetKind::Grid,
        pre.config.target_fs,
        grid_names(),
        config.class_names(),
        config.n_samples().div_ceil(pre.factor),
        serde_json::json!({ "synthetic": config, "preprocess": pre.config }),
    )?;
    for i in 0..config.n_trials() {
        let (label, channels) = gen.trial(i);
        let rec = RawRecord::new(config.fs, config.channel_names.clone(), channels)?;
        let ep = pre.grid(&rec, label)?;
        out.push(label, &ep.channels())?;
    }
    Ok(out)
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format: String,
    version: u32,
    kind: DatasetKind,
    fs: f64,
    channel_names: Vec<String>,
    class_names: Vec<String>,
    labels: Vec<usize>,
    trials: usize,
    samples: usize,
    provenance: serde_json::Value,
    payload: String,
    checksum: String,
}

/// Write `path` (manifest) and the payload beside it; returns the checksum.
pub fn save_dataset(ds: &Dataset, path: &Path) -> Result<u64> {
    let bytes = ds.payload();
    let checksum = fnv1a64(&bytes);
    let payload = payload_name(path);
    let manifest = Manifest {
        format: FORMAT.into(),
        version: FORMAT_VERSION,
        kind: ds.kind,
        fs: ds.fs,
        channel_names: ds.channel_names.clone(),
        class_names: ds.class_names.clone(),
        labels: ds.labels.clone(),
        trials: ds.n_trials(),
        samples: ds.n_samples,
        provenance: ds.provenance.clone(),
        payload: payload.clone(),
        checksum: format!("{checksum:016x}"),
    };
    write_bytes(&sibling(path, &payload), &bytes)?;
    write_json(path, &manifest)?;
    Ok(checksum)
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let m: Manifest = read_json(path, "dataset manifest")?;
    if m.format != FORMAT {
        return Err(Error::format("dataset manifest", format!("unknown format {:?}", m.format)));
    }
    if m.version != FORMAT_VERSION {
        return Err(Error::Version {
            expected: FORMAT_VERSION,
            found: m.version,
        });
    }
    if m.labels.len() != m.trials {
        return Err(Error::format(
            "dataset manifest",
            format!("{} labels for {} trials", m.labels.len(), m.trials),
        ));
    }
    if let Some(&l) = m.labels.iter().find(|&&l| l >= m.class_names.len()) {
        return Err(Error::format("dataset manifest", format!("label {l} has no class name")));
    }
    let checksum = u64::from_str_radix(&m.checksum, 16)
        .map_err(|e| Error::format("dataset manifest", format!("checksum: {e}")))?;
    let expected = m.trials * m.channel_names.len() * m.samples * 4;
    let bytes = read_payload(&sibling(path, &m.payload), expected, checksum)?;
    let mut ds = Dataset::new(m.kind, m.fs, m.channel_names, m.class_names, m.samples, m.provenance)?;
    ds.labels = m.labels;
    ds.data = decode_f32(&bytes).into_iter().map(|v| v as f32).collect();
    Ok(ds)
}

/// Describes a headerless raw matrix for [`import_raw`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawImport {
    pub fs: f64,
    pub channel_names: Vec<String>,
    pub samples: usize,
    /// One label per trial; the trial count follows from its length.
    pub labels: Vec<usize>,
    pub class_names: Vec<String>,
    #[serde(default)]
    pub note: String,
}

/// Read a `trials × channels × samples` little-endian `f32` matrix (e.g.
/// 550 × 60 × 7500 recorded at 2500 Hz) into a raw dataset.
pub fn import_raw(matrix: &Path, spec: &RawImport) -> Result<Dataset> {
    let bytes = read_bytes(matrix)?;
    let per = spec.channel_names.len() * spec.samples;
    let expected = spec.labels.len() * per * 4;
    if bytes.len() < expected {
        return Err(Error::Truncated {
            expected,
            actual: bytes.len(),
        });
    }
    if bytes.len() != expected {
        return Err(Error::format("raw matrix", format!("{} bytes, expected {expected}", bytes.len())));
    }
    let mut ds = Dataset::new(
        DatasetKind::Raw,
        spec.fs,
        spec.channel_names.clone(),
        spec.class_names.clone(),
        spec.samples,
        serde_json::json!({ "imported_from": matrix.display().to_string(), "note": spec.note }),
    )?;
    if let Some(&l) = spec.labels.iter().find(|&&l| l >= spec.class_names.len()) {
        return Err(Error::Parameter(format!("label {l} has no class name")));
    }
    ds.labels = spec.labels.clone();
    ds.data = decode_f32(&bytes).into_iter().map(|v| v as f32).collect();
    Ok(ds)
}
