//! Evaluation protocol: repeated n-shot fits over different support sets,
//! projection of untrained classes onto the trained sub-parts, and tables.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{GrnConfig, GrnParams, Prototype};
use crate::tensor::Tensor;
use crate::train::{fit, FitResult, TrainConfig, TrainReport};

/// Accuracies of repeated runs with Max/Avg/Std (population std).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub n_shots: usize,
    pub seeds: Vec<u64>,
    pub accuracies: Vec<f64>,
    pub max: f64,
    pub avg: f64,
    pub std: f64,
}

impl EvalResult {
    pub fn from_accuracies(n_shots: usize, seeds: Vec<u64>, accuracies: Vec<f64>) -> Result<Self> {
        if accuracies.is_empty() || seeds.len() != accuracies.len() {
            return Err(Error::Parameter("need one accuracy per seed, at least one".into()));
        }
        let n = accuracies.len() as f64;
        let avg = accuracies.iter().sum::<f64>() / n;
        let std = (accuracies.iter().map(|a| (a - avg).powi(2)).sum::<f64>() / n).sqrt();
        let max = accuracies.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok(EvalResult {
            n_shots,
            seeds,
            accuracies,
            max,
            avg,
            std,
        })
    }

    /// Index of the best run; the first one wins ties.
    pub fn best_index(&self) -> usize {
        crate::model::argmax(&self.accuracies)
    }
}

/// Default protocol seeds: `0..repeats`.
pub fn default_seeds(repeats: usize) -> Vec<u64> {
    (0..repeats as u64).collect()
}

#[derive(Debug, Clone)]
pub struct ProtocolRun {
    pub result: EvalResult,
    /// The run with the highest test accuracy.
    pub best: FitResult,
    pub reports: Vec<TrainReport>,
}

/// Fraction of `truth` matched by `predicted`.
pub fn accuracy(predicted: &[usize], truth: &[usize]) -> f64 {
    let hits = predicted.iter().zip(truth).filter(|(p, t)| p == t).count();
    hits as f64 / truth.len().max(1) as f64
}

/// One fit per seed on an `n_shots` support; each is tested on every trial
/// not in its support.
pub fn run_protocol(
    grids: &[&Tensor],
    labels: &[usize],
    config: &GrnConfig,
    train: &TrainConfig,
    n_shots: usize,
    seeds: &[u64],
) -> Result<ProtocolRun> {
    if seeds.is_empty() {
        return Err(Error::Parameter("at least one seed is required".into()));
    }
    for k in 0..config.n_classes {
        let have = labels.iter().filter(|&&l| l == k).count();
        if have < n_shots + 1 {
            return Err(Error::Protocol(format!(
                "class {k} has {have} trials; {n_shots}-shot evaluation needs at least {}",
                n_shots + 1
            )));
        }
    }
    let mut accuracies = Vec::with_capacity(seeds.len());
    let mut reports = Vec::with_capacity(seeds.len());
    let mut best: Option<(f64, FitResult)> = None;
    for &seed in seeds {
        let run = fit(grids, labels, n_shots, config, train, seed)?;
        let in_support: BTreeSet<usize> = run.report.support.indices.iter().copied().collect();
        let test: Vec<usize> = (0..grids.len()).filter(|i| !in_support.contains(i)).collect();
        if test.iter().any(|i| in_support.contains(i)) || test.len() + in_support.len() != grids.len() {
            return Err(Error::Protocol("support and test sets overlap".into()));
        }
        let acc = test_accuracy(&run.params, &run.prototypes, grids, labels, &test)?;
        accuracies.push(acc);
        reports.push(run.report.clone());
        if best.as_ref().map_or(true, |(b, _)| acc > *b) {
            best = Some((acc, run));
        }
    }
    Ok(ProtocolRun {
        result: EvalResult::from_accuracies(n_shots, seeds.to_vec(), accuracies)?,
        best: best.expect("at least one seed").1,
        reports,
    })
}

/// Accuracy over the trials listed in `which`.
pub fn test_accuracy(
    params: &GrnParams,
    prototypes: &[Prototype],
    grids: &[&Tensor],
    labels: &[usize],
    which: &[usize],
) -> Result<f64> {
    let batch: Vec<&Tensor> = which.iter().map(|&i| grids[i]).collect();
    let preds = params.predict_batch(&batch, prototypes)?;
    let predicted: Vec<usize> = preds.iter().map(|p| p.class).collect();
    let truth: Vec<usize> = which.iter().map(|&i| labels[i]).collect();
    Ok(accuracy(&predicted, &truth))
}

/// Upper-extremity sub-parts, their representative classes, and where each
/// untrained candidate class belongs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassTaxonomy {
    pub sub_parts: Vec<String>,
    /// Representative class of each sub-part, same order.
    pub representatives: Vec<String>,
    /// `(candidate class, sub-part index)`
    pub candidates: Vec<(String, usize)>,
}

impl Default for ClassTaxonomy {
    fn default() -> Self {
        let c = |n: &str, k: usize| (n.to_string(), k);
        ClassTaxonomy {
            sub_parts: vec!["upper_arm".into(), "forearm".into(), "hand".into()],
            representatives: vec!["forward_reach".into(), "left_twist".into(), "cylindrical_grasp".into()],
            candidates: vec![
                c("backward_reach", 0),
                c("left_reach", 0),
                c("right_reach", 0),
                c("upward_reach", 0),
                c("downward_reach", 0),
                c("right_twist", 1),
                c("lateral_grasp", 2),
                c("spherical_grasp", 2),
            ],
        }
    }
}

impl ClassTaxonomy {
    /// Sub-part index of a class name (representative or candidate).
    pub fn sub_part_of(&self, class: &str) -> Result<usize> {
        if let Some(k) = self.representatives.iter().position(|r| r == class) {
            return Ok(k);
        }
        self.candidates
            .iter()
            .find(|(c, _)| c == class)
            .map(|&(_, k)| k)
            .ok_or_else(|| Error::Taxonomy(class.to_string()))
    }

    pub fn candidate_names(&self) -> Vec<&str> {
        self.candidates.iter().map(|(c, _)| c.as_str()).collect()
    }

    pub fn representative_names(&self) -> Vec<&str> {
        self.representatives.iter().map(String::as_str).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateClassResult {
    pub class: String,
    pub sub_part: String,
    pub trials: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateResult {
    pub accuracy: f64,
    pub per_class: Vec<CandidateClassResult>,
}

/// Predict each candidate trial into a sub-part; correct when it matches
/// the taxonomy. `class_names[labels[i]]` names trial `i`'s class.
pub fn evaluate_candidates(
    params: &GrnParams,
    prototypes: &[Prototype],
    grids: &[&Tensor],
    labels: &[usize],
    class_names: &[String],
    taxonomy: &ClassTaxonomy,
) -> Result<CandidateResult> {
    let expected: Vec<usize> = labels
        .iter()
        .map(|&l| {
            let name = class_names
                .get(l)
                .ok_or_else(|| Error::Taxonomy(format!("label {l}")))?;
            taxonomy.sub_part_of(name)
        })
        .collect::<Result<_>>()?;
    let preds = params.predict_batch(grids, prototypes)?;
    let predicted: Vec<usize> = preds.iter().map(|p| p.class).collect();
    let mut per_class = Vec::new();
    for (l, name) in class_names.iter().enumerate() {
        let idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == l).collect();
        if idx.is_empty() {
            continue;
        }
        let hits = idx.iter().filter(|&&i| predicted[i] == expected[i]).count();
        let k = taxonomy.sub_part_of(name)?;
        per_class.push(CandidateClassResult {
            class: name.clone(),
            sub_part: taxonomy.sub_parts[k].clone(),
            trials: idx.len(),
            accuracy: hits as f64 / idx.len() as f64,
        });
    }
    Ok(CandidateResult {
        accuracy: accuracy(&predicted, &expected),
        per_class,
    })
}

/// One cell group of the results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableEntry {
    pub subject: String,
    pub session: String,
    pub result: EvalResult,
}

/// Subjects as rows; for every session (then an average over sessions) and
/// every shot count, Max/Avg/Std columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub sessions: Vec<String>,
    pub shots: Vec<usize>,
    pub header: Vec<String>,
    /// `(subject, cells)`; `None` where no result was supplied.
    pub rows: Vec<(String, Vec<Option<f64>>)>,
}

fn ordered<T: Ord + Clone>(items: impl Iterator<Item = T>) -> Vec<T> {
    let mut out: Vec<T> = Vec::new();
    for i in items {
        if !out.contains(&i) {
            out.push(i);
        }
    }
    out
}

pub fn aggregate_table(entries: &[TableEntry]) -> ResultTable {
    let subjects = ordered(entries.iter().map(|e| e.subject.clone()));
    let sessions = ordered(entries.iter().map(|e| e.session.clone()));
    let mut shots = ordered(entries.iter().map(|e| e.result.n_shots));
    shots.sort();
    let mut header = Vec::new();
    let groups: Vec<String> = sessions.iter().cloned().chain(std::iter::once("Avg.".to_string())).collect();
    for g in &groups {
        for n in &shots {
            for stat in ["Max.", "Avg.", "Std."] {
                header.push(format!("{g} {n}-shot {stat}"));
            }
        }
    }
    if sessions.is_empty() {
        header.clear();
    }
    let stats = |r: &EvalResult| [r.max, r.avg, r.std];
    let rows = subjects
        .iter()
        .map(|subj| {
            let mut cells = Vec::new();
            for sess in &sessions {
                for &n in &shots {
                    let hit = entries
                        .iter()
                        .find(|e| &e.subject == subj && &e.session == sess && e.result.n_shots == n);
                    match hit {
                        Some(e) => cells.extend(stats(&e.result).map(Some)),
                        None => cells.extend([None; 3]),
                    }
                }
            }
            for &n in &shots {
                let found: Vec<[f64; 3]> = entries
                    .iter()
                    .filter(|e| &e.subject == subj && e.result.n_shots == n)
                    .map(|e| stats(&e.result))
                    .collect();
                for s in 0..3 {
                    cells.push(if found.is_empty() {
                        None
                    } else {
                        Some(found.iter().map(|v| v[s]).sum::<f64>() / found.len() as f64)
                    });
                }
            }
            (subj.clone(), cells)
        })
        .collect();
    ResultTable {
        sessions,
        shots,
        header,
        rows,
    }
}

impl ResultTable {
    /// Value of a cell by subject, session (`None` for the average group),
    /// shot count and statistic index (0 max, 1 avg, 2 std).
    pub fn cell(&self, subject: &str, session: Option<&str>, shots: usize, stat: usize) -> Option<f64> {
        let g = match session {
            Some(s) => self.sessions.iter().position(|x| x == s)?,
            None => self.sessions.len(),
        };
        let n = self.shots.iter().position(|&x| x == shots)?;
        let col = (g * self.shots.len() + n) * 3 + stat;
        self.rows.iter().find(|(s, _)| s == subject)?.1.get(col).copied().flatten()
    }

    /// Plain-text rendering with accuracies in percent.
    pub fn render(&self) -> String {
        let mut out = String::new();
        if self.rows.is_empty() {
            return out;
        }
        let groups: Vec<String> = self.sessions.iter().cloned().chain(std::iter::once("Avg.".into())).collect();
        let width = 7;
        let block = self.shots.len() * 3 * (width + 1);
        let _ = write!(out, "{:<10}", "");
        for g in &groups {
            let _ = write!(out, "|{:^w$}", g, w = block - 1);
        }
        out.push('\n');
        let _ = write!(out, "{:<10}", "");
        for _ in &groups {
            for n in &self.shots {
                let _ = write!(out, "|{:^w$}", format!("{n}-shot"), w = 3 * (width + 1) - 1);
            }
        }
        out.push('\n');
        let _ = write!(out, "{:<10}", "Subject");
        for _ in 0..groups.len() * self.shots.len() {
            for stat in ["Max.", "Avg.", "Std."] {
                let _ = write!(out, "|{stat:>width$}");
            }
        }
        out.push('\n');
        for (subj, cells) in &self.rows {
            let _ = write!(out, "{subj:<10}");
            for c in cells {
                match c {
                    Some(v) => {
                        let _ = write!(out, "|{:>width$.2}", v * 100.0);
                    }
                    None => {
                        let _ = write!(out, "|{:>width$}", "-");
                    }
                }
            }
            out.push('\n');
        }
        out
    }

    /// Comma-separated export, fractions not percent.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("subject");
        for h in &self.header {
            out.push(',');
            out.push_str(h);
        }
        out.push('\n');
        for (subj, cells) in &self.rows {
            out.push_str(subj);
            for c in cells {
                out.push(',');
                if let Some(v) = c {
                    let _ = write!(out, "{v}");
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Write eval-mode embeddings as CSV: `trial,label,class,e0,e1,...`, each
/// embedding flattened group, channel, time.
pub fn export_embeddings<W: Write>(
    out: &mut W,
    params: &GrnParams,
    grids: &[&Tensor],
    labels: &[usize],
    class_names: &[String],
) -> Result<()> {
    let io = |e: std::io::Error| Error::io("embedding export", e);
    let emb = params.encode_batch(grids)?;
    let per = emb.len() / grids.len().max(1);
    let mut head = String::from("trial,label,class");
    for k in 0..per {
        let _ = write!(head, ",e{k}");
    }
    writeln!(out, "{head}").map_err(io)?;
    for (i, &l) in labels.iter().enumerate() {
        let mut line = format!("{i},{l},{}", class_names.get(l).map_or("", String::as_str));
        for v in emb.sample(i) {
            let _ = write!(line, ",{v}");
        }
        writeln!(out, "{line}").map_err(io)?;
    }
    Ok(())
}
