//! The `grn` command line: generate, preprocess, train, eval, simulate and
//! inspect.
//!
//! Settings come from three layers, later ones winning: built-in defaults,
//! a TOML file given with `--config`, and flags. Whatever was in effect is
//! written into every artifact a command produces.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::codec::{read_json, write_bytes, write_json};
use crate::data::{generate_grid_session, generate_session, load_dataset, save_dataset, Dataset, DatasetKind, SynthConfig};
use crate::dsp::{band_report, Band, BandReport, PreprocessConfig, Preprocessor};
use crate::error::{Error, Result};
use crate::eval::{aggregate_table, default_seeds, evaluate_candidates, run_protocol, CandidateResult, ClassTaxonomy, EvalResult, TableEntry};
use crate::model::{load_checkpoint, save_checkpoint, stack_grids, CheckpointMeta, GrnConfig};
use crate::online::{motion_map, run_session, Decoder, Replay, SessionScript, Timing};
use crate::tensor::Tensor;
use crate::train::{fit, TrainConfig};

/// Exit status for command-line misuse.
pub const EXIT_USAGE: i32 = 64;

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "GRN_OUT_DIR";

const DEFAULT_OUT_DIR: &str = "grn-out";

#[derive(Debug, Parser)]
#[command(name = "grn", version, about = "Few-shot EEG motor-imagery decoding toolkit")]
#[command(arg_required_else_help = true)]
pub struct Cli {
    /// TOML file with [synth], [model], [train], [preprocess], [timing] and
    /// [run] sections.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Directory for default output paths (else $GRN_OUT_DIR, else ./grn-out).
    #[arg(long, global = true, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,

    /// Per-run progress on stderr.
    #[arg(short, long, global = true, action = ArgAction::Count)]
    pub verbose: u8,

    /// Only errors on stderr.
    #[arg(short, long, global = true)]
    pub quiet: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic session as a dataset file.
    Generate(GenerateArgs),
    /// Filter, decimate and grid a raw dataset.
    Preprocess(PreprocessArgs),
    /// Fit one model and save it as a checkpoint.
    Train(TrainArgs),
    /// Repeated n-shot evaluation with a Max/Avg/Std table.
    Eval(EvalArgs),
    /// Replay a scripted online session against a checkpoint.
    Simulate(SimulateArgs),
    /// Shapes, parameters and learned-filter spectra of a checkpoint.
    Inspect(InspectArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// The fixed three-class reference session.
    Reference,
    /// All eleven classes: representatives plus candidates.
    Full,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Base configuration when the config file has no [synth] section.
    #[arg(long, value_enum, default_value = "reference")]
    pub preset: Preset,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub trials_per_class: Option<usize>,
    #[arg(long)]
    pub snr_db: Option<f64>,
    /// Attenuation depth applied to every class (0 removes the class signal).
    #[arg(long)]
    pub depth: Option<f64>,
    #[arg(long)]
    pub duration_s: Option<f64>,
    /// Preprocess while generating and write a grid dataset.
    #[arg(long)]
    pub grid: bool,
    #[command(flatten)]
    pub pre: PreprocessFlags,
    /// Output manifest path (default <out-dir>/dataset.json).
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    /// Raw dataset manifest.
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub pre: PreprocessFlags,
    /// Output manifest path (default <out-dir>/grid.json).
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Default, Args)]
pub struct PreprocessFlags {
    #[arg(long)]
    pub notch_hz: Option<f64>,
    #[arg(long)]
    pub band_low_hz: Option<f64>,
    #[arg(long)]
    pub band_high_hz: Option<f64>,
    #[arg(long)]
    pub target_fs: Option<f64>,
}

#[derive(Debug, Default, Args)]
pub struct ModelFlags {
    /// Three groups and eight relation filters per group.
    #[arg(long)]
    pub compact: bool,
    #[arg(long)]
    pub groups: Option<usize>,
    #[arg(long)]
    pub channels_per_group: Option<usize>,
    #[arg(long)]
    pub relation_channels_per_group: Option<usize>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub target_loss: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Grid dataset manifest.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub shots: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Train on these classes only, in this order.
    #[arg(long, value_delimiter = ',')]
    pub classes: Vec<String>,
    #[command(flatten)]
    pub model: ModelFlags,
    /// Checkpoint manifest path (default <out-dir>/model.json).
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Grid dataset manifest.
    #[arg(long)]
    pub data: PathBuf,
    /// Shot counts, e.g. `1,5,25`.
    #[arg(long, value_delimiter = ',')]
    pub shots: Vec<usize>,
    /// Number of runs; seeds are 0..repeats unless `--seeds` is given.
    #[arg(long)]
    pub repeats: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub seeds: Vec<u64>,
    #[arg(long, value_delimiter = ',')]
    pub classes: Vec<String>,
    /// Train on the representative classes, then project the candidate
    /// classes onto their sub-parts with the best run.
    #[arg(long)]
    pub candidates: bool,
    /// Row label of the table.
    #[arg(long, default_value = "synthetic")]
    pub subject: String,
    #[arg(long, default_value = "S1")]
    pub session: String,
    #[command(flatten)]
    pub model: ModelFlags,
    /// Output directory for eval.json and eval.csv (default <out-dir>).
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Session script (JSON).
    #[arg(long)]
    pub script: PathBuf,
    /// Grid dataset of 5 s acquisitions for `trial` sources.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Session report path (default <out-dir>/session.json).
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Grid dataset; adds the spectra of layer-1 feature maps of one trial.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub trial: usize,
    /// Sampling rate of the model input (default: from the checkpoint).
    #[arg(long)]
    pub fs: Option<f64>,
    /// Print JSON instead of text.
    #[arg(long)]
    pub json: bool,
}

/// Contents of a `--config` file. Every section is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub synth: Option<SynthConfig>,
    pub model: Option<GrnConfig>,
    pub train: Option<TrainConfig>,
    pub preprocess: Option<PreprocessConfig>,
    pub timing: Option<Timing>,
    pub run: RunSection,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub seed: Option<u64>,
    pub shots: Option<Vec<usize>>,
    pub repeats: Option<usize>,
    pub seeds: Option<Vec<u64>>,
    pub out_dir: Option<PathBuf>,
    pub compact: Option<bool>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<FileConfig> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        toml::from_str(&text).map_err(|e| Error::Parameter(format!("config file {}: {e}", path.display())))
    }
}

/// Everything a command needs after the three layers are merged.
struct Context {
    file: FileConfig,
    out_dir: PathBuf,
    verbose: u8,
    quiet: bool,
}

impl Context {
    fn note(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", msg.as_ref());
        }
    }

    fn detail(&self, msg: impl AsRef<str>) {
        if self.verbose > 0 && !self.quiet {
            eprintln!("{}", msg.as_ref());
        }
    }

    fn output(&self, given: &Option<PathBuf>, default_name: &str) -> PathBuf {
        given.clone().unwrap_or_else(|| self.out_dir.join(default_name))
    }

    fn preprocess(&self, flags: &PreprocessFlags) -> PreprocessConfig {
        let mut cfg = self.file.preprocess.clone().unwrap_or_default();
        set(&mut cfg.notch_hz, flags.notch_hz);
        set(&mut cfg.band_low_hz, flags.band_low_hz);
        set(&mut cfg.band_high_hz, flags.band_high_hz);
        set(&mut cfg.target_fs, flags.target_fs);
        cfg
    }

    fn model(&self, flags: &ModelFlags, n_classes: usize, input_samples: usize) -> GrnConfig {
        let compact = flags.compact || self.file.run.compact.unwrap_or(false);
        let mut cfg = self.file.model.clone().unwrap_or_default();
        if compact {
            let c = GrnConfig::compact();
            cfg.n_groups = c.n_groups;
            cfg.relation_channels_per_group = c.relation_channels_per_group;
        }
        set(&mut cfg.n_groups, flags.groups);
        set(&mut cfg.channels_per_group, flags.channels_per_group);
        set(&mut cfg.relation_channels_per_group, flags.relation_channels_per_group);
        cfg.n_classes = n_classes;
        cfg.input_samples = input_samples;
        cfg
    }

    fn train(&self, flags: &ModelFlags) -> TrainConfig {
        let mut cfg = self.file.train.clone().unwrap_or_default();
        set(&mut cfg.max_epochs, flags.max_epochs);
        set(&mut cfg.adam.lr, flags.lr);
        set(&mut cfg.target_loss, flags.target_loss);
        cfg
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn require_file(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::Io {
            path: path.to_path_buf(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "no such file"),
        })
    }
}

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => std::fs::create_dir_all(dir).map_err(|source| Error::Io {
            path: dir.to_path_buf(),
            source,
        }),
        _ => Ok(()),
    }
}

/// Parse `args` (program name first), run, and return the exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => EXIT_USAGE,
            };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn dispatch(cli: Cli) -> Result<()> {
    let file = match &cli.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let out_dir = cli
        .out_dir
        .clone()
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .or_else(|| file.run.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));
    let ctx = Context {
        file,
        out_dir,
        verbose: cli.verbose,
        quiet: cli.quiet,
    };
    match &cli.command {
        Command::Generate(a) => generate(&ctx, a),
        Command::Preprocess(a) => preprocess(&ctx, a),
        Command::Train(a) => train(&ctx, a),
        Command::Eval(a) => eval(&ctx, a),
        Command::Simulate(a) => simulate(&ctx, a),
        Command::Inspect(a) => inspect(&ctx, a),
    }
}

fn generate(ctx: &Context, a: &GenerateArgs) -> Result<()> {
    let mut cfg = match (&ctx.file.synth, a.preset) {
        (Some(s), _) => s.clone(),
        (None, Preset::Reference) => SynthConfig::reference(),
        (None, Preset::Full) => SynthConfig::default(),
    };
    set(&mut cfg.seed, a.seed);
    set(&mut cfg.trials_per_class, a.trials_per_class);
    set(&mut cfg.snr_db, a.snr_db);
    set(&mut cfg.duration_s, a.duration_s);
    if let Some(d) = a.depth {
        cfg.classes.iter_mut().for_each(|c| c.depth = d);
    }
    cfg.validate()?;
    let out = ctx.output(&a.out, "dataset.json");
    ensure_parent(&out)?;
    let mut ds = if a.grid {
        let pre_cfg = ctx.preprocess(&a.pre);
        let pre = Preprocessor::new(pre_cfg.clone(), cfg.fs)?;
        let mut ds = generate_grid_session(&cfg, &pre)?;
        ds.provenance = json!({ "command": "generate", "synthetic": cfg, "preprocess": pre_cfg });
        ds
    } else {
        let mut ds = generate_session(&cfg)?;
        ds.provenance = json!({ "command": "generate", "synthetic": cfg });
        ds
    };
    ds.provenance["format"] = json!(if a.grid { "grid" } else { "raw" });
    let checksum = save_dataset(&ds, &out)?;
    ctx.note(format!(
        "wrote {} ({} trials, {} classes, {} channels × {} samples at {} Hz, checksum {checksum:016x})",
        out.display(),
        ds.n_trials(),
        ds.class_names.len(),
        ds.n_channels(),
        ds.n_samples,
        ds.fs
    ));
    Ok(())
}

fn preprocess(ctx: &Context, a: &PreprocessArgs) -> Result<()> {
    require_file(&a.data)?;
    let out = ctx.output(&a.out, "grid.json");
    let raw = load_dataset(&a.data)?;
    let pre_cfg = ctx.preprocess(&a.pre);
    let pre = Preprocessor::new(pre_cfg.clone(), raw.fs)?;
    let mut grid = raw.preprocess(&pre)?;
    grid.provenance = json!({
        "command": "preprocess",
        "input": a.data.display().to_string(),
        "input_checksum": format!("{:016x}", raw.checksum()),
        "preprocess": pre_cfg,
        "preprocessed_from": raw.provenance,
    });
    ensure_parent(&out)?;
    let checksum = save_dataset(&grid, &out)?;
    ctx.note(format!(
        "wrote {} ({} trials, {} samples at {} Hz, checksum {checksum:016x})",
        out.display(),
        grid.n_trials(),
        grid.n_samples,
        grid.fs
    ));
    Ok(())
}

fn load_grid(path: &Path, classes: &[String]) -> Result<Dataset> {
    let ds = load_dataset(path)?;
    if ds.kind != DatasetKind::Grid {
        return Err(Error::Parameter(format!(
            "{} is a raw dataset; run `grn preprocess` first",
            path.display()
        )));
    }
    if classes.is_empty() {
        Ok(ds)
    } else {
        let names: Vec<&str> = classes.iter().map(String::as_str).collect();
        ds.select_classes(&names)
    }
}

fn train(ctx: &Context, a: &TrainArgs) -> Result<()> {
    require_file(&a.data)?;
    let out = ctx.output(&a.out, "model.json");
    let ds = load_grid(&a.data, &a.classes)?;
    let model = ctx.model(&a.model, ds.class_names.len(), ds.n_samples);
    model.shapes()?;
    let train_cfg = ctx.train(&a.model);
    let shots = a.shots.or_else(|| ctx.file.run.shots.as_ref().and_then(|s| s.first().copied())).unwrap_or(5);
    let seed = a.seed.or(ctx.file.run.seed).unwrap_or(0);
    let grids = ds.grids()?;
    let refs: Vec<&Tensor> = grids.iter().collect();
    ctx.detail(format!("training {shots}-shot on {} trials, seed {seed}", ds.n_trials()));
    let run = fit(&refs, &ds.labels, shots, &model, &train_cfg, seed)?;
    let config = json!({
        "command": "train",
        "data": a.data.display().to_string(),
        "data_checksum": format!("{:016x}", ds.checksum()),
        "data_provenance": ds.provenance,
        "fs": ds.fs,
        "model": model,
        "train": train_cfg,
        "shots": shots,
        "seed": seed,
    });
    ensure_parent(&out)?;
    let meta = CheckpointMeta {
        class_names: ds.class_names.clone(),
        provenance: config.clone(),
    };
    let digest = save_checkpoint(&out, &run.params, &run.prototypes, &meta)?;
    let report_path = out.with_extension("report.json");
    write_json(&report_path, &json!({ "config": config, "report": run.report, "digest": format!("{digest:016x}") }))?;
    ctx.note(format!(
        "wrote {} (digest {digest:016x}); {} epochs, final loss {}, stop {:?}",
        out.display(),
        run.report.epochs,
        run.report.final_loss.map_or("n/a".into(), |l| format!("{l:.3e}")),
        run.report.stop
    ));
    Ok(())
}

#[derive(Serialize)]
struct RunSummary {
    seed: u64,
    epochs: usize,
    final_loss: Option<f64>,
    accuracy: f64,
}

fn eval(ctx: &Context, a: &EvalArgs) -> Result<()> {
    require_file(&a.data)?;
    let out_dir = a.out.clone().unwrap_or_else(|| ctx.out_dir.clone());
    let taxonomy = ClassTaxonomy::default();
    let full = load_grid(&a.data, &[])?;
    let classes: Vec<String> = if a.candidates {
        taxonomy.representatives.clone()
    } else {
        a.classes.clone()
    };
    let ds = if classes.is_empty() {
        full.clone()
    } else {
        let names: Vec<&str> = classes.iter().map(String::as_str).collect();
        full.select_classes(&names)?
    };
    let candidates = if a.candidates {
        let names: Vec<&str> = taxonomy
            .candidate_names()
            .into_iter()
            .filter(|n| full.class_names.iter().any(|c| c == n))
            .collect();
        if names.is_empty() {
            return Err(Error::Parameter("dataset has no candidate classes".into()));
        }
        Some(full.select_classes(&names)?)
    } else {
        None
    };
    drop(full);

    let model = ctx.model(&a.model, ds.class_names.len(), ds.n_samples);
    model.shapes()?;
    let train_cfg = ctx.train(&a.model);
    let shots = if !a.shots.is_empty() {
        a.shots.clone()
    } else {
        ctx.file.run.shots.clone().unwrap_or_else(|| vec![5])
    };
    let seeds = if !a.seeds.is_empty() {
        a.seeds.clone()
    } else if let Some(r) = a.repeats {
        default_seeds(r)
    } else if let Some(s) = &ctx.file.run.seeds {
        s.clone()
    } else {
        default_seeds(ctx.file.run.repeats.unwrap_or(10))
    };

    let grids = ds.grids()?;
    let refs: Vec<&Tensor> = grids.iter().collect();
    let cand_grids = candidates.as_ref().map(|c| c.grids()).transpose()?;
    let mut entries = Vec::new();
    let mut runs = Vec::new();
    let mut projections: Vec<(usize, f64, CandidateResult)> = Vec::new();
    for &n in &shots {
        ctx.detail(format!("{n}-shot: {} runs", seeds.len()));
        let run = run_protocol(&refs, &ds.labels, &model, &train_cfg, n, &seeds)?;
        for (r, acc) in run.reports.iter().zip(&run.result.accuracies) {
            ctx.detail(format!("  seed {}: accuracy {acc:.4}, {} epochs", r.seed, r.epochs));
        }
        if let (Some(c), Some(g)) = (&candidates, &cand_grids) {
            let g: Vec<&Tensor> = g.iter().collect();
            let best = &run.best;
            let res = evaluate_candidates(&best.params, &best.prototypes, &g, &c.labels, &c.class_names, &taxonomy)?;
            projections.push((n, run.result.max, res));
        }
        runs.push((
            n,
            run.reports
                .iter()
                .zip(&run.result.accuracies)
                .map(|(r, &accuracy)| RunSummary {
                    seed: r.seed,
                    epochs: r.epochs,
                    final_loss: r.final_loss,
                    accuracy,
                })
                .collect::<Vec<_>>(),
        ));
        entries.push(TableEntry {
            subject: a.subject.clone(),
            session: a.session.clone(),
            result: run.result,
        });
    }
    let table = aggregate_table(&entries);
    let results: Vec<&EvalResult> = entries.iter().map(|e| &e.result).collect();
    let report = json!({
        "config": {
            "command": "eval",
            "data": a.data.display().to_string(),
            "data_checksum": format!("{:016x}", ds.checksum()),
            "data_provenance": ds.provenance,
            "classes": ds.class_names,
            "model": model,
            "train": train_cfg,
            "shots": shots,
            "seeds": seeds,
        },
        "results": results,
        "runs": runs.iter().map(|(n, r)| json!({ "shots": n, "runs": r })).collect::<Vec<_>>(),
        "table": table,
        "candidates": projections.iter().map(|(n, rep, c)| json!({
            "shots": n,
            "representative_accuracy": rep,
            "candidate": c,
        })).collect::<Vec<_>>(),
    });
    std::fs::create_dir_all(&out_dir).map_err(|source| Error::Io {
        path: out_dir.clone(),
        source,
    })?;
    write_json(&out_dir.join("eval.json"), &report)?;
    write_bytes(&out_dir.join("eval.csv"), table.to_csv().as_bytes())?;
    print!("{}", table.render());
    for (n, rep, c) in &projections {
        println!("{n}-shot candidate projection: {:.4} (best representative run {rep:.4})", c.accuracy);
        for pc in &c.per_class {
            println!("  {:<16} -> {:<10} {:.4} ({} trials)", pc.class, pc.sub_part, pc.accuracy, pc.trials);
        }
    }
    ctx.note(format!("wrote {}", out_dir.join("eval.json").display()));
    Ok(())
}

/// First object stored under `key` anywhere in a provenance tree.
fn find_key<'a>(value: &'a serde_json::Value, key: &str) -> Option<&'a serde_json::Value> {
    match value {
        serde_json::Value::Object(map) => map
            .get(key)
            .or_else(|| map.values().find_map(|v| find_key(v, key))),
        serde_json::Value::Array(items) => items.iter().find_map(|v| find_key(v, key)),
        _ => None,
    }
}

fn from_provenance<T: serde::de::DeserializeOwned>(value: &serde_json::Value, key: &str) -> Option<T> {
    find_key(value, key).and_then(|v| serde_json::from_value(v.clone()).ok())
}

fn simulate(ctx: &Context, a: &SimulateArgs) -> Result<()> {
    require_file(&a.checkpoint)?;
    require_file(&a.script)?;
    if let Some(d) = &a.data {
        require_file(d)?;
    }
    let out = ctx.output(&a.out, "session.json");
    let ck = load_checkpoint(&a.checkpoint)?;
    let script: SessionScript = read_json(&a.script, "session script")?;
    let taxonomy = ClassTaxonomy::default();
    let motions = motion_map(&ck.meta.class_names, &taxonomy)?;
    let timing = ctx.file.timing.clone().unwrap_or_default();
    let synth: Option<SynthConfig> = ctx
        .file
        .synth
        .clone()
        .or_else(|| from_provenance(&ck.meta.provenance, "synthetic"));
    let pre_cfg: PreprocessConfig = ctx
        .file
        .preprocess
        .clone()
        .or_else(|| from_provenance(&ck.meta.provenance, "preprocess"))
        .unwrap_or_default();
    let mut replay = Replay::new();
    if let Some(d) = &a.data {
        replay = replay.with_dataset(load_grid(d, &[])?);
    }
    if let Some(s) = &synth {
        replay = replay.with_synthetic(s, Preprocessor::new(pre_cfg.clone(), s.fs)?)?;
    }
    let decoder = Decoder {
        params: &ck.params,
        prototypes: &ck.prototypes,
        motions,
        timing: timing.clone(),
    };
    let report = run_session(&script, &decoder, &replay)?;
    ensure_parent(&out)?;
    write_json(
        &out,
        &json!({
            "config": {
                "command": "simulate",
                "checkpoint": a.checkpoint.display().to_string(),
                "checkpoint_digest": format!("{:016x}", ck.digest),
                "script": script,
                "data": a.data.as_ref().map(|d| d.display().to_string()),
                "synthetic": synth,
                "preprocess": pre_cfg,
                "timing": timing,
            },
            "report": report,
        }),
    )?;
    let s = &report.stats;
    let fmt = |m: Option<crate::online::MeanStd>| m.map_or("n/a".to_string(), |m| format!("{:.2} ± {:.2}", m.mean, m.std));
    println!("tasks            {}", s.tasks.len());
    println!("success rate     {:.3}", s.success_rate);
    println!("commands/task    {}", fmt(s.commands));
    println!("control time s   {}", fmt(s.control_time_s));
    println!("session time s   {:.1}", s.total_time_s);
    if let Some(acc) = s.decoding_accuracy {
        println!("decoding acc.    {acc:.3}");
    }
    ctx.note(format!("wrote {}", out.display()));
    Ok(())
}

#[derive(Serialize)]
struct Inspection {
    config: GrnConfig,
    shapes: crate::model::Shapes,
    parameters: usize,
    digest: String,
    class_names: Vec<String>,
    fs: f64,
    kernel_bands: BandReport,
    feature_bands: Option<BandReport>,
}

fn render_bands(title: &str, r: &BandReport) -> String {
    let mut s = format!("{title} ({} filters)\n", r.filters);
    for b in Band::ALL {
        s.push_str(&format!("  {:<8} {:.3}\n", format!("{b:?}"), r.fraction(b)));
    }
    s
}

fn inspect(ctx: &Context, a: &InspectArgs) -> Result<()> {
    require_file(&a.checkpoint)?;
    if let Some(d) = &a.data {
        require_file(d)?;
    }
    let ck = load_checkpoint(&a.checkpoint)?;
    let cfg = &ck.params.config;
    let shapes = cfg.shapes()?;
    let fs = a
        .fs
        .or_else(|| from_provenance(&ck.meta.provenance, "fs"))
        .unwrap_or(PreprocessConfig::default().target_fs);
    let kernels: Vec<Vec<f64>> = ck
        .params
        .encoder
        .conv1
        .data()
        .chunks(cfg.temporal_kernel)
        .map(<[f64]>::to_vec)
        .collect();
    let kernel_bands = band_report(&kernels, fs)?;
    let feature_bands = match &a.data {
        Some(d) => {
            let ds = load_grid(d, &[])?;
            if a.trial >= ds.n_trials() {
                return Err(Error::Parameter(format!("trial {} out of range ({} trials)", a.trial, ds.n_trials())));
            }
            let grid = ds.grid(a.trial)?;
            let input = stack_grids(cfg, &[&grid])?;
            let maps = ck.params.encoder.eval_layers(cfg, &input, 1)?;
            let series: Vec<Vec<f64>> = maps.data().chunks(shapes.layer1_time).map(<[f64]>::to_vec).collect();
            Some(band_report(&series, ds.fs)?)
        }
        None => None,
    };
    let info = Inspection {
        config: cfg.clone(),
        shapes,
        parameters: ck.params.parameter_count(),
        digest: format!("{:016x}", ck.digest),
        class_names: ck.meta.class_names.clone(),
        fs,
        kernel_bands,
        feature_bands,
    };
    if a.json {
        println!("{}", serde_json::to_string_pretty(&info).map_err(|e| Error::format("inspection", e.to_string()))?);
        return Ok(());
    }
    println!("checkpoint  {} (digest {})", a.checkpoint.display(), info.digest);
    println!("classes     {}", info.class_names.join(", "));
    println!("parameters  {}", info.parameters);
    println!("layer 1     {} filters × {} samples", shapes.layer1_filters, shapes.layer1_time);
    println!("spatial     {} channels", shapes.spatial_channels);
    let [g, c, t] = shapes.embedding_shape();
    println!("embedding   {g} × {c} × {t}");
    println!("relation    {} filters × {} samples", shapes.relation_channels, shapes.relation2_time);
    print!("{}", render_bands("layer-1 kernel peaks", &info.kernel_bands));
    if let Some(fb) = &info.feature_bands {
        print!("{}", render_bands(&format!("layer-1 feature-map peaks, trial {}", a.trial), fb));
    }
    ctx.detail(format!("input rate {fs} Hz"));
    Ok(())
}

pub fn main() -> ! {
    std::process::exit(run(std::env::args_os()))
}
