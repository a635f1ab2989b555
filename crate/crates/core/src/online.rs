//! Replay-driven online control of a drinking task.
//!
//! Each command comes from one 5 s acquisition: five 3 s windows starting
//! every 0.5 s are classified separately and their softmax outputs averaged;
//! the class with the largest mean wins. Decoded classes map to arm motions
//! that drive a small state machine (reach, grasp, twist to drink). Eye
//! blinks and head nods are scripted events rather than detected artifacts.

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Generator, SynthConfig};
use crate::dsp::{window_offsets, Preprocessor, RawRecord};
use crate::error::{Error, Result};
use crate::eval::ClassTaxonomy;
use crate::model::{argmax, GrnParams, Prototype};
use crate::tensor::Tensor;

pub const ACQUISITION_S: f64 = 5.0;
pub const WINDOW_S: f64 = 3.0;
pub const WINDOW_STRIDE_S: f64 = 0.5;
pub const WINDOWS: usize = 5;

/// Simulated durations, in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Timing {
    pub acquisition_s: f64,
    /// Arm movement after each decoded command.
    pub actuation_s: f64,
    pub blink_s: f64,
    pub nod_s: f64,
}

impl Default for Timing {
    fn default() -> Self {
        Timing {
            acquisition_s: ACQUISITION_S,
            actuation_s: 4.0 / 3.0,
            blink_s: 2.0,
            nod_s: 2.0,
        }
    }
}

impl Timing {
    pub fn command_cycle_s(&self) -> f64 {
        self.acquisition_s + self.actuation_s
    }
}

/// Mean of per-window class distributions and its argmax (lowest index on
/// ties).
pub fn fuse(window_probabilities: &[Vec<f64>]) -> Result<(Vec<f64>, usize)> {
    let k = window_probabilities
        .first()
        .map(Vec::len)
        .filter(|&k| k > 0)
        .ok_or_else(|| Error::shape("command fusion", "no window probabilities"))?;
    if window_probabilities.iter().any(|row| row.len() != k) {
        return Err(Error::shape("command fusion", "windows disagree on class count"));
    }
    let n = window_probabilities.len() as f64;
    let fused: Vec<f64> = (0..k)
        .map(|c| window_probabilities.iter().map(|row| row[c]).sum::<f64>() / n)
        .collect();
    let cmd = argmax(&fused);
    Ok((fused, cmd))
}

/// The five model-sized windows of a `[5, 5, T]` acquisition grid.
pub fn acquisition_windows(grid: &Tensor, fs: f64, window_samples: usize) -> Result<Vec<Tensor>> {
    let (h, w, t) = match *grid.shape() {
        [h, w, t] => (h, w, t),
        ref s => return Err(Error::shape("acquisition", format!("expected [5, 5, T], got {s:?}"))),
    };
    let expected = (ACQUISITION_S * fs).round() as usize;
    if t < expected {
        return Err(Error::Length {
            context: "acquisition".into(),
            required: expected,
            actual: t,
        });
    }
    if t > expected {
        return Err(Error::shape("acquisition", format!("expected exactly {expected} samples, got {t}")));
    }
    let (offsets, len) = window_offsets(t, fs, WINDOW_S, WINDOW_STRIDE_S, WINDOWS)?;
    if len != window_samples {
        return Err(Error::Parameter(format!(
            "a {WINDOW_S} s window at {fs} Hz is {len} samples; the model takes {window_samples}"
        )));
    }
    offsets
        .iter()
        .map(|&o| {
            let mut data = Vec::with_capacity(h * w * len);
            for row in grid.data().chunks(t) {
                data.extend_from_slice(&row[o..o + len]);
            }
            Tensor::from_vec(&[h, w, len], data)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandDecision {
    /// Softmax output of each window, `[5][K]`.
    pub window_probabilities: Vec<Vec<f64>>,
    pub fused: Vec<f64>,
    pub cmd: usize,
    /// Simulated time the command took (acquisition plus actuation).
    pub duration_s: f64,
}

/// Decode one acquisition: predict each window, average, take the argmax.
pub fn fuse_command(
    params: &GrnParams,
    prototypes: &[Prototype],
    grid: &Tensor,
    fs: f64,
    timing: &Timing,
) -> Result<CommandDecision> {
    let windows = acquisition_windows(grid, fs, params.config.input_samples)?;
    let refs: Vec<&Tensor> = windows.iter().collect();
    let window_probabilities: Vec<Vec<f64>> = params
        .predict_batch(&refs, prototypes)?
        .into_iter()
        .map(|p| p.probabilities)
        .collect();
    let (fused, cmd) = fuse(&window_probabilities)?;
    Ok(CommandDecision {
        window_probabilities,
        fused,
        cmd,
        duration_s: timing.command_cycle_s(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Motion {
    /// Reach toward the cup.
    UpperArm,
    /// Twist the wrist to drink.
    Forearm,
    /// Grasp the cup.
    Hand,
}

impl Motion {
    pub fn from_sub_part(name: &str) -> Result<Motion> {
        match name {
            "upper_arm" => Ok(Motion::UpperArm),
            "forearm" => Ok(Motion::Forearm),
            "hand" => Ok(Motion::Hand),
            other => Err(Error::Taxonomy(other.to_string())),
        }
    }
}

/// Motion commanded by each model class, through the class's sub-part.
pub fn motion_map(class_names: &[String], taxonomy: &ClassTaxonomy) -> Result<Vec<Motion>> {
    class_names
        .iter()
        .map(|c| Motion::from_sub_part(&taxonomy.sub_parts[taxonomy.sub_part_of(c)?]))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Init,
    Reached,
    Grasped,
    /// The task's goal.
    Drinking,
}

impl Stage {
    /// The motion that advances this stage, if any.
    pub fn expected(self) -> Option<Motion> {
        match self {
            Stage::Init => Some(Motion::UpperArm),
            Stage::Reached => Some(Motion::Hand),
            Stage::Grasped => Some(Motion::Forearm),
            Stage::Drinking => None,
        }
    }

    fn next(self) -> Stage {
        match self {
            Stage::Init => Stage::Reached,
            Stage::Reached => Stage::Grasped,
            Stage::Grasped | Stage::Drinking => Stage::Drinking,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Event {
    Command(Motion),
    /// Double blink: undo the last movement.
    Blink,
    /// Head nod: return the arm home and give up on the task.
    Nod,
}

/// One drinking task in progress.
///
/// A command that does not match the current stage moves the arm
/// somewhere unhelpful. Such wrong moves stack up and block progress until
/// each is undone by a blink (or everything is abandoned by a nod). A blink
/// with no wrong move pending steps back one stage; with nothing to undo
/// it does nothing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskState {
    pub stage: Stage,
    /// Stages left by forward transitions, most recent last.
    pub history: Vec<Stage>,
    pub wrong_moves: usize,
    pub failed: bool,
}

impl Default for TaskState {
    fn default() -> Self {
        TaskState {
            stage: Stage::Init,
            history: Vec::new(),
            wrong_moves: 0,
            failed: false,
        }
    }
}

impl TaskState {
    pub fn new() -> Self {
        TaskState::default()
    }

    pub fn is_terminal(&self) -> bool {
        self.failed || self.stage == Stage::Drinking
    }

    pub fn succeeded(&self) -> bool {
        !self.failed && self.stage == Stage::Drinking
    }

    pub fn step(&mut self, event: Event) -> Result<()> {
        if self.is_terminal() {
            return Err(Error::Protocol(format!(
                "{event:?} after the task ended ({})",
                if self.failed { "failed" } else { "succeeded" }
            )));
        }
        match event {
            Event::Command(m) => {
                if self.wrong_moves == 0 && self.stage.expected() == Some(m) {
                    self.history.push(self.stage);
                    self.stage = self.stage.next();
                } else {
                    self.wrong_moves += 1;
                }
            }
            Event::Blink => {
                if self.wrong_moves > 0 {
                    self.wrong_moves -= 1;
                } else if let Some(prev) = self.history.pop() {
                    self.stage = prev;
                }
            }
            Event::Nod => {
                self.stage = Stage::Init;
                self.history.clear();
                self.wrong_moves = 0;
                self.failed = true;
            }
        }
        Ok(())
    }
}

/// Functional form of [`TaskState::step`].
pub fn task_step(state: &TaskState, event: Event) -> Result<TaskState> {
    let mut next = state.clone();
    next.step(event)?;
    Ok(next)
}

/// Where an acquisition's signal comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    /// Trial of a stored dataset of 5 s grid epochs.
    Trial(usize),
    /// Fresh synthetic trial of the named class; `stream` picks the
    /// random draw.
    Synthetic { class: String, stream: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScriptStep {
    /// Record and decode one acquisition; `intent` is what the user meant.
    Acquire { source: Source, intent: Motion },
    /// A command already decoded elsewhere; costs one command cycle.
    Command(Motion),
    Blink,
    Nod,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskScript {
    pub steps: Vec<ScriptStep>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionScript {
    pub tasks: Vec<TaskScript>,
}

/// Supplies acquisition grids for [`Source`]s.
pub struct Replay {
    dataset: Option<Dataset>,
    synth: Option<(Generator, Preprocessor)>,
}

impl Replay {
    pub fn new() -> Self {
        Replay {
            dataset: None,
            synth: None,
        }
    }

    /// Serve [`Source::Trial`] from a grid dataset of 5 s epochs.
    pub fn with_dataset(mut self, ds: Dataset) -> Self {
        self.dataset = Some(ds);
        self
    }

    /// Serve [`Source::Synthetic`] from this session configuration; its
    /// duration is overridden to one acquisition.
    pub fn with_synthetic(mut self, config: &SynthConfig, pre: Preprocessor) -> Result<Self> {
        let config = SynthConfig {
            duration_s: ACQUISITION_S,
            ..config.clone()
        };
        self.synth = Some((Generator::new(config)?, pre));
        Ok(self)
    }

    pub fn grid(&self, source: &Source) -> Result<(Tensor, f64)> {
        match source {
            Source::Trial(i) => {
                let ds = self
                    .dataset
                    .as_ref()
                    .ok_or_else(|| Error::Protocol("script references a dataset trial but none was given".into()))?;
                if *i >= ds.n_trials() {
                    return Err(Error::Protocol(format!("trial {i} out of range ({} trials)", ds.n_trials())));
                }
                Ok((ds.grid(*i)?, ds.fs))
            }
            Source::Synthetic { class, stream } => {
                let (gen, pre) = self
                    .synth
                    .as_ref()
                    .ok_or_else(|| Error::Protocol("script asks for synthetic trials but no generator was given".into()))?;
                let cfg = gen.config();
                let label = cfg
                    .classes
                    .iter()
                    .position(|c| &c.name == class)
                    .ok_or_else(|| Error::Protocol(format!("unknown synthetic class {class:?}")))?;
                let channels = gen.trial_as(label, *stream);
                let rec = RawRecord::new(cfg.fs, cfg.channel_names.clone(), channels)?;
                Ok((pre.grid(&rec, label)?.grid, pre.config.target_fs))
            }
        }
    }
}

impl Default for Replay {
    fn default() -> Self {
        Replay::new()
    }
}

/// A trained model plus how its classes map to motions.
pub struct Decoder<'a> {
    pub params: &'a GrnParams,
    pub prototypes: &'a [Prototype],
    pub motions: Vec<Motion>,
    pub timing: Timing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub task: usize,
    pub step: ScriptStep,
    /// Decoded motion, for acquisitions.
    pub decoded: Option<Motion>,
    pub fused: Option<Vec<f64>>,
    pub stage: Stage,
    pub wrong_moves: usize,
    /// Simulated clock after the step.
    pub clock_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRecord {
    pub success: bool,
    pub commands: usize,
    pub time_s: f64,
}

/// Mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Option<MeanStd> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Some(MeanStd { mean, std: var.sqrt() })
    }
}

/// Session summary. Command counts and control times are over successful
/// tasks only; `None` when no task succeeded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionStats {
    pub tasks: Vec<TaskRecord>,
    pub success_rate: f64,
    pub commands: Option<MeanStd>,
    pub control_time_s: Option<MeanStd>,
    pub total_time_s: f64,
    /// Acquisitions whose decoded motion matched the scripted intent.
    pub decoding_accuracy: Option<f64>,
}

impl SessionStats {
    pub fn from_tasks(tasks: Vec<TaskRecord>, decoded: usize, correct: usize) -> SessionStats {
        let wins: Vec<&TaskRecord> = tasks.iter().filter(|t| t.success).collect();
        let commands: Vec<f64> = wins.iter().map(|t| t.commands as f64).collect();
        let times: Vec<f64> = wins.iter().map(|t| t.time_s).collect();
        SessionStats {
            success_rate: if tasks.is_empty() { 0.0 } else { wins.len() as f64 / tasks.len() as f64 },
            commands: MeanStd::of(&commands),
            control_time_s: MeanStd::of(&times),
            total_time_s: tasks.iter().map(|t| t.time_s).sum(),
            decoding_accuracy: (decoded > 0).then(|| correct as f64 / decoded as f64),
            tasks,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionReport {
    pub stats: SessionStats,
    pub log: Vec<StepRecord>,
}

/// Replay a session script. A task ends when it succeeds or fails; a task
/// whose script runs out first counts as a failure. Steps scripted after a
/// task has ended are a protocol error.
pub fn run_session(script: &SessionScript, decoder: &Decoder, replay: &Replay) -> Result<SessionReport> {
    let timing = &decoder.timing;
    let mut tasks = Vec::with_capacity(script.tasks.len());
    let mut log = Vec::new();
    let (mut decoded_n, mut correct) = (0, 0);
    let mut clock = 0.0;
    for (t, task) in script.tasks.iter().enumerate() {
        let mut state = TaskState::new();
        let (mut commands, mut time) = (0, 0.0);
        for step in &task.steps {
            let (event, cost, decoded, fused) = match step {
                ScriptStep::Acquire { source, intent } => {
                    let (grid, fs) = replay.grid(source)?;
                    let d = fuse_command(decoder.params, decoder.prototypes, &grid, fs, timing)?;
                    let motion = *decoder.motions.get(d.cmd).ok_or_else(|| {
                        Error::Protocol(format!("decoded class {} has no motion mapping", d.cmd))
                    })?;
                    decoded_n += 1;
                    if motion == *intent {
                        correct += 1;
                    }
                    (Event::Command(motion), d.duration_s, Some(motion), Some(d.fused))
                }
                ScriptStep::Command(m) => (Event::Command(*m), timing.command_cycle_s(), None, None),
                ScriptStep::Blink => (Event::Blink, timing.blink_s, None, None),
                ScriptStep::Nod => (Event::Nod, timing.nod_s, None, None),
            };
            state
                .step(event)
                .map_err(|e| Error::Protocol(format!("task {t}: {e}")))?;
            if let Event::Command(_) = event {
                commands += 1;
            }
            time += cost;
            clock += cost;
            log.push(StepRecord {
                task: t,
                step: step.clone(),
                decoded,
                fused,
                stage: state.stage,
                wrong_moves: state.wrong_moves,
                clock_s: clock,
            });
        }
        tasks.push(TaskRecord {
            success: state.succeeded(),
            commands,
            time_s: time,
        });
    }
    Ok(SessionReport {
        stats: SessionStats::from_tasks(tasks, decoded_n, correct),
        log,
    })
}
