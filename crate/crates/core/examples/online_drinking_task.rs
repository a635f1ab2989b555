//! Closed-loop simulation of the drinking task: train a decoder, then replay
//! a scripted session where each command is a fresh 5 s synthetic
//! acquisition decoded by averaging five sliding windows.
//!
//!     cargo run --release --example online_drinking_task

use grn::data::{generate_grid_session, SynthConfig};
use grn::dsp::{PreprocessConfig, Preprocessor};
use grn::eval::ClassTaxonomy;
use grn::model::GrnConfig;
use grn::online::{motion_map, run_session, Decoder, Motion, Replay, ScriptStep, SessionScript, Source, TaskScript, Timing};
use grn::tensor::Tensor;
use grn::train::{fit, TrainConfig};

fn acquire(class: &str, stream: u64, intent: Motion) -> ScriptStep {
    ScriptStep::Acquire {
        source: Source::Synthetic {
            class: class.into(),
            stream,
        },
        intent,
    }
}

fn main() -> grn::Result<()> {
    let synth = SynthConfig {
        trials_per_class: 10,
        ..SynthConfig::reference()
    };
    let pre = Preprocessor::new(PreprocessConfig::default(), synth.fs)?;
    let ds = generate_grid_session(&synth, &pre)?;
    let grids = ds.grids()?;
    let refs: Vec<&Tensor> = grids.iter().collect();
    let train = TrainConfig {
        max_epochs: 150,
        ..TrainConfig::default()
    };
    let run = fit(&refs, &ds.labels, 5, &GrnConfig::compact(), &train, 0)?;

    let decoder = Decoder {
        params: &run.params,
        prototypes: &run.prototypes,
        motions: motion_map(&ds.class_names, &ClassTaxonomy::default())?,
        timing: Timing::default(),
    };
    let replay = Replay::new().with_synthetic(&synth, pre)?;

    // the intended sequence; a misdecoded task is left unfinished
    let mut tasks = Vec::new();
    for t in 0..5u64 {
        let s = 1000 + 10 * t;
        tasks.push(TaskScript {
            steps: vec![
                acquire("forward_reach", s, Motion::UpperArm),
                acquire("cylindrical_grasp", s + 1, Motion::Hand),
                acquire("left_twist", s + 2, Motion::Forearm),
            ],
        });
    }
    let script = SessionScript { tasks };
    let report = run_session(&script, &decoder, &replay)?;
    for step in report.log.iter().filter(|l| l.decoded.is_some()) {
        println!(
            "task {} decoded {:?} fused {:.3?} -> {:?}, {} wrong moves pending, at {:.1} s",
            step.task,
            step.decoded.unwrap(),
            step.fused.as_deref().unwrap_or(&[]),
            step.stage,
            step.wrong_moves,
            step.clock_s
        );
    }
    let s = &report.stats;
    println!(
        "success {:.2}, commands {:?}, control time {:?}, decoding accuracy {:?}",
        s.success_rate, s.commands, s.control_time_s, s.decoding_accuracy
    );
    Ok(())
}
