use grn::model::{compute_prototypes, stack_grids, GrnConfig, GrnParams, Prototype};
use grn::online::{fuse_command, Decoder, Motion, ScriptStep, SessionScript, TaskScript, Timing};
use grn::tensor::Tensor;
use grn::train::freeze_statistics;

use super::{random_grids, random_tensor, reduced_config};

pub const FS: f64 = 250.0;

/// Reduced network on 3 s windows with populated statistics and random
/// prototypes.
pub fn decoder_model(seed: u64) -> (GrnParams, Vec<Prototype>) {
    let cfg = GrnConfig {
        input_samples: 750,
        ..reduced_config()
    };
    let grids = random_grids(6, cfg.input_samples, seed);
    let refs: Vec<&Tensor> = grids.iter().collect();
    let mut p = GrnParams::init(&cfg, seed).unwrap();
    freeze_statistics(&mut p, &stack_grids(&cfg, &refs).unwrap(), 6).unwrap();
    let emb = p.encode_batch(&refs).unwrap();
    let protos = compute_prototypes(&emb, &[0, 1, 2, 0, 1, 2], 3).unwrap();
    (p, protos)
}

pub fn motions() -> Vec<Motion> {
    vec![Motion::UpperArm, Motion::Forearm, Motion::Hand]
}

pub fn decoder<'a>(p: &'a GrnParams, protos: &'a [Prototype]) -> Decoder<'a> {
    Decoder {
        params: p,
        prototypes: protos,
        motions: motions(),
        timing: Timing::default(),
    }
}

pub fn perfect_task() -> TaskScript {
    TaskScript {
        steps: vec![
            ScriptStep::Command(Motion::UpperArm),
            ScriptStep::Command(Motion::Hand),
            ScriptStep::Command(Motion::Forearm),
        ],
    }
}

/// Four tasks: wrong move undone by a blink then the right sequence; nod
/// reset; a correct move undone and redone; a script ending early.
pub fn veto_fixture() -> SessionScript {
    use Motion::*;
    use ScriptStep::*;
    SessionScript {
        tasks: vec![
            TaskScript {
                steps: vec![Command(Forearm), Blink, Command(UpperArm), Command(Hand), Command(Forearm)],
            },
            TaskScript {
                steps: vec![Command(UpperArm), Command(Hand), Nod],
            },
            TaskScript {
                steps: vec![Command(UpperArm), Blink, Command(UpperArm), Command(Hand), Command(Forearm)],
            },
            TaskScript {
                steps: vec![Command(UpperArm)],
            },
        ],
    }
}

/// Worst difference between `fuse_command` and per-window `predict` with a
/// hand-written average over `cases` random 5 s grids, and whether every
/// window row, fused vector and argmax matched bit for bit.
pub fn fusion_brute_force(p: &GrnParams, protos: &[Prototype], cases: u64) -> (f64, bool) {
    let mut worst = 0.0f64;
    let mut exact = true;
    for case in 0..cases {
        let grid = random_tensor(&[5, 5, 1250], 100 + case);
        let d = fuse_command(p, protos, &grid, FS, &Timing::default()).unwrap();
        let mut sum = vec![0.0; protos.len()];
        let mut rows = Vec::new();
        for w in 0..5 {
            let start = w * 125;
            let mut data = Vec::new();
            for row in grid.data().chunks(1250) {
                data.extend_from_slice(&row[start..start + 750]);
            }
            let win = Tensor::from_vec(&[5, 5, 750], data).unwrap();
            let probs = p.predict(&win, protos).unwrap().probabilities;
            for (s, v) in sum.iter_mut().zip(&probs) {
                *s += v;
            }
            rows.push(probs);
        }
        let fused: Vec<f64> = sum.iter().map(|s| s / 5.0).collect();
        let mut cmd = 0;
        for c in 1..fused.len() {
            if fused[c] > fused[cmd] {
                cmd = c;
            }
        }
        for (a, b) in d.fused.iter().zip(&fused) {
            worst = worst.max((a - b).abs());
        }
        exact &= d.window_probabilities == rows && d.fused == fused && d.cmd == cmd;
        exact &= d.duration_s == 5.0 + 4.0 / 3.0;
    }
    (worst, exact)
}
