//! Exit-gate checks. Each test prints one `PASS`/`FAIL` line with the
//! measured value and its tolerance, then asserts.

mod common;

use std::io::Write;
use std::path::Path;
use std::sync::OnceLock;
use std::time::Instant;

use grn::cli::run;
use grn::data::{generate_grid_session, generate_session, load_dataset, save_dataset, Dataset, SynthConfig};
use grn::dsp::{filtfilt, PreprocessConfig, Preprocessor};
use grn::eval::{evaluate_candidates, run_protocol, test_accuracy, ClassTaxonomy};
use grn::model::{stack_grids, GrnConfig, GrnParams};
use grn::online::{run_session, Replay, SessionScript};
use grn::tensor::{Mode, Tensor};
use grn::train::{fit, TrainConfig};

use common::gradients::{default_spot_check, layer_suite};
use common::oracle::{conv_max_error, fusion_max_error, pool_max_error, softmax_max_error};
use common::session::{decoder, decoder_model, fusion_brute_force, perfect_task, veto_fixture};

const SEEDS: [u64; 10] = [0, 1, 2, 3, 4, 5, 6, 7, 8, 9];
/// Chance band for three balanced classes.
const CHANCE: (f64, f64) = (0.20, 0.47);
/// Epoch cap shared by every support size in the monotonicity sweep.
const SWEEP_EPOCHS: usize = 60;

fn verdict(name: &str, pass: bool, detail: &str) {
    let tag = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "[{tag}] {name}: {detail}");
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn grid_session(cfg: &SynthConfig) -> Dataset {
    let pre = Preprocessor::new(PreprocessConfig::default(), cfg.fs).unwrap();
    generate_grid_session(cfg, &pre).unwrap()
}

fn reference_session() -> &'static Dataset {
    static DS: OnceLock<Dataset> = OnceLock::new();
    DS.get_or_init(|| grid_session(&SynthConfig::reference()))
}

/// Mean test accuracy of the compact network over all ten seeds.
fn protocol_mean(ds: &Dataset, shots: usize, train: &TrainConfig) -> (f64, Vec<f64>) {
    let grids = ds.grids().unwrap();
    let refs: Vec<&Tensor> = grids.iter().collect();
    let cfg = GrnConfig {
        n_classes: ds.class_names.len(),
        ..GrnConfig::compact()
    };
    let run = run_protocol(&refs, &ds.labels, &cfg, train, shots, &SEEDS).unwrap();
    let losses: Vec<f64> = run.reports.iter().filter_map(|r| r.final_loss).collect();
    (run.result.avg, losses)
}

#[test]
fn shape_conformance() {
    let start = Instant::now();
    let cfg = GrnConfig::default();
    let p = GrnParams::init(&cfg, 0).unwrap();
    let grids = common::random_grids(2, cfg.input_samples, 1);
    let x = stack_grids(&cfg, &[&grids[0], &grids[1]]).unwrap();
    let pass = p.encoder.forward_train(&cfg, &x).unwrap();
    let layers = pass.cache.layer_shapes();
    let q = Tensor::from_vec(&[9, 8, 63], pass.embeddings.sample(0).to_vec()).unwrap();
    let c = Tensor::from_vec(&[9, 8, 63], pass.embeddings.sample(1).to_vec()).unwrap();
    let (_, rel) = p.relation.relation_trace(&cfg, &q, &c, Mode::Train).unwrap();
    let secs = start.elapsed().as_secs_f64();

    let checks = [
        ("layer-1 length", layers[0][4], 686),
        ("spatial channels", layers[1][1], 72),
        ("embedding groups", pass.embeddings.shape()[1], 9),
        ("embedding channels", pass.embeddings.shape()[2], 8),
        ("embedding length", pass.embeddings.shape()[3], 63),
        ("pre-GAP filters", rel.pre_gap[1], 288),
        ("pre-GAP length", rel.pre_gap[4], 18),
        ("GAP length", rel.gap[1], 288),
    ];
    let wrong: Vec<String> = checks
        .iter()
        .filter(|(_, got, want)| got != want)
        .map(|(n, got, want)| format!("{n} {got} != {want}"))
        .collect();
    let ok = wrong.is_empty() && secs < 5.0;
    verdict(
        "shape conformance",
        ok,
        &format!(
            "686 / 72 / 9x8x63 / 288x18 / 288 exact, {} mismatches, {secs:.2} s (limit 5 s) {wrong:?}",
            wrong.len()
        ),
    );
    assert!(ok);
}

#[test]
fn gradient_suite() {
    let start = Instant::now();
    let layers = layer_suite();
    let (worst_name, worst) = layers
        .iter()
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(n, e)| (n.clone(), *e))
        .unwrap();
    let spot = default_spot_check(20, 5);
    let secs = start.elapsed().as_secs_f64();
    let ok = worst < 1e-4 && spot < 1e-3 && secs < 300.0;
    verdict(
        "gradient suite",
        ok,
        &format!(
            "{} reduced checks, worst {worst:.2e} ({worst_name}) < 1e-4; default 20-parameter spot check {spot:.2e} < 1e-3; {secs:.1} s (limit 300 s)",
            layers.len()
        ),
    );
    assert!(ok);
}

#[test]
fn oracle_equivalence() {
    let n = 200;
    let conv = conv_max_error(n, 11);
    let pool = pool_max_error(n, 12);
    let soft = softmax_max_error(n, 13);
    let (fusion, argmax) = fusion_max_error(n, 14);
    let ok = conv <= 1e-12 && pool <= 1e-12 && soft <= 1e-12 && fusion <= 1e-12 && argmax;
    verdict(
        "oracle equivalence",
        ok,
        &format!(
            "{n} instances each; conv {conv:.1e}, pool {pool:.1e}, softmax {soft:.1e}, fusion {fusion:.1e} (limit 1e-12), fused argmax agreed {argmax}"
        ),
    );
    assert!(ok);
}

#[test]
fn learning_sanity() {
    let start = Instant::now();
    let ds = reference_session();
    let train = TrainConfig::default();
    let (five, losses) = protocol_mean(ds, 5, &train);
    let (one, _) = protocol_mean(ds, 1, &train);

    let mut flat = SynthConfig::reference();
    flat.classes.iter_mut().for_each(|c| c.depth = 0.0);
    let (control, _) = protocol_mean(&grid_session(&flat), 5, &train);
    let secs = start.elapsed().as_secs_f64();

    let ok = five >= 0.80
        && one >= 0.45
        && (CHANCE.0..=CHANCE.1).contains(&control)
        && secs < 900.0;
    verdict(
        "learning sanity",
        ok,
        &format!(
            "10 seeds: 5-shot {five:.3} (>= 0.80), 1-shot {one:.3} (>= 0.45), zero-depth 5-shot {control:.3} (in [{:.2}, {:.2}]); mean 5-shot final loss {:.2e}; {secs:.0} s (limit 900 s)",
            CHANCE.0,
            CHANCE.1,
            mean(&losses)
        ),
    );
    assert!(ok);
}

#[test]
fn accuracy_is_monotone_in_shots() {
    let ds = reference_session();
    let train = TrainConfig {
        max_epochs: SWEEP_EPOCHS,
        ..TrainConfig::default()
    };
    let means: Vec<f64> = [1, 5, 25].iter().map(|&n| protocol_mean(ds, n, &train).0).collect();
    let ok = means.windows(2).all(|w| w[1] >= w[0]);
    verdict(
        "monotonicity",
        ok,
        &format!(
            "10 seeds, {SWEEP_EPOCHS}-epoch cap: n=1 {:.3}, n=5 {:.3}, n=25 {:.3} (non-decreasing)",
            means[0], means[1], means[2]
        ),
    );
    assert!(ok);
}

#[test]
fn candidate_projection() {
    let tax = ClassTaxonomy::default();
    let full = grid_session(&SynthConfig {
        trials_per_class: 20,
        ..SynthConfig::default()
    });
    let grids = full.grids().unwrap();
    let class_of = |name: &str| full.class_names.iter().position(|c| c == name).unwrap();

    // representatives relabelled to sub-part order
    let mut rep_grids = Vec::new();
    let mut rep_labels = Vec::new();
    for (k, name) in tax.representative_names().iter().enumerate() {
        let l = class_of(name);
        for (i, _) in full.labels.iter().enumerate().filter(|(_, &x)| x == l) {
            rep_grids.push(&grids[i]);
            rep_labels.push(k);
        }
    }
    let cand: Vec<usize> = (0..full.labels.len())
        .filter(|&i| tax.candidate_names().contains(&full.class_names[full.labels[i]].as_str()))
        .collect();
    let cand_grids: Vec<&Tensor> = cand.iter().map(|&i| &grids[i]).collect();
    let cand_labels: Vec<usize> = cand.iter().map(|&i| full.labels[i]).collect();

    let cfg = GrnConfig::compact();
    let seeds = [0, 1, 2];
    let (mut rep_acc, mut cand_acc) = (Vec::new(), Vec::new());
    for seed in seeds {
        let fit = fit(&rep_grids, &rep_labels, 5, &cfg, &TrainConfig::default(), seed).unwrap();
        let support = &fit.report.support.indices;
        let test: Vec<usize> = (0..rep_grids.len()).filter(|i| !support.contains(i)).collect();
        rep_acc.push(test_accuracy(&fit.params, &fit.prototypes, &rep_grids, &rep_labels, &test).unwrap());
        let c = evaluate_candidates(&fit.params, &fit.prototypes, &cand_grids, &cand_labels, &full.class_names, &tax)
            .unwrap();
        cand_acc.push(c.accuracy);
    }
    let (r, c) = (mean(&rep_acc), mean(&cand_acc));
    let ok = r - c <= 0.15;
    verdict(
        "candidate projection",
        ok,
        &format!(
            "5-shot over {} seeds: representatives {r:.3}, {} candidate trials {c:.3}, gap {:.3} (limit 0.15)",
            seeds.len(),
            cand.len(),
            r - c
        ),
    );
    assert!(ok);
}

#[test]
fn online_fusion_and_accounting() {
    let (p, protos) = decoder_model(1);
    let (worst, exact) = fusion_brute_force(&p, &protos, 10);

    let (p2, protos2) = decoder_model(2);
    let d = decoder(&p2, &protos2);
    let perfect = run_session(
        &SessionScript {
            tasks: vec![perfect_task(); 10],
        },
        &d,
        &Replay::new(),
    )
    .unwrap()
    .stats;
    let cmds = perfect.commands.unwrap().mean;
    let time = perfect.control_time_s.unwrap().mean;
    let perfect_ok = perfect.success_rate == 1.0 && cmds == 3.0 && (time - 19.0).abs() < 1e-9;

    let veto = run_session(&veto_fixture(), &d, &Replay::new()).unwrap().stats;
    let cycle = 5.0 + 4.0 / 3.0;
    let outcome: Vec<bool> = veto.tasks.iter().map(|t| t.success).collect();
    let counts: Vec<usize> = veto.tasks.iter().map(|t| t.commands).collect();
    let veto_ok = veto.success_rate == 0.5
        && outcome == [true, false, true, false]
        && counts == [4, 2, 4, 1]
        && (veto.control_time_s.unwrap().mean - (4.0 * cycle + 2.0)).abs() < 1e-9;

    let ok = exact && perfect_ok && veto_ok;
    verdict(
        "online fusion",
        ok,
        &format!(
            "fusion vs brute force exact {exact} (worst {worst:.1e}); 10 perfect tasks: success {:.1}, {cmds:.1} commands, {time:.3} s (want 1.0 / 3.0 / 19.0 within 1e-9); veto fixture success {:.2} outcomes {outcome:?} commands {counts:?}",
            perfect.success_rate, veto.success_rate
        ),
    );
    assert!(ok);
}

/// Gain of a zero-phase pass over a unit sinusoid, measured away from the
/// edges.
fn measured_gain_db(pre: &Preprocessor, chain: &grn::dsp::BiquadChain, f: f64) -> f64 {
    let fs = pre.fs_in;
    let n = (4.0 * fs) as usize;
    let x: Vec<f64> = (0..n).map(|i| (std::f64::consts::TAU * f * i as f64 / fs).sin()).collect();
    let y = filtfilt(chain, &x).unwrap();
    let mid = n / 4..3 * n / 4;
    let rms = |v: &[f64]| (v.iter().map(|a| a * a).sum::<f64>() / v.len() as f64).sqrt();
    20.0 * (rms(&y[mid.clone()]) / rms(&x[mid])).log10()
}

#[test]
fn dsp_filters() {
    let mut lines = Vec::new();
    let mut ok = true;
    for fs in [2500.0f64, 250.0] {
        let cfg = PreprocessConfig {
            target_fs: fs.min(250.0),
            ..PreprocessConfig::default()
        };
        let pre = Preprocessor::new(cfg, fs).unwrap();
        // zero-phase passes square the single-pass magnitude
        let stop = 2.0 * pre.bandpass.magnitude_db(80.0, fs);
        let pass = 2.0 * pre.bandpass.magnitude_db(10.0, fs);
        let notch = 2.0 * pre.notch.magnitude_db(60.0, fs);
        let stop_m = measured_gain_db(&pre, &pre.bandpass, 80.0);
        let pass_m = measured_gain_db(&pre, &pre.bandpass, 10.0);
        let notch_m = measured_gain_db(&pre, &pre.notch, 60.0);
        let radius = pre.bandpass.max_pole_radius().max(pre.notch.max_pole_radius());

        let mut rng = grn::rng::SplitMix64::new(fs as u64);
        let x: Vec<f64> = (0..1000).map(|_| rng.normal()).collect();
        let y = filtfilt(&pre.bandpass, &x).unwrap();
        let mut xr = x.clone();
        xr.reverse();
        let mut yr = filtfilt(&pre.bandpass, &xr).unwrap();
        yr.reverse();
        let reversal = y.iter().zip(&yr).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let mut imp = vec![0.0; 1001];
        imp[500] = 1.0;
        let h = filtfilt(&pre.bandpass, &imp).unwrap();
        let symmetry = (1..=500).map(|k| (h[500 - k] - h[500 + k]).abs()).fold(0.0, f64::max);

        let here = stop <= -20.0
            && stop_m <= -20.0
            && pass.abs() <= 1.0
            && pass_m.abs() <= 1.0
            && notch <= -20.0
            && notch_m <= -20.0
            && radius < 1.0
            && reversal <= 1e-9
            && symmetry <= 1e-9;
        ok &= here;
        lines.push(format!(
            "fs {fs}: 80 Hz {stop:.1} dB (measured {stop_m:.1}, <= -20), 10 Hz {pass:+.3} dB (measured {pass_m:+.3}, within 1), 60 Hz notch {notch:.1} dB (measured {notch_m:.1}, <= -20), max pole radius {radius:.6} (< 1), reversal {reversal:.1e} and impulse asymmetry {symmetry:.1e} (<= 1e-9)"
        ));
    }
    verdict("dsp", ok, &lines.join("; "));
    assert!(ok);
}

/// Drop wall-clock fields, which are the only values allowed to differ.
fn without_timing(mut v: serde_json::Value) -> serde_json::Value {
    match &mut v {
        serde_json::Value::Object(m) => {
            m.remove("wall_time_s");
            for x in m.values_mut() {
                *x = without_timing(x.take());
            }
        }
        serde_json::Value::Array(a) => {
            for x in a.iter_mut() {
                *x = without_timing(x.take());
            }
        }
        _ => {}
    }
    v
}

fn json(path: &Path) -> serde_json::Value {
    without_timing(serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap())
}

fn grn_cli(args: &[&str]) -> i32 {
    let mut argv = vec!["grn", "-q"];
    argv.extend_from_slice(args);
    run(argv)
}

#[test]
fn determinism() {
    let dir = tempfile::tempdir().unwrap();
    let s = |p: &Path| p.to_str().unwrap().to_string();
    let data = dir.path().join("grid.json");
    assert_eq!(grn_cli(&["generate", "--grid", "--trials-per-class", "4", "--out", &s(&data)]), 0);
    let script = dir.path().join("script.json");
    std::fs::write(
        &script,
        r#"{"tasks": [
            {"steps": [{"acquire": {"source": {"synthetic": {"class": "forward_reach", "stream": 7}}, "intent": "upper_arm"}},
                       {"command": "hand"}, {"command": "forearm"}]},
            {"steps": [{"command": "upper_arm"}, "nod"]}
        ]}"#,
    )
    .unwrap();

    let mut identical = Vec::new();
    let mut codes = Vec::new();
    // both repetitions write to the same paths, which the reports echo
    let work = dir.path().join("work");
    let runs: Vec<_> = ["a", "b"].iter().map(|r| dir.path().join(r)).collect();
    for kept in &runs {
        let model = work.join("model.json");
        codes.push(grn_cli(&[
            "train", "--data", &s(&data), "--compact", "--shots", "2", "--seed", "5", "--max-epochs", "10", "--out",
            &s(&model),
        ]));
        codes.push(grn_cli(&[
            "eval", "--data", &s(&data), "--compact", "--shots", "1,2", "--repeats", "2", "--max-epochs", "4", "--out",
            &s(&work.join("eval")),
        ]));
        codes.push(grn_cli(&[
            "simulate", "--checkpoint", &s(&model), "--script", &s(&script), "--out", &s(&work.join("session.json")),
        ]));
        std::fs::rename(&work, kept).unwrap();
    }
    let (a, b) = (&runs[0], &runs[1]);
    for file in ["model.json", "model.bin", "eval/eval.csv", "session.json"] {
        identical.push((file, std::fs::read(a.join(file)).unwrap() == std::fs::read(b.join(file)).unwrap()));
    }
    for file in ["model.report.json", "eval/eval.json"] {
        identical.push((file, json(&a.join(file)) == json(&b.join(file))));
    }

    let raw = generate_session(&SynthConfig {
        trials_per_class: 2,
        duration_s: 1.0,
        ..SynthConfig::reference()
    })
    .unwrap();
    let path = dir.path().join("raw.json");
    let written = save_dataset(&raw, &path).unwrap();
    let back = load_dataset(&path).unwrap();
    let round_trip = back == raw && back.payload() == raw.payload() && back.checksum() == written;
    let mut bytes = std::fs::read(dir.path().join("raw.bin")).unwrap();
    bytes[100] ^= 1;
    std::fs::write(dir.path().join("raw.bin"), bytes).unwrap();
    let detected = matches!(load_dataset(&path), Err(grn::Error::Checksum { .. }));

    let ok = codes.iter().all(|&c| c == 0) && identical.iter().all(|(_, same)| *same) && round_trip && detected;
    verdict(
        "determinism",
        ok,
        &format!(
            "exit codes {codes:?}; identical across runs {identical:?} (report timings excluded); dataset round trip bit-exact {round_trip}, corrupted payload rejected {detected}"
        ),
    );
    assert!(ok);
}
