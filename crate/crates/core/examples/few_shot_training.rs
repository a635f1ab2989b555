//! Train the compact network on a 5-shot support of the reference session,
//! test it on the remaining trials and save a checkpoint.
//!
//!     cargo run --release --example few_shot_training

use grn::data::{generate_grid_session, SynthConfig};
use grn::dsp::{PreprocessConfig, Preprocessor};
use grn::eval::test_accuracy;
use grn::model::{load_checkpoint, save_checkpoint, CheckpointMeta, GrnConfig};
use grn::tensor::Tensor;
use grn::train::{fit, TrainConfig};

fn main() -> grn::Result<()> {
    let synth = SynthConfig {
        trials_per_class: 20,
        ..SynthConfig::reference()
    };
    let pre = Preprocessor::new(PreprocessConfig::default(), synth.fs)?;
    let ds = generate_grid_session(&synth, &pre)?;
    let grids = ds.grids()?;
    let refs: Vec<&Tensor> = grids.iter().collect();

    let cfg = GrnConfig::compact();
    let train = TrainConfig {
        max_epochs: 150,
        ..TrainConfig::default()
    };
    let run = fit(&refs, &ds.labels, 5, &cfg, &train, 0)?;
    let r = &run.report;
    println!(
        "{} epochs ({:?}), loss {:.4} -> {:.4}, {:.1} s",
        r.epochs,
        r.stop,
        r.losses[0],
        r.final_loss.unwrap_or(f64::NAN),
        r.wall_time_s
    );

    let test: Vec<usize> = (0..refs.len()).filter(|i| !r.support.indices.contains(i)).collect();
    let acc = test_accuracy(&run.params, &run.prototypes, &refs, &ds.labels, &test)?;
    println!("test accuracy on {} held-out trials: {acc:.3}", test.len());

    let pred = run.params.predict(refs[test[0]], &run.prototypes)?;
    println!(
        "trial {} ({}): scores {:.3?}, probabilities {:.3?}",
        test[0], ds.class_names[ds.labels[test[0]]], pred.scores, pred.probabilities
    );

    let path = std::env::temp_dir().join("grn-few-shot").join("model.json");
    let meta = CheckpointMeta {
        class_names: ds.class_names.clone(),
        provenance: serde_json::json!({ "example": "few_shot_training", "fs": ds.fs }),
    };
    let digest = save_checkpoint(&path, &run.params, &run.prototypes, &meta)?;
    let back = load_checkpoint(&path)?;
    let again = test_accuracy(&back.params, &back.prototypes, &refs, &ds.labels, &test)?;
    println!("checkpoint {} digest {digest:016x}, reloaded accuracy {again:.3}", path.display());
    Ok(())
}
