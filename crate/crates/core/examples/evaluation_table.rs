//! Repeated few-shot evaluation over several seeds and support sizes,
//! summarised as a Max/Avg/Std table, then candidate-class projection onto
//! the sub-parts the representatives stand for.
//!
//!     cargo run --release --example evaluation_table

use grn::data::{generate_grid_session, SynthConfig};
use grn::dsp::{PreprocessConfig, Preprocessor};
use grn::eval::{aggregate_table, evaluate_candidates, run_protocol, ClassTaxonomy, TableEntry};
use grn::model::GrnConfig;
use grn::tensor::Tensor;
use grn::train::TrainConfig;

fn main() -> grn::Result<()> {
    let synth = SynthConfig {
        trials_per_class: 15,
        ..SynthConfig::default()
    };
    let pre = Preprocessor::new(PreprocessConfig::default(), synth.fs)?;
    let full = generate_grid_session(&synth, &pre)?;

    let tax = ClassTaxonomy::default();
    let reps = full.select_classes(&tax.representative_names())?;
    let grids = reps.grids()?;
    let refs: Vec<&Tensor> = grids.iter().collect();
    let cfg = GrnConfig::compact();
    let train = TrainConfig {
        max_epochs: 60,
        ..TrainConfig::default()
    };

    let mut entries = Vec::new();
    let mut best = None;
    for shots in [1, 5] {
        let run = run_protocol(&refs, &reps.labels, &cfg, &train, shots, &[0, 1, 2])?;
        println!("{shots}-shot accuracies {:.3?}", run.result.accuracies);
        entries.push(TableEntry {
            subject: "synthetic".into(),
            session: "S1".into(),
            result: run.result,
        });
        best = Some(run.best);
    }
    let table = aggregate_table(&entries);
    print!("{}", table.render());
    print!("{}", table.to_csv());

    let best = best.expect("at least one shot count");
    let cand = full.select_classes(&tax.candidate_names())?;
    let cgrids = cand.grids()?;
    let crefs: Vec<&Tensor> = cgrids.iter().collect();
    let res = evaluate_candidates(&best.params, &best.prototypes, &crefs, &cand.labels, &cand.class_names, &tax)?;
    for c in &res.per_class {
        println!("{:<16} -> {:<9} {:.3} over {} trials", c.class, c.sub_part, c.accuracy, c.trials);
    }
    println!("candidate accuracy {:.3}", res.accuracy);
    Ok(())
}
