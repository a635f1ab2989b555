use grn::data::{generate_grid_session, generate_session, SynthConfig};
use grn::dsp::{PreprocessConfig, Preprocessor};
use grn::eval::run_protocol;
use grn::model::GrnConfig;
use grn::tensor::Tensor;
use grn::train::{fit, TrainConfig};

fn small_session() -> grn::data::Dataset {
    let cfg = SynthConfig {
        trials_per_class: 4,
        ..SynthConfig::reference()
    };
    let pre = Preprocessor::new(PreprocessConfig::default(), cfg.fs).unwrap();
    generate_grid_session(&cfg, &pre).unwrap()
}

fn quick() -> TrainConfig {
    TrainConfig {
        max_epochs: 6,
        ..TrainConfig::default()
    }
}

#[test]
fn fits_are_bit_reproducible() {
    let ds = small_session();
    let grids = ds.grids().unwrap();
    let refs: Vec<&Tensor> = grids.iter().collect();
    let cfg = GrnConfig::compact();
    let a = fit(&refs, &ds.labels, 2, &cfg, &quick(), 3).unwrap();
    let b = fit(&refs, &ds.labels, 2, &cfg, &quick(), 3).unwrap();
    let bits = |v: Vec<f64>| v.into_iter().map(f64::to_bits).collect::<Vec<_>>();
    assert_eq!(bits(a.params.flat_values()), bits(b.params.flat_values()));
    assert_eq!(a.prototypes, b.prototypes);
    assert_eq!(a.report.losses, b.report.losses);
    assert_eq!(a.report.support, b.report.support);

    let c = fit(&refs, &ds.labels, 2, &cfg, &quick(), 4).unwrap();
    assert_ne!(bits(a.params.flat_values()), bits(c.params.flat_values()));
}

#[test]
fn protocol_runs_are_reproducible() {
    let ds = small_session();
    let grids = ds.grids().unwrap();
    let refs: Vec<&Tensor> = grids.iter().collect();
    let cfg = GrnConfig::compact();
    let a = run_protocol(&refs, &ds.labels, &cfg, &quick(), 1, &[0, 1]).unwrap();
    let b = run_protocol(&refs, &ds.labels, &cfg, &quick(), 1, &[0, 1]).unwrap();
    assert_eq!(a.result, b.result);
}

#[test]
fn sessions_regenerate_identically() {
    let cfg = SynthConfig {
        trials_per_class: 2,
        duration_s: 1.0,
        ..SynthConfig::reference()
    };
    assert_eq!(generate_session(&cfg).unwrap().checksum(), generate_session(&cfg).unwrap().checksum());
}
