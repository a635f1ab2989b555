mod common;

use common::gradients::{default_spot_check, layer_suite};
use common::oracle::{conv_max_error, fusion_max_error, pool_max_error, softmax_max_error};

#[test]
fn conv_matches_naive_loops() {
    let err = conv_max_error(240, 1);
    assert!(err <= 1e-12, "conv worst difference {err:e}");
}

#[test]
fn pooling_matches_naive_loops() {
    let err = pool_max_error(240, 2);
    assert!(err <= 1e-12, "pool worst difference {err:e}");
}

#[test]
fn softmax_matches_textbook_formula() {
    let err = softmax_max_error(240, 3);
    assert!(err <= 1e-12, "softmax worst difference {err:e}");
}

#[test]
fn fusion_matches_per_class_average() {
    let (err, same) = fusion_max_error(240, 4);
    assert!(err <= 1e-12 && same, "fusion worst difference {err:e}, argmax agreed: {same}");
}

#[test]
fn every_layer_gradient_matches_finite_differences() {
    for (layer, err) in layer_suite() {
        assert!(err < 1e-4, "{layer}: relative error {err:e}");
    }
}

#[test]
fn default_network_gradient_spot_check() {
    let err = default_spot_check(20, 5);
    assert!(err < 1e-3, "relative error {err:e}");
}
