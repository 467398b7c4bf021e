//! Central finite-difference checks for every trainable network.

#[path = "common/gradcheck.rs"]
mod gradcheck;

use gradcheck::*;
use ltcas_core::synth::loss_and_gradients;
use ltcas_core::synth::model::SKETCH_HEAD;

#[test]
fn denoiser_trunk_gradient_matches_finite_differences() {
    let worst = denoiser_worst(0.1, None);
    assert!(worst < TOL, "worst relative error {worst}");
}

#[test]
fn sketch_head_gradient_matches_finite_differences() {
    let worst = denoiser_worst(1.0, Some(&SKETCH_HEAD));
    assert!(worst < TOL, "worst relative error {worst}");
}

#[test]
fn sketch_head_receives_no_gradient_without_sketch_term() {
    let (model, schedule, batch) = toy_denoiser(3);
    let (_, grads) = loss_and_gradients(&model, &schedule, &batch, 0.0).unwrap();
    for i in SKETCH_HEAD {
        assert!(grads[i].data().iter().all(|&g| g == 0.0));
    }
    let (_, grads) = loss_and_gradients(&model, &schedule, &batch, 0.1).unwrap();
    assert!(grads[SKETCH_HEAD[0]].max_abs() > 0.0);
}

#[test]
fn classifier_gradient_matches_finite_differences() {
    let worst = classifier_worst();
    assert!(worst < TOL, "worst relative error {worst}");
}

#[test]
fn balanced_softmax_gradient_matches_finite_differences() {
    let worst = balanced_softmax_worst();
    assert!(worst < TOL, "worst relative error {worst}");
}
