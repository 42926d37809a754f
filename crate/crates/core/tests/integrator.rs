use proptest::prelude::*;

use wuxing_core::integrate::integrate_step;
use wuxing_core::{forward_derivative, inverse_derivative, ElementVector, NeuronParams};

fn driven_end_state(h: f64, horizon: f64) -> ElementVector {
    let p = NeuronParams::default();
    let u = ElementVector::new([2.0, 0.0, -0.5, 0.0, 0.0]).unwrap();
    let mut e = ElementVector::splat(1.0);
    for _ in 0..(horizon / h).round() as usize {
        e = integrate_step(|y| forward_derivative(y, &p, &u), &e, h).unwrap();
    }
    e
}

#[test]
fn global_error_is_fourth_order() {
    let reference = driven_end_state(0.04 / 64.0, 10.0);
    let err: Vec<f64> = [0.04, 0.02, 0.01]
        .iter()
        .map(|&h| (driven_end_state(h, 10.0) - reference).max_abs())
        .collect();
    for w in err.windows(2) {
        let ratio = w[0] / w[1];
        assert!(ratio >= 8.0, "errors {err:?}");
        assert!(ratio < 24.0, "errors {err:?}");
    }
}

#[test]
fn linear_decay_matches_closed_form() {
    // k3 = tiny, k1 = tiny: each element decays at rate k2 independently of
    // the others to first order in the small couplings.
    let p = NeuronParams::uniform(1e-9, 0.8, 1e-9).unwrap();
    let zero = ElementVector::zeros();
    let mut e = ElementVector::new([1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
    let start = e;
    let h = 0.01;
    for _ in 0..500 {
        e = integrate_step(|y| forward_derivative(y, &p, &zero), &e, h).unwrap();
    }
    let decay = (-0.8f64 * 5.0).exp();
    for i in 0..5 {
        assert!((e[i] - start[i] * decay).abs() < 1e-6, "{i}: {} vs {}", e[i], start[i] * decay);
    }
}

proptest! {
    #[test]
    fn zero_field_is_a_no_op(v in prop::array::uniform5(-10.0f64..10.0), h in 1e-4f64..1.0) {
        let e = ElementVector::new(v).unwrap();
        let out = integrate_step(|_| Ok(ElementVector::zeros()), &e, h).unwrap();
        prop_assert_eq!(out, e);
    }

    #[test]
    fn inverse_step_mirrors_forward_step(
        v in prop::array::uniform5(0.1f64..3.0),
        k in prop::array::uniform3(0.1f64..2.0),
    ) {
        // With uniform parameters the inverse field is the forward field of
        // the mirrored state, so one step commutes with mirroring.
        let p = NeuronParams::uniform(k[0], k[1], k[2]).unwrap();
        let zero = ElementVector::zeros();
        let e = ElementVector::new(v).unwrap();
        let inv = integrate_step(|y| inverse_derivative(y, &p, &zero), &e, 0.01).unwrap();
        let fwd = integrate_step(|y| forward_derivative(y, &p, &zero), &e.mirrored(), 0.01).unwrap();
        prop_assert!((inv - fwd.mirrored()).max_abs() < 1e-12);
    }
}
