mod common;

use aitv_core::prox::{prox_l1_minus_l2, prox_l21, ProxParams};
use common::{prox_objective, prox_oracle};
use proptest::prelude::*;

fn prox(x: [f64; 2], alpha: f64, beta: f64) -> [f64; 2] {
    prox_l1_minus_l2(x, ProxParams::new(alpha, beta).unwrap())
}

#[test]
fn worked_examples_match_the_oracle() {
    for (x, expected) in [
        ([3.0, 0.0], [2.5, 0.0]),
        ([0.8, 0.3], [0.3, 0.0]),
        ([0.3, 0.2], [0.0, 0.0]),
    ] {
        let y = prox(x, 0.5, 1.0);
        assert!((y[0] - expected[0]).abs() < 1e-12 && (y[1] - expected[1]).abs() < 1e-12);
        let oracle = prox_oracle(x, 0.5, 1.0);
        assert!((prox_objective(y, x, 0.5, 1.0) - oracle).abs() < 1e-9);
    }
}

#[test]
fn alpha_one_band_keeps_magnitude() {
    for x in [[0.3, 0.1], [-0.9, 0.4], [0.2, -1.0]] {
        let y = prox(x, 1.0, 1.0);
        let i = if x[1].abs() > x[0].abs() { 1 } else { 0 };
        assert_eq!(y[i], x[i]);
        assert_eq!(y[1 - i], 0.0);
    }
}

fn seam_gap(x: [f64; 2], alpha: f64, beta: f64) -> f64 {
    // evaluate the closed form just inside and just outside a seam
    let eps = 1e-9;
    let scale = |s: f64| [x[0] * s, x[1] * s];
    let a = prox(scale(1.0 - eps), alpha, beta);
    let b = prox(scale(1.0 + eps), alpha, beta);
    (prox_objective(a, x, alpha, beta) - prox_objective(b, x, alpha, beta)).abs()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn closed_form_is_optimal(x0 in -5.0..5.0f64, x1 in -5.0..5.0f64, alpha in 0.0..=1.0f64, beta in 0.01..5.0f64) {
        let x = [x0, x1];
        let y = prox(x, alpha, beta);
        prop_assert!(prox_objective(y, x, alpha, beta) <= prox_oracle(x, alpha, beta) + 1e-6);
    }

    #[test]
    fn scaling_covariance(x0 in -5.0..5.0f64, x1 in -5.0..5.0f64, alpha in 0.0..=1.0f64, beta in 0.05..5.0f64, c in 0.1..10.0f64) {
        let a = prox([c * x0, c * x1], alpha, c * beta);
        let b = prox([x0, x1], alpha, beta);
        prop_assert!((a[0] - c * b[0]).abs() <= 1e-9 * (1.0 + c * b[0].abs()));
        prop_assert!((a[1] - c * b[1]).abs() <= 1e-9 * (1.0 + c * b[1].abs()));
    }

    #[test]
    fn seams_do_not_jump_in_value(t in 0.0..1.0f64, alpha in 0.0..=1.0f64, beta in 0.05..5.0f64, upper in any::<bool>()) {
        // x on the seam ‖x‖∞ = β or ‖x‖∞ = (1−α)β
        let level = if upper { beta } else { (1.0 - alpha) * beta };
        prop_assume!(level > 1e-6);
        let x = [level, level * t];
        prop_assert!(seam_gap(x, alpha, beta) <= 1e-7 * (1.0 + level));
    }

    #[test]
    fn zero_is_fixed(alpha in 0.0..=1.0f64, beta in 0.01..5.0f64) {
        prop_assert_eq!(prox([0.0, 0.0], alpha, beta), [0.0, 0.0]);
        prop_assert_eq!(prox_l21([0.0, 0.0], beta), [0.0, 0.0]);
    }

    #[test]
    fn iso_shrinkage_is_optimal(x0 in -5.0..5.0f64, x1 in -5.0..5.0f64, beta in 0.01..5.0f64) {
        let y = prox_l21([x0, x1], beta);
        let obj = |y: [f64; 2]| y[0].hypot(y[1]) + ((x0 - y[0]).powi(2) + (x1 - y[1]).powi(2)) / (2.0 * beta);
        // convex objective: no perturbation may improve it
        for d in [[1e-4, 0.0], [0.0, 1e-4], [-1e-4, 0.0], [0.0, -1e-4]] {
            prop_assert!(obj(y) <= obj([y[0] + d[0], y[1] + d[1]]) + 1e-12);
        }
    }
}
