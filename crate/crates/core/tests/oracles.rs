//! Independent oracles for the closed forms and the graph search.

mod support;

use std::f64::consts::{FRAC_PI_2, PI};

use proptest::prelude::*;
use relay_core::comms::{array_gain, AntennaModel};

proptest! {
    #![proptest_config(ProptestConfig { cases: 100_000, ..ProptestConfig::default() })]

    #[test]
    fn lambda_closed_form_matches_bisection(
        c in 0.0..4.0f64,
        d in 0.0..4.0f64,
        i in 1usize..10,
        excess in 1e-6..6.0f64,
    ) {
        let (a, c, d, i) = support::feasible(c, d, i, excess);
        let (residual, gap) = support::lambda_errors(a, c, d, i).map_err(TestCaseError::fail)?;
        prop_assert!(residual <= 1e-9);
        prop_assert!(gap <= 1e-9);
    }

    #[test]
    fn two_element_gain_closed_form(theta in -FRAC_PI_2..=FRAC_PI_2) {
        let closed = 2.0 * (PI * theta.sin() / 2.0).cos().abs();
        prop_assert!((support::complex_gain(theta) - closed).abs() <= 1e-12);
        prop_assert!((array_gain(theta, &AntennaModel::DIRECTIONAL) - closed).abs() <= 1e-12);
    }

    #[test]
    fn isotropic_gain_is_one(theta in -PI..PI) {
        prop_assert!((array_gain(theta, &AntennaModel::ISOTROPIC) - 1.0).abs() <= 1e-15);
    }
}

#[test]
fn dijkstra_matches_enumeration_on_planner_graphs() {
    support::planner_graph_suite(1000, 11).unwrap();
}

#[test]
fn dijkstra_matches_enumeration_on_random_weights() {
    support::random_graph_suite(1000, 12).unwrap();
}

#[test]
fn propagation_fixpoint_ignores_sweep_order() {
    let chained = support::propagation_suite(2000, 13).unwrap();
    assert!(
        chained > 100,
        "only {chained} instances with two or more relay hops"
    );
}
