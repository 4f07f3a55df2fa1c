//! Dropping the atom at the slow bond from the conditional variance breaks
//! agreement with simulation when the test function has a large jump.

use slowbond::config::{ExperimentConfig, ExperimentKind};
use slowbond::criteria::run_criterion;
use slowbond::robin::{Bump, ShapeParams, TestFunctionSpec};

#[test]
fn atom_term_is_needed() {
    let mut c = ExperimentConfig::preset(ExperimentKind::Fluctuations);
    c.n_sweep = vec![64];
    c.replicas = 1000;
    c.seed = 7;
    c.test_functions = vec![TestFunctionSpec {
        jump: 2.0,
        shape: ShapeParams { bumps: vec![Bump { amplitude: 1.0, center: 0.0, width: 1.0 }], correction_width: 1.0, max_degree: None },
        order: 1,
    }];
    let r = run_criterion(&c).unwrap();
    assert!(r.passed, "{}", r.summary);
    let m = &r.metrics;
    let gap = |v: f64| (m["residual_var"] - v).abs() / v;
    assert!(gap(m["ou_variance"]) < 0.15);
    assert!(gap(m["ou_variance_without_atom"]) > 0.15, "ablated gap {}", gap(m["ou_variance_without_atom"]));
}
