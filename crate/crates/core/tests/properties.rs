use proptest::prelude::*;

use slowbond::config::{ExperimentConfig, ExperimentKind};
use slowbond::exclusion::{density_field, run, Configuration, FieldWeights, RunOptions};
use slowbond::io::Table;
use slowbond::lattice::{bond_rate_1d, bond_rate_2d, Generator1D, ModelParams, Point, Window1D};
use slowbond::moments::{mean_path, MeanField, SolverOptions};
use slowbond::rng::replica_rng;
use slowbond::robin::{make_test_function, Bump, RobinSemigroup, ShapeParams, Side};
use slowbond::stats::spread;
use slowbond::walks::heat_kernel_folding_check;
use slowbond::InitialProfile;

fn shape(center: f64, width: f64) -> ShapeParams {
    ShapeParams { bumps: vec![Bump { amplitude: 1.0, center, width }], correction_width: 0.8, max_degree: None }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn slow_bond_is_the_only_slow_bond(n in 1u32..200, alpha in 0.0f64..50.0, b in -500i64..500) {
        let p = ModelParams::new(n, alpha, 1.0).unwrap();
        let want = if b == 0 { alpha / n as f64 } else { 1.0 };
        prop_assert_eq!(bond_rate_1d(b, &p), want);
    }

    #[test]
    fn planar_rates_are_symmetric(n in 1u32..50, alpha in 0.0f64..5.0, x in -20i64..20, y in -20i64..20, d in 0usize..4) {
        let p = ModelParams::new(n, alpha, 1.0).unwrap();
        let u = Point::new(x, y);
        let v = u.neighbours()[d];
        prop_assert_eq!(bond_rate_2d(u, v, &p), bond_rate_2d(v, u, &p));
        prop_assert!(bond_rate_2d(u, v, &p) >= 0.0);
    }

    #[test]
    fn generator_is_self_adjoint_and_kills_constants(
        alpha in 0.0f64..4.0,
        f in prop::collection::vec(-1.0f64..1.0, 12),
        g in prop::collection::vec(-1.0f64..1.0, 12),
        c in -3.0f64..3.0,
    ) {
        let p = ModelParams::new(5, alpha, 1.0).unwrap();
        let gen = Generator1D::new(Window1D::new(-5, 6).unwrap(), &p);
        let (mut af, mut ag) = (vec![0.0; 12], vec![0.0; 12]);
        gen.apply(&f, &mut af, 1.0);
        gen.apply(&g, &mut ag, 1.0);
        let lhs: f64 = g.iter().zip(&af).map(|(a, b)| a * b).sum();
        let rhs: f64 = f.iter().zip(&ag).map(|(a, b)| a * b).sum();
        prop_assert!((lhs - rhs).abs() < 1e-12);
        let mut ac = vec![0.0; 12];
        gen.apply(&[c; 12], &mut ac, 1.0);
        prop_assert!(ac.iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn folding_lhs_is_symmetric_under_reflection(x in -10i64..10, y in -10i64..10, alpha in 0.1f64..5.0) {
        let p = ModelParams::new(4, alpha, 2.0).unwrap();
        let a = heat_kernel_folding_check(x, y, 0.5, &p).unwrap();
        let b = heat_kernel_folding_check(x, 1 - y, 0.5, &p).unwrap();
        prop_assert!((a.lhs - b.lhs).abs() < 1e-13);
        prop_assert!(a.diff < 1e-9);
    }

    #[test]
    fn spread_is_scale_free(xs in prop::collection::vec(0.1f64..10.0, 1..8), c in 0.01f64..100.0) {
        let s = spread(&xs);
        let scaled: Vec<f64> = xs.iter().map(|x| c * x).collect();
        prop_assert!(s >= 1.0);
        prop_assert!((spread(&scaled) - s).abs() < 1e-9 * s);
    }

    #[test]
    fn csv_round_trips(cells in prop::collection::vec("[ -~\n]{0,12}", 1..6)) {
        let mut t = Table::new("t", &["a"]);
        for c in &cells {
            t.push([c.clone()]);
        }
        let bytes = t.to_csv().unwrap();
        let mut r = csv::ReaderBuilder::new().from_reader(bytes.as_slice());
        let back: Vec<String> = r.records().map(|x| x.unwrap()[0].to_owned()).collect();
        prop_assert_eq!(back, cells);
    }

    #[test]
    fn config_round_trips(
        alpha in 0.0f64..20.0,
        horizon in 0.0f64..5.0,
        seed in any::<u64>(),
        replicas in 1usize..100_000,
        first in 1u32..64,
        steps in prop::collection::vec(1u32..64, 0..4),
        k in 0usize..13,
    ) {
        let mut c = ExperimentConfig::preset(ExperimentKind::ALL[k]);
        c.alpha = alpha;
        c.horizon = horizon;
        c.seed = seed;
        c.replicas = replicas;
        c.n_sweep = steps.iter().scan(first, |acc, s| { *acc += s; Some(*acc) }).collect();
        c.n_sweep.insert(0, first);
        let text = c.to_toml().unwrap();
        let back = ExperimentConfig::from_toml(&text).unwrap();
        prop_assert_eq!(&back, &c);
        prop_assert_eq!(back.to_toml().unwrap(), text);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn mean_solver_conserves_mass_and_stays_in_range(
        left in 0.0f64..1.0,
        right in 0.0f64..1.0,
        alpha in 0.0f64..3.0,
        t in 0.0f64..0.3,
    ) {
        let n = 8;
        let p = ModelParams::new(n, alpha, t).unwrap();
        let init = MeanField::from_profile(&InitialProfile::Step { left, right }, Window1D::symmetric(24).unwrap(), n);
        let path = mean_path(&init, &p, t, &SolverOptions::default()).unwrap();
        let end = path.at(t).unwrap();
        prop_assert!((end.total_mass() - init.total_mass()).abs() < 1e-8);
        prop_assert!(end.values.iter().all(|v| (-1e-12..=1.0 + 1e-12).contains(v)));
    }

    #[test]
    fn swaps_conserve_particles(seed in any::<u64>(), alpha in 0.0f64..3.0) {
        let w = Window1D::symmetric(20).unwrap();
        let p = ModelParams::new(8, alpha, 0.2).unwrap();
        let mut rng = replica_rng(seed, 0);
        let c0 = Configuration::from_fn(w, |x| (x * 7 + seed as i64).rem_euclid(3) == 0);
        let tr = run(c0.clone(), &p, 0.2, &[0.05, 0.1, 0.2], &mut rng, RunOptions::default()).unwrap();
        for (_, c) in &tr.snapshots {
            prop_assert_eq!(c.particles(), c0.particles());
            if alpha == 0.0 {
                prop_assert_eq!(c.count_in(w.lo(), 0), c0.count_in(w.lo(), 0));
            }
        }
    }

    #[test]
    fn configurations_round_trip(bits in prop::collection::vec(any::<bool>(), 5..200)) {
        let w = Window1D::new(-3, bits.len() as i64 - 4).unwrap();
        let c = Configuration::from_fn(w, |x| bits[(x + 3) as usize]);
        prop_assert_eq!(c.occupancy().collect::<Vec<_>>(), bits.clone());
        prop_assert_eq!(c.particles() as usize, bits.iter().filter(|b| **b).count());
    }

    #[test]
    fn test_functions_meet_the_boundary_conditions(
        jump in -2.0f64..2.0,
        alpha in 0.1f64..10.0,
        center in -1.0f64..1.0,
        width in 0.3f64..2.0,
        order in 1usize..6,
    ) {
        let f = make_test_function(jump, &shape(center, width), alpha, order).unwrap();
        prop_assert!(f.compatibility_residual() < 1e-9);
        let (l, r) = f.derivs_at_zero(0);
        prop_assert!((r - l - jump).abs() < 1e-12);
        for k in 0..=(order - 1) / 2 {
            let (dl, dr) = f.derivs_at_zero(2 * k + 1);
            let (el, er) = f.derivs_at_zero(2 * k);
            prop_assert!((dl - dr).abs() < 1e-9 * (1.0 + dl.abs()));
            prop_assert!((dr - alpha * (er - el)).abs() < 1e-9 * (1.0 + dr.abs()));
        }
    }

    #[test]
    fn semigroup_is_linear_and_keeps_the_robin_condition(
        a in -2.0f64..2.0,
        j1 in -1.0f64..1.0,
        j2 in -1.0f64..1.0,
        alpha in 0.2f64..5.0,
        t in 0.01f64..1.0,
        u in -2.0f64..2.0,
    ) {
        let f = make_test_function(j1, &shape(0.3, 0.7), alpha, 1).unwrap();
        let g = make_test_function(j2, &shape(-0.4, 1.1), alpha, 1).unwrap();
        let h = f.scale(a).add(&g).unwrap();
        let sg = RobinSemigroup::new(alpha).unwrap();
        let lhs = sg.apply(&h, t, u).unwrap();
        let rhs = a * sg.apply(&f, t, u).unwrap() + sg.apply(&g, t, u).unwrap();
        prop_assert!((lhs - rhs).abs() < 1e-8);
        prop_assert!(sg.robin_residual(&h, t).unwrap() < 1e-6);
        let left = sg.apply_side(&h, t, 0.0, Side::Left).unwrap();
        prop_assert_eq!(left, sg.apply(&h, t, 0.0).unwrap());
    }

    #[test]
    fn density_field_is_linear(seed in any::<u64>(), a in -2.0f64..2.0, j in -1.0f64..1.0) {
        let n = 16;
        let w = Window1D::symmetric(160).unwrap();
        let f = make_test_function(j, &shape(0.2, 0.6), 1.0, 1).unwrap();
        let g = make_test_function(0.0, &shape(-0.5, 0.5), 1.0, 1).unwrap();
        let h = f.scale(a).add(&g).unwrap();
        let c = Configuration::from_fn(w, |x| (x.wrapping_mul(seed as i64 | 1)).rem_euclid(5) < 2);
        let rho = vec![0.4; w.len()];
        let field = |k: &dyn slowbond::profile::RealFn| density_field(&c, &FieldWeights::new(k, w, n).unwrap(), &rho);
        let lhs = field(&h);
        let rhs = a * field(&f) + field(&g);
        prop_assert!((lhs - rhs).abs() < 1e-10 * (1.0 + lhs.abs()));
    }
}
