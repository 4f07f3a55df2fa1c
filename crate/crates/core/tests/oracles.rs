//! Reference values produced by `tests/oracle/generate.py`, which uses
//! brute-force master equations, mpmath quadrature and eigendecompositions
//! independent of the library code paths.

use slowbond::lattice::{ModelParams, Point, Window1D, WindowV};
use slowbond::moments::{evolve_correlation, mean_path, CorrelationField, CorrelationOptions, MeanField, SolverOptions};
use slowbond::profile::RealFn;
use slowbond::robin::RobinSemigroup;
use slowbond::walks::{simple_walk_origin_occupation, slow_bond_occupation};
use slowbond::InitialProfile;

// TANH: window [-2, 2], n = 4, alpha = 0.5, t = 0.05
const TANH_RHO: [f64; 5] = [0.41563952920138936, 0.4425847072010404, 0.4737151730429664, 0.5762570213646637, 0.5918035691899398];
const TANH_PHI: [((i64, i64), f64); 10] = [((-2, -1), -0.000979153580431047), ((-2, 0), -0.0006420978591034354), ((-2, 1), -5.1489285321282274e-05), ((-2, 2), -1.8673915823663734e-05), ((-1, 0), -0.0011326599361937417), ((-1, 1), -0.00014744697415047803), ((-1, 2), -5.5631394952959656e-05), ((0, 1), -0.0004888773321687911), ((0, 2), -0.00015510347712016648), ((1, 2), -0.0007513920678961505)];
// STEP: window [-3, 3], n = 3, alpha = 0.1, t = 0.08
const STEP_RHO: [f64; 7] = [0.499958170960175, 0.4997685324493308, 0.4988422591575341, 0.495547908767857, 0.25445269464910875, 0.2511625917275736, 0.25026784228842014];
const STEP_PHI: [((i64, i64), f64); 21] = [((-3, -2), -9.249242288733583e-09), ((-3, -1), -4.3955830114628114e-08), ((-3, 0), -1.5528985558566077e-07), ((-3, 1), -6.706102809034276e-06), ((-3, 2), -2.7310521072410054e-06), ((-3, 3), -8.09860443123922e-07), ((-2, -1), -2.5072381823476597e-07), ((-2, 0), -8.853685690701774e-07), ((-2, 1), -3.8273459366217066e-05), ((-2, 2), -1.4392604705343315e-05), ((-2, 3), -4.001904738815121e-06), ((-1, 0), -4.6082744494246874e-06), ((-1, 1), -0.0002008011996371406), ((-1, 2), -6.573184445010649e-05), ((-1, 3), -1.6658848572839724e-05), ((0, 1), -0.0008419197535870782), ((0, 2), -0.0002015252680881846), ((0, 3), -4.410773714684513e-05), ((1, 2), -4.625859272439081e-06), ((1, 3), -1.020797966919118e-06), ((2, 3), -2.8968374483906434e-07)];
const ROBIN: [(f64, f64, f64, f64); 15] = [(0.7, 0.05, -1.1, 0.24143229014852097), (0.7, 0.05, -0.2, 0.793355948894782), (0.7, 0.05, 0.0, 0.8087194367731926), (0.7, 0.05, 0.15, 0.5962062163952685), (0.7, 0.05, 0.9, 0.36428937212618134), (0.7, 0.3, -1.1, 0.313257140481499), (0.7, 0.3, -0.2, 0.545504926751592), (0.7, 0.3, 0.0, 0.5502608667929688), (0.7, 0.3, 0.15, 0.4933459850705448), (0.7, 0.3, 0.9, 0.34795239850443205), (3.0, 0.1, -1.1, 0.2704867483246594), (3.0, 0.1, -0.2, 0.6831450380409869), (3.0, 0.1, 0.0, 0.6821343259377606), (3.0, 0.1, 0.15, 0.6117487201236519), (3.0, 0.1, 0.9, 0.36257909076245604)];
const SIMPLE_OCC: [(f64, f64); 4] = [(1.0, 0.5237776118026087), (4.0, 1.1102971005981939), (16.0, 2.247890173701034), (64.0, 4.509102448823888)];
const SLOW_OCC: [(u32, f64, i64, f64, f64); 3] = [(8, 1.0, 0, 1.0, 1.0669816395150133), (8, 0.3, 5, 0.5, 0.3585275574547984), (16, 1.0, -3, 0.25, 0.3722404737117344)];

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

fn check_moments(profile: InitialProfile, l: i64, n: u32, alpha: f64, t: f64, rho: &[f64], phi: &[((i64, i64), f64)]) {
    let p = ModelParams::new(n, alpha, t).unwrap();
    let mean = SolverOptions { dt_factor: 1.0 / 256.0, ..SolverOptions::default() };
    let w = Window1D::new(-l, l).unwrap();
    let path = mean_path(&MeanField::from_profile(&profile, w, n), &p, t, &mean).unwrap();
    for (x, want) in w.sites().zip(rho) {
        let got = path.value(t, x).unwrap();
        assert!(close(got, *want, 1e-10), "rho({x}) = {got}, oracle {want}");
    }
    let opts = CorrelationOptions { mean, dt_factor: 1.0 / 256.0, ..CorrelationOptions::default() };
    let zero = CorrelationField::zeros(WindowV::new(l).unwrap(), 0.0);
    let run = evolve_correlation(&zero, &path, &p, t, &opts).unwrap();
    for ((x, y), want) in phi {
        let got = run.field.value(Point::new(*x, *y)).unwrap();
        assert!(close(got, *want, 1e-10), "phi({x},{y}) = {got}, oracle {want}");
    }
}

#[test]
fn moments_match_master_equation_tanh() {
    check_moments(InitialProfile::standard_tanh(), 2, 4, 0.5, 0.05, &TANH_RHO, &TANH_PHI);
}

#[test]
fn moments_match_master_equation_step() {
    check_moments(InitialProfile::Step { left: 0.5, right: 0.25 }, 3, 3, 0.1, 0.08, &STEP_RHO, &STEP_PHI);
}

struct Jumpy;

impl RealFn for Jumpy {
    fn eval(&self, u: f64) -> f64 {
        if u <= 0.0 {
            (-u * u).exp() * (1.0 + 0.3 * u)
        } else {
            0.6 * (-(u - 0.2) * (u - 0.2)).exp()
        }
    }

    fn right_of_zero(&self) -> f64 {
        0.6 * (-0.04f64).exp()
    }
}

#[test]
fn robin_semigroup_matches_half_line_kernel() {
    for (alpha, t, u, want) in ROBIN {
        let got = RobinSemigroup::new(alpha).unwrap().apply(&Jumpy, t, u).unwrap();
        assert!(close(got, want, 1e-9), "alpha {alpha} t {t} u {u}: {got} vs {want}");
    }
}

#[test]
fn simple_walk_occupation_matches_bessel_integral() {
    for (t, want) in SIMPLE_OCC {
        let got = simple_walk_origin_occupation(t).unwrap();
        assert!(close(got, want, 1e-10), "t {t}: {got} vs {want}");
    }
}

#[test]
fn slow_bond_occupation_matches_eigendecomposition() {
    for (n, alpha, x, t, want) in SLOW_OCC {
        let p = ModelParams::new(n, alpha, t).unwrap();
        let got = slow_bond_occupation(&p, x, t).unwrap();
        assert!(close(got, want, 1e-9), "n {n} alpha {alpha} x {x}: {got} vs {want}");
    }
}
