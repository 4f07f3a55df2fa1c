//! Browser bindings: mean profile, Robin semigroup and a particle snapshot.
//! The plain functions return `Result<_, String>`; the exported wrappers turn
//! errors into JS exceptions.

use slowbond::exclusion::{run, sample_initial_seeded, RunOptions};
use slowbond::lattice::{ModelParams, Window1D};
use slowbond::moments::{evolve_mean, MeanField, SolverOptions};
use slowbond::robin::{RobinSemigroup, ShapeParams, TestFunctionSpec};
use slowbond::rng::replica_rng;
use slowbond::InitialProfile;
use wasm_bindgen::prelude::*;

fn profile(kind: &str) -> Result<InitialProfile, String> {
    match kind {
        "tanh" => Ok(InitialProfile::standard_tanh()),
        "step" => Ok(InitialProfile::Step { left: 0.75, right: 0.25 }),
        "flat" => Ok(InitialProfile::Constant { value: 0.5 }),
        _ => Err(format!("unknown profile `{kind}`")),
    }
}

/// Mean density at time `t` on `[-3n, 3n]`, as pairs `(x / n, rho)` flattened.
pub fn mean_profile_values(kind: &str, n: u32, alpha: f64, t: f64) -> Result<Vec<f64>, String> {
    let p = ModelParams::new(n, alpha, t).map_err(|e| e.to_string())?;
    let w = Window1D::symmetric(3 * n as i64 + (6.0 * (2.0 * t).sqrt() * n as f64) as i64).map_err(|e| e.to_string())?;
    let init = MeanField::from_profile(&profile(kind)?, w, n);
    let rho = evolve_mean(&init, &p, t, &SolverOptions::default()).map_err(|e| e.to_string())?;
    let shown = 3 * n as i64;
    Ok(w.sites()
        .zip(rho.values)
        .filter(|(x, _)| x.abs() <= shown)
        .flat_map(|(x, r)| [x as f64 / n as f64, r])
        .collect())
}

/// `T_t f` on `points` evenly spaced in `[-3, 3]`, for a test function with
/// the given jump at the origin. Flattened `(u, f(u), T_t f(u))`.
pub fn semigroup_values(alpha: f64, jump: f64, t: f64, points: usize) -> Result<Vec<f64>, String> {
    let f = TestFunctionSpec { jump, shape: ShapeParams::default(), order: 1 }.build(alpha).map_err(|e| e.to_string())?;
    let sg = RobinSemigroup::new(alpha).map_err(|e| e.to_string())?;
    let m = points.max(2);
    (0..m)
        .map(|i| -3.0 + 6.0 * i as f64 / (m - 1) as f64)
        .map(|u| {
            let v = if t > 0.0 { sg.apply(&f, t, u).map_err(|e| e.to_string())? } else { f.value(u) };
            Ok([u, f.value(u), v])
        })
        .collect::<Result<Vec<_>, String>>()
        .map(|v| v.concat())
}

/// Occupation of `[-2n, 2n)` at times `0, t/rows, ..., t`, one row per time.
pub fn snapshot_rows(kind: &str, n: u32, alpha: f64, t: f64, rows: usize, seed: u64) -> Result<Vec<u8>, String> {
    let p = ModelParams::new(n, alpha, t).map_err(|e| e.to_string())?;
    let w = Window1D::new(-2 * n as i64, 2 * n as i64 - 1).map_err(|e| e.to_string())?;
    let c = sample_initial_seeded(&profile(kind)?, w, n, seed);
    let times: Vec<f64> = (1..=rows).map(|k| t * k as f64 / rows as f64).collect();
    let mut rng = replica_rng(seed, 1);
    let tr = run(c, &p, t, &times, &mut rng, RunOptions::default()).map_err(|e| e.to_string())?;
    let mut out: Vec<u8> = tr.initial.occupancy().map(u8::from).collect();
    for (_, s) in &tr.snapshots {
        out.extend(s.occupancy().map(u8::from));
    }
    Ok(out)
}

#[wasm_bindgen]
pub fn mean_profile(kind: &str, n: u32, alpha: f64, t: f64) -> Result<Vec<f64>, JsValue> {
    mean_profile_values(kind, n, alpha, t).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn robin_semigroup(alpha: f64, jump: f64, t: f64, points: usize) -> Result<Vec<f64>, JsValue> {
    semigroup_values(alpha, jump, t, points).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn ssep_snapshots(kind: &str, n: u32, alpha: f64, t: f64, rows: usize, seed: u64) -> Result<Vec<u8>, JsValue> {
    snapshot_rows(kind, n, alpha, t, rows, seed).map_err(|e| JsValue::from_str(&e))
}
