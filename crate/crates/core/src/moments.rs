//! Deterministic evolution of the one-point mean and two-point correlation.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::lattice::{Generator1D, Generator2D, ModelParams, Point, Site, Window1D, WindowV, VERTEX};
use crate::ode::{check_stable, uniform_steps, Rk4};
use crate::profile::InitialProfile;
use crate::walks::{FiniteChain, WalkKind};

const TIME_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    /// Integrator step is `dt_factor / n^2` (1-D solver).
    pub dt_factor: f64,
    /// Spacing of the stored mean path, macroscopic time.
    pub grid_dt: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { dt_factor: 0.0625, grid_dt: 1e-3 }
    }
}

impl SolverOptions {
    pub fn halved(self) -> Self {
        SolverOptions { dt_factor: self.dt_factor / 2.0, grid_dt: self.grid_dt }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanField {
    pub window: Window1D,
    pub values: Vec<f64>,
    pub time: f64,
}

impl MeanField {
    pub fn from_profile(profile: &InitialProfile, window: Window1D, n: u32) -> Self {
        MeanField { window, values: profile.sample(window, n), time: 0.0 }
    }

    pub fn value(&self, x: Site) -> Option<f64> {
        self.window.index(x).map(|i| self.values[i])
    }

    pub fn total_mass(&self) -> f64 {
        crate::stats::pairwise_sum(&self.values)
    }
}

fn check_horizon(p: &ModelParams, end: f64) -> Result<()> {
    if end > p.horizon() + TIME_SLACK {
        return Err(invalid("t", format!("end time {end} exceeds the horizon T = {}", p.horizon())));
    }
    Ok(())
}

fn mean_step(p: &ModelParams, opts: &SolverOptions) -> Result<f64> {
    let n2 = p.nf() * p.nf();
    let dt = opts.dt_factor / n2;
    check_stable(dt, 4.0 * n2)?;
    Ok(dt)
}

/// Solves `d rho / dt = n^2 A_n rho` for a duration `t` starting at `init.time`.
pub fn evolve_mean(init: &MeanField, p: &ModelParams, t: f64, opts: &SolverOptions) -> Result<MeanField> {
    if t < 0.0 {
        return Err(invalid("t", "must be nonnegative"));
    }
    check_horizon(p, init.time + t)?;
    let dt = mean_step(p, opts)?;
    let gen = Generator1D::new(init.window, p);
    let n2 = p.nf() * p.nf();
    let mut y = init.values.clone();
    let mut rk = Rk4::new(y.len());
    let (steps, h) = uniform_steps(t, dt);
    for s in 0..steps {
        rk.step(init.time + s as f64 * h, h, &mut y, |_, v, out| gen.apply(v, out, n2));
    }
    Ok(MeanField { window: init.window, values: y, time: init.time + t })
}

/// The mean on a time grid, with time derivatives for Hermite interpolation.
#[derive(Debug, Clone)]
pub struct MeanPath {
    window: Window1D,
    n: u32,
    times: Vec<f64>,
    values: Vec<Vec<f64>>,
    rates: Vec<Vec<f64>>,
}

/// Integrates the mean over `[init.time, init.time + t_end]` and stores it on a grid.
pub fn mean_path(init: &MeanField, p: &ModelParams, t_end: f64, opts: &SolverOptions) -> Result<MeanPath> {
    check_horizon(p, init.time + t_end)?;
    if !(opts.grid_dt > 0.0 && opts.grid_dt <= 1e-3 + TIME_SLACK) {
        return Err(invalid("grid_dt", "path spacing must lie in (0, 1e-3]"));
    }
    let dt = mean_step(p, opts)?;
    let gen = Generator1D::new(init.window, p);
    let n2 = p.nf() * p.nf();
    let mut y = init.values.clone();
    let mut rk = Rk4::new(y.len());
    let deriv = |v: &[f64]| {
        let mut d = vec![0.0; v.len()];
        gen.apply(v, &mut d, n2);
        d
    };
    let (intervals, gh) = uniform_steps(t_end, opts.grid_dt);
    let mut times = vec![init.time];
    let mut values = vec![y.clone()];
    let mut rates = vec![deriv(&y)];
    for k in 0..intervals {
        let t0 = init.time + k as f64 * gh;
        let (steps, h) = uniform_steps(gh, dt);
        for s in 0..steps {
            rk.step(t0 + s as f64 * h, h, &mut y, |_, v, out| gen.apply(v, out, n2));
        }
        times.push(init.time + (k + 1) as f64 * gh);
        rates.push(deriv(&y));
        values.push(y.clone());
    }
    Ok(MeanPath { window: init.window, n: p.n(), times, values, rates })
}

impl MeanPath {
    pub fn window(&self) -> Window1D {
        self.window
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn start(&self) -> f64 {
        self.times[0]
    }

    pub fn end(&self) -> f64 {
        *self.times.last().expect("path has at least one time")
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn snapshot(&self, k: usize) -> MeanField {
        MeanField { window: self.window, values: self.values[k].clone(), time: self.times[k] }
    }

    pub fn grid_values(&self, k: usize) -> &[f64] {
        &self.values[k]
    }

    fn locate(&self, t: f64) -> Result<(usize, f64)> {
        if t < self.start() - TIME_SLACK || t > self.end() + TIME_SLACK {
            return Err(Error::MissingSnapshot(t));
        }
        if self.times.len() == 1 {
            return Ok((0, 0.0));
        }
        let k = self.times.partition_point(|&s| s <= t).clamp(1, self.times.len() - 1) - 1;
        let h = self.times[k + 1] - self.times[k];
        Ok((k, ((t - self.times[k]) / h).clamp(0.0, 1.0)))
    }

    /// Interpolated `rho_t(x)` for `x` in `lo ..= hi`, written into `out`.
    pub fn interpolate_into(&self, t: f64, lo: Site, hi: Site, out: &mut [f64]) -> Result<()> {
        let (a, b) = (self.window.index(lo), self.window.index(hi));
        let (Some(a), Some(b)) = (a, b) else {
            return Err(Error::Truncation { site: format!("[{lo}, {hi}]"), lo: self.window.lo(), hi: self.window.hi() });
        };
        let (k, s) = self.locate(t)?;
        if self.times.len() == 1 || s == 0.0 {
            out[..=b - a].copy_from_slice(&self.values[k][a..=b]);
            return Ok(());
        }
        let h = self.times[k + 1] - self.times[k];
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = (s3 - 2.0 * s2 + s) * h;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = (s3 - s2) * h;
        let (y0, y1) = (&self.values[k], &self.values[k + 1]);
        let (d0, d1) = (&self.rates[k], &self.rates[k + 1]);
        for (j, i) in (a..=b).enumerate() {
            out[j] = h00 * y0[i] + h10 * d0[i] + h01 * y1[i] + h11 * d1[i];
        }
        Ok(())
    }

    pub fn value(&self, t: f64, x: Site) -> Result<f64> {
        let mut v = [0.0];
        self.interpolate_into(t, x, x, &mut v)?;
        Ok(v[0])
    }

    pub fn at(&self, t: f64) -> Result<MeanField> {
        let mut values = vec![0.0; self.window.len()];
        self.interpolate_into(t, self.window.lo(), self.window.hi(), &mut values)?;
        Ok(MeanField { window: self.window, values, time: t })
    }
}

/// Largest rescaled gradient over the stored path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradientSup {
    /// `sup_{t, x != 0} n |rho_t(x+1) - rho_t(x)|`.
    pub sup: f64,
    pub time: f64,
    pub site: Site,
    /// `sup_t |rho_t(1) - rho_t(0)|`, reported separately.
    pub slow_bond_jump: f64,
}

impl GradientSup {
    /// `S_n`: the squared supremum.
    pub fn s_n(&self) -> f64 {
        self.sup * self.sup
    }
}

pub fn discrete_gradient_sup(path: &MeanPath) -> GradientSup {
    let n = path.n as f64;
    let w = path.window;
    let origin = w.origin();
    let mut best = GradientSup { sup: 0.0, time: path.start(), site: w.lo(), slow_bond_jump: 0.0 };
    for (k, v) in path.values.iter().enumerate() {
        for i in 0..v.len() - 1 {
            let d = (v[i + 1] - v[i]).abs();
            if i == origin {
                best.slow_bond_jump = best.slow_bond_jump.max(d);
            } else if n * d > best.sup {
                best.sup = n * d;
                best.time = path.times[k];
                best.site = w.site(i);
            }
        }
    }
    best
}

/// `S_{n,0} = sup_t (n (rho_t(1) - rho_t(0)))^2`.
pub fn slow_bond_gradient_sq(path: &MeanPath) -> f64 {
    let g = discrete_gradient_sup(path);
    (path.n as f64 * g.slow_bond_jump).powi(2)
}

/// Source of the correlation equation at `u`, for the mean `rho`.
pub fn correlation_source<R>(rho: R, u: Point, p: &ModelParams) -> f64
where
    R: Fn(Site) -> f64,
{
    if !u.on_diagonal() {
        return 0.0;
    }
    let grad = p.nf() * (rho(u.x + 1) - rho(u.x));
    if u == VERTEX {
        -p.slow_rate() * grad * grad
    } else {
        -grad * grad
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationField {
    pub window: WindowV,
    pub values: Vec<f64>,
    pub time: f64,
}

impl CorrelationField {
    pub fn zeros(window: WindowV, time: f64) -> Self {
        let values = vec![0.0; window.len()];
        CorrelationField { window, values, time }
    }

    pub fn value(&self, u: Point) -> Option<f64> {
        self.window.index(u).map(|i| self.values[i])
    }

    pub fn sup_abs(&self) -> (f64, Point) {
        let (i, v) = self
            .values
            .iter()
            .enumerate()
            .fold((0, 0.0f64), |(bi, bv), (i, v)| if v.abs() > bv { (i, v.abs()) } else { (bi, bv) });
        (v, self.window.point(i))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorrelationOptions {
    pub mean: SolverOptions,
    /// Integrator step is `dt_factor / n^2` (2-D solver).
    pub dt_factor: f64,
    /// Macroscopic half-width of the region of interest for window sizing.
    pub interest: f64,
}

impl Default for CorrelationOptions {
    fn default() -> Self {
        CorrelationOptions { mean: SolverOptions::default(), dt_factor: 0.0625, interest: 1.0 }
    }
}

/// Result of a correlation run: the final field and the running supremum.
#[derive(Debug, Clone)]
pub struct CorrelationRun {
    pub field: CorrelationField,
    pub sup_abs: f64,
    pub sup_time: f64,
    pub sup_point: Point,
    /// Largest positive value seen (zero for nonpositive evolutions).
    pub max_value: f64,
}

/// Solves `d phi / dt = n^2 B_n phi + g_t` for a duration `t`.
pub fn evolve_correlation(
    phi0: &CorrelationField,
    path: &MeanPath,
    p: &ModelParams,
    t: f64,
    opts: &CorrelationOptions,
) -> Result<CorrelationRun> {
    let start = phi0.time;
    check_horizon(p, start + t)?;
    let l = phi0.window.radius();
    let pw = path.window();
    if !(pw.contains(-l) && pw.contains(l)) {
        return Err(Error::Truncation { site: format!("[-{l}, {l}]"), lo: pw.lo(), hi: pw.hi() });
    }
    if path.start() > start + TIME_SLACK || path.end() < start + t - TIME_SLACK {
        return Err(Error::MissingSnapshot(start + t));
    }
    let n2 = p.nf() * p.nf();
    let dt = opts.dt_factor / n2;
    check_stable(dt, 8.0 * n2)?;

    let gen = Generator2D::new(phi0.window.clone(), p);
    let mut rho = vec![0.0; (2 * l + 1) as usize];
    let mut src = vec![0.0; (2 * l) as usize];
    let fill_source = |s: f64, rho: &mut [f64], src: &mut [f64]| {
        path.interpolate_into(s.min(path.end()), -l, l, rho).expect("range checked above");
        for (j, out) in src.iter_mut().enumerate() {
            let x = j as Site - l;
            *out = correlation_source(|z| rho[(z + l) as usize], Point::new(x, x + 1), p);
        }
    };

    let mut y = phi0.values.clone();
    let mut rk = Rk4::new(y.len());
    let (sup0, at0) = phi0.sup_abs();
    let mut run = CorrelationRun {
        field: phi0.clone(),
        sup_abs: sup0,
        sup_time: start,
        sup_point: at0,
        max_value: phi0.values.iter().cloned().fold(0.0, f64::max),
    };
    let (steps, h) = uniform_steps(t, dt);
    for s in 0..steps {
        let t0 = start + s as f64 * h;
        rk.step(t0, h, &mut y, |tt, v, out| {
            fill_source(tt, &mut rho, &mut src);
            gen.apply(v, out, n2, Some(&src));
        });
        let (mut bi, mut bv, mut mx) = (0usize, 0.0f64, f64::NEG_INFINITY);
        for (i, v) in y.iter().enumerate() {
            if v.abs() > bv {
                bv = v.abs();
                bi = i;
            }
            mx = mx.max(*v);
        }
        run.max_value = run.max_value.max(mx);
        if bv > run.sup_abs {
            run.sup_abs = bv;
            run.sup_time = t0 + h;
            run.sup_point = phi0.window.point(bi);
        }
    }
    run.field = CorrelationField { window: phi0.window.clone(), values: y, time: start + t };
    Ok(run)
}

/// One row of the correlation scaling table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub n: u32,
    pub sup_phi: f64,
    pub normalized: f64,
}

/// Mean window wide enough to feed a correlation window of radius `l`.
pub fn mean_window_for(l: Site) -> Result<Window1D> {
    Window1D::symmetric(l + 1)
}

/// Runs mean and correlation solvers from a product initial law for one `n`.
pub fn correlation_sup(
    profile: &InitialProfile,
    p: &ModelParams,
    horizon: f64,
    opts: &CorrelationOptions,
) -> Result<(CorrelationRun, MeanPath)> {
    let wv = WindowV::for_horizon(p.n(), opts.interest, horizon)?;
    let w1 = mean_window_for(wv.radius())?;
    let path = mean_path(&MeanField::from_profile(profile, w1, p.n()), p, horizon, &opts.mean)?;
    let run = evolve_correlation(&CorrelationField::zeros(wv, 0.0), &path, p, horizon, opts)?;
    Ok((run, path))
}

/// `(n, sup |phi|, sup |phi| n / log n)` for each `n`.
pub fn correlation_sup_scaling(
    profile: &InitialProfile,
    alpha: f64,
    horizon: f64,
    ns: &[u32],
    opts: &CorrelationOptions,
) -> Result<Vec<ScalingRow>> {
    ns.iter()
        .map(|&n| {
            let p = ModelParams::new(n, alpha, horizon)?;
            let (run, _) = correlation_sup(profile, &p, horizon, opts)?;
            let nf = n as f64;
            Ok(ScalingRow { n, sup_phi: run.sup_abs, normalized: run.sup_abs * nf / nf.ln() })
        })
        .collect()
}

/// Largest window accepted by [`duhamel_mean_check`].
pub const DUHAMEL_MAX_SITES: usize = 201;

/// Solver value of `rho_t(x)` and its walk representation
/// `sum_y P_x(X_{t n^2} = y) rho_0(y)`.
pub fn duhamel_mean_check(init: &MeanField, p: &ModelParams, t: f64, x: Site, opts: &SolverOptions) -> Result<(f64, f64)> {
    if init.window.len() > DUHAMEL_MAX_SITES {
        return Err(Error::StateSpaceTooLarge { states: init.window.len(), limit: DUHAMEL_MAX_SITES });
    }
    let i = init.window.index(x).ok_or_else(|| invalid("x", "site outside the window"))?;
    let solved = evolve_mean(init, p, t, opts)?.values[i];
    let chain = FiniteChain::line(WalkKind::Slow1d, p, init.window)?;
    let micro = t * p.nf() * p.nf();
    let row = chain.transition_row(chain.state_index(Point::new(x, 0)).expect("x lies in the window"), micro)?;
    let walk = crate::stats::pairwise_sum(&row.iter().zip(&init.values).map(|(a, b)| a * b).collect::<Vec<_>>());
    Ok((solved, walk))
}
