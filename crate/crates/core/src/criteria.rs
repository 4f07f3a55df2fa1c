//! The acceptance experiments. Each takes an [`ExperimentConfig`] (see
//! [`ExperimentConfig::preset`] for the reference parameters) and returns a
//! report with pass/fail, the numbers behind it and plot-ready tables.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, ExperimentKind};
use crate::error::{Error, Result};
use crate::exclusion::{
    boundary_influence, density_field, empirical_correlation, empirical_mean, martingale_and_qv, run, run_ensemble,
    sample_initial, FieldWeights, RunOptions,
};
use crate::fluctuation::{initial_field_clt, ou_conditional_check, qv_convergence, remainder_coefficient};
use crate::io::{num, Table};
use crate::lattice::{ModelParams, Point, Site, Window1D, WindowV};
use crate::moments::{
    correlation_sup, discrete_gradient_sup, mean_path, CorrelationOptions, MeanField, SolverOptions,
};
use crate::profile::RealFn;
use crate::quad::{integrate, Tolerance};
use crate::rng::{derive_seed, run_replicas};
use crate::robin::{
    kernel_reach, ou_variance, ou_variance_without_atom, Evolved, MacroProfile, RobinSemigroup, TestFunction,
};
use crate::stats::{spread, Summary};
use crate::walks::{
    bond_fold_check, folding_sweep, local_time_bounds_2d, quadrant_fold_check, simple_walk_origin_occupation,
    slow_bond_occupation,
};

/// Floor for `sup |phi| n / log n` in the lower-bound experiment. The first
/// recorded run gave 0.003141 at n = 128; the floor sits about 10% below.
pub const LOWER_BOUND_FLOOR: f64 = 0.0028;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionReport {
    pub criterion: u8,
    pub kind: ExperimentKind,
    pub passed: bool,
    pub summary: String,
    pub metrics: BTreeMap<String, f64>,
    pub tolerances: BTreeMap<String, f64>,
    pub elapsed_secs: f64,
    #[serde(skip)]
    pub tables: Vec<Table>,
}

impl CriterionReport {
    fn new(cfg: &ExperimentConfig) -> Self {
        CriterionReport {
            criterion: cfg.kind.criterion(),
            kind: cfg.kind,
            passed: true,
            summary: String::new(),
            metrics: BTreeMap::new(),
            tolerances: cfg.tolerances.clone(),
            elapsed_secs: 0.0,
            tables: Vec::new(),
        }
    }

    fn metric(&mut self, key: &str, v: f64) {
        self.metrics.insert(key.to_owned(), v);
    }

    /// Records a named check; the report passes only if all checks do.
    fn check(&mut self, ok: bool, what: String) {
        if !self.summary.is_empty() {
            self.summary.push_str("; ");
        }
        self.summary.push_str(if ok { "ok " } else { "FAIL " });
        self.summary.push_str(&what);
        self.passed &= ok;
    }

    /// `PASS`/`FAIL` line for terminals.
    pub fn line(&self) -> String {
        format!(
            "{} criterion {:>2} [{}] ({:.1}s): {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.criterion,
            self.kind.name(),
            self.elapsed_secs,
            self.summary
        )
    }
}

/// Runs the experiment named by `cfg.kind`.
pub fn run_criterion(cfg: &ExperimentConfig) -> Result<CriterionReport> {
    cfg.validate()?;
    let start = Instant::now();
    let mut r = match cfg.kind {
        ExperimentKind::MeanScaling => mean_scaling(cfg),
        ExperimentKind::CorrelationScaling => correlation_scaling(cfg),
        ExperimentKind::LowerBound => lower_bound(cfg),
        ExperimentKind::LocalTimes => local_times(cfg),
        ExperimentKind::Folding => folding(cfg),
        ExperimentKind::Lumping => lumping(cfg),
        ExperimentKind::Occupation => occupation(cfg),
        ExperimentKind::Clt => clt(cfg),
        ExperimentKind::Qv => qv(cfg),
        ExperimentKind::Fluctuations => fluctuations(cfg),
        ExperimentKind::Semigroup => semigroup(cfg),
        ExperimentKind::Remainder => remainder(cfg),
        ExperimentKind::Consistency => consistency(cfg),
    }?;
    r.elapsed_secs = start.elapsed().as_secs_f64();
    Ok(r)
}

fn params(cfg: &ExperimentConfig, n: u32) -> Result<ModelParams> {
    ModelParams::new(n, cfg.alpha, cfg.horizon)
}

fn solver(cfg: &ExperimentConfig) -> SolverOptions {
    SolverOptions { dt_factor: cfg.dt_factor, ..SolverOptions::default() }
}

fn corr_options(cfg: &ExperimentConfig) -> CorrelationOptions {
    CorrelationOptions { mean: solver(cfg), dt_factor: cfg.dt_factor, interest: cfg.interest }
}

fn test_functions(cfg: &ExperimentConfig, at_least: usize) -> Result<Vec<TestFunction>> {
    if cfg.test_functions.len() < at_least {
        return Err(Error::Validation {
            field: "test_functions".into(),
            reason: format!("this experiment needs at least {at_least}"),
        });
    }
    cfg.test_functions.iter().map(|s| s.build(cfg.alpha)).collect()
}

fn mean_scaling(cfg: &ExperimentConfig) -> Result<CriterionReport> {
    let mut r = CriterionReport::new(cfg);
    let mut t = Table::new("gradient_sup", &["n", "sup_gradient", "time", "site", "slow_bond_jump"]);
    let mut sups = Vec::new();
    for &n in &cfg.n_sweep {
        let p = params(cfg, n)?;
        let w = Window1D::for_horizon(n, cfg.interest, cfg.horizon)?;
        let path = mean_path(&MeanField::from_profile(&cfg.profile, w, n), &p, cfg.horizon, &solver(cfg))?;
        let g = discrete_gradient_sup(&path);
        t.push([n.to_string(), num(g.sup), num(g.time), g.site.to_string(), num(g.slow_bond_jump)]);
        r.metric(&format!("sup_n{n}"), g.sup);
        sups.push(g.sup);
    }
    let s = spread(&sups);
    r.metric("spread", s);
    r.check(s <= cfg.tolerance("spread")?, format!("gradient sup spread {s:.3}"));
    r.tables.push(t);
    Ok(r)
}

fn correlation_scaling(cfg: &ExperimentConfig) -> Result<CriterionReport> {
    let mut r = CriterionReport::new(cfg);
    let mut t = Table::new("correlation_sup", &["n", "sup_abs_phi", "normalized", "time", "x", "y", "max_value"]);
    let mut normalized = Vec::new();
    for &n in &cfg.n_sweep {
        let p = params(cfg, n)?;
        let (run, _) = correlation_sup(&cfg.profile, &p, cfg.horizon, &corr_options(cfg))?;
        let nf = f64::from(n);
        let v = run.sup_abs * nf / nf.ln();
        t.push([
            n.to_string(),
            num(run.sup_abs),
            num(v),
            num(run.sup_time),
            run.sup_point.x.to_string(),
            run.sup_point.y.to_string(),
            num(run.max_value),
        ]);
        r.metric(&format!("normalized_n{n}"), v);
        normalized.push(v);
    }
    let s = spread(&normalized);
    r.metric("spread", s);
    r.check(s <= cfg.tolerance("spread")?, format!("sup|phi| n/log n spread {s:.3}"));
    r.tables.push(t);
    Ok(r)
}

fn lower_bound(cfg: &ExperimentConfig) -> Result<CriterionReport> {
    let mut r = CriterionReport::new(cfg);
    let (t0, t1) = match cfg.times.as_slice() {
        [a, b] if a <= b => (*a, *b),
        _ => return Err(Error::Validation { field: "times".into(), reason: "expects [t_start, t_end]".into() }),
    };
    let gap_floor = cfg.tolerance("gap")?;
    let floor = cfg.tolerance("floor")?;
    let mut table = Table::new("slow_bond_gap", &["n", "t", "rho0_minus_rho1"]);
    let mut summary = Table::new("lower_bound", &["n", "min_gap", "sup_abs_phi", "normalized", "max_phi"]);
    for &n in &cfg.n_sweep {
        let p = params(cfg, n)?;
        let (run, path) = correlation_sup(&cfg.profile, &p, t1, &corr_options(cfg))?;
        let w = path.window();
        let (i0, i1) = (w.index(0).expect("origin"), w.index(1).expect("origin"));
        let mut min_gap = f64::INFINITY;
        for (k, &t) in path.times().iter().enumerate() {
            if t < t0 - 1e-12 || t > t1 + 1e-12 {
                continue;
            }
            let v = path.grid_values(k);
            let gap = v[i0] - v[i1];
            min_gap = min_gap.min(gap);
            table.push([n.to_string(), num(t), num(gap)]);
        }
        let nf = f64::from(n);
        let normalized = run.sup_abs * nf / nf.ln();
        summary.push([n.to_string(), num(min_gap), num(run.sup_abs), num(normalized), num(run.max_value)]);
        r.metric(&format!("min_gap_n{n}"), min_gap);
        r.metric(&format!("normalized_n{n}"), normalized);
        r.check(min_gap >= gap_floor, format!("n={n}: min slow-bond gap {min_gap:.4} on [{t0}, {t1}]"));
        r.check(normalized >= floor, format!("n={n}: sup|phi| n/log n = {normalized:.4} (floor {floor})"));
    }
    r.tables.push(table);
    r.tables.push(summary);
    Ok(r)
}

fn local_times(cfg: &ExperimentConfig) -> Result<CriterionReport> {
    let mut r = CriterionReport::new(cfg);
    let t = cfg.horizon;
    let mut table = Table::new(
        "local_times",
        &["n", "t", "set", "estimate", "ci3_half_width", "normalization", "normalized"],
    );
    let (mut diag, mut vert) = (Vec::new(), Vec::new());
    for &n in &cfg.n_sweep {
        let p = params(cfg, n)?;
        let est = local_time_bounds_2d(&p, t, &[Point::new(0, 1)], cfg.replicas, derive_seed(cfg.seed, &format!("n{n}")))?;
        let e = est[0];
        for (name, row) in [("diagonal_without_vertex", e.diagonal), ("vertex", e.vertex)] {
            let norm = row.estimate / row.normalized;
            table.push([
                n.to_string(),
                num(t),
                name.to_owned(),
                num(row.estimate),
                num(row.ci_half_width),
                num(norm),
                num(row.normalized),
            ]);
        }
        let scale = |row: crate::walks::LocalTimeRow| {
            let norm = row.estimate / row.normalized;
            (row.normalized, (row.estimate - row.ci_half_width) / norm, (row.estimate + row.ci_half_width) / norm)
        };
        diag.push(scale(e.diagonal));
        vert.push(scale(e.vertex));
    }
    let tol = cfg.tolerance("spread")?;
    for (name, rows) in [("diagonal", &diag), ("vertex", &vert)] {
        let point = spread(&rows.iter().map(|x| x.0).collect::<Vec<_>>());
        let hi = rows.iter().map(|x| x.2).fold(f64::NEG_INFINITY, f64::max);
        let lo = rows.iter().map(|x| x.1).fold(f64::INFINITY, f64::min);
        let conservative = if lo > 0.0 { hi / lo } else { f64::INFINITY };
        r.metric(&format!("{name}_spread"), point);
        r.metric(&format!("{name}_spread_ci"), conservative);
        r.check(conservative <= tol, format!("{name} spread {point:.3} (with 3-sigma CIs {conservative:.3})"));
    }
    r.tables.push(table);
    Ok(r)
}

fn folding(cfg: &ExperimentConfig) -> Result<CriterionReport> {
    let mut r = CriterionReport::new(cfg);
    let reach = cfg.tolerance("reach")? as Site;
    let points: Vec<Site> = (-reach..=reach).collect();
    let mut table = Table::new("folding", &["alpha", "t", "x", "y", "lhs", "rhs", "discrepancy"]);
    let mut worst: f64 = 0.0;
    for &alpha in &cfg.alphas {
        let p = ModelParams::new(cfg.n_sweep[0], alpha, cfg.horizon)?;
        for c in folding_sweep(&p, &points, &cfg.times)? {
            worst = worst.max(c.diff);
            table.push([num(alpha), num(c.t), c.x.to_string(), c.y.to_string(), num(c.lhs), num(c.rhs), num(c.diff)]);
        }
    }
    r.metric("max_discrepancy", worst);
    let tol = cfg.tolerance("discrepancy")?;
    r.check(worst < tol, format!("max |lhs - rhs| = {worst:.2e} over {} rows", table.rows.len()));
    r.tables.push(table);
    Ok(r)
}

fn lumping(cfg: &ExperimentConfig) -> Result<CriterionReport> {
    let mut r = CriterionReport::new(cfg);
    let mut table = Table::new("lumping", &["fold", "alpha", "t", "start_x", "start_y", "classes", "discrepancy"]);
    let mut worst: f64 = 0.0;
    for &alpha in &cfg.alphas {
        let p = ModelParams::new(cfg.n_sweep[0], alpha, cfg.horizon)?;
        for &t in &cfg.times {
            for start in [-4, 0, 1, 7] {
                let b = bond_fold_check(&p, 40, start, t)?;
                worst = worst.max(b.discrepancy);
                table.push([
                    "bond".to_owned(),
                    num(alpha),
                    num(t),
                    start.to_string(),
                    "0".into(),
                    b.classes.to_string(),
                    num(b.discrepancy),
                ]);
            }
            for start in [Point::new(0, 0), Point::new(-3, 2), Point::new(4, -1)] {
                let q = quadrant_fold_check(&p, 14, start, t)?;
                worst = worst.max(q.discrepancy);
                table.push([
                    "quadrant".to_owned(),
                    num(alpha),
                    num(t),
                    start.x.to_string(),
                    start.y.to_string(),
                    q.classes.to_string(),
                    num(q.discrepancy),
                ]);
            }
        }
    }
    r.metric("max_discrepancy", worst);
    let tol = cfg.tolerance("discrepancy")?;
    r.check(worst < tol, format!("max coarse/fine discrepancy {worst:.2e}"));
    r.tables.push(table);
    Ok(r)
}

fn occupation(cfg: &ExperimentConfig) -> Result<CriterionReport> {
    let mut r = CriterionReport::new(cfg);
    let mut walk = Table::new("walk_occupation", &["t", "integral", "over_sqrt_t"]);
    let mut ratios = Vec::new();
    for &t in &cfg.times {
        let v = simple_walk_origin_occupation(t)?;
        ratios.push(v / t.sqrt());
        walk.push([num(t), num(v), num(v / t.sqrt())]);
    }
    let mut bond = Table::new("slow_bond_occupation", &["n", "t", "x", "n_times_integral"]);
    let mut vals = Vec::new();
    for &n in &cfg.n_sweep {
        let p = params(cfg, n)?;
        let v = slow_bond_occupation(&p, 0, cfg.horizon)?;
        vals.push(v);
        bond.push([n.to_string(), num(cfg.horizon), "0".into(), num(v)]);
    }
    let (s1, s2) = (spread(&ratios), spread(&vals));
    r.metric("walk_spread", s1);
    r.metric("bond_spread", s2);
    r.check(s1 <= cfg.tolerance("walk_spread")?, format!("integral/sqrt(t) spread {s1:.3}"));
    r.check(s2 <= cfg.tolerance("bond_spread")?, format!("slow-bond occupation spread {s2:.3}"));
    r.tables.push(walk);
    r.tables.push(bond);
    Ok(r)
}

/// Symmetric window covering the functions' support plus diffusive spread.
fn field_window(n: u32, fs: &[TestFunction], horizon: f64) -> Result<Window1D> {
    let reach = fs.iter().map(|f| f.support_radius(1e-13)).fold(0.0, f64::max);
    Window1D::symmetric((f64::from(n) * (reach + 6.0 * (2.0 * horizon).sqrt() + 1.0)).ceil() as Site)
}

fn clt(cfg: &ExperimentConfig) -> Result<CriterionReport> {
    let mut r = CriterionReport::new(cfg);
    let fs = test_functions(cfg, 1)?;
    let n = cfg.n_sweep[0];
    let w = field_window(n, &fs, 0.0)?;
    let refs: Vec<&dyn RealFn> = fs.iter().map(|f| f as &dyn RealFn).collect();
    let level = cfg.tolerance("level")?;
    let rep = initial_field_clt(&cfg.profile, n, w, &refs, cfg.replicas, cfg.seed, level)?;
    let mut table = Table::new(
        "initial_field",
        &["function", "mean", "variance", "variance_se", "predicted", "predicted_discrete", "ad_statistic", "ad_critical"],
    );
    let tol = cfg.tolerance("variance")?;
    for (i, row) in rep.rows.iter().enumerate() {
        table.push([
            i.to_string(),
            num(row.mean),
            num(row.variance),
            num(row.variance_se),
            num(row.predicted),
            num(row.predicted_discrete),
            num(row.normality.statistic),
            num(row.normality.critical),
        ]);
        let gap = row.relative_gap();
        r.metric(&format!("variance_gap_f{i}"), gap);
        r.check(gap <= tol, format!("f{i}: variance {:.5} vs {:.5} ({:.2}%)", row.variance, row.predicted, 100.0 * gap));
        r.check(
            !row.normality.rejected,
            format!("f{i}: normality A2 {:.3} < {:.3}", row.normality.statistic, row.normality.critical),
        );
    }
    let mut samples = Table::new("initial_field_samples", &["replica", "function", "value"]);
    for s in rep.samples.iter().take(2000) {
        for (i, v) in s.values.iter().enumerate() {
            samples.push([s.replica.to_string(), i.to_string(), num(*v)]);
        }
    }
    r.tables.push(table);
    r.tables.push(samples);
    Ok(r)
}

fn qv(cfg: &ExperimentConfig) -> Result<CriterionReport> {
    let mut r = CriterionReport::new(cfg);
    let fs = test_functions(cfg, 1)?;
    let f = &fs[0];
    let n = cfg.n_sweep[0];
    let p = params(cfg, n)?;
    let t = cfg.horizon;
    let w = field_window(n, &fs, t)?;
    let out = run_replicas(cfg.replicas, cfg.seed, |_, rng| {
        let c = sample_initial(&cfg.profile, w, n, rng);
        martingale_and_qv(c, f, &p, t, &[t], rng, RunOptions::default()).map(|(_, path)| path[0])
    });
    let pts = out.into_iter().collect::<Result<Vec<_>>>()?;
    let m: Vec<f64> = pts.iter().map(|x| x.martingale).collect();
    let q: Vec<f64> = pts.iter().map(|x| x.qv).collect();
    let sm = Summary::of(&m);
    let sq = Summary::of(&q);
    let macro_ = MacroProfile::new(cfg.profile.clone(), cfg.alpha)?;
    let rep = qv_convergence(&q, f, &macro_, t)?;
    let sig = cfg.tolerance("sigmas")?;
    r.metric("mean_martingale", sm.mean);
    r.metric("mean_martingale_se", sm.se());
    r.metric("mean_qv", sq.mean);
    r.metric("predicted_qv", rep.predicted);
    r.metric("var_martingale", sm.var);
    r.check(sm.mean.abs() <= sig * sm.se(), format!("E M = {:.4} (se {:.4})", sm.mean, sm.se()));
    let gap = rep.relative_gap();
    r.check(gap <= cfg.tolerance("qv")?, format!("mean QV {:.5} vs limit {:.5} ({:.2}%)", sq.mean, rep.predicted, 100.0 * gap));
    let se = (sm.var_se().powi(2) + sq.se().powi(2)).sqrt();
    r.check(
        (sm.var - sq.mean).abs() <= sig * se,
        format!("Var M {:.5} vs mean QV {:.5} (se {:.5})", sm.var, sq.mean, se),
    );
    let mut table = Table::new("martingale", &["replica", "martingale", "qv"]);
    for (i, x) in pts.iter().enumerate() {
        table.push([i.to_string(), num(x.martingale), num(x.qv)]);
    }
    r.tables.push(table);
    Ok(r)
}

fn fluctuations(cfg: &ExperimentConfig) -> Result<CriterionReport> {
    let mut r = CriterionReport::new(cfg);
    let fs = test_functions(cfg, 1)?;
    let f = &fs[0];
    let (s, t) = match cfg.times.as_slice() {
        [a, b] if a <= b && *b <= cfg.horizon => (*a, *b),
        _ => return Err(Error::Validation { field: "times".into(), reason: "expects [s, t] with s <= t <= horizon".into() }),
    };
    let n = cfg.n_sweep[0];
    let p = params(cfg, n)?;
    let w = field_window(n, &fs, t)?;
    let macro_ = MacroProfile::new(cfg.profile.clone(), cfg.alpha)?;
    let sg = RobinSemigroup::new(cfg.alpha)?;
    let evolved = Evolved { semigroup: sg, g: f, tau: t - s };
    let wf = FieldWeights::new(f, w, n)?;
    let wg = FieldWeights::new(&evolved, w, n)?;
    let solver_opts = solver(cfg);
    let rho_at = |time: f64| -> Result<Vec<f64>> {
        if cfg.profile.is_constant() {
            return Ok(cfg.profile.sample(w, n));
        }
        let path = mean_path(&MeanField::from_profile(&cfg.profile, w, n), &p, time, &solver_opts)?;
        Ok(path.at(time)?.values)
    };
    let (rho_s, rho_t) = (rho_at(s)?, rho_at(t)?);
    let out = run_replicas(cfg.replicas, cfg.seed, |_, rng| {
        let c = sample_initial(&cfg.profile, w, n, rng);
        run(c, &p, t, &[s, t], rng, RunOptions::default()).map(|tr| {
            let ys = density_field(&tr.snapshots[0].1, &wg, &rho_s);
            let yt = density_field(&tr.snapshots[1].1, &wf, &rho_t);
            (ys, yt)
        })
    });
    let pairs = out.into_iter().collect::<Result<Vec<_>>>()?;
    let ys: Vec<f64> = pairs.iter().map(|x| x.0).collect();
    let yt: Vec<f64> = pairs.iter().map(|x| x.1).collect();
    let predicted = ou_variance(f, s, t, &macro_)?;
    let ablated = ou_variance_without_atom(f, s, t, &macro_)?;
    let level = cfg.tolerance("level")?;
    let rep = ou_conditional_check(&ys, &yt, predicted, level)?;
    let sig = cfg.tolerance("sigmas")?;
    r.metric("slope", rep.slope);
    r.metric("slope_se", rep.slope_se);
    r.metric("residual_var", rep.residual_var);
    r.metric("ou_variance", predicted);
    r.metric("ou_variance_without_atom", ablated);
    if let Some(nt) = rep.normality {
        r.metric("residual_ad_statistic", nt.statistic);
        r.metric("residual_ad_critical", nt.critical);
    }
    r.check(rep.slope_ok(sig), format!("slope {:.4} +- {:.4}", rep.slope, rep.slope_se));
    let gap = rep.variance_gap();
    r.check(
        gap <= cfg.tolerance("variance")?,
        format!("residual var {:.5} vs {:.5} ({:.2}%)", rep.residual_var, predicted, 100.0 * gap),
    );
    let mut table = Table::new("conditional_law", &["replica", "y_s_evolved", "y_t"]);
    for (i, (a, b)) in pairs.iter().enumerate() {
        table.push([i.to_string(), num(*a), num(*b)]);
    }
    r.tables.push(table);
    Ok(r)
}

fn semigroup(cfg: &ExperimentConfig) -> Result<CriterionReport> {
    let mut r = CriterionReport::new(cfg);
    let tol = cfg.tolerance("error")?;
    let fs = test_functions(cfg, 1)?;
    let f = &fs[0];
    let sg = RobinSemigroup::new(cfg.alpha)?;
    let probes = [-2.0, -0.7, -0.1, 0.0, 0.1, 0.5, 1.3, 3.0];
    let gauss = |u: f64| (-u * u).exp();
    let mut table = Table::new("semigroup", &["check", "t", "u", "value", "reference", "error"]);
    let mut worst = BTreeMap::from([("closed_form", 0.0f64), ("composition", 0.0), ("robin", 0.0), ("mass", 0.0)]);
    for &t in &cfg.times {
        for &u in &probes {
            let v = sg.apply(&gauss, t, u)?;
            let exact = (-u * u / (1.0 + 4.0 * t)).exp() / (1.0 + 4.0 * t).sqrt();
            let e = (v - exact).abs();
            *worst.get_mut("closed_form").expect("key") = worst["closed_form"].max(e);
            table.push(["closed_form".into(), num(t), num(u), num(v), num(exact), num(e)]);
        }
        let c = sg.semigroup_property_check(f, 0.5 * t, 0.5 * t, &probes)?;
        *worst.get_mut("composition").expect("key") = worst["composition"].max(c);
        table.push(["composition".into(), num(t), String::new(), String::new(), String::new(), num(c)]);
        let b = sg.robin_residual(f, t)?;
        *worst.get_mut("robin").expect("key") = worst["robin"].max(b);
        table.push(["robin_residual".into(), num(t), "0".into(), String::new(), String::new(), num(b)]);
        let radius = f.support_radius(1e-14) + kernel_reach(t);
        let before = integrate(|u| f.value(u), -radius, radius, &[0.0], Tolerance::default())?;
        let after = sg.mass(f, t, radius)?;
        let m = (after - before).abs();
        *worst.get_mut("mass").expect("key") = worst["mass"].max(m);
        table.push(["mass".into(), num(t), String::new(), num(after), num(before), num(m)]);
    }
    for (k, v) in &worst {
        r.metric(&format!("max_{k}_error"), *v);
        r.check(*v < tol, format!("{k} {v:.2e}"));
    }
    r.tables.push(table);
    Ok(r)
}

fn remainder(cfg: &ExperimentConfig) -> Result<CriterionReport> {
    let mut r = CriterionReport::new(cfg);
    let fs = test_functions(cfg, 1)?;
    let mut table = Table::new("remainder", &["function", "n", "coefficient", "bond0", "bond1", "bulk", "times_sqrt_n"]);
    let tol = cfg.tolerance("spread")?;
    for (i, f) in fs.iter().enumerate() {
        let mut scaled = Vec::new();
        for &n in &cfg.n_sweep {
            let rep = remainder_coefficient(f, &params(cfg, n)?);
            let v = rep.coefficient * f64::from(n).sqrt();
            scaled.push(v);
            table.push([i.to_string(), n.to_string(), num(rep.coefficient), num(rep.bond0), num(rep.bond1), num(rep.bulk), num(v)]);
        }
        let s = spread(&scaled);
        r.metric(&format!("spread_f{i}"), s);
        r.check(s <= tol, format!("f{i}: coefficient sqrt(n) spread {s:.3}"));
    }
    r.tables.push(table);
    Ok(r)
}

/// Probe sites and pairs for the cross-module comparison.
pub fn consistency_probes() -> (Vec<Site>, Vec<(Site, Site)>) {
    let sites = (0..20).map(|k| -38 + 4 * k).collect();
    let pairs = vec![
        (0, 1),
        (-1, 0),
        (1, 2),
        (-2, -1),
        (-1, 1),
        (0, 2),
        (-2, 1),
        (0, 3),
        (-3, 0),
        (1, 3),
        (-1, 2),
        (-3, -1),
        (2, 4),
        (-4, 4),
        (-6, -5),
        (5, 6),
        (-2, 5),
        (-10, -8),
        (8, 10),
        (-12, 12),
    ];
    (sites, pairs)
}

fn consistency(cfg: &ExperimentConfig) -> Result<CriterionReport> {
    let mut r = CriterionReport::new(cfg);
    let n = cfg.n_sweep[0];
    let t = cfg.horizon;
    let p = params(cfg, n)?;
    let opts = corr_options(cfg);
    let (run, path) = correlation_sup(&cfg.profile, &p, t, &opts)?;
    let w = path.window();
    let (sites, pairs) = consistency_probes();
    let ens = run_ensemble(&cfg.profile, &p, w, &[t], cfg.replicas, cfg.seed)?;
    let means = empirical_mean(&ens, t, &sites, &path)?;
    let wv: &WindowV = &run.field.window;
    let phi = |x: Site, y: Site| {
        run.field.value(Point::new(x, y)).ok_or(Error::Truncation { site: format!("({x},{y})"), lo: -wv.radius(), hi: wv.radius() })
    };
    let corrs = empirical_correlation(&ens, t, &pairs, &path, phi)?;
    let sig = cfg.tolerance("sigmas")?;
    let mut table = Table::new("consistency", &["quantity", "x", "y", "estimate", "se", "predicted", "z"]);
    let mut worst_z: f64 = 0.0;
    for (name, set) in [("mean", &means), ("correlation", &corrs)] {
        for e in set.iter() {
            worst_z = worst_z.max(e.z());
            table.push([name.into(), e.x.to_string(), e.y.to_string(), num(e.estimate), num(e.se), num(e.predicted), num(e.z())]);
        }
        let bad = set.iter().filter(|e| !e.within(sig)).count();
        r.metric(&format!("{name}_outside"), bad as f64);
        r.check(bad == 0, format!("{name}: {bad} of {} probes outside {sig} sigma", set.len()));
    }
    r.metric("max_z", worst_z);
    // Effect of the closed window, measured with the mean solver.
    let influence = boundary_influence(&cfg.profile, &p, w, t, &sites, &opts.mean)?;
    let min_ci = means.iter().map(|e| e.ci3()).fold(f64::INFINITY, f64::min);
    let frac = influence / min_ci;
    r.metric("boundary_influence_over_ci", frac);
    r.check(frac < cfg.tolerance("boundary")?, format!("boundary influence {:.1e} of a CI half-width", frac));
    r.tables.push(table);
    Ok(r)
}
