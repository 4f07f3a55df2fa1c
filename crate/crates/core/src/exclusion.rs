//! Kinetic Monte Carlo for the accelerated slow-bond exclusion process on a
//! closed window, with ensemble estimators and martingale bookkeeping.
//!
//! Only effective swaps are simulated: a bond whose endpoints agree cannot
//! change the state, so the event rate is `n^2` times the number of
//! discrepant normal bonds plus `n alpha` if the slow bond is discrepant.

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::lattice::{Generator1D, ModelParams, Site, Window1D};
use crate::moments::MeanPath;
use crate::profile::{InitialProfile, RealFn};
use crate::rng::{replica_rng, ReplicaRng};
use crate::stats::{pairwise_sum, Compensated, Summary};

const TIME_SLACK: f64 = 1e-12;

/// Bit-packed occupation numbers on a window.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Configuration {
    window: Window1D,
    bits: Vec<u64>,
}

impl Configuration {
    pub fn empty(window: Window1D) -> Self {
        Configuration { window, bits: vec![0; window.len().div_ceil(64)] }
    }

    pub fn from_fn<F: FnMut(Site) -> bool>(window: Window1D, mut occupied: F) -> Self {
        let mut c = Configuration::empty(window);
        for (i, x) in window.sites().enumerate() {
            if occupied(x) {
                c.bits[i / 64] |= 1 << (i % 64);
            }
        }
        c
    }

    pub fn window(&self) -> Window1D {
        self.window
    }

    #[inline]
    fn bit(&self, i: usize) -> bool {
        self.bits[i / 64] >> (i % 64) & 1 == 1
    }

    #[inline]
    fn flip(&mut self, i: usize) {
        self.bits[i / 64] ^= 1 << (i % 64);
    }

    /// `eta(x)`; sites outside the window read as empty.
    pub fn get(&self, x: Site) -> bool {
        self.window.index(x).is_some_and(|i| self.bit(i))
    }

    pub fn occupancy(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.window.len()).map(|i| self.bit(i))
    }

    pub fn particles(&self) -> u64 {
        self.bits.iter().map(|w| u64::from(w.count_ones())).sum()
    }

    /// Particles on `lo ..= hi`.
    pub fn count_in(&self, lo: Site, hi: Site) -> u64 {
        (lo.max(self.window.lo())..=hi.min(self.window.hi())).filter(|&x| self.get(x)).count() as u64
    }

    /// Raw little-endian words, one bit per site starting at the window's left end.
    pub fn words(&self) -> &[u64] {
        &self.bits
    }
}

/// Independent Bernoulli(`rho_0(x/n)`) occupations.
pub fn sample_initial<R: Rng + ?Sized>(profile: &InitialProfile, window: Window1D, n: u32, rng: &mut R) -> Configuration {
    let rho = profile.sample(window, n);
    let mut i = 0;
    Configuration::from_fn(window, |_| {
        let r = rho[i];
        i += 1;
        rng.random::<f64>() < r
    })
}

/// [`sample_initial`] driven by replica 0 of `seed`.
pub fn sample_initial_seeded(profile: &InitialProfile, window: Window1D, n: u32, seed: u64) -> Configuration {
    sample_initial(profile, window, n, &mut replica_rng(seed, 0))
}

/// Receives the piecewise-constant structure of a trajectory.
pub trait Observer {
    /// The state is frozen on `[t0, t1]`.
    fn hold(&mut self, t0: f64, t1: f64, config: &Configuration);
    /// A particle crossed bond `(bond, bond + 1)`; `config` is the new state.
    fn swap(&mut self, bond: Site, moved_right: bool, config: &Configuration);
}

impl Observer for () {
    fn hold(&mut self, _: f64, _: f64, _: &Configuration) {}
    fn swap(&mut self, _: Site, _: bool, _: &Configuration) {}
}

/// Set of bond indices with O(1) insert, remove and uniform sampling.
#[derive(Debug, Clone)]
struct IndexedSet {
    items: Vec<u32>,
    pos: Vec<u32>,
}

const ABSENT: u32 = u32::MAX;

impl IndexedSet {
    fn new(capacity: usize) -> Self {
        IndexedSet { items: Vec::with_capacity(capacity), pos: vec![ABSENT; capacity] }
    }

    fn toggle(&mut self, b: usize) {
        let p = self.pos[b];
        if p == ABSENT {
            self.pos[b] = self.items.len() as u32;
            self.items.push(b as u32);
        } else {
            let last = self.items.pop().expect("nonempty");
            if last as usize != b {
                self.items[p as usize] = last;
                self.pos[last as usize] = p;
            }
            self.pos[b] = ABSENT;
        }
    }

    fn len(&self) -> usize {
        self.items.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    /// Largest number of events kept in the log; later events are counted only.
    pub event_cap: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { event_cap: 0 }
    }
}

/// Event log and snapshots of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub initial: Configuration,
    pub t_end: f64,
    /// `(time, bond)` for the first `event_cap` swaps.
    pub events: Vec<(f64, Site)>,
    pub event_count: u64,
    pub snapshots: Vec<(f64, Configuration)>,
    pub last: Configuration,
}

impl Trajectory {
    pub fn log_complete(&self) -> bool {
        self.events.len() as u64 == self.event_count
    }

    pub fn snapshot(&self, t: f64) -> Result<&Configuration> {
        self.snapshots
            .iter()
            .find(|(s, _)| (s - t).abs() <= TIME_SLACK)
            .map(|(_, c)| c)
            .ok_or(Error::MissingSnapshot(t))
    }
}

/// Simulates from `config` over `[0, t_end]`, recording snapshots.
pub fn run<R: Rng + ?Sized>(
    config: Configuration,
    p: &ModelParams,
    t_end: f64,
    snapshot_times: &[f64],
    rng: &mut R,
    opts: RunOptions,
) -> Result<Trajectory> {
    run_observed(config, p, t_end, snapshot_times, rng, opts, &mut ())
}

/// [`run`] with an observer that sees every holding interval and swap.
pub fn run_observed<R: Rng + ?Sized, O: Observer + ?Sized>(
    config: Configuration,
    p: &ModelParams,
    t_end: f64,
    snapshot_times: &[f64],
    rng: &mut R,
    opts: RunOptions,
    observer: &mut O,
) -> Result<Trajectory> {
    if !(t_end >= 0.0) || t_end > p.horizon() + TIME_SLACK {
        return Err(invalid("t_end", format!("must lie in [0, T = {}]", p.horizon())));
    }
    if snapshot_times.windows(2).any(|w| w[0] > w[1]) || snapshot_times.iter().any(|&s| s < 0.0 || s > t_end + TIME_SLACK) {
        return Err(invalid("snapshot_times", "must be sorted and lie in [0, t_end]"));
    }
    let window = config.window;
    if window.len() < 2 {
        return Err(invalid("window", "needs at least two sites"));
    }
    let bonds = window.len() - 1;
    let slow = window.index(0).filter(|_| window.contains(1));
    let n2 = p.nf() * p.nf();
    let slow_rate = p.nf() * p.alpha();

    let mut state = config;
    let initial = state.clone();
    let mut normal = IndexedSet::new(bonds);
    let mut slow_disc = false;
    for b in 0..bonds {
        if state.bit(b) != state.bit(b + 1) {
            if Some(b) == slow {
                slow_disc = true;
            } else {
                normal.toggle(b);
            }
        }
    }

    let mut traj = Trajectory {
        initial,
        t_end,
        events: Vec::with_capacity(opts.event_cap.min(1 << 20)),
        event_count: 0,
        snapshots: Vec::with_capacity(snapshot_times.len()),
        last: Configuration::empty(window),
    };
    let mut next_snap = 0;
    let mut t = 0.0;
    loop {
        let slow_part = if slow_disc { slow_rate } else { 0.0 };
        let total = n2 * normal.len() as f64 + slow_part;
        let t_next = if total > 0.0 {
            let e: f64 = Exp1.sample(rng);
            t + e / total
        } else {
            f64::INFINITY
        };
        let stop = t_next.min(t_end);
        while next_snap < snapshot_times.len() && snapshot_times[next_snap] <= stop {
            traj.snapshots.push((snapshot_times[next_snap], state.clone()));
            next_snap += 1;
        }
        if t_next > t_end {
            observer.hold(t, t_end, &state);
            break;
        }
        observer.hold(t, t_next, &state);
        t = t_next;
        let b = if rng.random::<f64>() * total < slow_part {
            slow.expect("slow bond is discrepant")
        } else {
            normal.items[rng.random_range(0..normal.len())] as usize
        };
        let moved_right = state.bit(b);
        state.flip(b);
        state.flip(b + 1);
        for nb in [b.wrapping_sub(1), b + 1] {
            if nb < bonds {
                if Some(nb) == slow {
                    slow_disc = !slow_disc;
                } else {
                    normal.toggle(nb);
                }
            }
        }
        let bond = window.site(b);
        observer.swap(bond, moved_right, &state);
        if traj.events.len() < opts.event_cap {
            traj.events.push((t, bond));
        }
        traj.event_count += 1;
    }
    traj.last = state;
    Ok(traj)
}

/// Snapshots of `M` independent replicas at common times.
#[derive(Debug, Clone)]
pub struct Ensemble {
    pub window: Window1D,
    pub n: u32,
    pub seed: u64,
    pub times: Vec<f64>,
    /// `snapshots[r][k]` is replica `r` at `times[k]`.
    pub snapshots: Vec<Vec<Configuration>>,
}

impl Ensemble {
    pub fn replicas(&self) -> usize {
        self.snapshots.len()
    }

    pub fn time_index(&self, t: f64) -> Result<usize> {
        self.times.iter().position(|s| (s - t).abs() <= TIME_SLACK).ok_or(Error::MissingSnapshot(t))
    }
}

/// Runs `m` replicas from Bernoulli product initial laws.
pub fn run_ensemble(
    profile: &InitialProfile,
    p: &ModelParams,
    window: Window1D,
    times: &[f64],
    m: usize,
    seed: u64,
) -> Result<Ensemble> {
    if m == 0 {
        return Err(invalid("replicas", "must be at least 1"));
    }
    let t_end = times.iter().cloned().fold(0.0, f64::max);
    let runs = crate::rng::run_replicas(m, seed, |_, rng: &mut ReplicaRng| {
        let c = sample_initial(profile, window, p.n(), rng);
        run(c, p, t_end, times, rng, RunOptions::default()).map(|tr| tr.snapshots.into_iter().map(|(_, c)| c).collect())
    });
    let snapshots = runs.into_iter().collect::<Result<Vec<Vec<Configuration>>>>()?;
    Ok(Ensemble { window, n: p.n(), seed, times: times.to_vec(), snapshots })
}

/// A replica average compared with a deterministic prediction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub x: Site,
    pub y: Site,
    pub estimate: f64,
    pub se: f64,
    pub predicted: f64,
}

impl Estimate {
    pub fn ci3(&self) -> f64 {
        3.0 * self.se
    }

    /// `|estimate - predicted|` in units of the standard error.
    pub fn z(&self) -> f64 {
        if self.se > 0.0 {
            (self.estimate - self.predicted).abs() / self.se
        } else if self.estimate == self.predicted {
            0.0
        } else {
            f64::INFINITY
        }
    }

    pub fn within(&self, sigmas: f64) -> bool {
        self.z() <= sigmas
    }
}

/// Site means at time `t` against the solver's `rho_t`.
pub fn empirical_mean(ens: &Ensemble, t: f64, sites: &[Site], path: &MeanPath) -> Result<Vec<Estimate>> {
    let k = ens.time_index(t)?;
    sites
        .iter()
        .map(|&x| {
            let xs: Vec<f64> = ens.snapshots.iter().map(|s| f64::from(u8::from(s[k].get(x)))).collect();
            let s = Summary::of(&xs);
            Ok(Estimate { x, y: x, estimate: s.mean, se: s.se(), predicted: path.value(t, x)? })
        })
        .collect()
}

/// `mean(eta(x) eta(y)) - rho_t(x) rho_t(y)` with the solver's `rho_t`;
/// `predicted` is filled by `phi(x, y)`.
pub fn empirical_correlation<P>(ens: &Ensemble, t: f64, pairs: &[(Site, Site)], path: &MeanPath, phi: P) -> Result<Vec<Estimate>>
where
    P: Fn(Site, Site) -> Result<f64>,
{
    let k = ens.time_index(t)?;
    pairs
        .iter()
        .map(|&(x, y)| {
            let xs: Vec<f64> = ens.snapshots.iter().map(|s| f64::from(u8::from(s[k].get(x) && s[k].get(y)))).collect();
            let s = Summary::of(&xs);
            let centre = path.value(t, x)? * path.value(t, y)?;
            Ok(Estimate { x, y, estimate: s.mean - centre, se: s.se(), predicted: phi(x, y)? })
        })
        .collect()
}

/// `(1/sqrt n) f(x/n)` on a window, with a bound on the off-window part of
/// the density field.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldWeights {
    pub window: Window1D,
    pub n: u32,
    pub values: Vec<f64>,
    pub tail_bound: f64,
}

/// Largest tolerated off-window contribution to a density field.
pub const FIELD_TAIL_TOLERANCE: f64 = 1e-8;

impl FieldWeights {
    /// Samples `f` on the window. With `a = L/n` for the window half-width `L`
    /// and `C_l = sup_{|u| >= a} |u|^l |f(u)|` (sampled), the off-window part
    /// of the field is at most `2 C_l n a^{1-l} / ((l - 1) sqrt n)`.
    pub fn new<F: RealFn + ?Sized>(f: &F, window: Window1D, n: u32) -> Result<Self> {
        let nf = f64::from(n);
        let scale = nf.sqrt().recip();
        let values: Vec<f64> = window.sites().map(|x| scale * f.eval(x as f64 / nf)).collect();
        let a = window.hi().min(-window.lo()).max(1) as f64 / nf;
        let probe: Vec<f64> = (0..=800).map(|i| a + 0.05 * f64::from(i)).collect();
        let tail_bound = (2..=16)
            .step_by(2)
            .map(|l| {
                let c = probe
                    .iter()
                    .map(|&u| u.powi(l) * f.eval(u).abs().max(f.eval(-u).abs()))
                    .fold(0.0, f64::max);
                // Beyond the probed range assume the slowest admissible decay.
                let far = probe.last().copied().unwrap_or(a);
                let c = c.max(far.powi(l) * f.eval(far).abs().max(f.eval(-far).abs()));
                2.0 * scale * c * nf * a.powi(1 - l) / f64::from(l - 1)
            })
            .fold(f64::INFINITY, f64::min);
        if tail_bound > FIELD_TAIL_TOLERANCE {
            return Err(Error::Truncation {
                site: format!("field tail bound {tail_bound:.3e} exceeds {FIELD_TAIL_TOLERANCE:e}"),
                lo: window.lo(),
                hi: window.hi(),
            });
        }
        Ok(FieldWeights { window, n, values, tail_bound })
    }
}

/// `(1/sqrt n) sum_x f(x/n) (eta(x) - rho(x))`.
pub fn density_field(config: &Configuration, weights: &FieldWeights, rho: &[f64]) -> f64 {
    debug_assert_eq!(config.window, weights.window);
    let terms: Vec<f64> = config
        .occupancy()
        .zip(&weights.values)
        .zip(rho)
        .map(|((eta, w), r)| w * (f64::from(u8::from(eta)) - r))
        .collect();
    pairwise_sum(&terms)
}

/// `(t, M_t(f), QV_t(f))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MartingalePoint {
    pub t: f64,
    pub martingale: f64,
    pub qv: f64,
}

/// Online `M_t(f) = F(eta_t) - F(eta_0) - int_0^t n^2 L F(eta_s) ds` and its
/// quadratic variation, with `F(eta) = (1/sqrt n) sum f(x/n) eta(x)`. Both
/// integrands are constant between events. The centering by `rho_t` in the
/// density field cancels against the deterministic part of the compensator,
/// so it does not enter here.
#[derive(Debug, Clone)]
pub struct MartingaleTracker {
    window: Window1D,
    field_coef: Vec<f64>,
    drift_coef: Vec<f64>,
    qv_weight: Vec<f64>,
    field: f64,
    field0: f64,
    drift: f64,
    qv_rate: f64,
    drift_int: Compensated,
    qv_int: Compensated,
    sample_times: Vec<f64>,
    next: usize,
    pub path: Vec<MartingalePoint>,
}

impl MartingaleTracker {
    pub fn new<F: RealFn + ?Sized>(f: &F, p: &ModelParams, window: Window1D, sample_times: &[f64]) -> Self {
        let nf = p.nf();
        let scale = nf.sqrt().recip();
        let fx: Vec<f64> = window.sites().map(|x| f.eval(x as f64 / nf)).collect();
        let field_coef: Vec<f64> = fx.iter().map(|v| scale * v).collect();
        let mut drift_coef = vec![0.0; fx.len()];
        Generator1D::new(window, p).apply(&fx, &mut drift_coef, scale * nf * nf);
        let qv_weight: Vec<f64> = window
            .sites()
            .take(fx.len() - 1)
            .enumerate()
            .map(|(i, x)| {
                let d = fx[i + 1] - fx[i];
                if x == 0 {
                    p.alpha() * d * d
                } else {
                    nf * d * d
                }
            })
            .collect();
        MartingaleTracker {
            window,
            field_coef,
            drift_coef,
            qv_weight,
            field: 0.0,
            field0: 0.0,
            drift: 0.0,
            qv_rate: 0.0,
            drift_int: Compensated::default(),
            qv_int: Compensated::default(),
            sample_times: sample_times.to_vec(),
            next: 0,
            path: Vec::with_capacity(sample_times.len()),
        }
    }

    /// Loads the initial state; call before the run.
    pub fn start(&mut self, config: &Configuration) {
        let occ: Vec<bool> = config.occupancy().collect();
        let dot = |c: &[f64]| pairwise_sum(&c.iter().zip(&occ).filter(|(_, o)| **o).map(|(v, _)| *v).collect::<Vec<_>>());
        self.field = dot(&self.field_coef);
        self.field0 = self.field;
        self.drift = dot(&self.drift_coef);
        self.qv_rate = pairwise_sum(
            &occ.windows(2).zip(&self.qv_weight).filter(|(w, _)| w[0] != w[1]).map(|(_, q)| *q).collect::<Vec<_>>(),
        );
        self.drift_int = Compensated::default();
        self.qv_int = Compensated::default();
        self.next = 0;
        self.path.clear();
        while self.next < self.sample_times.len() && self.sample_times[self.next] <= 0.0 {
            self.record(0.0);
        }
    }

    fn record(&mut self, t: f64) {
        self.path.push(MartingalePoint { t, martingale: self.martingale(), qv: self.qv_int.value() });
        self.next += 1;
    }

    pub fn martingale(&self) -> f64 {
        self.field - self.field0 - self.drift_int.value()
    }

    pub fn qv(&self) -> f64 {
        self.qv_int.value()
    }

    /// Current `(1/sqrt n) sum f(x/n) eta(x)`.
    pub fn field(&self) -> f64 {
        self.field
    }
}

impl Observer for MartingaleTracker {
    fn hold(&mut self, t0: f64, t1: f64, _: &Configuration) {
        let mut from = t0;
        while self.next < self.sample_times.len() && self.sample_times[self.next] <= t1 {
            let s = self.sample_times[self.next].max(from);
            self.drift_int.add(self.drift * (s - from));
            self.qv_int.add(self.qv_rate * (s - from));
            from = s;
            self.record(s);
        }
        self.drift_int.add(self.drift * (t1 - from));
        self.qv_int.add(self.qv_rate * (t1 - from));
    }

    fn swap(&mut self, bond: Site, moved_right: bool, config: &Configuration) {
        let i = self.window.index(bond).expect("event inside the window");
        let sign = if moved_right { 1.0 } else { -1.0 };
        self.field += sign * (self.field_coef[i + 1] - self.field_coef[i]);
        self.drift += sign * (self.drift_coef[i + 1] - self.drift_coef[i]);
        let disc = |b: usize| config.bit(b) != config.bit(b + 1);
        if i > 0 {
            let w = self.qv_weight[i - 1];
            self.qv_rate += if disc(i - 1) { w } else { -w };
        }
        if i + 1 < self.qv_weight.len() {
            let w = self.qv_weight[i + 1];
            self.qv_rate += if disc(i + 1) { w } else { -w };
        }
    }
}

/// Runs one replica with a martingale tracker attached.
pub fn martingale_and_qv<R: Rng + ?Sized, F: RealFn + ?Sized>(
    config: Configuration,
    f: &F,
    p: &ModelParams,
    t_end: f64,
    sample_times: &[f64],
    rng: &mut R,
    opts: RunOptions,
) -> Result<(Trajectory, Vec<MartingalePoint>)> {
    let mut tracker = MartingaleTracker::new(f, p, config.window, sample_times);
    tracker.start(&config);
    let traj = run_observed(config, p, t_end, &[], rng, opts, &mut tracker)?;
    Ok((traj, tracker.path))
}

/// `int_0^T n^2 L F(eta_s) ds` recomputed from a complete event log, summed
/// forward and in reverse.
pub fn replay_compensator<F: RealFn + ?Sized>(traj: &Trajectory, f: &F, p: &ModelParams) -> Result<(f64, f64)> {
    if !traj.log_complete() {
        return Err(invalid("event_cap", "the event log was truncated"));
    }
    let mut tracker = MartingaleTracker::new(f, p, traj.initial.window, &[]);
    tracker.start(&traj.initial);
    let mut state = traj.initial.clone();
    let mut pieces = Vec::with_capacity(traj.events.len() + 1);
    let mut t = 0.0;
    for &(s, bond) in &traj.events {
        pieces.push(tracker.drift * (s - t));
        let i = state.window.index(bond).expect("event inside the window");
        let moved_right = state.bit(i);
        state.flip(i);
        state.flip(i + 1);
        tracker.swap(bond, moved_right, &state);
        t = s;
    }
    pieces.push(tracker.drift * (traj.t_end - t));
    let mut fwd = Compensated::default();
    pieces.iter().for_each(|v| fwd.add(*v));
    let mut rev = Compensated::default();
    pieces.iter().rev().for_each(|v| rev.add(*v));
    Ok((fwd.value(), rev.value()))
}

/// Largest change of the solver mean at `probes` when the window is doubled,
/// a proxy for the effect of the closed boundary on probe statistics.
pub fn boundary_influence(
    profile: &InitialProfile,
    p: &ModelParams,
    window: Window1D,
    t: f64,
    probes: &[Site],
    opts: &crate::moments::SolverOptions,
) -> Result<f64> {
    use crate::moments::{evolve_mean, MeanField};
    let wide = Window1D::new(2 * window.lo(), 2 * window.hi())?;
    let a = evolve_mean(&MeanField::from_profile(profile, window, p.n()), p, t, opts)?;
    let b = evolve_mean(&MeanField::from_profile(profile, wide, p.n()), p, t, opts)?;
    probes
        .iter()
        .map(|&x| match (a.value(x), b.value(x)) {
            (Some(u), Some(v)) => Ok((u - v).abs()),
            _ => Err(Error::Truncation { site: x.to_string(), lo: window.lo(), hi: window.hi() }),
        })
        .try_fold(0.0, |m, d| d.map(|d| f64::max(m, d)))
}
