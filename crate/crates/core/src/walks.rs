//! Random walks: simulation with local times, exact transition
//! probabilities by uniformization, folding and lumping checks.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};
use libm::lgamma as ln_gamma;

use crate::error::{invalid, Error, Result};
use crate::lattice::{bond_rate_1d, bond_rate_2d, edge_class_2d, EdgeClass, ModelParams, Point, Site, Window1D, VERTEX};
use crate::rng::{run_replicas, ReplicaRng};
use crate::stats::{pairwise_sum, Summary};

/// Largest chain handled by the exact oracle.
pub const MAX_STATES: usize = 40_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WalkKind {
    /// Generator `A_n` on the integers.
    Slow1d,
    /// Rate 1 to each neighbour on the integers.
    Simple1dRate2,
    /// Rate 1 to each neighbour inside `{1, 2, ...}`.
    ReflectedHalfline,
    /// Rate 1 to each neighbour inside `{0 <= x <= y}`.
    Triangle,
    /// Generator `B_n` on `V`.
    Slow2d,
    /// Rate 1/2 to each neighbour on the plane.
    Simple2dRate2,
    /// Rate 1/2 to each neighbour inside the closed first quadrant.
    Quadrant,
}

impl WalkKind {
    pub fn is_planar(self) -> bool {
        matches!(self, WalkKind::Triangle | WalkKind::Slow2d | WalkKind::Simple2dRate2 | WalkKind::Quadrant)
    }

    pub fn needs_params(self) -> bool {
        matches!(self, WalkKind::Slow1d | WalkKind::Slow2d)
    }

    pub fn contains(self, u: Point) -> bool {
        match self {
            WalkKind::Slow1d | WalkKind::Simple1dRate2 => u.y == 0,
            WalkKind::ReflectedHalfline => u.y == 0 && u.x >= 1,
            WalkKind::Triangle => 0 <= u.x && u.x <= u.y,
            WalkKind::Slow2d => u.in_v(),
            WalkKind::Simple2dRate2 => true,
            WalkKind::Quadrant => u.x >= 0 && u.y >= 0,
        }
    }

    /// Jump rate `u -> v`, zero unless both are states and adjacent.
    pub fn rate(self, u: Point, v: Point, p: &ModelParams) -> f64 {
        if !self.contains(u) || !self.contains(v) || (u.x - v.x).abs() + (u.y - v.y).abs() != 1 {
            return 0.0;
        }
        match self {
            WalkKind::Slow1d => bond_rate_1d(u.x.min(v.x), p),
            WalkKind::Slow2d => bond_rate_2d(u, v, p),
            WalkKind::Simple2dRate2 | WalkKind::Quadrant => 0.5,
            _ => 1.0,
        }
    }

    /// Whether the step `u -> v` traverses a slow edge.
    pub fn is_slow_edge(self, u: Point, v: Point) -> bool {
        match self {
            WalkKind::Slow1d => u.x.min(v.x) == 0,
            WalkKind::Slow2d => edge_class_2d(u, v) == Some(EdgeClass::Slow),
            _ => false,
        }
    }

    fn candidates(self, u: Point) -> impl Iterator<Item = Point> {
        let planar = self.is_planar();
        u.neighbours().into_iter().enumerate().filter(move |(i, _)| planar || *i < 2).map(|(_, v)| v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WalkSpec {
    pub kind: WalkKind,
    pub params: ModelParams,
    pub start: Point,
}

impl WalkSpec {
    pub fn new(kind: WalkKind, params: ModelParams, start: Point) -> Result<Self> {
        if !kind.contains(start) {
            return Err(invalid("start", format!("{start} is not a state of {kind:?}")));
        }
        Ok(WalkSpec { kind, params, start })
    }
}

/// A set of sites whose local time is recorded.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetSet {
    Everything,
    Sites(BTreeSet<Point>),
    /// `{y = x + 1}`.
    Diagonal,
    /// `{y = x + 1} \ {(0, 1)}`.
    DiagonalWithoutVertex,
    /// `{(0, 1)}`.
    Vertex,
    /// `{x = 0} ∪ {x = y}`, the boundary of the triangle.
    TriangleBoundary,
}

impl TargetSet {
    pub fn site(x: Site) -> Self {
        TargetSet::Sites([Point::new(x, 0)].into_iter().collect())
    }

    pub fn sites_1d<I: IntoIterator<Item = Site>>(xs: I) -> Self {
        TargetSet::Sites(xs.into_iter().map(|x| Point::new(x, 0)).collect())
    }

    pub fn contains(&self, u: Point) -> bool {
        match self {
            TargetSet::Everything => true,
            TargetSet::Sites(s) => s.contains(&u),
            TargetSet::Diagonal => u.on_diagonal(),
            TargetSet::DiagonalWithoutVertex => u.on_diagonal() && u != VERTEX,
            TargetSet::Vertex => u == VERTEX,
            TargetSet::TriangleBoundary => u.x == 0 || u.x == u.y,
        }
    }
}

/// Local times and crossings of one simulated path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalTimeRecord {
    pub local_times: Vec<f64>,
    pub crossings: u64,
    pub jumps: u64,
    pub time: f64,
    pub end: Point,
}

/// Continuous-time simulation by next-jump sampling up to time `t`.
pub fn simulate_walk(spec: &WalkSpec, t: f64, targets: &[TargetSet], rng: &mut ReplicaRng) -> LocalTimeRecord {
    let mut rec =
        LocalTimeRecord { local_times: vec![0.0; targets.len()], crossings: 0, jumps: 0, time: t, end: spec.start };
    let mut u = spec.start;
    let mut s = 0.0;
    let mut moves = [(Point::new(0, 0), 0.0); 4];
    while s < t {
        let mut k = 0;
        let mut total = 0.0;
        for v in spec.kind.candidates(u) {
            let r = spec.kind.rate(u, v, &spec.params);
            if r > 0.0 {
                total += r;
                moves[k] = (v, total);
                k += 1;
            }
        }
        let hold = if total > 0.0 { { let e: f64 = Exp1.sample(rng); e / total } } else { f64::INFINITY };
        let dwell = hold.min(t - s);
        for (lt, a) in rec.local_times.iter_mut().zip(targets) {
            if a.contains(u) {
                *lt += dwell;
            }
        }
        s += hold;
        if s >= t {
            break;
        }
        let pick = rng.random::<f64>() * total;
        let v = moves[..k].iter().find(|m| pick < m.1).map_or(moves[k - 1].0, |m| m.0);
        if spec.kind.is_slow_edge(u, v) {
            rec.crossings += 1;
        }
        rec.jumps += 1;
        u = v;
    }
    rec.end = u;
    rec
}

/// A finite continuous-time chain with sparse rates.
#[derive(Debug, Clone)]
pub struct FiniteChain {
    states: Vec<Point>,
    index: HashMap<Point, usize>,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    rates: Vec<f64>,
    exit: Vec<f64>,
}

impl FiniteChain {
    /// Builds a chain from explicit rates; jumps leaving `states` are dropped.
    pub fn from_rates<I, F>(states: I, rate: F) -> Result<Self>
    where
        I: IntoIterator<Item = Point>,
        F: Fn(Point, Point) -> f64,
    {
        let states: Vec<Point> = states.into_iter().collect();
        if states.len() > MAX_STATES {
            return Err(Error::StateSpaceTooLarge { states: states.len(), limit: MAX_STATES });
        }
        let index: HashMap<Point, usize> = states.iter().enumerate().map(|(i, u)| (*u, i)).collect();
        let mut row_ptr = vec![0];
        let mut cols = Vec::new();
        let mut rates = Vec::new();
        let mut exit = Vec::with_capacity(states.len());
        for u in &states {
            let mut e = 0.0;
            for v in u.neighbours() {
                if let Some(&j) = index.get(&v) {
                    let r = rate(*u, v);
                    if r > 0.0 {
                        cols.push(j);
                        rates.push(r);
                        e += r;
                    }
                }
            }
            exit.push(e);
            row_ptr.push(cols.len());
        }
        Ok(FiniteChain { states, index, row_ptr, cols, rates, exit })
    }

    pub fn new<I: IntoIterator<Item = Point>>(kind: WalkKind, p: &ModelParams, region: I) -> Result<Self> {
        let states: Vec<Point> = region.into_iter().filter(|u| kind.contains(*u)).collect();
        FiniteChain::from_rates(states, |u, v| kind.rate(u, v, p))
    }

    /// One-dimensional chain on a window (for the half-line kind, the
    /// states of the window that are at least 1).
    pub fn line(kind: WalkKind, p: &ModelParams, window: Window1D) -> Result<Self> {
        FiniteChain::new(kind, p, window.sites().map(|x| Point::new(x, 0)))
    }

    pub fn line_range(kind: WalkKind, p: &ModelParams, lo: Site, hi: Site) -> Result<Self> {
        FiniteChain::new(kind, p, (lo..=hi).map(|x| Point::new(x, 0)))
    }

    /// Planar chain on `[x0, x1] x [y0, y1]` intersected with the state space.
    pub fn rect(kind: WalkKind, p: &ModelParams, xs: (Site, Site), ys: (Site, Site)) -> Result<Self> {
        let count = ((xs.1 - xs.0 + 1) * (ys.1 - ys.0 + 1)).max(0) as usize;
        if count > 4 * MAX_STATES {
            return Err(Error::StateSpaceTooLarge { states: count, limit: MAX_STATES });
        }
        FiniteChain::new(kind, p, (xs.0..=xs.1).flat_map(|x| (ys.0..=ys.1).map(move |y| Point::new(x, y))))
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[Point] {
        &self.states
    }

    pub fn state_index(&self, u: Point) -> Option<usize> {
        self.index.get(&u).copied()
    }

    pub fn out_rates(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.row_ptr[i]..self.row_ptr[i + 1]).map(move |k| (self.cols[k], self.rates[k]))
    }

    fn uniform_rate(&self) -> f64 {
        self.exit.iter().cloned().fold(0.0, f64::max)
    }

    /// `v <- v P` with `P = I + Q / lambda`.
    fn push(&self, v: &[f64], out: &mut [f64], lambda: f64) {
        for (o, (vi, e)) in out.iter_mut().zip(v.iter().zip(&self.exit)) {
            *o = vi * (1.0 - e / lambda);
        }
        for (i, vi) in v.iter().enumerate() {
            if *vi != 0.0 {
                for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                    out[self.cols[k]] += vi * self.rates[k] / lambda;
                }
            }
        }
    }

    /// Runs the uniformized chain from `start`, passing each `v_k` with its
    /// index to `visit` until `stop(k)` is true.
    fn uniformized<V, S>(&self, start: usize, lambda: f64, mut visit: V, stop: S)
    where
        V: FnMut(usize, &[f64]),
        S: Fn(usize) -> bool,
    {
        let mut v = vec![0.0; self.len()];
        v[start] = 1.0;
        let mut next = vec![0.0; self.len()];
        let mut k = 0;
        loop {
            visit(k, &v);
            if stop(k) {
                break;
            }
            self.push(&v, &mut next, lambda);
            std::mem::swap(&mut v, &mut next);
            k += 1;
        }
    }

    /// Row `P_start(Z_t = .)`, accurate to about `1e-13` in total variation.
    pub fn transition_row(&self, start: usize, t: f64) -> Result<Vec<f64>> {
        if t < 0.0 {
            return Err(invalid("t", "must be nonnegative"));
        }
        let mut row = vec![0.0; self.len()];
        let lambda = self.uniform_rate();
        if t == 0.0 || lambda == 0.0 {
            row[start] = 1.0;
            return Ok(row);
        }
        let w = poisson_weights(lambda * t);
        let last = w.len() - 1;
        self.uniformized(
            start,
            lambda,
            |k, v| {
                for (r, x) in row.iter_mut().zip(v) {
                    *r += w[k] * x;
                }
            },
            |k| k >= last,
        );
        Ok(row)
    }

    /// Row `int_0^t P_start(Z_s = .) ds`.
    pub fn occupation_row(&self, start: usize, t: f64) -> Result<Vec<f64>> {
        if t < 0.0 {
            return Err(invalid("t", "must be nonnegative"));
        }
        let mut row = vec![0.0; self.len()];
        let lambda = self.uniform_rate();
        if t == 0.0 {
            return Ok(row);
        }
        if lambda == 0.0 {
            row[start] = t;
            return Ok(row);
        }
        // int_0^t pois(k; lambda s) ds = P(Pois(lambda t) > k) / lambda.
        let w = poisson_weights(lambda * t);
        let mut tails = Vec::with_capacity(w.len());
        let mut cdf = 0.0;
        for wk in &w {
            cdf += wk;
            tails.push((1.0 - cdf).max(0.0));
        }
        let last = tails.iter().rposition(|x| *x > 1e-18).unwrap_or(0);
        self.uniformized(
            start,
            lambda,
            |k, v| {
                let c = tails[k] / lambda;
                for (r, x) in row.iter_mut().zip(v) {
                    *r += c * x;
                }
            },
            |k| k >= last,
        );
        Ok(row)
    }
}

/// Poisson(`mean`) probabilities up to the point where the remaining mass
/// is below `1e-16`.
pub fn poisson_weights(mean: f64) -> Vec<f64> {
    let ln_mean = mean.ln();
    let kmax = (mean + 12.0 * mean.sqrt() + 40.0).ceil() as usize;
    let mut w = Vec::with_capacity(kmax + 1);
    let mut total = 0.0;
    for k in 0..=kmax {
        let lw = -mean + k as f64 * ln_mean - ln_gamma(k as f64 + 1.0);
        let wk = if mean == 0.0 { if k == 0 { 1.0 } else { 0.0 } } else { lw.exp() };
        w.push(wk);
        total += wk;
        if k as f64 > mean && 1.0 - total < 1e-16 && wk < 1e-18 {
            break;
        }
    }
    w
}

/// Transition probabilities `P_x(Z_t = y)` for a set of starting states.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransitionTable {
    pub states: Vec<Point>,
    pub t: f64,
    pub rows: BTreeMap<Point, Vec<f64>>,
}

impl TransitionTable {
    pub fn probability(&self, x: Point, y: Point) -> Option<f64> {
        let j = self.states.iter().position(|s| *s == y)?;
        self.rows.get(&x).map(|r| r[j])
    }
}

/// Exact table on a finite region with reflecting truncation.
pub fn transition_probabilities<I>(kind: WalkKind, p: &ModelParams, t: f64, region: I, starts: &[Point]) -> Result<TransitionTable>
where
    I: IntoIterator<Item = Point>,
{
    let chain = FiniteChain::new(kind, p, region)?;
    let mut rows = BTreeMap::new();
    for s in starts {
        let i = chain.state_index(*s).ok_or_else(|| invalid("start", format!("{s} outside the region")))?;
        rows.insert(*s, chain.transition_row(i, t)?);
    }
    Ok(TransitionTable { states: chain.states().to_vec(), t, rows })
}

/// Left and right sides of the folding identity and their difference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FoldingCheck {
    pub x: Site,
    pub y: Site,
    pub t: f64,
    pub alpha: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub diff: f64,
}

fn folding_window(reach: Site, t: f64) -> Result<Window1D> {
    Window1D::symmetric(reach + 1 + (12.0 * (2.0 * t).sqrt() + 20.0).ceil() as Site)
}

/// `P_x(X_t = y) + P_x(X_t = 1 - y)` for the slow walk against the same sum
/// for the rate-2 simple walk, over all `x, y` in `points` at each `t`.
pub fn folding_sweep(p: &ModelParams, points: &[Site], times: &[f64]) -> Result<Vec<FoldingCheck>> {
    let reach = points.iter().map(|x| x.abs()).max().unwrap_or(0);
    let mut out = Vec::new();
    for &t in times {
        let w = folding_window(reach, t)?;
        let slow = FiniteChain::line(WalkKind::Slow1d, p, w)?;
        let simple = FiniteChain::line(WalkKind::Simple1dRate2, p, w)?;
        let at = |row: &[f64], y: Site| row[w.index(y).expect("window covers the sweep")];
        for &x in points {
            let i = w.index(x).expect("window covers the sweep");
            let a = slow.transition_row(i, t)?;
            let b = simple.transition_row(i, t)?;
            for &y in points {
                let lhs = at(&a, y) + at(&a, 1 - y);
                let rhs = at(&b, y) + at(&b, 1 - y);
                out.push(FoldingCheck { x, y, t, alpha: p.alpha(), lhs, rhs, diff: (lhs - rhs).abs() });
            }
        }
    }
    Ok(out)
}

pub fn heat_kernel_folding_check(x: Site, y: Site, t: f64, p: &ModelParams) -> Result<FoldingCheck> {
    let all = folding_sweep(p, &[x, y], &[t])?;
    Ok(*all.iter().find(|c| c.x == x && c.y == y).expect("pair is in the sweep"))
}

/// Outcome of a lumping comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LumpingReport {
    pub discrepancy: f64,
    pub classes: usize,
}

/// Checks the rate condition for `relation` and compares the pushed-forward
/// fine distribution with the coarse chain at time `t`.
pub fn lumping_check<R>(fine: &FiniteChain, relation: R, coarse: &FiniteChain, start: Point, t: f64) -> Result<LumpingReport>
where
    R: Fn(Point) -> Point,
{
    let class_of: Vec<usize> = fine
        .states()
        .iter()
        .map(|u| {
            coarse.state_index(relation(*u)).ok_or_else(|| Error::LumpingPrecondition {
                first: u.to_string(),
                second: relation(*u).to_string(),
                detail: "class representative is not a coarse state".into(),
            })
        })
        .collect::<Result<_>>()?;

    // Aggregated rates from each fine state into each class.
    let lumped = |i: usize| {
        let mut m: BTreeMap<usize, f64> = BTreeMap::new();
        for (j, r) in fine.out_rates(i) {
            *m.entry(class_of[j]).or_default() += r;
        }
        m
    };
    let mut reference: HashMap<usize, (usize, BTreeMap<usize, f64>)> = HashMap::new();
    let close = |a: &BTreeMap<usize, f64>, b: &BTreeMap<usize, f64>, skip: usize| {
        let keys: BTreeSet<usize> = a.keys().chain(b.keys()).cloned().collect();
        keys.into_iter()
            .filter(|k| *k != skip)
            .all(|k| (a.get(&k).unwrap_or(&0.0) - b.get(&k).unwrap_or(&0.0)).abs() < 1e-12)
    };
    for i in 0..fine.len() {
        let c = class_of[i];
        let m = lumped(i);
        match reference.get(&c) {
            Some((j, mj)) => {
                if !close(&m, mj, usize::MAX) {
                    return Err(Error::LumpingPrecondition {
                        first: fine.states()[*j].to_string(),
                        second: fine.states()[i].to_string(),
                        detail: "aggregated rates into some class differ".into(),
                    });
                }
            }
            None => {
                let coarse_rates: BTreeMap<usize, f64> = coarse.out_rates(c).collect();
                if !close(&m, &coarse_rates, c) {
                    return Err(Error::LumpingPrecondition {
                        first: fine.states()[i].to_string(),
                        second: coarse.states()[c].to_string(),
                        detail: "coarse chain rates differ from the lumped rates".into(),
                    });
                }
                reference.insert(c, (i, m));
            }
        }
    }

    let fi = fine.state_index(start).ok_or_else(|| invalid("start", "not a fine state"))?;
    let fine_row = fine.transition_row(fi, t)?;
    let coarse_row = coarse.transition_row(class_of[fi], t)?;
    let mut pushed = vec![0.0; coarse.len()];
    for (i, pr) in fine_row.iter().enumerate() {
        pushed[class_of[i]] += pr;
    }
    let discrepancy = pushed.iter().zip(&coarse_row).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    Ok(LumpingReport { discrepancy, classes: reference.len() })
}

/// `x ~ 1 - x`, represented by the member in `{1, 2, ...}`.
pub fn fold_bond(u: Point) -> Point {
    Point::new(u.x.max(1 - u.x), u.y)
}

/// `(x, y) ~ (x, -y-1) ~ (-x-1, y)`, represented in the first quadrant.
pub fn fold_quadrant(u: Point) -> Point {
    let f = |z: Site| if z >= 0 { z } else { -z - 1 };
    Point::new(f(u.x), f(u.y))
}

/// Fold of the slow walk on `[1 - m, m]` onto the reflected half-line.
pub fn bond_fold_check(p: &ModelParams, m: Site, start: Site, t: f64) -> Result<LumpingReport> {
    let fine = FiniteChain::line(WalkKind::Slow1d, p, Window1D::symmetric(m)?)?;
    let coarse = FiniteChain::line_range(WalkKind::ReflectedHalfline, p, 1, m)?;
    lumping_check(&fine, fold_bond, &coarse, Point::new(start, 0), t)
}

/// Quadrant fold of the rate-2 planar walk on `[-m, m-1]^2`.
pub fn quadrant_fold_check(p: &ModelParams, m: Site, start: Point, t: f64) -> Result<LumpingReport> {
    let fine = FiniteChain::rect(WalkKind::Simple2dRate2, p, (-m, m - 1), (-m, m - 1))?;
    let coarse = FiniteChain::rect(WalkKind::Quadrant, p, (0, m - 1), (0, m - 1))?;
    lumping_check(&fine, fold_quadrant, &coarse, start, t)
}

/// A walk on `{0, ..., m-1}` that leaves `x` at rate `lambda(x)` and moves
/// to a uniformly chosen neighbour.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentWalk {
    pub holding_rates: Vec<f64>,
}

impl SegmentWalk {
    fn jump_probability(&self, x: usize, y: usize) -> f64 {
        let m = self.holding_rates.len();
        let deg = usize::from(x > 0) + usize::from(x + 1 < m);
        if x.abs_diff(y) == 1 && y < m {
            1.0 / deg as f64
        } else {
            0.0
        }
    }

    pub fn chain(&self) -> Result<FiniteChain> {
        let m = self.holding_rates.len() as Site;
        FiniteChain::from_rates((0..m).map(|x| Point::new(x, 0)), |u, v| {
            self.holding_rates[u.x as usize] * self.jump_probability(u.x as usize, v.x as usize)
        })
    }

    /// Local time in `target` up to `t` for one path from `start`.
    pub fn local_time(&self, start: usize, target: &BTreeSet<usize>, t: f64, rng: &mut ReplicaRng) -> f64 {
        let m = self.holding_rates.len();
        let (mut x, mut s, mut acc) = (start, 0.0, 0.0);
        while s < t {
            let hold: f64 = Exp1.sample(rng);
            let hold = hold / self.holding_rates[x];
            if target.contains(&x) {
                acc += hold.min(t - s);
            }
            s += hold;
            x = if x == 0 {
                1
            } else if x + 1 == m || rng.random::<bool>() {
                x - 1
            } else {
                x + 1
            };
        }
        acc
    }
}

/// Expected local times of the faster chain at `t` and of the slower chain
/// at `lambda t`, by Monte Carlo and by the exact oracle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityReport {
    pub lambda: f64,
    pub fast: Summary,
    pub slow: Summary,
    pub exact_fast: f64,
    pub exact_slow: f64,
}

impl MonotonicityReport {
    /// `E L_t(fast) <= E L_{lambda t}(slow)` up to 3 combined standard errors.
    pub fn holds(&self) -> bool {
        self.fast.mean <= self.slow.mean + 3.0 * (self.fast.se().powi(2) + self.slow.se().powi(2)).sqrt()
    }
}

pub fn rate_monotonicity_check(
    base: &SegmentWalk,
    scaled: &SegmentWalk,
    target: &BTreeSet<usize>,
    start: usize,
    t: f64,
    replicas: usize,
    seed: u64,
) -> Result<MonotonicityReport> {
    if base.holding_rates.len() != scaled.holding_rates.len() {
        return Err(invalid("rates", "both chains must live on the same segment"));
    }
    if base.holding_rates.iter().chain(&scaled.holding_rates).any(|r| !(*r > 0.0)) {
        return Err(invalid("rates", "holding rates must be positive"));
    }
    let lambda = scaled
        .holding_rates
        .iter()
        .zip(&base.holding_rates)
        .map(|(a, b)| a / b)
        .fold(0.0, f64::max);
    let fast = run_replicas(replicas, seed, |_, rng| scaled.local_time(start, target, t, rng));
    let slow = run_replicas(replicas, seed ^ 0x9E37_79B9_7F4A_7C15, |_, rng| base.local_time(start, target, lambda * t, rng));
    let exact = |w: &SegmentWalk, horizon: f64| -> Result<f64> {
        let row = w.chain()?.occupation_row(start, horizon)?;
        Ok(target.iter().map(|i| row[*i]).sum())
    };
    Ok(MonotonicityReport {
        lambda,
        fast: Summary::of(&fast),
        slow: Summary::of(&slow),
        exact_fast: exact(scaled, t)?,
        exact_slow: exact(base, lambda * t)?,
    })
}

/// One row of the two-dimensional local-time table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalTimeRow {
    pub n: u32,
    pub t: f64,
    pub alpha: f64,
    pub start_x: Site,
    pub start_y: Site,
    pub estimate: f64,
    pub ci_half_width: f64,
    pub normalized: f64,
}

/// Local-time estimates for one `(n, start)`: diagonal, vertex, crossings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalTimeEstimate {
    pub diagonal: LocalTimeRow,
    pub vertex: LocalTimeRow,
    pub crossings: Summary,
}

/// `E L_{t n^2}(D \ {(0,1)})` normalized by `n sqrt(t)` and
/// `E L_{t n^2}({(0,1)})` normalized by `log(t n^2)`.
pub fn local_time_bounds_2d(p: &ModelParams, t: f64, starts: &[Point], replicas: usize, seed: u64) -> Result<Vec<LocalTimeEstimate>> {
    let micro = t * p.nf() * p.nf();
    let targets = [TargetSet::DiagonalWithoutVertex, TargetSet::Vertex];
    starts
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let spec = WalkSpec::new(WalkKind::Slow2d, *p, *s)?;
            let recs = run_replicas(replicas, crate::rng::derive_seed(seed, &format!("start{k}")), |_, rng| {
                simulate_walk(&spec, micro, &targets, rng)
            });
            let col = |j: usize| Summary::of(&recs.iter().map(|r| r.local_times[j]).collect::<Vec<_>>());
            let (d, v) = (col(0), col(1));
            let crossings = Summary::of(&recs.iter().map(|r| r.crossings as f64).collect::<Vec<_>>());
            let row = |s: Summary, norm: f64| LocalTimeRow {
                n: p.n(),
                t,
                alpha: p.alpha(),
                start_x: spec.start.x,
                start_y: spec.start.y,
                estimate: s.mean,
                ci_half_width: s.ci3(),
                normalized: if norm > 0.0 { s.mean / norm } else { 0.0 },
            };
            Ok(LocalTimeEstimate {
                diagonal: row(d, p.nf() * t.sqrt()),
                vertex: row(v, micro.ln()),
                crossings,
            })
        })
        .collect()
}

/// `int_0^t P_{x0}(Z_s in target) ds` on a finite chain.
pub fn occupation_integral(chain: &FiniteChain, x0: Point, target: &TargetSet, t: f64) -> Result<f64> {
    let i = chain.state_index(x0).ok_or_else(|| invalid("x0", "not a state of the chain"))?;
    let row = chain.occupation_row(i, t)?;
    let vals: Vec<f64> = chain.states().iter().zip(&row).filter(|(u, _)| target.contains(**u)).map(|(_, v)| *v).collect();
    Ok(pairwise_sum(&vals))
}

/// `n int_0^t P_x(X_{s n^2} in {0, 1}) ds` for the slow walk.
pub fn slow_bond_occupation(p: &ModelParams, x: Site, t: f64) -> Result<f64> {
    let micro = t * p.nf() * p.nf();
    let m = x.abs() + 2 + (p.nf() * (1.0 + 6.0 * (2.0 * t).sqrt())).ceil() as Site;
    let chain = FiniteChain::line(WalkKind::Slow1d, p, Window1D::symmetric(m)?)?;
    let v = occupation_integral(&chain, Point::new(x, 0), &TargetSet::sites_1d([0, 1]), micro)?;
    Ok(v / p.nf())
}

/// `int_0^t P_0(X_s = 0) ds` for the rate-2 simple walk.
pub fn simple_walk_origin_occupation(t: f64) -> Result<f64> {
    let m = 2 + (12.0 * (2.0 * t).sqrt() + 20.0).ceil() as Site;
    let p = ModelParams::new(1, 1.0, t)?;
    let chain = FiniteChain::line(WalkKind::Simple1dRate2, &p, Window1D::symmetric(m)?)?;
    occupation_integral(&chain, Point::new(0, 0), &TargetSet::site(0), t)
}
