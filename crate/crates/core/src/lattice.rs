//! Lattices, windows, jump rates and the two discrete generators.
//!
//! Sites are `i64`. The slow bond is `{0, 1}`; in one dimension bond `b`
//! joins `b` and `b + 1`. The two-dimensional walk lives on
//! `V = {(x, y) : y >= x + 1}` and moves one coordinate at a time; a move of
//! either coordinate across bond `b` has rate `xi(b)`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub type Site = i64;

/// Scaling parameter, slow-bond strength and macroscopic horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams", into = "RawParams")]
pub struct ModelParams {
    n: u32,
    alpha: f64,
    horizon: f64,
}

#[derive(Serialize, Deserialize)]
struct RawParams {
    n: u32,
    alpha: f64,
    #[serde(rename = "T")]
    horizon: f64,
}

impl TryFrom<RawParams> for ModelParams {
    type Error = Error;
    fn try_from(r: RawParams) -> Result<Self> {
        ModelParams::new(r.n, r.alpha, r.horizon)
    }
}

impl From<ModelParams> for RawParams {
    fn from(p: ModelParams) -> Self {
        RawParams { n: p.n, alpha: p.alpha, horizon: p.horizon }
    }
}

impl ModelParams {
    pub fn new(n: u32, alpha: f64, horizon: f64) -> Result<Self> {
        if n < 1 {
            return Err(invalid("n", "must be at least 1"));
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(invalid("alpha", format!("must be positive and finite, got {alpha}")));
        }
        if !(horizon >= 0.0 && horizon.is_finite()) {
            return Err(invalid("T", format!("must be nonnegative, got {horizon}")));
        }
        Ok(ModelParams { n, alpha, horizon })
    }

    /// The degenerate model with a closed bond (`alpha = 0`). Only the
    /// simulators accept it; analytic objects divide by `alpha`.
    pub fn blocked(n: u32, horizon: f64) -> Result<Self> {
        let mut p = ModelParams::new(n, 1.0, horizon)?;
        p.alpha = 0.0;
        Ok(p)
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn nf(&self) -> f64 {
        self.n as f64
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn with_horizon(self, horizon: f64) -> Result<Self> {
        ModelParams::new(self.n, self.alpha.max(f64::MIN_POSITIVE), horizon)
            .map(|p| ModelParams { alpha: self.alpha, ..p })
    }

    /// Rate of the slow bond, `alpha / n`.
    pub fn slow_rate(&self) -> f64 {
        self.alpha / self.nf()
    }
}

/// Exchange rate of bond `{x, x+1}`.
pub fn bond_rate_1d(x: Site, p: &ModelParams) -> f64 {
    if x == 0 {
        p.slow_rate()
    } else {
        1.0
    }
}

/// Whether an edge carries the slow rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeClass {
    Normal,
    Slow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Point {
    pub x: Site,
    pub y: Site,
}

impl Point {
    pub const fn new(x: Site, y: Site) -> Self {
        Point { x, y }
    }

    pub fn in_v(self) -> bool {
        self.y > self.x
    }

    pub fn on_diagonal(self) -> bool {
        self.y == self.x + 1
    }

    pub fn is_vertex(self) -> bool {
        self == VERTEX
    }

    /// The four lattice neighbours, in the order right, left, up, down.
    pub fn neighbours(self) -> [Point; 4] {
        [
            Point::new(self.x + 1, self.y),
            Point::new(self.x - 1, self.y),
            Point::new(self.x, self.y + 1),
            Point::new(self.x, self.y - 1),
        ]
    }
}

impl std::fmt::Display for Point {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

/// The corner of `V` next to both slow bonds.
pub const VERTEX: Point = Point::new(0, 1);

/// Bond crossed by a nearest-neighbour step `u -> v`, if any.
pub fn crossed_bond(u: Point, v: Point) -> Option<Site> {
    match ((v.x - u.x).abs(), (v.y - u.y).abs()) {
        (1, 0) => Some(u.x.min(v.x)),
        (0, 1) => Some(u.y.min(v.y)),
        _ => None,
    }
}

pub fn edge_class_2d(u: Point, v: Point) -> Option<EdgeClass> {
    if !u.in_v() || !v.in_v() {
        return None;
    }
    crossed_bond(u, v).map(|b| if b == 0 { EdgeClass::Slow } else { EdgeClass::Normal })
}

/// Rate of the move `u -> v` for the walk generated by `B_n`.
pub fn bond_rate_2d(u: Point, v: Point, p: &ModelParams) -> f64 {
    match edge_class_2d(u, v) {
        None => 0.0,
        Some(EdgeClass::Slow) => p.slow_rate(),
        Some(EdgeClass::Normal) => 1.0,
    }
}

/// `A_n f(x)` for a partially defined `f`; `None` marks a site outside the
/// domain of `f`.
pub fn apply_generator_1d<F>(f: F, x: Site, p: &ModelParams) -> Result<f64>
where
    F: Fn(Site) -> Option<f64>,
{
    let get = |s: Site| {
        f(s).ok_or_else(|| Error::Truncation { site: s.to_string(), lo: x - 1, hi: x + 1 })
    };
    let fx = get(x)?;
    Ok(bond_rate_1d(x, p) * (get(x + 1)? - fx) + bond_rate_1d(x - 1, p) * (get(x - 1)? - fx))
}

/// `B_n phi(u)`; only neighbours inside `V` contribute.
pub fn apply_generator_2d<F>(phi: F, u: Point, p: &ModelParams) -> Result<f64>
where
    F: Fn(Point) -> Option<f64>,
{
    let trunc = |s: Point| Error::Truncation { site: s.to_string(), lo: u.x - 1, hi: u.y + 1 };
    let pu = phi(u).ok_or_else(|| trunc(u))?;
    let mut acc = 0.0;
    for v in u.neighbours() {
        let c = bond_rate_2d(u, v, p);
        if c > 0.0 {
            acc += c * (phi(v).ok_or_else(|| trunc(v))? - pu);
        }
    }
    Ok(acc)
}

/// A finite interval `[lo, hi]` of sites containing the slow bond.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window1D {
    lo: Site,
    hi: Site,
}

impl Window1D {
    pub fn new(lo: Site, hi: Site) -> Result<Self> {
        if lo > 0 || hi < 1 {
            return Err(invalid("window", format!("[{lo}, {hi}] must contain the bond {{0, 1}}")));
        }
        if hi - lo + 1 < 4 {
            return Err(invalid("window", format!("[{lo}, {hi}] is narrower than 4 sites")));
        }
        Ok(Window1D { lo, hi })
    }

    /// `[1 - m, m]`, which is mapped onto itself by `x -> 1 - x`.
    pub fn symmetric(m: Site) -> Result<Self> {
        Window1D::new(1 - m, m)
    }

    /// Symmetric window of half-width `n (interest + 6 sqrt(2T))`.
    pub fn for_horizon(n: u32, interest: f64, horizon: f64) -> Result<Self> {
        let m = tail_radius(n, interest, horizon).max(2);
        Window1D::symmetric(m)
    }

    pub fn lo(&self) -> Site {
        self.lo
    }

    pub fn hi(&self) -> Site {
        self.hi
    }

    pub fn len(&self) -> usize {
        (self.hi - self.lo + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, x: Site) -> bool {
        (self.lo..=self.hi).contains(&x)
    }

    pub fn index(&self, x: Site) -> Option<usize> {
        self.contains(x).then(|| (x - self.lo) as usize)
    }

    pub fn site(&self, i: usize) -> Site {
        self.lo + i as Site
    }

    pub fn sites(&self) -> impl Iterator<Item = Site> + Clone {
        self.lo..=self.hi
    }

    /// Index of site 0.
    pub fn origin(&self) -> usize {
        (-self.lo) as usize
    }
}

/// Radius `ceil(n (interest + 6 sqrt(2T)))` of the Gaussian tail rule.
pub fn tail_radius(n: u32, interest: f64, horizon: f64) -> Site {
    (n as f64 * (interest + 6.0 * (2.0 * horizon).sqrt())).ceil() as Site
}

/// `V` truncated to `[-L, L]^2`, stored row by row: row `x` holds
/// `y = x+1 ..= L`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowV {
    radius: Site,
    #[serde(skip)]
    offsets: Vec<usize>,
}

impl WindowV {
    pub fn new(radius: Site) -> Result<Self> {
        if radius < 2 {
            return Err(invalid("L", format!("radius {radius} must be at least 2")));
        }
        let mut offsets = Vec::with_capacity(2 * radius as usize + 1);
        let mut acc = 0usize;
        for x in -radius..=radius {
            offsets.push(acc);
            acc += (radius - x) as usize;
        }
        Ok(WindowV { radius, offsets })
    }

    pub fn for_horizon(n: u32, interest: f64, horizon: f64) -> Result<Self> {
        WindowV::new(tail_radius(n, interest, horizon).max(2))
    }

    pub fn radius(&self) -> Site {
        self.radius
    }

    pub fn len(&self) -> usize {
        let l = self.radius as usize;
        l * (2 * l + 1)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, u: Point) -> bool {
        u.in_v() && u.x >= -self.radius && u.y <= self.radius
    }

    pub(crate) fn row_offset(&self, x: Site) -> usize {
        self.offsets[(x + self.radius) as usize]
    }

    pub fn index(&self, u: Point) -> Option<usize> {
        self.contains(u).then(|| self.row_offset(u.x) + (u.y - u.x - 1) as usize)
    }

    pub fn points(&self) -> impl Iterator<Item = Point> + '_ {
        let l = self.radius;
        (-l..l).flat_map(move |x| (x + 1..=l).map(move |y| Point::new(x, y)))
    }

    pub fn diagonal(&self) -> impl Iterator<Item = Point> + '_ {
        (-self.radius..self.radius).map(|x| Point::new(x, x + 1))
    }

    pub fn point(&self, i: usize) -> Point {
        let r = self.offsets.partition_point(|&o| o <= i) - 1;
        let x = r as Site - self.radius;
        Point::new(x, x + 1 + (i - self.offsets[r]) as Site)
    }
}

/// `A_n` on a window with reflecting ends, as a reusable stencil.
#[derive(Debug, Clone)]
pub struct Generator1D {
    window: Window1D,
    /// `right[i]` is the rate of the bond between sites `i` and `i + 1`.
    right: Vec<f64>,
}

impl Generator1D {
    pub fn new(window: Window1D, p: &ModelParams) -> Self {
        let mut right: Vec<f64> = window.sites().map(|x| bond_rate_1d(x, p)).collect();
        *right.last_mut().expect("window is nonempty") = 0.0;
        Generator1D { window, right }
    }

    pub fn window(&self) -> Window1D {
        self.window
    }

    /// `out = scale * A_n f`.
    pub fn apply(&self, f: &[f64], out: &mut [f64], scale: f64) {
        let m = f.len();
        debug_assert_eq!(m, self.right.len());
        debug_assert_eq!(m, out.len());
        let r = &self.right;
        out[0] = scale * r[0] * (f[1] - f[0]);
        for i in 1..m - 1 {
            out[i] = scale * (r[i] * (f[i + 1] - f[i]) + r[i - 1] * (f[i - 1] - f[i]));
        }
        out[m - 1] = scale * r[m - 2] * (f[m - 2] - f[m - 1]);
    }
}

/// `B_n` on the packed window of `V` with reflecting truncation.
#[derive(Debug, Clone)]
pub struct Generator2D {
    window: WindowV,
    /// `xi[b + L]` for bonds `b = -L ..= L`; the last entry closes the window.
    xi: Vec<f64>,
}

impl Generator2D {
    pub fn new(window: WindowV, p: &ModelParams) -> Self {
        let l = window.radius();
        let mut xi: Vec<f64> = (-l..=l).map(|b| bond_rate_1d(b, p)).collect();
        *xi.last_mut().expect("nonempty") = 0.0;
        Generator2D { window, xi }
    }

    pub fn window(&self) -> &WindowV {
        &self.window
    }

    /// `out = scale * B_n phi + source`, where `source` is added only on the
    /// diagonal (`source[x + L]` belongs to `(x, x + 1)`). Returns nothing;
    /// the caller owns all buffers.
    pub fn apply(&self, phi: &[f64], out: &mut [f64], scale: f64, diag_source: Option<&[f64]>) {
        let l = self.window.radius();
        let xi = &self.xi;
        let rate = |b: Site| xi[(b + l) as usize];
        for x in -l..l {
            let row = self.window.row_offset(x);
            let len = (l - x) as usize;
            let rr = rate(x);
            let rl = if x > -l { rate(x - 1) } else { 0.0 };
            // (x-1, y) sits at left + (y - x); (x+1, y) sits at right + (y - x - 2).
            let left = if x > -l { self.window.row_offset(x - 1) + 1 } else { 0 };
            let right = if x + 1 < l { self.window.row_offset(x + 1) } else { 0 };
            for j in 0..len {
                let y = x + 1 + j as Site;
                let k = row + j;
                let p = phi[k];
                let mut acc = 0.0;
                if j > 0 {
                    acc += rate(y - 1) * (phi[k - 1] - p);
                    acc += rr * (phi[right + j - 1] - p);
                }
                if y < l {
                    acc += rate(y) * (phi[k + 1] - p);
                }
                if x > -l {
                    acc += rl * (phi[left + j] - p);
                }
                out[k] = scale * acc;
            }
            if let Some(src) = diag_source {
                out[row] += src[(x + l) as usize];
            }
        }
    }
}
