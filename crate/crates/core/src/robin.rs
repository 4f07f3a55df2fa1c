//! Test functions with Robin compatibility at the origin, the Robin heat
//! semigroup, the macroscopic density and the Ornstein–Uhlenbeck variance.
//!
//! The odd part of the initial datum evolves with the half-line Robin
//! Green function `G(u-y) + G(u+y) - 2b int_0^inf e^{-b s} G(u+y+s) ds`,
//! `b = 2 alpha`, whose last term is `b e^{-(u+y)^2/4t} erfcx((u+y+2bt)/(2 sqrt t))`.
//! The even part evolves by plain Gaussian convolution.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::profile::{chi, InitialProfile, RealFn};
use crate::quad::{integrate, Tolerance};
use crate::special::erfcx;

const FRAC_1_SQRT_PI: f64 = 0.564_189_583_547_756_3;

/// `P(u - c) exp(-(u - c)^2 / (2 s^2))` with `P` in monomial form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussPoly {
    pub center: f64,
    pub width: f64,
    pub coeffs: Vec<f64>,
}

impl GaussPoly {
    pub fn eval(&self, u: f64) -> f64 {
        let z = u - self.center;
        let p = self.coeffs.iter().rev().fold(0.0, |acc, c| acc * z + c);
        p * (-0.5 * z * z / (self.width * self.width)).exp()
    }

    /// `d/du`: the polynomial becomes `P' - z P / s^2`.
    pub fn derivative(&self) -> GaussPoly {
        let inv = 1.0 / (self.width * self.width);
        let mut c = vec![0.0; self.coeffs.len() + 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            if i > 0 {
                c[i - 1] += i as f64 * a;
            }
            c[i + 1] -= a * inv;
        }
        while c.len() > 1 && *c.last().expect("nonempty") == 0.0 {
            c.pop();
        }
        GaussPoly { center: self.center, width: self.width, coeffs: c }
    }
}

/// A finite sum of [`GaussPoly`] terms.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Piece(pub Vec<GaussPoly>);

impl Piece {
    pub fn eval(&self, u: f64) -> f64 {
        self.0.iter().map(|g| g.eval(u)).sum()
    }

    pub fn derivative(&self) -> Piece {
        Piece(self.0.iter().map(GaussPoly::derivative).collect())
    }

    pub fn nth_derivative(&self, k: usize) -> Piece {
        (0..k).fold(self.clone(), |p, _| p.derivative())
    }

    fn reach(&self) -> f64 {
        self.0.iter().map(|g| g.center.abs() + g.width).fold(0.0, f64::max)
    }
}

/// Gaussian bump `amplitude exp(-(u - center)^2 / (2 width^2))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bump {
    pub amplitude: f64,
    pub center: f64,
    pub width: f64,
}

/// Shape of a test function: a smooth base made of bumps plus one-sided
/// corrections of the given width that enforce the conditions at 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShapeParams {
    pub bumps: Vec<Bump>,
    #[serde(default = "default_correction_width")]
    pub correction_width: f64,
    /// Highest polynomial degree allowed in the corrections.
    #[serde(default)]
    pub max_degree: Option<usize>,
}

fn default_correction_width() -> f64 {
    1.0
}

impl Default for ShapeParams {
    fn default() -> Self {
        ShapeParams {
            bumps: vec![Bump { amplitude: 1.0, center: 0.0, width: 1.0 }],
            correction_width: 1.0,
            max_degree: None,
        }
    }
}

/// Serializable description of a test function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestFunctionSpec {
    pub jump: f64,
    #[serde(default)]
    pub shape: ShapeParams,
    #[serde(default = "default_order")]
    pub order: usize,
}

fn default_order() -> usize {
    1
}

impl TestFunctionSpec {
    pub fn build(&self, alpha: f64) -> Result<TestFunction> {
        make_test_function(self.jump, &self.shape, alpha, self.order)
    }
}

/// A member of the test space, stored as two one-sided pieces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestFunction {
    alpha: f64,
    jump: f64,
    order: usize,
    left: Piece,
    right: Piece,
    /// One-sided derivatives at 0, orders `0 ..= order + 1`.
    left_derivs: Vec<f64>,
    right_derivs: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

/// Derivatives at 0 of `exp(-u^2 / (2 s^2))`.
fn gaussian_derivs_at_zero(s: f64, count: usize) -> Vec<f64> {
    (0..count)
        .map(|j| {
            if j % 2 == 1 {
                return 0.0;
            }
            let k = j / 2;
            let mut v = if k % 2 == 0 { 1.0 } else { -1.0 };
            // (2k)! / (k! 2^k) = (2k - 1)!!
            for i in 1..=k {
                v *= (2 * i - 1) as f64;
            }
            v / s.powi(2 * k as i32)
        })
        .collect()
}

/// Polynomial `P` with `(P g)^{(j)}(0) = d[j]` for the Gaussian `g` of width `s`.
fn fit_correction(d: &[f64], s: f64) -> Vec<f64> {
    let g = gaussian_derivs_at_zero(s, d.len());
    let mut p = vec![0.0; d.len()];
    let mut binom = vec![1.0f64];
    let mut fact = 1.0f64;
    for j in 0..d.len() {
        if j > 0 {
            let mut next = vec![1.0; j + 1];
            for i in 1..j {
                next[i] = binom[i - 1] + binom[i];
            }
            binom = next;
            fact *= j as f64;
        }
        // (P g)^{(j)}(0) = sum_i C(j, i) i! p_i g^{(j-i)}(0)
        let mut known = 0.0;
        let mut ifact = 1.0;
        for i in 0..j {
            if i > 0 {
                ifact *= i as f64;
            }
            known += binom[i] * ifact * p[i] * g[j - i];
        }
        p[j] = (d[j] - known) / fact;
    }
    p
}

/// Builds `f = b + q_-` on `u <= 0` and `f = b + q_+` on `u > 0`, where `b`
/// is the bump sum and `q_+-` are polynomial-times-Gaussian corrections
/// chosen so that `f(0+) - f(0-) = jump` and the Robin conditions hold up to
/// derivative order `2m + 1`, `m = (order - 1) / 2`.
pub fn make_test_function(jump: f64, shape: &ShapeParams, alpha: f64, order: usize) -> Result<TestFunction> {
    if order < 1 {
        return Err(invalid("order", "must be at least 1"));
    }
    if !(alpha > 0.0) {
        return Err(invalid("alpha", "must be positive"));
    }
    let s = shape.correction_width;
    if !(s > 0.0) || shape.bumps.iter().any(|b| !(b.width > 0.0)) {
        return Err(invalid("shape", "widths must be positive"));
    }
    let m = (order - 1) / 2;
    let needed = 2 * m + 2;
    if let Some(deg) = shape.max_degree {
        if deg + 1 < needed {
            return Err(Error::Infeasible(format!(
                "{needed} derivative constraints at 0 need polynomial degree {}, shape allows {deg}",
                needed - 1
            )));
        }
    }
    let base = Piece(
        shape
            .bumps
            .iter()
            .map(|b| GaussPoly { center: b.center, width: b.width, coeffs: vec![b.amplitude] })
            .collect(),
    );
    let base_d: Vec<f64> = (0..needed + 1).map(|k| base.nth_derivative(k).eval(0.0)).collect();

    let slope = alpha * jump - base_d[1];
    let mut dl = vec![0.0; needed];
    let mut dr = vec![0.0; needed];
    dl[1] = slope;
    dr[0] = jump;
    dr[1] = slope;
    for k in 1..=m {
        dr[2 * k] = base_d[2 * k + 1] / alpha;
    }
    let correction = |d: &[f64]| GaussPoly { center: 0.0, width: s, coeffs: fit_correction(d, s) };
    let mut left = base.clone();
    left.0.push(correction(&dl));
    let mut right = base;
    right.0.push(correction(&dr));
    Ok(TestFunction::from_pieces(alpha, jump, order, left, right))
}

impl TestFunction {
    fn from_pieces(alpha: f64, jump: f64, order: usize, left: Piece, right: Piece) -> Self {
        let derivs = |p: &Piece| (0..=order + 1).map(|k| p.nth_derivative(k).eval(0.0)).collect();
        let left_derivs = derivs(&left);
        let right_derivs = derivs(&right);
        TestFunction { alpha, jump, order, left, right, left_derivs, right_derivs }
    }

    pub fn zero(alpha: f64) -> Self {
        TestFunction::from_pieces(alpha, 0.0, 1, Piece::default(), Piece::default())
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn jump(&self) -> f64 {
        self.jump
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn is_zero(&self) -> bool {
        self.left.0.is_empty() && self.right.0.is_empty()
    }

    /// Recorded `f^{(k)}(0-)` and `f^{(k)}(0+)` for `k <= order + 1`.
    pub fn derivs_at_zero(&self, k: usize) -> (f64, f64) {
        (self.left_derivs[k], self.right_derivs[k])
    }

    fn piece(&self, u: f64) -> &Piece {
        if u <= 0.0 {
            &self.left
        } else {
            &self.right
        }
    }

    /// `f(u)`, left-continuous at 0.
    pub fn value(&self, u: f64) -> f64 {
        self.piece(u).eval(u)
    }

    /// `f^{(k)}(u)` for `u != 0`; at 0 the left value.
    pub fn derivative(&self, k: usize, u: f64) -> f64 {
        self.piece(u).nth_derivative(k).eval(u)
    }

    pub fn derivative_side(&self, k: usize, side: Side) -> f64 {
        match side {
            Side::Left => self.left.nth_derivative(k).eval(0.0),
            Side::Right => self.right.nth_derivative(k).eval(0.0),
        }
    }

    /// `Delta_alpha f(u)`; at 0 the right limit.
    pub fn robin_laplacian(&self, u: f64) -> f64 {
        if u == 0.0 {
            self.right.nth_derivative(2).eval(0.0)
        } else {
            self.derivative(2, u)
        }
    }

    /// `nabla_alpha f(u)`; at 0 the right limit.
    pub fn robin_gradient(&self, u: f64) -> f64 {
        if u == 0.0 {
            self.right.derivative().eval(0.0)
        } else {
            self.derivative(1, u)
        }
    }

    /// Largest violation of the compatibility conditions for `k <= m`.
    pub fn compatibility_residual(&self) -> f64 {
        let m = (self.order - 1) / 2;
        let a = self.alpha;
        let mut worst: f64 = 0.0;
        for k in 0..=m {
            let (l_odd, r_odd) = (self.derivative_side(2 * k + 1, Side::Left), self.derivative_side(2 * k + 1, Side::Right));
            let (l_even, r_even) = (self.derivative_side(2 * k, Side::Left), self.derivative_side(2 * k, Side::Right));
            let target = a * (r_even - l_even);
            worst = worst.max((r_odd - target).abs()).max((l_odd - target).abs());
        }
        worst
    }

    /// Radius beyond which `f` and its first two derivatives stay below `eps`.
    pub fn support_radius(&self, eps: f64) -> f64 {
        let mut r = self.left.reach().max(self.right.reach()).max(1.0);
        loop {
            let tail = (0..=40).map(|i| r + 0.25 * i as f64).all(|u| {
                (0..3).all(|k| self.derivative(k, u).abs() < eps && self.derivative(k, -u).abs() < eps)
            });
            if tail {
                return r;
            }
            r += 1.0;
        }
    }

    /// `||f||_{k, l} = sup_{u != 0} (1 + |u|^l) |f^{(k)}(u)|`, sampled on a grid
    /// out to where the Gaussian tail bounds the rest.
    pub fn decay_norm(&self, k: usize, l: i32) -> f64 {
        let r = self.support_radius(1e-30) + 10.0;
        let steps = 20_000;
        (0..=steps)
            .flat_map(|i| {
                let u = r * (i as f64 + 0.5) / steps as f64;
                [u, -u]
            })
            .map(|u| (1.0 + u.abs().powi(l)) * self.derivative(k, u).abs())
            .fold(0.0, f64::max)
    }

    /// Pointwise sum of two test functions with the same `alpha`.
    pub fn add(&self, other: &TestFunction) -> Result<TestFunction> {
        if self.alpha != other.alpha {
            return Err(invalid("alpha", "summands must share alpha"));
        }
        let mut left = self.left.clone();
        left.0.extend(other.left.0.iter().cloned());
        let mut right = self.right.clone();
        right.0.extend(other.right.0.iter().cloned());
        Ok(TestFunction::from_pieces(self.alpha, self.jump + other.jump, self.order.min(other.order), left, right))
    }

    pub fn scale(&self, c: f64) -> TestFunction {
        let sc = |p: &Piece| {
            Piece(p.0.iter().map(|g| GaussPoly { coeffs: g.coeffs.iter().map(|a| a * c).collect(), ..g.clone() }).collect())
        };
        TestFunction::from_pieces(self.alpha, self.jump * c, self.order, sc(&self.left), sc(&self.right))
    }
}

impl RealFn for TestFunction {
    fn eval(&self, u: f64) -> f64 {
        self.value(u)
    }

    fn right_of_zero(&self) -> f64 {
        self.right_derivs[0]
    }
}

/// The Robin heat semigroup with parameter `alpha`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobinSemigroup {
    alpha: f64,
    tol: Tolerance,
}

fn gauss(z: f64, t: f64) -> f64 {
    (-z * z / (4.0 * t)).exp() / (4.0 * std::f64::consts::PI * t).sqrt()
}

/// Half-width of the Gaussian truncation, `8 sqrt(2t)`.
pub fn kernel_reach(t: f64) -> f64 {
    8.0 * (2.0 * t).sqrt()
}

impl RobinSemigroup {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(invalid("alpha", "must be positive"));
        }
        Ok(RobinSemigroup { alpha, tol: Tolerance { abs: 1e-12, rel: 1e-12, max_intervals: 400 } })
    }

    pub fn with_tolerance(mut self, tol: Tolerance) -> Self {
        self.tol = tol;
        self
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// `T_t g` or its `u`-derivative at `v = |u| >= 0` on side `sign`.
    fn kernel_integral<F: RealFn + ?Sized>(&self, g: &F, t: f64, v: f64, sign: f64, deriv: bool) -> Result<f64> {
        let b = 2.0 * self.alpha;
        let rt = t.sqrt();
        let reach = kernel_reach(t);
        let lo = (v - reach).max(0.0);
        let hi = v + reach;
        let integrand = |y: f64| {
            let same = g.eval(sign * y);
            let other = g.eval(-sign * y);
            let a = v + y;
            let w = (a + 2.0 * b * t) / (2.0 * rt);
            let ea = (-a * a / (4.0 * t)).exp();
            if deriv {
                let gm = gauss(v - y, t);
                let gp = gauss(v + y, t);
                let d_even = -(v - y) / (2.0 * t) * gm - (v + y) / (2.0 * t) * gp;
                let d_robin = ea * (b * erfcx(w) - FRAC_1_SQRT_PI / rt);
                d_even * same - 0.5 * b * d_robin * (same - other)
            } else {
                (gauss(v - y, t) + gauss(v + y, t)) * same - 0.5 * b * ea * erfcx(w) * (same - other)
            }
        };
        let val = integrate(integrand, lo, hi, &[v], self.tol)?;
        Ok(if deriv { sign * val } else { val })
    }

    /// `T_t g(u)`; at `u = 0` the left limit.
    pub fn apply<F: RealFn + ?Sized>(&self, g: &F, t: f64, u: f64) -> Result<f64> {
        self.apply_side(g, t, u, if u > 0.0 { Side::Right } else { Side::Left })
    }

    /// One-sided value; `side` matters only at `u = 0`.
    pub fn apply_side<F: RealFn + ?Sized>(&self, g: &F, t: f64, u: f64, side: Side) -> Result<f64> {
        if t < 0.0 {
            return Err(invalid("t", "must be nonnegative"));
        }
        let sign = if u > 0.0 || (u == 0.0 && side == Side::Right) { 1.0 } else { -1.0 };
        if t == 0.0 {
            return Ok(if u == 0.0 && sign > 0.0 { g.right_of_zero() } else { g.eval(u) });
        }
        self.kernel_integral(g, t, u.abs(), sign, false)
    }

    /// `d/du T_t g(u)` for `t > 0`; at `u = 0` the right limit.
    pub fn gradient<F: RealFn + ?Sized>(&self, g: &F, t: f64, u: f64) -> Result<f64> {
        self.gradient_side(g, t, u, if u < 0.0 { Side::Left } else { Side::Right })
    }

    pub fn gradient_side<F: RealFn + ?Sized>(&self, g: &F, t: f64, u: f64, side: Side) -> Result<f64> {
        if !(t > 0.0) {
            return Err(invalid("t", "gradient of the semigroup needs t > 0"));
        }
        let sign = if u > 0.0 || (u == 0.0 && side == Side::Right) { 1.0 } else { -1.0 };
        self.kernel_integral(g, t, u.abs(), sign, true)
    }

    /// `max |T_{t+s} g - T_t T_s g|` over the probe points.
    pub fn semigroup_property_check<F: RealFn + ?Sized>(&self, g: &F, s: f64, t: f64, probes: &[f64]) -> Result<f64> {
        if s == 0.0 {
            return Ok(0.0);
        }
        let inner = Evolved { semigroup: *self, g, tau: s };
        let mut worst: f64 = 0.0;
        for &u in probes {
            let direct = self.apply(g, t + s, u)?;
            let composed = self.apply(&inner, t, u)?;
            worst = worst.max((direct - composed).abs());
        }
        Ok(worst)
    }

    /// `d/du T_t g(0+) - alpha (T_t g(0+) - T_t g(0-))`.
    pub fn robin_residual<F: RealFn + ?Sized>(&self, g: &F, t: f64) -> Result<f64> {
        let right = self.apply_side(g, t, 0.0, Side::Right)?;
        let left = self.apply_side(g, t, 0.0, Side::Left)?;
        let dr = self.gradient_side(g, t, 0.0, Side::Right)?;
        let dl = self.gradient_side(g, t, 0.0, Side::Left)?;
        let jump = self.alpha * (right - left);
        Ok((dr - jump).abs().max((dl - jump).abs()))
    }

    /// `int T_t g du` over `[-radius, radius]`.
    pub fn mass<F: RealFn + ?Sized>(&self, g: &F, t: f64, radius: f64) -> Result<f64> {
        let tol = Tolerance { abs: 1e-11, rel: 1e-11, max_intervals: 2000 };
        let f = |u: f64| self.apply(g, t, u).unwrap_or(f64::NAN);
        let v = integrate(f, -radius, radius, &[0.0], tol)?;
        if v.is_nan() {
            return Err(Error::Quadrature { achieved: f64::NAN, tolerance: tol.abs });
        }
        Ok(v)
    }
}

/// `T_tau g`, evaluated lazily by quadrature.
pub struct Evolved<'a, F: RealFn + ?Sized> {
    pub semigroup: RobinSemigroup,
    pub g: &'a F,
    pub tau: f64,
}

impl<F: RealFn + ?Sized> RealFn for Evolved<'_, F> {
    fn eval(&self, u: f64) -> f64 {
        self.semigroup.apply(self.g, self.tau, u).unwrap_or(f64::NAN)
    }

    fn right_of_zero(&self) -> f64 {
        self.semigroup.apply_side(self.g, self.tau, 0.0, Side::Right).unwrap_or(f64::NAN)
    }
}

/// The macroscopic density `rho(t, .) = T_t rho_0`.
#[derive(Debug, Clone)]
pub struct MacroProfile {
    pub initial: InitialProfile,
    semigroup: RobinSemigroup,
}

impl MacroProfile {
    pub fn new(initial: InitialProfile, alpha: f64) -> Result<Self> {
        initial.validate()?;
        Ok(MacroProfile { initial, semigroup: RobinSemigroup::new(alpha)? })
    }

    pub fn alpha(&self) -> f64 {
        self.semigroup.alpha
    }

    pub fn semigroup(&self) -> &RobinSemigroup {
        &self.semigroup
    }

    /// `rho(t, u)`; constants are returned as is since `T_t` fixes them.
    pub fn value(&self, t: f64, u: f64) -> Result<f64> {
        if let InitialProfile::Constant { value } = self.initial {
            return Ok(value);
        }
        self.semigroup.apply(&self.initial, t, u)
    }

    pub fn value_side(&self, t: f64, u: f64, side: Side) -> Result<f64> {
        if let InitialProfile::Constant { value } = self.initial {
            return Ok(value);
        }
        self.semigroup.apply_side(&self.initial, t, u, side)
    }

    /// The measure `2 chi(rho_t(u)) du + atom delta_0` at time `t`.
    pub fn measure(&self, t: f64) -> Result<WeightedMeasure> {
        let l = self.value_side(t, 0.0, Side::Left)?;
        let r = self.value_side(t, 0.0, Side::Right)?;
        let atom = (l * (1.0 - r) + r * (1.0 - l)) / self.alpha();
        Ok(WeightedMeasure { profile: self.clone(), t, atom })
    }
}

/// Evaluates `rho_0` under the Robin semigroup at one point.
pub fn solve_macroscopic(rho0: &InitialProfile, t: f64, u: f64, alpha: f64) -> Result<f64> {
    MacroProfile::new(rho0.clone(), alpha)?.value(t, u)
}

/// `Lambda_t(du) = 2 chi(rho_t(u)) du + atom delta_0(du)`.
#[derive(Debug, Clone)]
pub struct WeightedMeasure {
    profile: MacroProfile,
    pub t: f64,
    pub atom: f64,
}

impl WeightedMeasure {
    pub fn density(&self, u: f64) -> Result<f64> {
        Ok(2.0 * chi(self.profile.value(self.t, u)?))
    }

    /// `int grad(u)^2 Lambda_t(du)` over `[-radius, radius]`, where `grad0`
    /// is the common one-sided value at 0.
    pub fn norm_sq<G>(&self, grad: G, grad0: f64, radius: f64, tol: Tolerance) -> Result<f64>
    where
        G: Fn(f64) -> Result<f64>,
    {
        let f = |u: f64| match (grad(u), self.density(u)) {
            (Ok(g), Ok(d)) => d * g * g,
            _ => f64::NAN,
        };
        let bulk = integrate(f, -radius, radius, &[0.0], tol)?;
        if bulk.is_nan() {
            return Err(Error::Quadrature { achieved: f64::NAN, tolerance: tol.abs });
        }
        Ok(bulk + self.atom * grad0 * grad0)
    }
}

/// Both one-sided gradients at 0 must agree (Robin condition); returns the common value.
fn matched_gradient(left: f64, right: f64) -> Result<f64> {
    if (left - right).abs() > 1e-6 * (1.0 + right.abs()) {
        return Err(invalid("f", format!("one-sided gradients at 0 differ: {left} vs {right}")));
    }
    Ok(right)
}

fn inner_tolerance() -> Tolerance {
    Tolerance { abs: 1e-11, rel: 1e-10, max_intervals: 400 }
}

/// `||nabla T_tau f||^2_{rho_r}`.
pub fn evolved_gradient_norm(f: &TestFunction, tau: f64, r: f64, macro_: &MacroProfile) -> Result<f64> {
    gradient_norm(f, tau, r, macro_, true)
}

fn gradient_norm(f: &TestFunction, tau: f64, r: f64, macro_: &MacroProfile, with_atom: bool) -> Result<f64> {
    let sg = RobinSemigroup::new(f.alpha())?.with_tolerance(Tolerance { abs: 1e-13, rel: 1e-12, max_intervals: 400 });
    let mut measure = macro_.measure(r)?;
    if !with_atom {
        measure.atom = 0.0;
    }
    let radius = f.support_radius(1e-13) + kernel_reach(tau);
    if tau <= 0.0 {
        let g0 = matched_gradient(f.derivative_side(1, Side::Left), f.derivative_side(1, Side::Right))?;
        return measure.norm_sq(|u| Ok(f.derivative(1, u)), g0, radius, inner_tolerance());
    }
    let g0 = matched_gradient(
        sg.gradient_side(f, tau, 0.0, Side::Left)?,
        sg.gradient_side(f, tau, 0.0, Side::Right)?,
    )?;
    measure.norm_sq(|u| sg.gradient(f, tau, u), g0, radius, inner_tolerance())
}

/// `int_s^t ||nabla T_{lag + t - r} f||^2_{rho_r} dr`; `lag = 0` gives the
/// conditional variance of the limit field, and a positive lag represents
/// `T_lag f` through the semigroup property.
pub fn ou_variance_lagged(f: &TestFunction, lag: f64, s: f64, t: f64, macro_: &MacroProfile) -> Result<f64> {
    lagged_variance(f, lag, s, t, macro_, true)
}

/// [`ou_variance`] with the point mass at the origin dropped from the measure.
pub fn ou_variance_without_atom(f: &TestFunction, s: f64, t: f64, macro_: &MacroProfile) -> Result<f64> {
    lagged_variance(f, 0.0, s, t, macro_, false)
}

fn lagged_variance(f: &TestFunction, lag: f64, s: f64, t: f64, macro_: &MacroProfile, with_atom: bool) -> Result<f64> {
    if !(0.0 <= s && s <= t) || lag < 0.0 {
        return Err(invalid("s", "need 0 <= s <= t and lag >= 0"));
    }
    if f.is_zero() || s == t {
        return Ok(0.0);
    }
    let outer = Tolerance { abs: 1e-12, rel: 1e-10, max_intervals: 200 };
    let h = |r: f64| gradient_norm(f, lag + t - r, r, macro_, with_atom).unwrap_or(f64::NAN);
    let v = integrate(h, s, t, &[], outer)?;
    if v.is_nan() {
        return Err(Error::Quadrature { achieved: f64::NAN, tolerance: outer.abs });
    }
    Ok(v)
}

/// Conditional variance of `Y_t(f)` given `Y_s`.
pub fn ou_variance(f: &TestFunction, s: f64, t: f64, macro_: &MacroProfile) -> Result<f64> {
    ou_variance_lagged(f, 0.0, s, t, macro_)
}

/// `int_0^t ||nabla f||^2_{rho_r} dr`, the limit of the martingale's quadratic variation.
pub fn qv_prediction(f: &TestFunction, t: f64, macro_: &MacroProfile) -> Result<f64> {
    if f.is_zero() || t == 0.0 {
        return Ok(0.0);
    }
    if macro_.initial.is_constant() {
        return Ok(t * evolved_gradient_norm(f, 0.0, 0.0, macro_)?);
    }
    let outer = Tolerance { abs: 1e-12, rel: 1e-9, max_intervals: 200 };
    let h = |r: f64| evolved_gradient_norm(f, 0.0, r, macro_).unwrap_or(f64::NAN);
    let v = integrate(h, 0.0, t, &[], outer)?;
    if v.is_nan() {
        return Err(Error::Quadrature { achieved: f64::NAN, tolerance: outer.abs });
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn jump_fn(alpha: f64) -> TestFunction {
        let shape = ShapeParams {
            bumps: vec![Bump { amplitude: 1.0, center: 0.4, width: 0.8 }],
            correction_width: 0.7,
            max_degree: None,
        };
        make_test_function(0.5, &shape, alpha, 1).unwrap()
    }

    #[test]
    fn gauss_poly_derivative_matches_finite_difference() {
        let g = GaussPoly { center: 0.3, width: 0.9, coeffs: vec![1.0, -2.0, 0.5] };
        let d = g.derivative();
        for u in [-1.0, 0.1, 2.0] {
            let h = 1e-6;
            let fd = (g.eval(u + h) - g.eval(u - h)) / (2.0 * h);
            assert!((fd - d.eval(u)).abs() < 1e-8);
        }
    }

    #[test]
    fn correction_fit_hits_prescribed_derivatives() {
        let d = [0.3, -1.0, 2.0, 0.0, 0.7, 0.0];
        let p = GaussPoly { center: 0.0, width: 0.6, coeffs: fit_correction(&d, 0.6) };
        let piece = Piece(vec![p]);
        for (k, want) in d.iter().enumerate() {
            let got = piece.nth_derivative(k).eval(0.0);
            assert!((got - want).abs() < 1e-9 * (1.0 + want.abs()), "k={k}: {got} vs {want}");
        }
    }

    #[test]
    fn worked_example_slopes() {
        let f = make_test_function(0.5, &ShapeParams::default(), 2.0, 1).unwrap();
        let (l, r) = f.derivs_at_zero(1);
        assert!((l - 1.0).abs() < 1e-14 && (r - 1.0).abs() < 1e-14);
        let (l0, r0) = f.derivs_at_zero(0);
        assert!((r0 - l0 - 0.5).abs() < 1e-14);
        assert_eq!(f.value(0.0), l0);
    }

    #[test]
    fn zero_jump_gaussian_is_smooth() {
        let f = make_test_function(0.0, &ShapeParams::default(), 1.0, 1).unwrap();
        for k in 0..3 {
            let (l, r) = f.derivs_at_zero(k);
            assert!((l - r).abs() < 1e-14, "k={k}");
        }
        assert!(f.compatibility_residual() < 1e-14);
    }

    #[test]
    fn higher_orders_are_enforced() {
        let shape = ShapeParams {
            bumps: vec![Bump { amplitude: 1.0, center: 0.5, width: 0.6 }, Bump { amplitude: -0.4, center: -1.0, width: 1.2 }],
            correction_width: 0.8,
            max_degree: None,
        };
        for order in [1, 3, 5, 7] {
            let f = make_test_function(-0.3, &shape, 1.7, order).unwrap();
            assert!(f.compatibility_residual() < 1e-9, "order {order}: {}", f.compatibility_residual());
        }
        let capped = ShapeParams { max_degree: Some(2), ..shape.clone() };
        assert!(matches!(make_test_function(0.1, &capped, 1.0, 5), Err(Error::Infeasible(_))));
        assert!(make_test_function(0.1, &shape, 1.0, 0).is_err());
    }

    #[test]
    fn laplacian_and_gradient() {
        let f = make_test_function(0.0, &ShapeParams::default(), 1.0, 1).unwrap();
        // Default shape is exp(-u^2/2); second derivative (u^2 - 1) e^{-u^2/2}.
        assert!((f.robin_laplacian(1.0) - 0.0).abs() < 1e-14);
        assert!((f.robin_laplacian(2.0) - 3.0 * (-2.0f64).exp()).abs() < 1e-14);
        let g = jump_fn(1.0);
        let (l2, r2) = g.derivs_at_zero(2);
        assert!((l2 - r2).abs() > 1e-3);
        assert_eq!(g.robin_laplacian(0.0), r2);
        for u in [-2.0, -0.3, 0.5, 1.5] {
            let h = 1e-5;
            let fd2 = (g.value(u + h) - 2.0 * g.value(u) + g.value(u - h)) / (h * h);
            let fd1 = (g.value(u + h) - g.value(u - h)) / (2.0 * h);
            assert!((fd2 - g.robin_laplacian(u)).abs() < 1e-4);
            assert!((fd1 - g.robin_gradient(u)).abs() < 1e-9);
        }
    }

    #[test]
    fn decay_norm_is_finite() {
        let f = jump_fn(1.0);
        let n02 = f.decay_norm(0, 2);
        assert!(n02.is_finite() && n02 > 0.0);
        assert!(f.decay_norm(2, 4).is_finite());
    }

    #[test]
    fn even_data_is_gaussian_convolution() {
        let sg = RobinSemigroup::new(1.3).unwrap();
        let g = |u: f64| (-u * u).exp();
        for t in [0.01f64, 0.3, 2.0] {
            for u in [-1.5f64, -0.2, 0.0, 0.7, 3.0] {
                let exact = (-u * u / (1.0 + 4.0 * t)).exp() / (1.0 + 4.0 * t).sqrt();
                assert!((sg.apply(&g, t, u).unwrap() - exact).abs() < 1e-10, "t={t} u={u}");
            }
        }
    }

    #[test]
    fn small_time_limit_and_identity() {
        let sg = RobinSemigroup::new(1.0).unwrap();
        let f = jump_fn(1.0);
        assert_eq!(sg.apply(&f, 0.0, 0.3).unwrap(), f.value(0.3));
        for u in [-1.0, 0.5, 2.0] {
            assert!((sg.apply(&f, 1e-6, u).unwrap() - f.value(u)).abs() < 1e-3);
        }
    }

    #[test]
    fn robin_boundary_residual_vanishes() {
        for alpha in [0.2, 1.0, 5.0] {
            let sg = RobinSemigroup::new(alpha).unwrap();
            let f = jump_fn(alpha);
            for t in [0.01, 0.1, 1.0] {
                assert!(sg.robin_residual(&f, t).unwrap() < 1e-8, "alpha={alpha} t={t}");
            }
        }
    }

    /// The two-branch formula with the inner `z` integral done numerically.
    fn literal_formula(g: &dyn Fn(f64) -> f64, alpha: f64, t: f64, u: f64) -> f64 {
        let tol = Tolerance { abs: 1e-13, rel: 1e-12, max_intervals: 2000 };
        let g_even = |y: f64| 0.5 * (g(y) + g(-y));
        let g_odd = |y: f64| 0.5 * (g(y) - g(-y));
        let reach = kernel_reach(t) + u.abs() + 2.0;
        let even = integrate(|y| (-(u - y).powi(2) / (4.0 * t)).exp() * g_even(y), -reach, reach, &[0.0, u], tol).unwrap();
        let bracket = |z: f64, y: f64| {
            (z - y + 4.0 * alpha * t) / (2.0 * t) * (-(z - y).powi(2) / (4.0 * t)).exp()
                + (z + y - 4.0 * alpha * t) / (2.0 * t) * (-(z + y).powi(2) / (4.0 * t)).exp()
        };
        let inner = |z: f64| integrate(|y| bracket(z, y) * g_odd(y), 0.0, reach + z.abs(), &[z.abs()], tol).unwrap();
        let v = u.abs();
        let zmax = v + 40.0 / (2.0 * alpha) + reach;
        let odd = integrate(|z| (-2.0 * alpha * (z - v)).exp() * inner(z), v, zmax, &[], tol).unwrap();
        let sign = if u > 0.0 { 1.0 } else { -1.0 };
        (even + sign * odd) / (4.0 * std::f64::consts::PI * t).sqrt()
    }

    #[test]
    fn closed_kernel_matches_literal_double_integral() {
        let alpha = 0.8;
        let f = jump_fn(alpha);
        let sg = RobinSemigroup::new(alpha).unwrap();
        let g = |u: f64| f.value(u);
        for (t, u) in [(0.1, 0.3), (0.1, -0.4), (0.5, 1.2), (0.5, -0.05)] {
            let a = sg.apply(&f, t, u).unwrap();
            let b = literal_formula(&g, alpha, t, u);
            assert!((a - b).abs() < 1e-8, "t={t} u={u}: {a} vs {b}");
        }
    }

    #[test]
    fn semigroup_composition() {
        let sg = RobinSemigroup::new(1.0).unwrap();
        let f = jump_fn(1.0);
        let err = sg.semigroup_property_check(&f, 0.1, 0.1, &[-1.0, -0.2, 0.0, 0.3, 1.1]).unwrap();
        assert!(err < 1e-8, "{err}");
        assert_eq!(sg.semigroup_property_check(&f, 0.0, 0.1, &[0.5]).unwrap(), 0.0);
    }

    #[test]
    fn mass_is_conserved() {
        let sg = RobinSemigroup::new(0.5).unwrap();
        let f = jump_fn(0.5);
        let r = f.support_radius(1e-14) + kernel_reach(0.3);
        let m0 = integrate(|u| f.value(u), -r, r, &[0.0], Tolerance::default()).unwrap();
        let m1 = sg.mass(&f, 0.3, r).unwrap();
        assert!((m0 - m1).abs() < 1e-8, "{m0} vs {m1}");
    }

    #[test]
    fn macroscopic_profile_properties() {
        let c = solve_macroscopic(&InitialProfile::Constant { value: 0.3 }, 0.2, 0.1, 1.0).unwrap();
        assert_eq!(c, 0.3);
        let sg = RobinSemigroup::new(1.0).unwrap();
        let via_kernel = sg.apply(&InitialProfile::Custom(std::sync::Arc::new(|_| 0.3)), 0.2, 0.1).unwrap();
        assert!((via_kernel - 0.3).abs() < 1e-10);
        let step = InitialProfile::Step { left: 0.5, right: 0.25 };
        let mp = MacroProfile::new(step, 0.1).unwrap();
        let l = mp.value_side(0.05, 0.0, Side::Left).unwrap();
        let r = mp.value_side(0.05, 0.0, Side::Right).unwrap();
        assert!(l - r > 0.0);
        for u in [-2.0, -0.1, 0.0, 0.1, 2.0] {
            let v = mp.value(0.05, u).unwrap();
            assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn ou_variance_basics() {
        let f = jump_fn(1.0);
        let zero = TestFunction::zero(1.0);
        let half = MacroProfile::new(InitialProfile::Constant { value: 0.5 }, 1.0).unwrap();
        let full = MacroProfile::new(InitialProfile::Constant { value: 1.0 }, 1.0).unwrap();
        assert_eq!(ou_variance(&zero, 0.0, 0.2, &half).unwrap(), 0.0);
        assert_eq!(ou_variance(&f, 0.0, 0.2, &full).unwrap(), 0.0);
        let v1 = ou_variance(&f, 0.1, 0.2, &half).unwrap();
        let v2 = ou_variance(&f, 0.1, 0.3, &half).unwrap();
        assert!(v1 > 0.0 && v2 > v1);
    }

    #[test]
    fn ou_variance_is_additive() {
        let f = jump_fn(1.0);
        let half = MacroProfile::new(InitialProfile::Constant { value: 0.5 }, 1.0).unwrap();
        let (s, u, t) = (0.1, 0.15, 0.2);
        let whole = ou_variance(&f, s, t, &half).unwrap();
        let late = ou_variance(&f, u, t, &half).unwrap();
        let early = ou_variance_lagged(&f, t - u, s, u, &half).unwrap();
        assert!((whole - early - late).abs() < 1e-8, "{whole} vs {}", early + late);
    }

    #[test]
    fn atom_share_grows_with_the_jump() {
        let half = MacroProfile::new(InitialProfile::Constant { value: 0.5 }, 1.0).unwrap();
        let share = |jump: f64| {
            let f = make_test_function(jump, &ShapeParams::default(), 1.0, 1).unwrap();
            let with = ou_variance(&f, 0.1, 0.2, &half).unwrap();
            (with - ou_variance_without_atom(&f, 0.1, 0.2, &half).unwrap()) / with
        };
        let (small, large) = (share(0.1), share(2.0));
        assert!(small < 0.02 && large > 0.25, "{small} {large}");
    }

    #[test]
    fn qv_prediction_closed_form_at_equilibrium() {
        // rho = 1/2: t [ (1/2) int f'^2 + (1/(2 alpha)) f'(0)^2 ].
        let alpha = 1.0;
        let f = jump_fn(alpha);
        let half = MacroProfile::new(InitialProfile::Constant { value: 0.5 }, alpha).unwrap();
        let r = f.support_radius(1e-14);
        let bulk = integrate(|u| f.derivative(1, u).powi(2), -r, r, &[0.0], Tolerance::default()).unwrap();
        let g0 = f.derivs_at_zero(1).1;
        let t = 0.1;
        let expected = t * (0.5 * bulk + 0.5 / alpha * g0 * g0);
        assert!((qv_prediction(&f, t, &half).unwrap() - expected).abs() < 1e-10);
    }
}
