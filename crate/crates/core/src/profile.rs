//! Initial density profiles on the macroscopic line.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::lattice::{Site, Window1D};

/// Static compressibility `rho (1 - rho)`.
pub fn chi(rho: f64) -> f64 {
    rho * (1.0 - rho)
}

/// A real function of the macroscopic coordinate. At `u = 0` implementors
/// return the left value.
pub trait RealFn: Sync {
    fn eval(&self, u: f64) -> f64;

    /// Limit from the right at 0; equal to `eval(0.0)` for continuous functions.
    fn right_of_zero(&self) -> f64 {
        self.eval(0.0)
    }
}

impl<F: Fn(f64) -> f64 + Sync> RealFn for F {
    fn eval(&self, u: f64) -> f64 {
        self(u)
    }
}

/// Initial density `rho_0`, sampled on the lattice at `x / n`.
#[derive(Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialProfile {
    Constant { value: f64 },
    /// `mean + amplitude * tanh(u / scale)`.
    Tanh { mean: f64, amplitude: f64, scale: f64 },
    /// `left` for `u <= 0`, `right` for `u > 0`.
    Step { left: f64, right: f64 },
    #[serde(skip)]
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for InitialProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InitialProfile::Constant { value } => write!(f, "Constant({value})"),
            InitialProfile::Tanh { mean, amplitude, scale } => {
                write!(f, "Tanh({mean} + {amplitude} tanh(u/{scale}))")
            }
            InitialProfile::Step { left, right } => write!(f, "Step({left}, {right})"),
            InitialProfile::Custom(_) => write!(f, "Custom"),
        }
    }
}

impl PartialEq for InitialProfile {
    fn eq(&self, other: &Self) -> bool {
        use InitialProfile::*;
        match (self, other) {
            (Constant { value: a }, Constant { value: b }) => a == b,
            (Tanh { mean: a, amplitude: b, scale: c }, Tanh { mean: d, amplitude: e, scale: g }) => {
                a == d && b == e && c == g
            }
            (Step { left: a, right: b }, Step { left: c, right: d }) => a == c && b == d,
            (Custom(a), Custom(b)) => Arc::ptr_eq(a, b),
            _ => false,
        }
    }
}

impl InitialProfile {
    /// `1/2 + 1/4 tanh(u)`.
    pub fn standard_tanh() -> Self {
        InitialProfile::Tanh { mean: 0.5, amplitude: 0.25, scale: 1.0 }
    }

    pub fn custom<F: Fn(f64) -> f64 + Send + Sync + 'static>(f: F) -> Self {
        InitialProfile::Custom(Arc::new(f))
    }

    pub fn validate(&self) -> Result<()> {
        let in_range = |v: f64| (0.0..=1.0).contains(&v);
        match *self {
            InitialProfile::Constant { value } if !in_range(value) => {
                Err(invalid("profile", format!("constant {value} outside [0, 1]")))
            }
            InitialProfile::Tanh { mean, amplitude, scale } => {
                if !(scale > 0.0) {
                    return Err(invalid("profile", "tanh scale must be positive"));
                }
                if !in_range(mean - amplitude.abs()) || !in_range(mean + amplitude.abs()) {
                    return Err(invalid("profile", "tanh profile leaves [0, 1]"));
                }
                Ok(())
            }
            InitialProfile::Step { left, right } if !in_range(left) || !in_range(right) => {
                Err(invalid("profile", "step values outside [0, 1]"))
            }
            _ => Ok(()),
        }
    }

    pub fn value(&self, u: f64) -> f64 {
        match self {
            InitialProfile::Constant { value } => *value,
            InitialProfile::Tanh { mean, amplitude, scale } => mean + amplitude * (u / scale).tanh(),
            InitialProfile::Step { left, right } => {
                if u <= 0.0 {
                    *left
                } else {
                    *right
                }
            }
            InitialProfile::Custom(f) => f(u),
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, InitialProfile::Constant { .. })
    }

    /// `rho_0(x / n)` over the window.
    pub fn sample(&self, window: Window1D, n: u32) -> Vec<f64> {
        window.sites().map(|x| self.value(x as f64 / n as f64)).collect()
    }

    pub fn at_site(&self, x: Site, n: u32) -> f64 {
        self.value(x as f64 / n as f64)
    }
}

impl RealFn for InitialProfile {
    fn eval(&self, u: f64) -> f64 {
        self.value(u)
    }

    fn right_of_zero(&self) -> f64 {
        match self {
            InitialProfile::Step { right, .. } => *right,
            other => other.value(0.0),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn values_and_sampling() {
        let p = InitialProfile::standard_tanh();
        assert_eq!(p.value(0.0), 0.5);
        let s = InitialProfile::Step { left: 0.5, right: 0.25 };
        assert_eq!(s.value(0.0), 0.5);
        assert_eq!(s.right_of_zero(), 0.25);
        let w = Window1D::new(-2, 3).unwrap();
        assert_eq!(s.sample(w, 10), vec![0.5, 0.5, 0.5, 0.25, 0.25, 0.25]);
        assert_eq!(chi(0.5), 0.25);
        assert_eq!(chi(1.0), 0.0);
    }

    #[test]
    fn validation() {
        assert!(InitialProfile::Constant { value: 1.2 }.validate().is_err());
        assert!(InitialProfile::Tanh { mean: 0.5, amplitude: 0.6, scale: 1.0 }.validate().is_err());
        assert!(InitialProfile::standard_tanh().validate().is_ok());
    }

    #[test]
    fn serde_roundtrip() {
        for p in [
            InitialProfile::standard_tanh(),
            InitialProfile::Step { left: 0.5, right: 0.25 },
            InitialProfile::Constant { value: 0.5 },
        ] {
            let t = toml::to_string(&p).unwrap();
            assert_eq!(toml::from_str::<InitialProfile>(&t).unwrap(), p);
        }
    }
}
