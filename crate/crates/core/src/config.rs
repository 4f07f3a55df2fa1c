//! Experiment configuration files (TOML).
//!
//! All times are macroscopic; microscopic horizons are always `t n^2`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::profile::InitialProfile;
use crate::robin::{Bump, ShapeParams, TestFunctionSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    MeanScaling,
    CorrelationScaling,
    LowerBound,
    LocalTimes,
    Folding,
    Lumping,
    Occupation,
    Clt,
    Qv,
    Fluctuations,
    Semigroup,
    Remainder,
    Consistency,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 13] = [
        ExperimentKind::MeanScaling,
        ExperimentKind::CorrelationScaling,
        ExperimentKind::LowerBound,
        ExperimentKind::LocalTimes,
        ExperimentKind::Folding,
        ExperimentKind::Lumping,
        ExperimentKind::Occupation,
        ExperimentKind::Clt,
        ExperimentKind::Qv,
        ExperimentKind::Fluctuations,
        ExperimentKind::Semigroup,
        ExperimentKind::Remainder,
        ExperimentKind::Consistency,
    ];

    /// Number of the acceptance criterion this experiment reproduces.
    pub fn criterion(self) -> u8 {
        ExperimentKind::ALL.iter().position(|k| *k == self).expect("listed") as u8 + 1
    }

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::MeanScaling => "mean-scaling",
            ExperimentKind::CorrelationScaling => "correlation-scaling",
            ExperimentKind::LowerBound => "lower-bound",
            ExperimentKind::LocalTimes => "local-times",
            ExperimentKind::Folding => "folding",
            ExperimentKind::Lumping => "lumping",
            ExperimentKind::Occupation => "occupation",
            ExperimentKind::Clt => "clt",
            ExperimentKind::Qv => "qv",
            ExperimentKind::Fluctuations => "fluctuations",
            ExperimentKind::Semigroup => "semigroup",
            ExperimentKind::Remainder => "remainder",
            ExperimentKind::Consistency => "consistency",
        }
    }

    /// Experiments without Monte Carlo.
    pub fn is_deterministic(self) -> bool {
        !matches!(
            self,
            ExperimentKind::LocalTimes
                | ExperimentKind::Clt
                | ExperimentKind::Qv
                | ExperimentKind::Fluctuations
                | ExperimentKind::Consistency
        )
    }
}

impl std::str::FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ExperimentKind::ALL
            .iter()
            .copied()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Validation { field: "kind".into(), reason: format!("unknown experiment `{s}`") })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub alpha: f64,
    /// Macroscopic horizon `T`.
    pub horizon: f64,
    pub n_sweep: Vec<u32>,
    pub seed: u64,
    pub replicas: usize,
    #[serde(default = "default_out")]
    pub out_dir: PathBuf,
    /// Experiment-specific macroscopic times.
    #[serde(default)]
    pub times: Vec<f64>,
    /// Extra `alpha` values (folding sweep).
    #[serde(default)]
    pub alphas: Vec<f64>,
    /// Integrator step factor: the step is `dt_factor / n^2`.
    #[serde(default = "default_dt")]
    pub dt_factor: f64,
    /// Macroscopic half-width of interest; solver windows add `6 sqrt(2T)`.
    #[serde(default = "default_interest")]
    pub interest: f64,
    #[serde(default)]
    pub tolerances: BTreeMap<String, f64>,
    pub profile: InitialProfile,
    #[serde(default)]
    pub test_functions: Vec<TestFunctionSpec>,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

fn default_dt() -> f64 {
    0.0625
}

/// Step factor of the presets that run the 2-D correlation solver. RK4 is
/// stable up to about 0.35 for its spectral radius `8 n^2`.
pub const SOLVER_2D_DT: f64 = 0.25;

fn default_interest() -> f64 {
    1.0
}

fn validation(field: &str, reason: impl Into<String>) -> Error {
    Error::Validation { field: field.to_owned(), reason: reason.into() }
}

fn bump(amplitude: f64, center: f64, width: f64) -> Bump {
    Bump { amplitude, center, width }
}

fn spec(jump: f64, bumps: Vec<Bump>, correction_width: f64) -> TestFunctionSpec {
    TestFunctionSpec { jump, shape: ShapeParams { bumps, correction_width, max_degree: None }, order: 1 }
}

impl ExperimentConfig {
    /// The configuration that reproduces acceptance criterion `kind.criterion()`.
    pub fn preset(kind: ExperimentKind) -> Self {
        let tanh = InitialProfile::standard_tanh();
        let mut c = ExperimentConfig {
            kind,
            alpha: 1.0,
            horizon: 0.5,
            n_sweep: vec![32, 64, 128],
            seed: 20_240_601,
            replicas: 1,
            out_dir: default_out().join(kind.name()),
            times: Vec::new(),
            alphas: Vec::new(),
            dt_factor: default_dt(),
            interest: default_interest(),
            tolerances: BTreeMap::new(),
            profile: tanh,
            test_functions: Vec::new(),
        };
        let tol = |pairs: &[(&str, f64)]| pairs.iter().map(|(k, v)| ((*k).to_owned(), *v)).collect();
        match kind {
            ExperimentKind::MeanScaling => c.tolerances = tol(&[("spread", 2.0)]),
            ExperimentKind::CorrelationScaling => {
                c.dt_factor = SOLVER_2D_DT;
                c.interest = 0.0;
                c.horizon = 0.25;
                c.tolerances = tol(&[("spread", 2.0)]);
            }
            ExperimentKind::LowerBound => {
                c.dt_factor = SOLVER_2D_DT;
                c.interest = 0.0;
                c.alpha = 0.1;
                c.horizon = 0.1;
                c.n_sweep = vec![128];
                c.times = vec![0.01, 0.1];
                c.profile = InitialProfile::Step { left: 0.5, right: 0.25 };
                c.tolerances = tol(&[("gap", 0.05), ("floor", crate::criteria::LOWER_BOUND_FLOOR)]);
            }
            ExperimentKind::LocalTimes => {
                c.horizon = 1.0;
                c.n_sweep = vec![8, 16, 32];
                c.replicas = 10_000;
                c.tolerances = tol(&[("spread", 3.0)]);
            }
            ExperimentKind::Folding => {
                c.horizon = 2.0;
                c.n_sweep = vec![8];
                c.times = vec![0.5, 1.0, 2.0];
                c.alphas = vec![0.1, 1.0, 10.0];
                c.tolerances = tol(&[("discrepancy", 1e-9), ("reach", 20.0)]);
            }
            ExperimentKind::Lumping => {
                c.horizon = 2.0;
                c.n_sweep = vec![8];
                c.times = vec![0.5, 2.0];
                c.alphas = vec![0.1, 1.0];
                c.tolerances = tol(&[("discrepancy", 1e-9)]);
            }
            ExperimentKind::Occupation => {
                c.horizon = 1.0;
                c.n_sweep = vec![8, 16, 32];
                c.times = vec![1.0, 4.0, 16.0, 64.0];
                c.tolerances = tol(&[("walk_spread", 1.5), ("bond_spread", 2.0)]);
            }
            ExperimentKind::Clt => {
                c.horizon = 0.0;
                c.n_sweep = vec![500];
                c.replicas = 10_000;
                c.test_functions = vec![
                    spec(0.5, vec![bump(1.0, 0.3, 0.7)], 0.6),
                    spec(0.0, vec![bump(1.0, -0.5, 0.5), bump(-0.6, 0.8, 0.6)], 0.5),
                ];
                c.tolerances = tol(&[("variance", 0.05), ("level", 0.01)]);
            }
            ExperimentKind::Qv => {
                c.horizon = 0.1;
                c.n_sweep = vec![128];
                c.replicas = 1000;
                c.test_functions = vec![spec(0.5, vec![bump(1.0, 0.2, 0.6)], 0.5)];
                c.tolerances = tol(&[("qv", 0.10), ("sigmas", 3.0)]);
            }
            ExperimentKind::Fluctuations => {
                c.horizon = 0.2;
                c.n_sweep = vec![128];
                c.replicas = 2000;
                c.times = vec![0.1, 0.2];
                c.profile = InitialProfile::Constant { value: 0.5 };
                c.test_functions = vec![spec(0.5, vec![bump(1.0, 0.1, 0.5)], 0.4)];
                c.tolerances = tol(&[("variance", 0.15), ("sigmas", 3.0), ("level", 0.01)]);
            }
            ExperimentKind::Semigroup => {
                c.horizon = 1.0;
                c.n_sweep = vec![1];
                c.times = vec![0.01, 0.1, 1.0];
                c.test_functions = vec![spec(0.5, vec![bump(1.0, 0.4, 0.8)], 0.7)];
                c.tolerances = tol(&[("error", 1e-6)]);
            }
            ExperimentKind::Remainder => {
                c.horizon = 1.0;
                c.test_functions = vec![
                    spec(0.5, vec![bump(1.0, 0.3, 0.7)], 0.6),
                    spec(0.0, vec![bump(1.0, 0.0, 1.0)], 1.0),
                    spec(-0.3, vec![bump(0.8, -0.4, 0.5), bump(0.5, 1.0, 0.8)], 0.5),
                ];
                c.tolerances = tol(&[("spread", 2.0)]);
            }
            ExperimentKind::Consistency => {
                c.dt_factor = SOLVER_2D_DT;
                c.interest = 0.0;
                c.horizon = 0.25;
                c.n_sweep = vec![64];
                c.replicas = 10_000;
                c.tolerances = tol(&[("sigmas", 3.0), ("boundary", 0.1)]);
            }
        }
        c
    }

    pub fn tolerance(&self, key: &str) -> Result<f64> {
        self.tolerances.get(key).copied().ok_or_else(|| validation("tolerances", format!("missing `{key}`")))
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_sweep.is_empty() {
            return Err(validation("n_sweep", "must not be empty"));
        }
        if self.n_sweep.windows(2).any(|w| w[0] >= w[1]) || self.n_sweep[0] == 0 {
            return Err(validation("n_sweep", "must be positive and strictly increasing"));
        }
        if self.replicas == 0 {
            return Err(validation("replicas", "must be at least 1"));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(validation("alpha", "must be finite and nonnegative"));
        }
        if !(self.horizon >= 0.0 && self.horizon.is_finite()) {
            return Err(validation("horizon", "must be finite and nonnegative"));
        }
        if !(self.interest >= 0.0 && self.interest.is_finite()) {
            return Err(validation("interest", "must be finite and nonnegative"));
        }
        if !(self.dt_factor > 0.0) {
            return Err(validation("dt_factor", "must be positive"));
        }
        if let Some((k, _)) = self.tolerances.iter().find(|(_, v)| !(**v > 0.0)) {
            return Err(validation("tolerances", format!("`{k}` must be positive")));
        }
        let known = Self::preset(self.kind).tolerances;
        if let Some(k) = self.tolerances.keys().find(|k| !known.contains_key(*k)) {
            let names: Vec<_> = known.keys().map(String::as_str).collect();
            return Err(validation("tolerances", format!("unknown `{k}`, expected one of {}", names.join(", "))));
        }
        if self.times.iter().any(|t| !(*t >= 0.0)) {
            return Err(validation("times", "must be nonnegative"));
        }
        if self.alphas.iter().any(|a| !(*a >= 0.0)) {
            return Err(validation("alphas", "must be nonnegative"));
        }
        self.profile.validate().map_err(|e| validation("profile", e.to_string()))?;
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let c: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        ExperimentConfig::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    /// SHA-256 of the canonical TOML form, hex encoded.
    pub fn hash(&self) -> Result<String> {
        use sha2::{Digest, Sha256};
        let d = Sha256::digest(self.to_toml()?.as_bytes());
        Ok(d.iter().map(|b| format!("{b:02x}")).collect())
    }
}
