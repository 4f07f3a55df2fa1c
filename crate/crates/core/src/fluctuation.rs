//! Empirical fluctuation statistics confronted with the Ornstein–Uhlenbeck
//! predictions: initial Gaussian field, generator remainder, quadratic
//! variation and the conditional law of `Y_t` given `Y_s`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::exclusion::{density_field, sample_initial, FieldWeights};
use crate::lattice::{ModelParams, Site, Window1D};
use crate::profile::{chi, InitialProfile, RealFn};
use crate::quad::{integrate, Tolerance};
use crate::rng::run_replicas;
use crate::robin::{ou_variance, ou_variance_lagged, MacroProfile, TestFunction};
use crate::stats::{covariance, normality_test, ols, pairwise_sum, NormalityTest, Summary};

/// Values of `Y_t(f)` for one replica over a fixed grid of `(t, f)` cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluctuationSample {
    pub replica: usize,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CltRow {
    pub mean: f64,
    pub variance: f64,
    pub variance_se: f64,
    /// `int chi(rho_0(u)) f(u)^2 du`.
    pub predicted: f64,
    /// `(1/n) sum_x chi(rho_0(x/n)) f(x/n)^2` on the window.
    pub predicted_discrete: f64,
    pub normality: NormalityTest,
}

impl CltRow {
    pub fn relative_gap(&self) -> f64 {
        (self.variance - self.predicted).abs() / self.predicted
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CltReport {
    pub rows: Vec<CltRow>,
    /// Sample covariance matrix of the fields, row-major.
    pub covariance: Vec<f64>,
    /// `int chi(rho_0) f_i f_j`.
    pub predicted_covariance: Vec<f64>,
    pub samples: Vec<FluctuationSample>,
}

fn chi_integral(profile: &InitialProfile, f: &dyn RealFn, g: &dyn RealFn, radius: f64) -> Result<f64> {
    let tol = Tolerance { abs: 1e-12, rel: 1e-10, max_intervals: 2000 };
    integrate(|u| chi(profile.value(u)) * f.eval(u) * g.eval(u), -radius, radius, &[0.0], tol)
}

/// `Y_0(f)` for every `f` across `m` Bernoulli product replicas.
pub fn initial_field_clt(
    profile: &InitialProfile,
    n: u32,
    window: Window1D,
    fs: &[&dyn RealFn],
    m: usize,
    seed: u64,
    level: f64,
) -> Result<CltReport> {
    if m < 8 {
        return Err(invalid("replicas", "need at least 8 replicas"));
    }
    let weights = fs.iter().map(|f| FieldWeights::new(*f, window, n)).collect::<Result<Vec<_>>>()?;
    let rho = profile.sample(window, n);
    let samples = run_replicas(m, seed, |r, rng| {
        let c = sample_initial(profile, window, n, rng);
        FluctuationSample { replica: r, values: weights.iter().map(|w| density_field(&c, w, &rho)).collect() }
    });
    let radius = window.hi().min(-window.lo()) as f64 / f64::from(n);
    let k = fs.len();
    let column = |i: usize| samples.iter().map(|s| s.values[i]).collect::<Vec<f64>>();
    let mut cov = vec![0.0; k * k];
    let mut pred = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..k {
            cov[i * k + j] = covariance(&column(i), &column(j));
            pred[i * k + j] = chi_integral(profile, fs[i], fs[j], radius)?;
        }
    }
    let rows = (0..k)
        .map(|i| {
            let xs = column(i);
            let s = Summary::of(&xs);
            let w = &weights[i];
            let discrete = pairwise_sum(
                &w.values.iter().zip(&rho).map(|(v, r)| v * v * chi(*r)).collect::<Vec<_>>(),
            );
            CltRow {
                mean: s.mean,
                variance: s.var,
                variance_se: s.var_se(),
                predicted: pred[i * k + i],
                predicted_discrete: discrete,
                normality: if s.var > 0.0 {
                    normality_test(&xs, level)
                } else {
                    NormalityTest { statistic: 0.0, critical: 0.0, level, rejected: false }
                },
            }
        })
        .collect();
    Ok(CltReport { rows, covariance: cov, predicted_covariance: pred, samples })
}

/// Pieces of `(1/sqrt n) sum_x |n^2 A_n f(x/n) - Delta_alpha f(x/n)|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RemainderReport {
    pub n: u32,
    pub coefficient: f64,
    /// Terms at `x = 0` and `x = 1`, already divided by `sqrt n`.
    pub bond0: f64,
    pub bond1: f64,
    pub bulk: f64,
}

/// Sites with `|x| / n` beyond the numerical support of `f` and its first
/// two derivatives contribute below `1e-16` each and are skipped.
pub fn remainder_coefficient(f: &TestFunction, p: &ModelParams) -> RemainderReport {
    let nf = p.nf();
    let reach = (nf * f.support_radius(1e-16)).ceil() as Site + 2;
    let fv = |x: Site| f.value(x as f64 / nf);
    let term = |x: Site| {
        let right = crate::lattice::bond_rate_1d(x, p) * (fv(x + 1) - fv(x));
        let left = crate::lattice::bond_rate_1d(x - 1, p) * (fv(x - 1) - fv(x));
        (nf * nf * (right + left) - f.robin_laplacian(x as f64 / nf)).abs()
    };
    let scale = nf.sqrt().recip();
    let bulk: Vec<f64> = (-reach..=reach).filter(|x| *x != 0 && *x != 1).map(term).collect();
    let bulk = scale * pairwise_sum(&bulk);
    let bond0 = scale * term(0);
    let bond1 = scale * term(1);
    RemainderReport { n: p.n(), coefficient: bulk + bond0 + bond1, bond0, bond1, bulk }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QvReport {
    pub mean_qv: f64,
    pub se: f64,
    pub predicted: f64,
}

impl QvReport {
    pub fn gap(&self) -> f64 {
        (self.mean_qv - self.predicted).abs()
    }

    pub fn relative_gap(&self) -> f64 {
        if self.predicted == 0.0 {
            self.gap()
        } else {
            self.gap() / self.predicted
        }
    }
}

/// Mean empirical quadratic variation against its limit at time `t`.
pub fn qv_convergence(qvs: &[f64], f: &TestFunction, macro_: &MacroProfile, t: f64) -> Result<QvReport> {
    let s = Summary::of(qvs);
    let predicted = crate::robin::qv_prediction(f, t, macro_)?;
    Ok(QvReport { mean_qv: s.mean, se: s.se(), predicted })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OuReport {
    pub slope: f64,
    pub slope_se: f64,
    pub intercept: f64,
    pub residual_var: f64,
    pub predicted_var: f64,
    pub normality: Option<NormalityTest>,
}

impl OuReport {
    /// `|slope - 1| <= sigmas * se`.
    pub fn slope_ok(&self, sigmas: f64) -> bool {
        (self.slope - 1.0).abs() <= sigmas * self.slope_se
    }

    pub fn variance_gap(&self) -> f64 {
        if self.predicted_var == 0.0 {
            self.residual_var
        } else {
            (self.residual_var - self.predicted_var).abs() / self.predicted_var
        }
    }
}

/// Regresses `Y_t(f)` on `Y_s(T_{t-s} f)` across replicas.
pub fn ou_conditional_check(y_s: &[f64], y_t: &[f64], predicted_var: f64, level: f64) -> Result<OuReport> {
    if y_s.len() != y_t.len() || y_s.len() < 3 {
        return Err(invalid("samples", "need matching samples of length at least 3"));
    }
    let r = ols(y_s, y_t);
    let normality = (r.residuals.len() >= 8 && r.residual_var > 0.0).then(|| normality_test(&r.residuals, level));
    Ok(OuReport {
        slope: r.slope,
        slope_se: r.slope_se,
        intercept: r.intercept,
        residual_var: r.residual_var,
        predicted_var,
        normality,
    })
}

/// Conditional variance for one `(s, t, f)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionCell {
    pub label: String,
    pub s: f64,
    pub t: f64,
    pub variance: f64,
}

/// Predicted conditional law for a list of cells. The conditional mean is
/// `Y_s(T_{t-s} f)`, evaluated from data with [`crate::robin::Evolved`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionBundle {
    pub cells: Vec<PredictionCell>,
}

impl PredictionBundle {
    pub fn build(fs: &[(String, TestFunction)], intervals: &[(f64, f64)], macro_: &MacroProfile) -> Result<Self> {
        let mut cells = Vec::new();
        for (label, f) in fs {
            for &(s, t) in intervals {
                cells.push(PredictionCell { label: label.clone(), s, t, variance: ou_variance(f, s, t, macro_)? });
            }
        }
        Ok(PredictionBundle { cells })
    }
}

/// `|var(s, t) - var(s, u) - var(u, t)|`, with the early piece taken for
/// `T_{t-u} f` so that it matches the conditional law over `[s, u]`.
pub fn variance_additivity_gap(f: &TestFunction, s: f64, u: f64, t: f64, macro_: &MacroProfile) -> Result<f64> {
    if !(s <= u && u <= t) {
        return Err(invalid("u", "need s <= u <= t"));
    }
    let whole = ou_variance(f, s, t, macro_)?;
    let early = ou_variance_lagged(f, t - u, s, u, macro_)?;
    let late = ou_variance(f, u, t, macro_)?;
    Ok((whole - early - late).abs())
}
