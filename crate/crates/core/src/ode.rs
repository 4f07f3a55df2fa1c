//! Classical fourth-order Runge–Kutta for large linear systems.

use crate::error::{Error, Result};

/// Real-axis stability limit of RK4: `|dt * lambda| <= 2.785` for real negative `lambda`.
pub const RK4_REAL_LIMIT: f64 = 2.785;

/// Rejects `dt` when `dt * spectral_radius` leaves the RK4 stability interval.
pub fn check_stable(dt: f64, spectral_radius: f64) -> Result<()> {
    let bound = RK4_REAL_LIMIT / spectral_radius;
    if !(dt > 0.0) || dt > bound {
        return Err(Error::UnstableStep { dt, bound });
    }
    Ok(())
}

/// Scratch buffers for one system size.
#[derive(Debug, Clone)]
pub struct Rk4 {
    k: Vec<f64>,
    acc: Vec<f64>,
    stage: Vec<f64>,
}

impl Rk4 {
    pub fn new(len: usize) -> Self {
        Rk4 { k: vec![0.0; len], acc: vec![0.0; len], stage: vec![0.0; len] }
    }

    /// Advances `y` from `t` to `t + dt` for `y' = rhs(t, y)`.
    pub fn step<F>(&mut self, t: f64, dt: f64, y: &mut [f64], mut rhs: F)
    where
        F: FnMut(f64, &[f64], &mut [f64]),
    {
        let Rk4 { k, acc, stage } = self;
        let h2 = 0.5 * dt;

        rhs(t, y, k);
        for i in 0..y.len() {
            acc[i] = k[i];
            stage[i] = y[i] + h2 * k[i];
        }
        rhs(t + h2, stage, k);
        for i in 0..y.len() {
            acc[i] += 2.0 * k[i];
            stage[i] = y[i] + h2 * k[i];
        }
        rhs(t + h2, stage, k);
        for i in 0..y.len() {
            acc[i] += 2.0 * k[i];
            stage[i] = y[i] + dt * k[i];
        }
        rhs(t + dt, stage, k);
        let w = dt / 6.0;
        for i in 0..y.len() {
            y[i] += w * (acc[i] + k[i]);
        }
    }
}

/// Splits `[0, span]` into `ceil(span / max_dt)` equal steps.
pub fn uniform_steps(span: f64, max_dt: f64) -> (usize, f64) {
    if span <= 0.0 {
        return (0, 0.0);
    }
    let m = (span / max_dt * (1.0 - 1e-12)).ceil().max(1.0) as usize;
    (m, span / m as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay_is_fourth_order() {
        let solve = |dt: f64| {
            let (m, h) = uniform_steps(1.0, dt);
            let mut y = [1.0, 0.0];
            let mut rk = Rk4::new(2);
            for s in 0..m {
                rk.step(s as f64 * h, h, &mut y, |_, v, out| {
                    out[0] = v[1];
                    out[1] = -v[0];
                });
            }
            (y[0] - 1f64.cos()).abs()
        };
        let e1 = solve(0.1);
        let e2 = solve(0.05);
        let order = (e1 / e2).log2();
        assert!((order - 4.0).abs() < 0.2, "observed order {order}");
    }

    #[test]
    fn stability_bound() {
        assert!(check_stable(0.5, 4.0).is_ok());
        assert!(matches!(check_stable(0.8, 4.0), Err(Error::UnstableStep { .. })));
        assert!(check_stable(0.0, 4.0).is_err());
    }

    #[test]
    fn uniform_steps_cover_span() {
        let (m, h) = uniform_steps(1.0, 0.3);
        assert_eq!(m, 4);
        assert!((h * m as f64 - 1.0).abs() < 1e-15);
        assert_eq!(uniform_steps(0.0, 0.1).0, 0);
        assert_eq!(uniform_steps(1.0, 0.25).0, 4);
    }
}
