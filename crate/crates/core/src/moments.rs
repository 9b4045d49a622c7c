//! Empirical moments of lattice densities and the closed-form predictions they are compared with.

use serde::Serialize;

use crate::continuum::TelegraphParams;
use crate::error::{Error, Result};
use crate::exec;
use crate::lattice::{DensitySnapshot, JointDensity2, MomentSeries};

/// `(mean, variance, mean velocity)` of one snapshot, each normalized by its mass.
pub fn snapshot_moments<S: DensitySnapshot + ?Sized>(s: &S) -> (f64, f64, f64) {
    let grid = s.grid();
    let rho: Vec<f64> = (0..grid.len()).map(|i| s.rho_at(i)).collect();
    let mass = exec::sum(rho.iter().copied());
    let mean = exec::sum(rho.iter().enumerate().map(|(i, r)| grid.x_at(i) * r)) / mass;
    let variance = exec::sum(rho.iter().enumerate().map(|(i, r)| (grid.x_at(i) - mean).powi(2) * r)) / mass;
    (mean, variance, s.momentum() / mass)
}

impl MomentSeries {
    pub fn push<S: DensitySnapshot + ?Sized>(&mut self, t: f64, s: &S) {
        let (m, v, u) = snapshot_moments(s);
        self.times.push(t);
        self.mean.push(m);
        self.variance.push(v);
        self.mean_velocity.push(u);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Moments of `trajectory[k]` at time `k·dt`.
pub fn empirical_moments<S: DensitySnapshot>(trajectory: &[S]) -> Result<MomentSeries> {
    if trajectory.is_empty() {
        return Err(Error::TooFewSnapshots { needed: 1, got: 0 });
    }
    let mut out = MomentSeries::default();
    for (k, s) in trajectory.iter().enumerate() {
        out.push(s.grid().time(k), s);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MomentPrediction {
    pub v0: f64,
    pub gamma: f64,
    pub epsilon: f64,
    pub c: f64,
}

/// A closed-form value together with the regime indicators it depends on.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Approximate {
    pub value: f64,
    pub gamma: f64,
    pub gamma_t: f64,
}

impl MomentPrediction {
    pub fn new(p: &TelegraphParams, v0: f64) -> Self {
        MomentPrediction {
            v0,
            gamma: p.gamma,
            epsilon: p.epsilon,
            c: p.c,
        }
    }

    /// Uses `v0 = c Σ φ(0, ·)` from the initial lattice density.
    pub fn from_initial(p: &TelegraphParams, q0: &JointDensity2) -> Self {
        let v0 = p.c * exec::sum(q0.q_plus.iter().zip(&q0.q_minus).map(|(a, b)| a - b));
        Self::new(p, v0)
    }

    fn check(&self) -> Result<()> {
        if !(self.gamma > 0.0) {
            return Err(Error::InvalidParameter(format!("needs gamma > 0, got {}", self.gamma)));
        }
        Ok(())
    }

    pub fn terminal_velocity(&self) -> Result<f64> {
        self.check()?;
        Ok(-self.c * self.epsilon / self.gamma)
    }

    /// `E[x](t) = Ex0 + v∞ t + (v0 - v∞)(1 - e^{-γt})/γ`.
    pub fn mean(&self, ex0: f64, t: f64) -> Result<f64> {
        let vinf = self.terminal_velocity()?;
        Ok(ex0 + vinf * t + (self.v0 - vinf) * (-(-self.gamma * t).exp_m1()) / self.gamma)
    }
}

/// `v(t) = -cε/γ + (v0 + cε/γ) e^{-γt}`.
pub fn predicted_mean_velocity(p: &MomentPrediction, t: f64) -> Result<f64> {
    let vinf = p.terminal_velocity()?;
    Ok(vinf + (p.v0 - vinf) * (-p.gamma * t).exp())
}

/// `2c²t/γ + (Ex0 - cεt/γ)²`, valid for `γ >> 1`; the initial variance is the caller's to add.
pub fn predicted_second_moment(p: &MomentPrediction, ex0: f64, t: f64) -> Result<Approximate> {
    let vinf = p.terminal_velocity()?;
    let drifted = ex0 + vinf * t;
    Ok(Approximate {
        value: 2.0 * p.c * p.c * t / p.gamma + drifted * drifted,
        gamma: p.gamma,
        gamma_t: p.gamma * t,
    })
}

/// Ordinary least-squares slope of `ys` against `xs`.
pub fn least_squares_slope(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::InvalidParameter("slope needs at least two paired points".into()));
    }
    let n = xs.len() as f64;
    let mx = exec::sum(xs.iter().copied()) / n;
    let my = exec::sum(ys.iter().copied()) / n;
    let sxy = exec::sum(xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)));
    let sxx = exec::sum(xs.iter().map(|x| (x - mx) * (x - mx)));
    if sxx == 0.0 {
        return Err(Error::InvalidParameter("slope is undefined for a single abscissa".into()));
    }
    Ok(sxy / sxx)
}

/// Least-squares variance slope over the second half of the series.
pub fn variance_slope_final_half(s: &MomentSeries) -> Result<f64> {
    let start = s.len() / 2;
    least_squares_slope(&s.times[start..], &s.variance[start..])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::binomial::simulate;
    use crate::continuum::telegraph_params;
    use crate::lattice::{gaussian_initial, make_grid, RateForm, RateSpec2};
    use crate::multinomial::{simulate_multi, MultiDensity, RateMatrix};

    #[test]
    fn symmetric_run_has_zero_mean() {
        let g = make_grid(0.3, 0.003, -173, 173).unwrap();
        let q0 = gaussian_initial(g, 0.6, 6.9).unwrap();
        let r = RateSpec2::constant(0.006, 0.006, RateForm::StepProbability);
        let tr = simulate(&q0, &r, 150).unwrap();
        let m = empirical_moments(&tr.snapshots).unwrap();
        assert!(m.mean.iter().all(|v| v.abs() < 1e-12));
        assert!(m.variance.iter().all(|v| *v >= 0.0));
        // discretized σ² = 0.36
        assert!((m.variance[0] - 0.36).abs() < 1e-6);
        assert_eq!(m.mean_velocity[0], 0.0);
        // the two lobes at ±45.3 dominate the final variance
        let lobes = 2.0 * 0.5 * 0.994_f64.powi(149);
        assert!(m.variance[150] > lobes * 45.0 * 45.0);
    }

    #[test]
    fn ballistic_point_mass() {
        let g = make_grid(1.0, 0.5, -12, 12).unwrap();
        let q0 = MultiDensity::point(g, 1, 0, 1).unwrap();
        let traj = simulate_multi(&q0, &RateMatrix::identity(1), 10).unwrap();
        let m = empirical_moments(&traj).unwrap();
        for k in 0..=10 {
            assert_eq!(m.variance[k], 0.0);
            assert_eq!(m.mean[k], k as f64);
            assert_eq!(m.mean_velocity[k], 2.0);
        }
        assert!(empirical_moments::<MultiDensity>(&[]).is_err());
    }

    #[test]
    fn mean_velocity_matches_mean_increments() {
        let g = make_grid(0.1, 0.001, -100, 100).unwrap();
        let q0 = gaussian_initial(g, 1.0, 3.0).unwrap();
        let r = RateSpec2::constant(30.0, 10.0, RateForm::ContinuumRate);
        let tr = simulate(&q0, &r, 50).unwrap();
        let m = empirical_moments(&tr.snapshots).unwrap();
        for k in 0..50 {
            let inc = (m.mean[k + 1] - m.mean[k]) / g.dt;
            assert!((inc - m.mean_velocity[k]).abs() < 1e-9);
        }
    }

    #[test]
    fn prediction_formulas() {
        let p = telegraph_params(3.0, 1.0, 2.0).unwrap();
        let pr = MomentPrediction::new(&p, 0.7);
        assert_eq!(predicted_mean_velocity(&pr, 0.0).unwrap(), 0.7);
        assert!((predicted_mean_velocity(&pr, 1e3).unwrap() + 2.0 * 2.0 / 4.0).abs() < 1e-15);
        let sym = MomentPrediction::new(&telegraph_params(2.0, 2.0, 3.0).unwrap(), 3.0);
        for t in [0.0, 0.1, 1.0] {
            assert!((predicted_mean_velocity(&sym, t).unwrap() - 3.0 * (-4.0 * t).exp()).abs() < 1e-15);
        }
        assert_eq!(predicted_second_moment(&sym, 0.0, 0.0).unwrap().value, 0.0);
        let a = predicted_second_moment(&sym, 0.0, 2.0).unwrap();
        assert!((a.value - 2.0 * 9.0 * 2.0 / 4.0).abs() < 1e-12);
        assert_eq!(a.gamma_t, 8.0);
        let none = MomentPrediction::new(&telegraph_params(0.0, 0.0, 1.0).unwrap(), 0.0);
        assert!(predicted_mean_velocity(&none, 1.0).is_err());
        // mean is the integral of the velocity
        let (t, n) = (0.8, 20000);
        let integral = (0..n)
            .map(|i| predicted_mean_velocity(&pr, (i as f64 + 0.5) * t / n as f64).unwrap() * t / n as f64)
            .sum::<f64>();
        assert!((pr.mean(0.0, t).unwrap() - integral).abs() < 1e-8);
    }

    #[test]
    fn slope_fit() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys = [1.0, 3.0, 5.0, 7.0];
        assert_eq!(least_squares_slope(&xs, &ys).unwrap(), 2.0);
        assert!(least_squares_slope(&[1.0], &[1.0]).is_err());
    }
}
