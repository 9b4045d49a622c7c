//! Lattice densities against the continuum Cauchy solution under grid refinement.

use serde::Serialize;

use crate::binomial;
use crate::continuum::cauchy::{analytic_profile, CauchyData, CauchyOptions};
use crate::continuum::{telegraph_params, TelegraphParams};
use crate::error::{Error, Result};
use crate::exec::{self, Exec};
use crate::lattice::{gaussian_initial, GridSpec, JointDensity2, RateForm, RateSpec2};

/// Constant-rate Gaussian comparison problem.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ComparisonCase {
    /// Rates per unit time.
    pub alpha: f64,
    pub beta: f64,
    pub c: f64,
    pub sigma: f64,
    pub support_half_width: f64,
    pub t: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RefinementLevel {
    pub dx: f64,
    pub dt: f64,
    pub n_steps: usize,
    /// `Σ_m |rho_lattice[m] - rho_analytic(x_m) dx|`.
    pub l1: f64,
}

impl ComparisonCase {
    pub fn params(&self) -> Result<TelegraphParams> {
        telegraph_params(self.alpha, self.beta, self.c)
    }

    /// Lattice density at `self.t` with space step `dx` (time step `dx / c`).
    pub fn lattice(&self, dx: f64, exec: Exec) -> Result<JointDensity2> {
        let dt = dx / self.c;
        let n_steps = self.steps(dt)?;
        let half = (self.support_half_width / dx * (1.0 + 1e-12) + 1e-9).floor() as i64;
        let reach = half + n_steps as i64;
        let grid = GridSpec::new(dx, dt, -reach, reach)?;
        let q0 = gaussian_initial(grid, self.sigma, self.support_half_width)?;
        let rates = RateSpec2::constant(self.alpha, self.beta, RateForm::ContinuumRate);
        binomial::simulate_observed(&q0, &rates, n_steps, exec, |_, _| {})
    }

    fn steps(&self, dt: f64) -> Result<usize> {
        let n = (self.t / dt).round();
        if ((n * dt - self.t) / self.t.max(dt)).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "t = {} is not a whole number of steps of {dt}",
                self.t
            )));
        }
        Ok(n as usize)
    }

    /// L¹ distance between the lattice density and the analytic one sampled at the nodes.
    pub fn l1_distance(&self, dx: f64, opts: &CauchyOptions, exec: Exec) -> Result<RefinementLevel> {
        let q = self.lattice(dx, exec)?;
        let data = CauchyData::gaussian(self.sigma, self.support_half_width)?;
        let p = self.params()?;
        let xs: Vec<f64> = (0..q.grid.len()).map(|i| q.grid.x_at(i)).collect();
        let an = analytic_profile(&data, &p, self.t, &xs, opts, exec)?;
        let l1 = exec::sum((0..q.grid.len()).map(|i| (q.rho(i) - an[i].rho * dx).abs()));
        Ok(RefinementLevel {
            dx,
            dt: q.grid.dt,
            n_steps: self.steps(q.grid.dt)?,
            l1,
        })
    }

    /// [`Self::l1_distance`] at `dx`, `dx/2`, `dx/4`, ...
    pub fn refinement(&self, dx: f64, levels: usize, opts: &CauchyOptions, exec: Exec) -> Result<Vec<RefinementLevel>> {
        (0..levels)
            .map(|k| self.l1_distance(dx / f64::from(1u32 << k), opts, exec))
            .collect()
    }
}

/// `log2(e_k / e_{k+1})` for consecutive halvings.
pub fn observed_orders(levels: &[RefinementLevel]) -> Vec<f64> {
    levels.windows(2).map(|w| (w[0].l1 / w[1].l1).log2()).collect()
}
