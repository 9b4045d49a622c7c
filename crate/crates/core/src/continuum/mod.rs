//! Continuum limit of the two-velocity walk.
//!
//! With constant rates the densities obey `q+_t + c q+_x = -α q+ + β q-` and
//! `q-_t - c q-_x = α q+ - β q-`. The substitution
//! `q± = exp(-εx/(2c) - γt/2) ψ±` turns both into the Klein-Gordon equation
//! `ψ_tt = c² ψ_xx + η² ψ` with `η² = αβ`.

pub mod bessel;
pub mod cauchy;
pub mod field;

use serde::Serialize;

use crate::error::{Error, Result};

pub use bessel::{bessel_i0, bessel_i1, bessel_k0};
pub use cauchy::{analytic_profile, kg_cauchy_q, CauchyData, CauchyValue, Kernel, Profile};
pub use field::{kg_residual, lorentz_boost_samples, ResidualReport, SampledField};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TelegraphParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub epsilon: f64,
    pub c: f64,
    pub eta: f64,
}

pub fn telegraph_params(alpha: f64, beta: f64, c: f64) -> Result<TelegraphParams> {
    if !(alpha >= 0.0 && beta >= 0.0 && alpha.is_finite() && beta.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "rates must be finite and nonnegative, got alpha={alpha}, beta={beta}"
        )));
    }
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::InvalidParameter(format!("c must be positive, got {c}")));
    }
    Ok(TelegraphParams {
        alpha,
        beta,
        gamma: alpha + beta,
        epsilon: alpha - beta,
        c,
        eta: (alpha * beta).sqrt(),
    })
}

impl TelegraphParams {
    /// Drift `-cε/γ` of the diffusion limit.
    pub fn drift(&self) -> Result<f64> {
        self.require_damping()?;
        Ok(-self.c * self.epsilon / self.gamma)
    }

    /// Growth rate `2c²/γ` of the variance in the diffusion limit.
    pub fn variance_slope(&self) -> Result<f64> {
        self.require_damping()?;
        Ok(2.0 * self.c * self.c / self.gamma)
    }

    /// Stationary variance growth rate of the lattice walk with time step `h`
    /// and symmetric rates: `(2c²/γ)(1 - γh/2)`. Tends to [`Self::variance_slope`] as `h -> 0`.
    pub fn lattice_variance_slope(&self, h: f64) -> Result<f64> {
        Ok(self.variance_slope()? * (1.0 - 0.5 * self.gamma * h))
    }

    fn require_damping(&self) -> Result<()> {
        if !(self.gamma > 0.0) {
            return Err(Error::InvalidParameter(format!("needs gamma > 0, got {}", self.gamma)));
        }
        Ok(())
    }
}

/// Gaussian density of the diffusion limit with mean `mu0 - (cε/γ)t` and
/// variance `s0_sq + (2c²/γ)t`.
pub fn diffusion_limit_density(p: &TelegraphParams, mu0: f64, s0_sq: f64, t: f64, x: f64) -> Result<f64> {
    let mean = mu0 + p.drift()? * t;
    let var = s0_sq + p.variance_slope()? * t;
    if !(var > 0.0) {
        return Err(Error::InvalidParameter(format!("variance must be positive, got {var}")));
    }
    let d = x - mean;
    Ok((-d * d / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt())
}
