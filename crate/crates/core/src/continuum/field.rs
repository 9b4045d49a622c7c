//! Fields sampled on uniform `(t, x)` grids: Klein-Gordon residuals and Lorentz boosts.

use serde::Serialize;

use super::cauchy::lagrange4;
use super::TelegraphParams;
use crate::error::{Error, Result};
use crate::exec::{self, Exec};

/// `values[it * nx + ix]` is the field at `(t0 + it·dt, x0 + ix·dx)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SampledField {
    pub t0: f64,
    pub dt: f64,
    pub nt: usize,
    pub x0: f64,
    pub dx: f64,
    pub nx: usize,
    pub values: Vec<f64>,
}

/// Axes of a uniform sampling grid: `(start, step, count)` in `t` and in `x`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SampleGrid {
    pub t0: f64,
    pub dt: f64,
    pub nt: usize,
    pub x0: f64,
    pub dx: f64,
    pub nx: usize,
}

impl SampleGrid {
    /// Grid with `nt` by `nx` points spanning `[t_lo, t_hi] × [x_lo, x_hi]`.
    pub fn spanning(t_lo: f64, t_hi: f64, nt: usize, x_lo: f64, x_hi: f64, nx: usize) -> Self {
        SampleGrid {
            t0: t_lo,
            dt: (t_hi - t_lo) / (nt.max(2) - 1) as f64,
            nt,
            x0: x_lo,
            dx: (x_hi - x_lo) / (nx.max(2) - 1) as f64,
            nx,
        }
    }
}

impl SampledField {
    pub fn from_fn(grid: SampleGrid, f: impl Fn(f64, f64) -> f64 + Sync + Send) -> Self {
        let SampleGrid { t0, dt, nt, x0, dx, nx } = grid;
        let values = exec::map_indexed(Exec::default(), nt * nx, |n| {
            f(t0 + (n / nx) as f64 * dt, x0 + (n % nx) as f64 * dx)
        });
        SampledField { t0, dt, nt, x0, dx, nx, values }
    }

    pub fn grid(&self) -> SampleGrid {
        SampleGrid {
            t0: self.t0,
            dt: self.dt,
            nt: self.nt,
            x0: self.x0,
            dx: self.dx,
            nx: self.nx,
        }
    }

    pub fn get(&self, it: usize, ix: usize) -> f64 {
        self.values[it * self.nx + ix]
    }

    /// Bicubic Lagrange interpolation; `None` outside the sampled rectangle.
    pub fn interpolate(&self, t: f64, x: f64) -> Option<f64> {
        let (it, wt) = stencil(self.t0, self.dt, self.nt, t)?;
        let (ix, wx) = stencil(self.x0, self.dx, self.nx, x)?;
        let mut acc = 0.0;
        for (a, wa) in wt.iter().enumerate() {
            let row = (it + a) * self.nx;
            let mut r = 0.0;
            for (b, wb) in wx.iter().enumerate() {
                r += wb * self.values[row + ix + b];
            }
            acc += wa * r;
        }
        Some(acc)
    }
}

/// First index and weights of the 4-point stencil around `v`.
fn stencil(v0: f64, dv: f64, n: usize, v: f64) -> Option<(usize, [f64; 4])> {
    if n < 4 {
        return None;
    }
    let s = (v - v0) / dv;
    if !(s >= -1e-9 && s <= (n - 1) as f64 + 1e-9) {
        return None;
    }
    let base = (s.floor() as i64).clamp(1, n as i64 - 3) as usize;
    Some((base - 1, lagrange4(s - base as f64)))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ResidualReport {
    pub norm_inf: f64,
    pub norm_l2: f64,
    pub dt: f64,
    pub dx: f64,
}

/// `ψ_tt - c²ψ_xx - η²ψ` by second central differences on the interior points.
/// The L² norm is `sqrt(Σ r² dt dx)`.
pub fn kg_residual(field: &SampledField, p: &TelegraphParams) -> Result<ResidualReport> {
    if field.nt < 3 || field.nx < 3 {
        return Err(Error::InvalidParameter(format!(
            "residual needs at least 3 points per axis, got {}x{}",
            field.nt, field.nx
        )));
    }
    let (dt, dx) = (field.dt, field.dx);
    let c2 = p.c * p.c;
    let e2 = p.eta * p.eta;
    let mut inf: f64 = 0.0;
    let mut sq = Vec::with_capacity((field.nt - 2) * (field.nx - 2));
    for it in 1..field.nt - 1 {
        for ix in 1..field.nx - 1 {
            let u = field.get(it, ix);
            let utt = (field.get(it + 1, ix) - 2.0 * u + field.get(it - 1, ix)) / (dt * dt);
            let uxx = (field.get(it, ix + 1) - 2.0 * u + field.get(it, ix - 1)) / (dx * dx);
            let r = utt - c2 * uxx - e2 * u;
            inf = inf.max(r.abs());
            sq.push(r * r);
        }
    }
    Ok(ResidualReport {
        norm_inf: inf,
        norm_l2: (exec::sum(sq) * dt * dx).sqrt(),
        dt,
        dx,
    })
}

/// `ψ*(t, x) = ψ(Γ(t - xv/c²), Γ(x - vt))` with `Γ = 1/sqrt(1 - v²/c²)`,
/// sampled on `target` by interpolating `source`.
pub fn lorentz_boost_samples(source: &SampledField, c: f64, v: f64, target: SampleGrid) -> Result<SampledField> {
    if !(v.abs() < c) {
        return Err(Error::InvalidParameter(format!("boost speed |{v}| must be below c = {c}")));
    }
    let g = 1.0 / (1.0 - (v / c).powi(2)).sqrt();
    let SampleGrid { t0, dt, nt, x0, dx, nx } = target;
    let values: Vec<Option<f64>> = exec::map_indexed(Exec::default(), nt * nx, |n| {
        let t = t0 + (n / nx) as f64 * dt;
        let x = x0 + (n % nx) as f64 * dx;
        if v == 0.0 {
            return source.interpolate(t, x);
        }
        source.interpolate(g * (t - x * v / (c * c)), g * (x - v * t))
    });
    let values = values
        .into_iter()
        .collect::<Option<Vec<f64>>>()
        .ok_or_else(|| Error::InvalidParameter("boosted grid reaches outside the source samples".into()))?;
    Ok(SampledField { t0, dt, nt, x0, dx, nx, values })
}
