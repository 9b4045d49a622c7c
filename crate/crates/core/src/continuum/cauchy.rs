//! Cauchy problem for the constant-rate continuum system.
//!
//! Writing `f±(z) = exp(εz/(2c)) q±(0, z)`, the Klein-Gordon functions are
//!
//! ```text
//! ψ+(t,x) = f+(x - ct) + (ηt/2) ∫ f+(z) I1(ηt cos u) (1 + sin u) du
//!                      + (βt/2) ∫ f-(z) I0(ηt cos u) cos u du
//! ψ-(t,x) = f-(x + ct) + (ηt/2) ∫ f-(z) I1(ηt cos u) (1 - sin u) du
//!                      + (αt/2) ∫ f+(z) I0(ηt cos u) cos u du
//! ```
//!
//! with `z = x - ct sin u` and `u` over `[-π/2, π/2]`. The `u` variable
//! absorbs the `1/ξ` behaviour of the kernels at the light cone, so every
//! integrand is smooth there. [`Kernel::Printed`] keeps the shorter form
//! `½(f(x+ct) + f(x-ct)) + (ctη/2) ∫ f(z) I0(ηt cos u) du` for each
//! component; it is not a solution of the system and is only offered as a
//! diagnostic.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::bessel::{bessel_i0, bessel_i1};
use super::TelegraphParams;
use crate::error::{Error, Result};
use crate::exec::{self, Exec};
use crate::lattice::JointDensity2;

/// One initial profile `q(0, x)` (a density per unit length).
#[derive(Clone)]
pub enum Profile {
    /// Uniform samples starting at `x0`, interpolated with 4-point Lagrange
    /// cubics. Outside the sampled range the profile is zero if `zero_pad`,
    /// an error otherwise.
    Samples {
        x0: f64,
        dx: f64,
        values: Vec<f64>,
        zero_pad: bool,
    },
    /// Closed form, zero outside `support`.
    Func {
        f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
        support: (f64, f64),
    },
}

impl fmt::Debug for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Profile::Samples { x0, dx, values, zero_pad } => f
                .debug_struct("Samples")
                .field("x0", x0)
                .field("dx", dx)
                .field("len", &values.len())
                .field("zero_pad", zero_pad)
                .finish(),
            Profile::Func { support, .. } => f.debug_struct("Func").field("support", support).finish(),
        }
    }
}

/// Lagrange weights for nodes at offsets `-1, 0, 1, 2` evaluated at `s ∈ [0, 1]`.
pub(crate) fn lagrange4(s: f64) -> [f64; 4] {
    [
        -s * (s - 1.0) * (s - 2.0) / 6.0,
        (s + 1.0) * (s - 1.0) * (s - 2.0) / 2.0,
        -(s + 1.0) * s * (s - 2.0) / 2.0,
        (s + 1.0) * s * (s - 1.0) / 6.0,
    ]
}

/// Cubic interpolation of `values` on `x0 + i·dx`; the stencil is shifted inward at the ends.
pub(crate) fn interp_uniform(values: &[f64], x0: f64, dx: f64, x: f64) -> Option<f64> {
    let n = values.len();
    let s = (x - x0) / dx;
    let last = (n - 1) as f64;
    let slack = 1e-9;
    if !(s >= -slack && s <= last + slack) {
        return None;
    }
    if n < 4 {
        // too few points for a cubic; fall back to linear
        let i = (s.floor().max(0.0) as usize).min(n.saturating_sub(2));
        if n == 1 {
            return Some(values[0]);
        }
        let f = s - i as f64;
        return Some(values[i] * (1.0 - f) + values[i + 1] * f);
    }
    let base = (s.floor() as i64).clamp(1, n as i64 - 3) as usize;
    let frac = s - base as f64;
    let w = lagrange4(frac);
    Some(w[0] * values[base - 1] + w[1] * values[base] + w[2] * values[base + 1] + w[3] * values[base + 2])
}

impl Profile {
    pub fn support(&self) -> (f64, f64) {
        match self {
            Profile::Samples { x0, dx, values, .. } => (*x0, x0 + dx * (values.len() as f64 - 1.0)),
            Profile::Func { support, .. } => *support,
        }
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        match self {
            Profile::Samples { x0, dx, values, zero_pad } => match interp_uniform(values, *x0, *dx, x) {
                Some(v) => Ok(v),
                None if *zero_pad => Ok(0.0),
                None => Err(Error::InvalidParameter(format!(
                    "initial profile queried at x={x}, outside its sampled range without zero padding"
                ))),
            },
            Profile::Func { f, support } => Ok(if x >= support.0 && x <= support.1 { f(x) } else { 0.0 }),
        }
    }

    /// Value inside the support, zero outside, never an error.
    fn eval_inside(&self, x: f64) -> f64 {
        let (lo, hi) = self.support();
        if x < lo || x > hi {
            return 0.0;
        }
        self.eval(x.clamp(lo, hi)).unwrap_or(0.0)
    }

    /// `∫ q dx` by Simpson's rule on the support.
    pub fn mass(&self) -> f64 {
        let (lo, hi) = self.support();
        simpson(lo, hi, 4096, |x| self.eval_inside(x))
    }
}

fn simpson(a: f64, b: f64, panels: usize, f: impl Fn(f64) -> f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let n = panels.max(2) & !1;
    let h = (b - a) / n as f64;
    let inner = exec::sum((1..n).map(|i| {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        w * f(a + i as f64 * h)
    }));
    (f(a) + f(b) + inner) * h / 3.0
}

#[derive(Clone, Debug)]
pub struct CauchyData {
    pub q_plus: Profile,
    pub q_minus: Profile,
}

impl CauchyData {
    /// Sampled profiles on `x0 + i·dx`; they must be nonnegative and carry unit total mass (to 1e-3,
    /// the accuracy of the trapezoid rule on coarse samples).
    pub fn from_samples(x0: f64, dx: f64, q_plus: Vec<f64>, q_minus: Vec<f64>, zero_pad: bool) -> Result<Self> {
        if q_plus.len() != q_minus.len() || q_plus.is_empty() {
            return Err(Error::InvalidParameter("sample arrays must be nonempty and equally long".into()));
        }
        if !(dx > 0.0) {
            return Err(Error::InvalidParameter(format!("sample spacing must be positive, got {dx}")));
        }
        if let Some(v) = q_plus.iter().chain(&q_minus).find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidParameter(format!("initial profile value {v} is negative or not finite")));
        }
        let trap = |v: &[f64]| dx * (exec::sum(v.iter().copied()) - 0.5 * (v[0] + v[v.len() - 1]));
        let mass = trap(&q_plus) + trap(&q_minus);
        if (mass - 1.0).abs() > 1e-3 {
            return Err(Error::InvalidParameter(format!("initial profiles integrate to {mass}, expected 1")));
        }
        Ok(CauchyData {
            q_plus: Profile::Samples { x0, dx, values: q_plus, zero_pad },
            q_minus: Profile::Samples { x0, dx, values: q_minus, zero_pad },
        })
    }

    pub fn from_fns(
        q_plus: impl Fn(f64) -> f64 + Send + Sync + 'static,
        q_minus: impl Fn(f64) -> f64 + Send + Sync + 'static,
        support: (f64, f64),
    ) -> Self {
        CauchyData {
            q_plus: Profile::Func { f: Arc::new(q_plus), support },
            q_minus: Profile::Func { f: Arc::new(q_minus), support },
        }
    }

    /// `q+ = q- ∝ exp(-x²/(2σ²))` on `[-w, w]`, normalized to unit total mass.
    pub fn gaussian(sigma: f64, support_half_width: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!("sigma must be positive, got {sigma}")));
        }
        if !(support_half_width > 0.0) {
            return Err(Error::InvalidParameter("support must have positive width".into()));
        }
        let w = support_half_width;
        let g = move |x: f64| (-x * x / (2.0 * sigma * sigma)).exp();
        let norm = 2.0 * simpson(-w, w, 1 << 14, g);
        Ok(Self::from_fns(move |x| g(x) / norm, move |x| g(x) / norm, (-w, w)))
    }

    /// Lattice masses turned into densities `q / dx` on the node positions.
    pub fn from_lattice(q: &JointDensity2) -> Result<Self> {
        let dx = q.grid.dx;
        Self::from_samples(
            q.grid.x_at(0),
            dx,
            q.q_plus.iter().map(|v| v / dx).collect(),
            q.q_minus.iter().map(|v| v / dx).collect(),
            true,
        )
    }

    pub fn mass(&self) -> f64 {
        self.q_plus.mass() + self.q_minus.mass()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kernel {
    /// Full solution including the initial-velocity terms.
    #[default]
    Complete,
    /// Half-sum plus `I0` kernel only.
    Printed,
}

impl std::str::FromStr for Kernel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "complete" => Ok(Kernel::Complete),
            "printed" => Ok(Kernel::Printed),
            other => Err(Error::Config(format!("unknown kernel `{other}` (expected complete or printed)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CauchyOptions {
    pub kernel: Kernel,
    /// Simpson panels per integral.
    pub panels: usize,
}

impl Default for CauchyOptions {
    fn default() -> Self {
        CauchyOptions {
            kernel: Kernel::Complete,
            panels: 2048,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CauchyValue {
    pub q_plus: f64,
    pub q_minus: f64,
    pub rho: f64,
}

/// `u`-interval where `z = x - ct sin u` lies in `[lo, hi]`.
fn u_range(x: f64, ct: f64, (lo, hi): (f64, f64)) -> Option<(f64, f64)> {
    let s_lo = ((x - hi) / ct).max(-1.0);
    let s_hi = ((x - lo) / ct).min(1.0);
    (s_lo < s_hi).then(|| (s_lo.asin(), s_hi.asin()))
}

/// `∫ q(z) exp(ε(z - x)/(2c)) w(u) du` over the part of the cone inside the profile's support.
fn cone_integral(profile: &Profile, x: f64, ct: f64, k: f64, panels: usize, w: impl Fn(f64) -> f64) -> f64 {
    match u_range(x, ct, profile.support()) {
        Some((a, b)) => simpson(a, b, panels, |u| {
            let z = x - ct * u.sin();
            profile.eval_inside(z) * (k * (z - x)).exp() * w(u)
        }),
        None => 0.0,
    }
}

/// Densities at `(t, x)` with the default options.
pub fn kg_cauchy_q(data: &CauchyData, p: &TelegraphParams, t: f64, x: f64) -> Result<CauchyValue> {
    kg_cauchy_q_with(data, p, t, x, &CauchyOptions::default())
}

pub fn kg_cauchy_q_with(data: &CauchyData, p: &TelegraphParams, t: f64, x: f64, opts: &CauchyOptions) -> Result<CauchyValue> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::InvalidParameter(format!("time must be finite and nonnegative, got {t}")));
    }
    if t == 0.0 {
        let (a, b) = (data.q_plus.eval(x)?, data.q_minus.eval(x)?);
        return Ok(CauchyValue { q_plus: a, q_minus: b, rho: a + b });
    }
    let ct = p.c * t;
    // Profiles that are sampled without padding must cover the whole light cone.
    data.q_plus.eval(x - ct)?;
    data.q_plus.eval(x + ct)?;
    data.q_minus.eval(x - ct)?;
    data.q_minus.eval(x + ct)?;

    let k = p.epsilon / (2.0 * p.c);
    let damp = (-0.5 * p.gamma * t).exp();
    let et = p.eta * t;
    let n = opts.panels;
    let (qp, qm) = (&data.q_plus, &data.q_minus);
    // f(z)·exp(-εx/(2c)) for a point value
    let shifted = |prof: &Profile, z: f64| prof.eval_inside(z) * (k * (z - x)).exp();

    let (psi_p, psi_m) = match opts.kernel {
        Kernel::Complete => {
            let i1 = |sign: f64| move |u: f64| bessel_i1(et * u.cos()) * (1.0 + sign * u.sin());
            let i0 = |u: f64| bessel_i0(et * u.cos()) * u.cos();
            let mut pp = shifted(qp, x - ct);
            let mut pm = shifted(qm, x + ct);
            if et > 0.0 {
                pp += 0.5 * et * cone_integral(qp, x, ct, k, n, i1(1.0));
                pm += 0.5 * et * cone_integral(qm, x, ct, k, n, i1(-1.0));
            }
            if p.beta > 0.0 {
                pp += 0.5 * p.beta * t * cone_integral(qm, x, ct, k, n, i0);
            }
            if p.alpha > 0.0 {
                pm += 0.5 * p.alpha * t * cone_integral(qp, x, ct, k, n, i0);
            }
            (pp, pm)
        }
        Kernel::Printed => {
            let i0 = |u: f64| bessel_i0(et * u.cos());
            let half = |prof: &Profile| 0.5 * (shifted(prof, x + ct) + shifted(prof, x - ct));
            let weight = 0.5 * ct * p.eta;
            let mut pp = half(qp);
            let mut pm = half(qm);
            if weight > 0.0 {
                pp += weight * cone_integral(qp, x, ct, k, n, i0);
                pm += weight * cone_integral(qm, x, ct, k, n, i0);
            }
            (pp, pm)
        }
    };
    let (a, b) = (damp * psi_p, damp * psi_m);
    Ok(CauchyValue { q_plus: a, q_minus: b, rho: a + b })
}

/// [`kg_cauchy_q_with`] at every point of `xs`, evaluated in parallel.
pub fn analytic_profile(
    data: &CauchyData,
    p: &TelegraphParams,
    t: f64,
    xs: &[f64],
    opts: &CauchyOptions,
    exec: Exec,
) -> Result<Vec<CauchyValue>> {
    exec::map_indexed(exec, xs.len(), |i| kg_cauchy_q_with(data, p, t, xs[i], opts))
        .into_iter()
        .collect()
}
