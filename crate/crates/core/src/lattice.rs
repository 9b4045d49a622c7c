//! Grids, joint velocity/position densities, and switching-rate specifications.
//!
//! Nodes are integers `m` in `m_min..=m_max` at positions `x = m * dx`; time
//! advances in steps of `dt`, so every walker moves at `±c = ±dx/dt` (or
//! integer multiples of `c` on the multi-velocity lattice). Densities are
//! probability masses per node, not per unit length.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GridSpec {
    pub dx: f64,
    pub dt: f64,
    pub m_min: i64,
    pub m_max: i64,
}

impl GridSpec {
    pub fn new(dx: f64, dt: f64, m_min: i64, m_max: i64) -> Result<Self> {
        if !(dx > 0.0 && dx.is_finite()) {
            return Err(Error::InvalidGrid(format!("space step must be positive, got {dx}")));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidGrid(format!("time step must be positive, got {dt}")));
        }
        if m_min > m_max {
            return Err(Error::InvalidGrid(format!("inverted node bounds {m_min} > {m_max}")));
        }
        let c = dx / dt;
        if !(c.is_finite() && c > 0.0) {
            return Err(Error::InvalidGrid(format!("speed dx/dt = {c} is not finite")));
        }
        Ok(GridSpec { dx, dt, m_min, m_max })
    }

    /// Characteristic speed `dx / dt`.
    pub fn c(&self) -> f64 {
        self.dx / self.dt
    }

    pub fn len(&self) -> usize {
        (self.m_max - self.m_min + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn x(&self, m: i64) -> f64 {
        m as f64 * self.dx
    }

    pub fn node(&self, idx: usize) -> i64 {
        self.m_min + idx as i64
    }

    pub fn x_at(&self, idx: usize) -> f64 {
        self.x(self.node(idx))
    }

    pub fn index(&self, m: i64) -> Option<usize> {
        (self.m_min..=self.m_max)
            .contains(&m)
            .then(|| (m - self.m_min) as usize)
    }

    pub fn contains(&self, m: i64) -> bool {
        self.index(m).is_some()
    }

    /// Same steps, bounds widened by `pad` nodes on each side.
    pub fn expanded(&self, pad: i64) -> GridSpec {
        GridSpec {
            m_min: self.m_min - pad,
            m_max: self.m_max + pad,
            ..*self
        }
    }

    /// Time of step `k` (computed directly, never accumulated).
    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }
}

/// Shorthand constructor, see [`GridSpec::new`].
pub fn make_grid(dx: f64, dt: f64, m_min: i64, m_max: i64) -> Result<GridSpec> {
    GridSpec::new(dx, dt, m_min, m_max)
}

/// Joint mass of (node, exit velocity) for the two-velocity walk.
#[derive(Clone, Debug, PartialEq)]
pub struct JointDensity2 {
    pub grid: GridSpec,
    pub q_plus: Vec<f64>,
    pub q_minus: Vec<f64>,
}

impl JointDensity2 {
    pub fn new(grid: GridSpec, q_plus: Vec<f64>, q_minus: Vec<f64>) -> Result<Self> {
        if q_plus.len() != grid.len() || q_minus.len() != grid.len() {
            return Err(Error::InvalidParameter(format!(
                "density arrays have lengths {}/{} but the grid has {} nodes",
                q_plus.len(),
                q_minus.len(),
                grid.len()
            )));
        }
        if let Some(v) = q_plus.iter().chain(&q_minus).find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidParameter(format!("density entry {v} is negative or not finite")));
        }
        Ok(JointDensity2 { grid, q_plus, q_minus })
    }

    pub fn zeros(grid: GridSpec) -> Self {
        JointDensity2 {
            grid,
            q_plus: vec![0.0; grid.len()],
            q_minus: vec![0.0; grid.len()],
        }
    }

    /// Unit mass at node `m`, split `up_fraction` / `1 - up_fraction` between directions.
    pub fn point(grid: GridSpec, m: i64, up_fraction: f64) -> Result<Self> {
        let idx = grid
            .index(m)
            .ok_or_else(|| Error::InvalidParameter(format!("node {m} is outside the grid")))?;
        if !(0.0..=1.0).contains(&up_fraction) {
            return Err(Error::InvalidParameter(format!("up fraction {up_fraction} not in [0, 1]")));
        }
        let mut q = Self::zeros(grid);
        q.q_plus[idx] = up_fraction;
        q.q_minus[idx] = 1.0 - up_fraction;
        Ok(q)
    }

    pub fn total_mass(&self) -> f64 {
        exec::sum(self.q_plus.iter().chain(&self.q_minus).copied())
    }

    pub fn min_entry(&self) -> f64 {
        min_entry(self.q_plus.iter().chain(&self.q_minus).copied())
    }

    pub fn rho(&self, idx: usize) -> f64 {
        self.q_plus[idx] + self.q_minus[idx]
    }

    /// Copy onto a wider grid with the same steps. Fails if `grid` does not cover `self.grid`.
    pub fn embed(&self, grid: GridSpec) -> Result<Self> {
        if grid.dx != self.grid.dx || grid.dt != self.grid.dt {
            return Err(Error::InvalidGrid("cannot embed into a grid with different steps".into()));
        }
        if grid.m_min > self.grid.m_min || grid.m_max < self.grid.m_max {
            return Err(Error::InvalidGrid("target grid does not cover the source grid".into()));
        }
        let offset = (self.grid.m_min - grid.m_min) as usize;
        let mut out = Self::zeros(grid);
        out.q_plus[offset..offset + self.grid.len()].copy_from_slice(&self.q_plus);
        out.q_minus[offset..offset + self.grid.len()].copy_from_slice(&self.q_minus);
        Ok(out)
    }

    /// `(min, max)` node carrying nonzero mass, if any.
    pub fn support(&self) -> Option<(i64, i64)> {
        let occupied = |i: &usize| self.q_plus[*i] > 0.0 || self.q_minus[*i] > 0.0;
        let lo = (0..self.grid.len()).find(occupied)?;
        let hi = (0..self.grid.len()).rev().find(occupied)?;
        Some((self.grid.node(lo), self.grid.node(hi)))
    }

    /// Checks entrywise nonnegativity, unit total mass within `tol`, and the
    /// sub-normalization of each direction when both are populated.
    pub fn validate_normalized(&self, tol: f64) -> Result<()> {
        let mass = self.total_mass();
        if (mass - 1.0).abs() > tol {
            return Err(Error::ConservationBreach {
                error: (mass - 1.0).abs(),
                tolerance: tol,
            });
        }
        let up = exec::sum(self.q_plus.iter().copied());
        let down = exec::sum(self.q_minus.iter().copied());
        if up > 0.0 && down > 0.0 && (up >= 1.0 || down >= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "directional masses {up}/{down} must each stay below 1"
            )));
        }
        Ok(())
    }
}

/// `rho = q+ + q-` and `phi = q+ - q-` per node.
#[derive(Clone, Debug, PartialEq)]
pub struct StateDensity {
    pub grid: GridSpec,
    pub rho: Vec<f64>,
    pub phi: Vec<f64>,
}

pub fn to_state_density(q: &JointDensity2) -> StateDensity {
    let (rho, phi) = q
        .q_plus
        .iter()
        .zip(&q.q_minus)
        .map(|(p, m)| (p + m, p - m))
        .unzip();
    StateDensity { grid: q.grid, rho, phi }
}

pub fn total_mass(q: &JointDensity2) -> f64 {
    q.total_mass()
}

/// Smallest value, `+inf` for an empty input.
pub fn min_entry(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().fold(f64::INFINITY, f64::min)
}

/// Discretized Gaussian `q+ = q- ∝ exp(-x²/(2σ²))` on the nodes with
/// `|x| <= support_half_width`, renormalized to total mass exactly 1.
///
/// `sigma = f64::INFINITY` gives the flat limit.
pub fn gaussian_initial(grid: GridSpec, sigma: f64, support_half_width: f64) -> Result<JointDensity2> {
    if !(sigma > 0.0) {
        return Err(Error::InvalidParameter(format!("sigma must be positive, got {sigma}")));
    }
    if !(support_half_width >= 0.0 && support_half_width.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "support half-width must be finite and nonnegative, got {support_half_width}"
        )));
    }
    // Tolerate round-off so that e.g. 6.9 / 0.3 lands on node 23.
    let half_nodes = (support_half_width / grid.dx * (1.0 + 1e-12) + 1e-9).floor() as i64;
    if !grid.contains(-half_nodes) || !grid.contains(half_nodes) {
        return Err(Error::InvalidParameter(format!(
            "support nodes -{half_nodes}..={half_nodes} do not fit the grid {}..={}",
            grid.m_min, grid.m_max
        )));
    }
    let weights: Vec<(usize, f64)> = (-half_nodes..=half_nodes)
        .map(|m| {
            let x = grid.x(m);
            let w = if sigma.is_infinite() { 1.0 } else { (-x * x / (2.0 * sigma * sigma)).exp() };
            (grid.index(m).unwrap(), w)
        })
        .collect();
    let norm = 2.0 * exec::sum(weights.iter().map(|(_, w)| *w));
    if !(norm > 0.0) {
        return Err(Error::InvalidParameter("empty support: every Gaussian weight underflowed".into()));
    }
    let mut q = JointDensity2::zeros(grid);
    for (idx, w) in weights {
        q.q_plus[idx] = w / norm;
        q.q_minus[idx] = w / norm;
    }
    Ok(q)
}

/// Scalar field over `(t, x)`.
#[derive(Clone)]
pub enum RateFn {
    Constant(f64),
    Field(Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>),
}

impl RateFn {
    pub fn field(f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        RateFn::Field(Arc::new(f))
    }

    pub fn at(&self, t: f64, x: f64) -> f64 {
        match self {
            RateFn::Constant(v) => *v,
            RateFn::Field(f) => f(t, x),
        }
    }

    pub fn constant_value(&self) -> Option<f64> {
        match self {
            RateFn::Constant(v) => Some(*v),
            RateFn::Field(_) => None,
        }
    }
}

impl fmt::Debug for RateFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RateFn::Constant(v) => write!(f, "Constant({v})"),
            RateFn::Field(_) => f.write_str("Field(<fn>)"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateForm {
    /// Per-step switching probabilities in `[0, 1]`.
    StepProbability,
    /// Rates per unit time; the per-step probability is `rate * dt`.
    ContinuumRate,
}

/// Switching law for the two-velocity walk. `alpha` turns up-movers down,
/// `beta` turns down-movers up; both are evaluated at the arrival node.
#[derive(Clone, Debug)]
pub struct RateSpec2 {
    pub alpha: RateFn,
    pub beta: RateFn,
    pub form: RateForm,
}

impl RateSpec2 {
    pub fn new(alpha: RateFn, beta: RateFn, form: RateForm) -> Self {
        RateSpec2 { alpha, beta, form }
    }

    pub fn constant(alpha: f64, beta: f64, form: RateForm) -> Self {
        RateSpec2::new(RateFn::Constant(alpha), RateFn::Constant(beta), form)
    }

    /// Validated per-step probabilities `(a, b)` at `(t, x)` for a step of length `h`.
    pub fn step_probabilities(&self, t: f64, x: f64, h: f64) -> Result<(f64, f64)> {
        let scale = match self.form {
            RateForm::StepProbability => 1.0,
            RateForm::ContinuumRate => h,
        };
        let a = self.alpha.at(t, x) * scale;
        let b = self.beta.at(t, x) * scale;
        for (what, v) in [("alpha", a), ("beta", b)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidProbability { what, value: v, t, x });
            }
        }
        Ok((a, b))
    }

    /// Rates per unit time `(alpha, beta)` at `(t, x)` for a step of length `h`.
    pub fn rates(&self, t: f64, x: f64, h: f64) -> (f64, f64) {
        let scale = match self.form {
            RateForm::StepProbability => 1.0 / h,
            RateForm::ContinuumRate => 1.0,
        };
        (self.alpha.at(t, x) * scale, self.beta.at(t, x) * scale)
    }

    /// Constant `(alpha, beta)` in their stored rate form, if both are constant.
    pub fn constant_values(&self) -> Option<(f64, f64)> {
        Some((self.alpha.constant_value()?, self.beta.constant_value()?))
    }
}

/// Per-time mean, variance and mean velocity of the state density.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct MomentSeries {
    pub times: Vec<f64>,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    pub mean_velocity: Vec<f64>,
}

/// Read access shared by two-velocity and multi-velocity snapshots.
pub trait DensitySnapshot {
    fn grid(&self) -> &GridSpec;
    /// State density at node index `idx`.
    fn rho_at(&self, idx: usize) -> f64;
    /// `Σ_x Σ_j v_j q^j(x)`: the total momentum per unit mass.
    fn momentum(&self) -> f64;
}

impl DensitySnapshot for JointDensity2 {
    fn grid(&self) -> &GridSpec {
        &self.grid
    }

    fn rho_at(&self, idx: usize) -> f64 {
        self.rho(idx)
    }

    fn momentum(&self) -> f64 {
        let c = self.grid.c();
        c * exec::sum(self.q_plus.iter().zip(&self.q_minus).map(|(p, m)| p - m))
    }
}
