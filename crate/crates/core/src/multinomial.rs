//! Walks with velocities `j·c`, `j = -J..=J`.
//!
//! A step moves velocity-`k` mass `k` nodes, then redistributes it over the
//! velocities with column `k` of the one-step matrix at the arrival node:
//! `q^j'(x) = Σ_k P_jk(x) q^k(x - kΔx)`. The matrix either is given directly
//! (step-probability form, columns summing to 1) or comes from a generator
//! `ω` (columns summing to 0) as `P = I + hω`.

use std::fmt;
use std::ops::Range;
use std::sync::Arc;

use serde::Serialize;

use crate::binomial::VelocityField;
use crate::error::{Error, Result};
use crate::exec::{self, Exec};
use crate::lattice::{DensitySnapshot, GridSpec, RateForm, RateSpec2};

/// Column sums must match 1 (or 0) to this absolute tolerance.
pub const COLUMN_SUM_TOL: f64 = 1e-12;

/// Runs whose `|j| = J` occupancy exceeds this are flagged as truncation-affected.
pub const EDGE_OCCUPANCY_FLAG: f64 = 1e-6;

/// Joint mass over (node, velocity index), stored node-major.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiDensity {
    pub grid: GridSpec,
    pub j_max: i32,
    /// `q[idx * (2J+1) + (j + J)]`.
    pub q: Vec<f64>,
}

impl MultiDensity {
    pub fn zeros(grid: GridSpec, j_max: i32) -> Result<Self> {
        if j_max < 0 {
            return Err(Error::InvalidParameter(format!("J must be nonnegative, got {j_max}")));
        }
        Ok(MultiDensity {
            grid,
            j_max,
            q: vec![0.0; grid.len() * (2 * j_max as usize + 1)],
        })
    }

    pub fn new(grid: GridSpec, j_max: i32, q: Vec<f64>) -> Result<Self> {
        let mut d = Self::zeros(grid, j_max)?;
        if q.len() != d.q.len() {
            return Err(Error::InvalidParameter(format!(
                "expected {} entries, got {}",
                d.q.len(),
                q.len()
            )));
        }
        if let Some(v) = q.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidParameter(format!("density entry {v} is negative or not finite")));
        }
        d.q = q;
        Ok(d)
    }

    /// Unit mass at node `m` with velocity index `j`.
    pub fn point(grid: GridSpec, j_max: i32, m: i64, j: i32) -> Result<Self> {
        let mut d = Self::zeros(grid, j_max)?;
        let idx = grid
            .index(m)
            .ok_or_else(|| Error::InvalidParameter(format!("node {m} is outside the grid")))?;
        if j.abs() > j_max {
            return Err(Error::InvalidParameter(format!("velocity index {j} exceeds J = {j_max}")));
        }
        d.set(j, idx, 1.0);
        Ok(d)
    }

    pub fn nv(&self) -> usize {
        2 * self.j_max as usize + 1
    }

    pub fn get(&self, j: i32, idx: usize) -> f64 {
        self.q[idx * self.nv() + (j + self.j_max) as usize]
    }

    pub fn set(&mut self, j: i32, idx: usize, value: f64) {
        let nv = self.nv();
        self.q[idx * nv + (j + self.j_max) as usize] = value;
    }

    /// Velocities at node index `idx`, ordered `j = -J..=J`.
    pub fn column(&self, idx: usize) -> &[f64] {
        let nv = self.nv();
        &self.q[idx * nv..(idx + 1) * nv]
    }

    pub fn velocity(&self, j: i32) -> f64 {
        j as f64 * self.grid.c()
    }

    pub fn rho(&self, idx: usize) -> f64 {
        exec::sum(self.column(idx).iter().copied())
    }

    pub fn total_mass(&self) -> f64 {
        exec::sum(self.q.iter().copied())
    }

    pub fn min_entry(&self) -> f64 {
        crate::lattice::min_entry(self.q.iter().copied())
    }

    /// Mass carried by the extreme velocities `±J`.
    pub fn edge_occupancy(&self) -> f64 {
        if self.j_max == 0 {
            return 0.0;
        }
        let j = self.j_max;
        exec::sum((0..self.grid.len()).map(|i| self.get(j, i) + self.get(-j, i)))
    }

    pub fn support(&self) -> Option<(i64, i64)> {
        let occupied = |i: &usize| self.column(*i).iter().any(|v| *v != 0.0);
        let lo = (0..self.grid.len()).find(occupied)?;
        let hi = (0..self.grid.len()).rev().find(occupied)?;
        Some((self.grid.node(lo), self.grid.node(hi)))
    }

    pub fn embed(&self, grid: GridSpec) -> Result<Self> {
        if grid.dx != self.grid.dx || grid.dt != self.grid.dt {
            return Err(Error::InvalidGrid("cannot embed into a grid with different steps".into()));
        }
        if grid.m_min > self.grid.m_min || grid.m_max < self.grid.m_max {
            return Err(Error::InvalidGrid("target grid does not cover the source grid".into()));
        }
        let nv = self.nv();
        let offset = (self.grid.m_min - grid.m_min) as usize * nv;
        let mut out = Self::zeros(grid, self.j_max)?;
        out.q[offset..offset + self.q.len()].copy_from_slice(&self.q);
        Ok(out)
    }

    /// Two-velocity marginal view: `(q^{+1}, q^{-1})` per node.
    pub fn unit_speed_pair(&self) -> (Vec<f64>, Vec<f64>) {
        (0..self.grid.len()).map(|i| (self.get(1, i), self.get(-1, i))).unzip()
    }
}

impl DensitySnapshot for MultiDensity {
    fn grid(&self) -> &GridSpec {
        &self.grid
    }

    fn rho_at(&self, idx: usize) -> f64 {
        self.rho(idx)
    }

    fn momentum(&self) -> f64 {
        let c = self.grid.c();
        let nv = self.nv();
        let j_max = self.j_max;
        c * exec::sum(
            self.q
                .iter()
                .enumerate()
                .map(|(n, v)| ((n % nv) as i32 - j_max) as f64 * v),
        )
    }
}

/// Velocity switching law for the multi-velocity walk.
pub trait Mixing: Sync {
    fn j_max(&self) -> i32;

    /// Writes column `k` of the one-step probability matrix at `(t, x)` for a
    /// step of length `h`: `col[j + J] = P(next velocity j | velocity k)`.
    fn step_column(&self, t: f64, x: f64, h: f64, k: i32, col: &mut [f64]) -> Result<()>;

    /// `out[j] = Σ_k P_jk incoming[k]`. `out` is overwritten.
    fn mix(&self, t: f64, x: f64, h: f64, incoming: &[f64], out: &mut [f64]) -> Result<()> {
        let j_max = self.j_max();
        let mut col = vec![0.0; incoming.len()];
        out.fill(0.0);
        for (kk, &w) in incoming.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            self.step_column(t, x, h, kk as i32 - j_max, &mut col)?;
            for (o, p) in out.iter_mut().zip(&col) {
                *o += p * w;
            }
        }
        Ok(())
    }
}

/// Evaluator for a full `(2J+1)²` matrix at `(t, x)`, written row-major `ω_jk`.
pub type MatrixFn = Arc<dyn Fn(f64, f64, &mut [f64]) + Send + Sync>;

#[derive(Clone)]
pub enum MatrixSource {
    Constant(Vec<f64>),
    Field(MatrixFn),
}

/// General `(2J+1)×(2J+1)` switching matrix, row-major `ω_jk`.
#[derive(Clone)]
pub struct RateMatrix {
    pub j_max: i32,
    pub form: RateForm,
    pub source: MatrixSource,
}

impl fmt::Debug for RateMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = f.debug_struct("RateMatrix");
        s.field("j_max", &self.j_max).field("form", &self.form);
        match &self.source {
            MatrixSource::Constant(m) => s.field("omega", m),
            MatrixSource::Field(_) => s.field("omega", &"<fn>"),
        };
        s.finish()
    }
}

fn check_matrix(j_max: i32, form: RateForm, m: &[f64], t: f64, x: f64) -> Result<()> {
    let nv = 2 * j_max as usize + 1;
    if m.len() != nv * nv {
        return Err(Error::InvalidParameter(format!(
            "matrix for J = {j_max} needs {} entries, got {}",
            nv * nv,
            m.len()
        )));
    }
    for k in 0..nv {
        let column = (0..nv).map(|j| m[j * nv + k]);
        let sum = exec::sum(column.clone());
        match form {
            RateForm::StepProbability => {
                if let Some(v) = column.clone().find(|v| !(0.0..=1.0).contains(v)) {
                    return Err(Error::InvalidProbability { what: "omega", value: v, t, x });
                }
                if (sum - 1.0).abs() > COLUMN_SUM_TOL {
                    return Err(Error::InvalidParameter(format!(
                        "column {} sums to {sum}, expected 1",
                        k as i32 - j_max
                    )));
                }
            }
            RateForm::ContinuumRate => {
                if let Some(v) = (0..nv).filter(|j| *j != k).map(|j| m[j * nv + k]).find(|v| !(*v >= 0.0)) {
                    return Err(Error::InvalidParameter(format!("negative off-diagonal rate {v}")));
                }
                if sum.abs() > COLUMN_SUM_TOL * (1.0 + m[k * nv + k].abs()) {
                    return Err(Error::InvalidParameter(format!(
                        "generator column {} sums to {sum}, expected 0",
                        k as i32 - j_max
                    )));
                }
            }
        }
    }
    Ok(())
}

impl RateMatrix {
    /// Constant matrix given row-major; validated against `form`.
    pub fn constant(j_max: i32, form: RateForm, omega: Vec<f64>) -> Result<Self> {
        if j_max < 0 {
            return Err(Error::InvalidParameter(format!("J must be nonnegative, got {j_max}")));
        }
        check_matrix(j_max, form, &omega, f64::NAN, f64::NAN)?;
        Ok(RateMatrix {
            j_max,
            form,
            source: MatrixSource::Constant(omega),
        })
    }

    /// `(t, x)`-dependent matrix; validated whenever it is evaluated.
    pub fn field(j_max: i32, form: RateForm, f: impl Fn(f64, f64, &mut [f64]) + Send + Sync + 'static) -> Self {
        RateMatrix {
            j_max,
            form,
            source: MatrixSource::Field(Arc::new(f)),
        }
    }

    pub fn identity(j_max: i32) -> Self {
        let nv = 2 * j_max as usize + 1;
        let mut m = vec![0.0; nv * nv];
        for k in 0..nv {
            m[k * nv + k] = 1.0;
        }
        RateMatrix {
            j_max,
            form: RateForm::StepProbability,
            source: MatrixSource::Constant(m),
        }
    }

    pub fn nv(&self) -> usize {
        2 * self.j_max as usize + 1
    }

    /// Matrix entries `ω_jk` at `(t, x)` in this matrix's own form, validated.
    pub fn evaluate(&self, t: f64, x: f64) -> Result<Vec<f64>> {
        match &self.source {
            MatrixSource::Constant(m) => Ok(m.clone()),
            MatrixSource::Field(f) => {
                let mut m = vec![0.0; self.nv() * self.nv()];
                f(t, x, &mut m);
                check_matrix(self.j_max, self.form, &m, t, x)?;
                Ok(m)
            }
        }
    }

    pub fn entry(&self, t: f64, x: f64, j: i32, k: i32) -> Result<f64> {
        let nv = self.nv();
        Ok(self.evaluate(t, x)?[(j + self.j_max) as usize * nv + (k + self.j_max) as usize])
    }
}

/// Turn a generator into one-step probabilities `δ_jk + h ω_jk`.
pub fn rate_to_step(omega_rate: &RateMatrix, h: f64) -> Result<RateMatrix> {
    if omega_rate.form != RateForm::ContinuumRate {
        return Err(Error::InvalidParameter("rate_to_step needs a generator (continuum-rate form)".into()));
    }
    if !(h > 0.0) {
        return Err(Error::InvalidParameter(format!("step must be positive, got {h}")));
    }
    let nv = omega_rate.nv();
    let to_step = move |m: &mut [f64]| {
        for j in 0..nv {
            for k in 0..nv {
                let d = if j == k { 1.0 } else { 0.0 };
                m[j * nv + k] = d + h * m[j * nv + k];
            }
        }
        // Reassign the diagonal so each column sums to exactly 1 in floating point.
        for k in 0..nv {
            let off = exec::sum((0..nv).filter(|j| *j != k).map(|j| m[j * nv + k]));
            m[k * nv + k] = 1.0 - off;
        }
    };
    match &omega_rate.source {
        MatrixSource::Constant(m) => {
            let mut p = m.clone();
            to_step(&mut p);
            RateMatrix::constant(omega_rate.j_max, RateForm::StepProbability, p)
        }
        MatrixSource::Field(f) => {
            let f = Arc::clone(f);
            Ok(RateMatrix::field(omega_rate.j_max, RateForm::StepProbability, move |t, x, m| {
                f(t, x, m);
                to_step(m);
            }))
        }
    }
}

impl Mixing for RateMatrix {
    fn j_max(&self) -> i32 {
        self.j_max
    }

    fn step_column(&self, t: f64, x: f64, h: f64, k: i32, col: &mut [f64]) -> Result<()> {
        let nv = self.nv();
        let m = self.evaluate(t, x)?;
        let kk = (k + self.j_max) as usize;
        for (j, c) in col.iter_mut().enumerate() {
            *c = m[j * nv + kk];
        }
        if self.form == RateForm::ContinuumRate {
            for c in col.iter_mut() {
                *c *= h;
            }
            col[kk] = 1.0 - exec::sum(col.iter().enumerate().filter(|(j, _)| *j != kk).map(|(_, v)| *v));
            if col[kk] < 0.0 {
                return Err(Error::InvalidProbability { what: "omega", value: col[kk], t, x });
            }
        }
        Ok(())
    }

    fn mix(&self, t: f64, x: f64, h: f64, incoming: &[f64], out: &mut [f64]) -> Result<()> {
        let nv = self.nv();
        let mut col = vec![0.0; nv];
        out.fill(0.0);
        if let (RateForm::StepProbability, MatrixSource::Constant(m)) = (self.form, &self.source) {
            for (kk, &w) in incoming.iter().enumerate() {
                if w != 0.0 {
                    for (j, o) in out.iter_mut().enumerate() {
                        *o += m[j * nv + kk] * w;
                    }
                }
            }
            return Ok(());
        }
        for (kk, &w) in incoming.iter().enumerate() {
            if w != 0.0 {
                self.step_column(t, x, h, kk as i32 - self.j_max, &mut col)?;
                for (o, p) in out.iter_mut().zip(&col) {
                    *o += p * w;
                }
            }
        }
        Ok(())
    }
}

/// The two-velocity law inside a `J = 1` lattice; the `j = 0` row is inert.
#[derive(Clone, Debug)]
pub struct BinomialMixing(pub RateSpec2);

impl Mixing for BinomialMixing {
    fn j_max(&self) -> i32 {
        1
    }

    fn step_column(&self, t: f64, x: f64, h: f64, k: i32, col: &mut [f64]) -> Result<()> {
        let (a, b) = self.0.step_probabilities(t, x, h)?;
        // col = [P(-1|k), P(0|k), P(+1|k)]
        col.copy_from_slice(&match k {
            1 => [a, 0.0, 1.0 - a],
            -1 => [1.0 - b, 0.0, b],
            _ => [0.0, 1.0, 0.0],
        });
        Ok(())
    }

    fn mix(&self, t: f64, x: f64, h: f64, incoming: &[f64], out: &mut [f64]) -> Result<()> {
        let (down, still, up) = (incoming[0], incoming[1], incoming[2]);
        let (a, b) = self.0.step_probabilities(t, x, h)?;
        out[2] = (1.0 - a) * up + b * down;
        out[1] = still;
        out[0] = a * up + (1.0 - b) * down;
        Ok(())
    }
}

/// Switching rates that make the mean position obey Newton's law in the potential `V`.
#[derive(Clone)]
pub struct NewtonRates {
    pub theta: f64,
    pub c: f64,
    pub gradient: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub potential: Option<Arc<dyn Fn(f64) -> f64 + Send + Sync>>,
}

impl fmt::Debug for NewtonRates {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NewtonRates")
            .field("theta", &self.theta)
            .field("c", &self.c)
            .field("potential", &self.potential.is_some())
            .finish()
    }
}

impl NewtonRates {
    pub fn new(theta: f64, c: f64, gradient: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Result<Self> {
        if !(theta > 0.0 && theta.is_finite()) {
            return Err(Error::InvalidParameter(format!("theta must be positive, got {theta}")));
        }
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::InvalidParameter(format!("c must be positive, got {c}")));
        }
        Ok(NewtonRates {
            theta,
            c,
            gradient: Arc::new(gradient),
            potential: None,
        })
    }

    pub fn with_potential(mut self, v: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        self.potential = Some(Arc::new(v));
        self
    }

    /// Uniform force: `V = g x`.
    pub fn linear(theta: f64, c: f64, g: f64) -> Result<Self> {
        Ok(Self::new(theta, c, move |_| g)?.with_potential(move |x| g * x))
    }

    /// Oscillator: `V = κ x² / 2`.
    pub fn harmonic(theta: f64, c: f64, kappa: f64) -> Result<Self> {
        Ok(Self::new(theta, c, move |x| kappa * x)?.with_potential(move |x| 0.5 * kappa * x * x))
    }

    pub fn vprime(&self, x: f64) -> f64 {
        (self.gradient)(x)
    }

    /// Rate of `j -> j-1`.
    pub fn alpha(&self, x: f64) -> f64 {
        self.theta + self.vprime(x) / (2.0 * self.c)
    }

    /// Rate of `j -> j+1`.
    pub fn beta(&self, x: f64) -> f64 {
        self.theta - self.vprime(x) / (2.0 * self.c)
    }

    pub fn lambda(&self, x: f64) -> f64 {
        self.alpha(x) + self.beta(x)
    }

    pub fn check(&self, x: f64) -> Result<()> {
        let drift = (self.vprime(x) / (2.0 * self.c)).abs();
        if !(drift < self.theta) {
            return Err(Error::RateNegativity { x, drift, theta: self.theta });
        }
        Ok(())
    }
}

/// Tridiagonal generator with `α` on the superdiagonal (`k -> k-1`), `β` on the
/// subdiagonal (`k -> k+1`) and `-λ` on the diagonal. The transitions that
/// would leave `|j| <= J` are dropped and the edge diagonals adjusted so every
/// column still sums to zero.
pub fn build_newton_rate_matrix(nr: &NewtonRates, j_max: i32, x: f64) -> Result<RateMatrix> {
    nr.check(x)?;
    let nv = 2 * j_max as usize + 1;
    let (a, b) = (nr.alpha(x), nr.beta(x));
    let mut m = vec![0.0; nv * nv];
    for k in 0..nv {
        let mut out = 0.0;
        if k > 0 {
            m[(k - 1) * nv + k] = a;
            out += a;
        }
        if k + 1 < nv {
            m[(k + 1) * nv + k] = b;
            out += b;
        }
        m[k * nv + k] = -out;
    }
    RateMatrix::constant(j_max, RateForm::ContinuumRate, m)
}

/// [`NewtonRates`] evaluated on the fly at each arrival node.
#[derive(Clone, Debug)]
pub struct NewtonMixing {
    pub rates: NewtonRates,
    pub j_max: i32,
}

impl NewtonMixing {
    /// Validates `α, β > 0` and `hλ <= 1` at every node of `grid`.
    pub fn new(rates: NewtonRates, j_max: i32, grid: &GridSpec) -> Result<Self> {
        if j_max < 1 {
            return Err(Error::InvalidParameter(format!("Newton rates need J >= 1, got {j_max}")));
        }
        for i in 0..grid.len() {
            let x = grid.x_at(i);
            rates.check(x)?;
            let hl = grid.dt * rates.lambda(x);
            if hl > 1.0 {
                return Err(Error::InvalidProbability { what: "h*lambda", value: hl, t: 0.0, x });
            }
        }
        Ok(NewtonMixing { rates, j_max })
    }

    fn probs(&self, x: f64, h: f64) -> Result<(f64, f64)> {
        let (a, b) = (h * self.rates.alpha(x), h * self.rates.beta(x));
        if !(a >= 0.0 && b >= 0.0 && a + b <= 1.0) {
            self.rates.check(x)?;
            return Err(Error::InvalidProbability { what: "h*lambda", value: a + b, t: f64::NAN, x });
        }
        Ok((a, b))
    }
}

impl Mixing for NewtonMixing {
    fn j_max(&self) -> i32 {
        self.j_max
    }

    fn step_column(&self, _t: f64, x: f64, h: f64, k: i32, col: &mut [f64]) -> Result<()> {
        let (a, b) = self.probs(x, h)?;
        let kk = (k + self.j_max) as usize;
        col.fill(0.0);
        let mut stay = 1.0;
        if kk > 0 {
            col[kk - 1] = a;
            stay -= a;
        }
        if kk + 1 < col.len() {
            col[kk + 1] = b;
            stay -= b;
        }
        col[kk] = stay;
        Ok(())
    }

    fn mix(&self, _t: f64, x: f64, h: f64, incoming: &[f64], out: &mut [f64]) -> Result<()> {
        let (a, b) = self.probs(x, h)?;
        let nv = incoming.len();
        // the edge columns can only switch inward
        out[0] = (1.0 - b) * incoming[0] + a * incoming[1];
        let stay = 1.0 - a - b;
        for j in 1..nv - 1 {
            out[j] = stay * incoming[j] + a * incoming[j + 1] + b * incoming[j - 1];
        }
        out[nv - 1] = (1.0 - a) * incoming[nv - 1] + b * incoming[nv - 2];
        Ok(())
    }
}

fn check_light_cone(q: &MultiDensity, t: f64) -> Result<()> {
    let j_max = q.j_max;
    let n = q.grid.len() as i64;
    for j in -j_max..=j_max {
        let jj = i64::from(j);
        let range: Box<dyn Iterator<Item = i64>> = if jj > 0 {
            Box::new((n - jj).max(0)..n)
        } else {
            Box::new(0..(-jj).min(n))
        };
        for i in range {
            if q.get(j, i as usize) != 0.0 {
                return Err(Error::OutOfGrid { node: q.grid.node(i as usize), velocity: j, t });
            }
        }
    }
    Ok(())
}

/// Advance `q` (the density at time `t`) by one step of length `grid.dt`.
pub fn step_multinomial<M: Mixing + ?Sized>(q: &MultiDensity, mixing: &M, t: f64) -> Result<MultiDensity> {
    step_multinomial_with(q, mixing, t, Exec::default())
}

pub fn step_multinomial_with<M: Mixing + ?Sized>(q: &MultiDensity, mixing: &M, t: f64, exec: Exec) -> Result<MultiDensity> {
    let mut out = MultiDensity::zeros(q.grid, q.j_max)?;
    step_into(q, mixing, t, exec, 0..q.grid.len(), &mut out)?;
    Ok(out)
}

/// Only nodes in `nodes` are written; the rest of `out` must already be zero.
fn step_into<M: Mixing + ?Sized>(
    q: &MultiDensity,
    mixing: &M,
    t: f64,
    exec: Exec,
    nodes: Range<usize>,
    out: &mut MultiDensity,
) -> Result<()> {
    if mixing.j_max() != q.j_max {
        return Err(Error::InvalidParameter(format!(
            "mixing law has J = {} but the density has J = {}",
            mixing.j_max(),
            q.j_max
        )));
    }
    check_light_cone(q, t)?;
    let grid = q.grid;
    let nv = q.nv();
    let j_max = q.j_max as i64;
    let n = grid.len() as i64;
    let h = grid.dt;
    let first = nodes.start;
    exec::try_fill_chunks(exec, &mut out.q[nodes.start * nv..nodes.end * nv], nv, |i, chunk| {
        let mut incoming = [0.0; 64];
        let mut heap;
        let incoming: &mut [f64] = if nv <= 64 {
            &mut incoming[..nv]
        } else {
            heap = vec![0.0; nv];
            &mut heap
        };
        // velocity kk arrives from node i - (kk - J), which must lie in 0..n
        let i = (first + i) as i64;
        let lo = (i + j_max - n + 1).max(0) as usize;
        let hi = ((i + j_max) as usize).min(nv - 1);
        incoming.fill(0.0);
        let mut any = false;
        for (kk, slot) in incoming.iter_mut().enumerate().take(hi + 1).skip(lo) {
            let v = q.q[(i + j_max - kk as i64) as usize * nv + kk];
            *slot = v;
            any |= v != 0.0;
        }
        let i = i as usize;
        if !any {
            chunk.fill(0.0);
            return Ok(());
        }
        mixing.mix(t, grid.x_at(i), h, incoming, chunk)
    })
}

/// Grid covering `q`'s support widened by `J·n_steps` nodes each side, or `q.grid` if it already does.
pub fn required_grid(q: &MultiDensity, n_steps: usize) -> GridSpec {
    let n = n_steps as i64 * i64::from(q.j_max);
    match q.support() {
        Some((lo, hi)) => GridSpec {
            m_min: q.grid.m_min.min(lo - n),
            m_max: q.grid.m_max.max(hi + n),
            ..q.grid
        },
        None => q.grid,
    }
}

/// Run `n_steps` steps, calling `observe(k, density)` for `k = 0..=n_steps`, and
/// return the final density. The grid is widened first if needed.
pub fn simulate_multi_observed<M, F>(
    initial: &MultiDensity,
    mixing: &M,
    n_steps: usize,
    exec: Exec,
    mut observe: F,
) -> Result<MultiDensity>
where
    M: Mixing + ?Sized,
    F: FnMut(usize, &MultiDensity),
{
    let grid = required_grid(initial, n_steps);
    let mut cur = initial.embed(grid)?;
    let mut next = MultiDensity::zeros(grid, initial.j_max)?;
    // nodes that can be occupied; widens by J per step
    let j_max = initial.j_max as usize;
    let (mut lo, mut hi) = match cur.support() {
        Some((a, b)) => (grid.index(a).unwrap(), grid.index(b).unwrap() + 1),
        None => (0, 0),
    };
    observe(0, &cur);
    for k in 0..n_steps {
        if hi > lo {
            lo = lo.saturating_sub(j_max);
            hi = (hi + j_max).min(grid.len());
        }
        step_into(&cur, mixing, grid.time(k), exec, lo..hi, &mut next)?;
        std::mem::swap(&mut cur, &mut next);
        observe(k + 1, &cur);
    }
    Ok(cur)
}

/// All snapshots `0..=n_steps`.
pub fn simulate_multi<M: Mixing + ?Sized>(initial: &MultiDensity, mixing: &M, n_steps: usize) -> Result<Vec<MultiDensity>> {
    let mut out = Vec::with_capacity(n_steps + 1);
    simulate_multi_observed(initial, mixing, n_steps, Exec::default(), |_, q| out.push(q.clone()))?;
    Ok(out)
}

/// Conditional mean velocity `c Σ_j j q^j / rho` per node.
pub fn mean_velocity_multi(q: &MultiDensity, rho_floor: f64) -> VelocityField {
    let c = q.grid.c();
    let j_max = q.j_max;
    VelocityField::from_fn(q.grid, |i| q.rho(i), rho_floor, |i, r| {
        let col = q.column(i);
        c * exec::sum(col.iter().enumerate().map(|(kk, v)| (kk as i32 - j_max) as f64 * v)) / r
    })
}

/// Per node `(Σ_jk v_j ω_jk q^k) / rho` with `hω = P - I` taken from `mixing` at `(t, x)`.
pub fn acceleration_multi<M: Mixing + ?Sized>(
    q: &MultiDensity,
    mixing: &M,
    t: f64,
    h: f64,
    rho_floor: f64,
) -> Result<VelocityField> {
    let grid = q.grid;
    let nv = q.nv();
    let j_max = q.j_max;
    let c = grid.c();
    let mut num = vec![0.0; grid.len()];
    let mut col = vec![0.0; nv];
    for (i, slot) in num.iter_mut().enumerate() {
        let x = grid.x_at(i);
        let mut terms = Vec::with_capacity(nv);
        for (kk, &w) in q.column(i).iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let k = kk as i32 - j_max;
            mixing.step_column(t, x, h, k, &mut col)?;
            // Σ_j v_j (P_jk - δ_jk), written without forming P - I entrywise to keep the cancellation exact
            let moved = exec::sum(
                col.iter()
                    .enumerate()
                    .filter(|(jj, _)| *jj != kk)
                    .map(|(jj, p)| (jj as i32 - k - j_max) as f64 * p),
            );
            terms.push(c * moved * w);
        }
        *slot = exec::sum(terms) / h;
    }
    Ok(VelocityField::from_fn(grid, |i| q.rho(i), rho_floor, |i, r| num[i] / r))
}

/// `v- = v - h·a` with `a` from [`acceleration_multi`]; first order in `h`.
pub fn backward_velocity_multi<M: Mixing + ?Sized>(
    q: &MultiDensity,
    mixing: &M,
    t: f64,
    h: f64,
    rho_floor: f64,
) -> Result<VelocityField> {
    let v = mean_velocity_multi(q, rho_floor);
    let a = acceleration_multi(q, mixing, t, h, rho_floor)?;
    Ok(VelocityField::from_fn(q.grid, |i| q.rho(i), rho_floor, |i, _| v.values[i] - h * a.values[i]))
}

/// Characteristic-frame view: row `j` shifted by `j·t_steps` nodes,
/// `psi^j[m] = q^j[m + j·t_steps]`. Negative `t_steps` undoes the shift.
pub fn characteristic_shift(q: &MultiDensity, t_steps: i64) -> Result<MultiDensity> {
    let grid = q.grid;
    let n = grid.len() as i64;
    let mut out = MultiDensity::zeros(grid, q.j_max)?;
    for j in -q.j_max..=q.j_max {
        let s = i64::from(j) * t_steps;
        for i in 0..n {
            let v = q.get(j, i as usize);
            if v == 0.0 {
                continue;
            }
            let dst = i - s;
            if !(0..n).contains(&dst) {
                return Err(Error::OutOfGrid {
                    node: grid.node(i as usize),
                    velocity: j,
                    t: grid.time(t_steps.unsigned_abs() as usize),
                });
            }
            out.set(j, dst as usize, v);
        }
    }
    Ok(out)
}

/// One step in the characteristic frame after `n_done` steps:
/// `psi^j_{n+1}[m] = Σ_k P_jk(x_{m + j(n+1)}) psi^k_n[m + (n+1)(j - k)]`.
pub fn step_characteristic_frame<M: Mixing + ?Sized>(psi: &MultiDensity, mixing: &M, n_done: usize) -> Result<MultiDensity> {
    let grid = psi.grid;
    let nv = psi.nv();
    let j_max = psi.j_max;
    let n = grid.len() as i64;
    let t = grid.time(n_done);
    let n1 = n_done as i64 + 1;
    let mut out = MultiDensity::zeros(grid, j_max)?;
    let mut col = vec![0.0; nv];
    for i in 0..n {
        for j in -j_max..=j_max {
            let arrival = i + i64::from(j) * n1;
            let mut terms = Vec::with_capacity(nv);
            for k in -j_max..=j_max {
                let src = i + n1 * i64::from(j - k);
                if !(0..n).contains(&src) {
                    continue;
                }
                let w = psi.get(k, src as usize);
                if w == 0.0 {
                    continue;
                }
                if !(0..n).contains(&arrival) {
                    return Err(Error::OutOfGrid { node: grid.node(src as usize), velocity: k, t });
                }
                mixing.step_column(t, grid.x_at(arrival as usize), grid.dt, k, &mut col)?;
                terms.push(col[(j + j_max) as usize] * w);
            }
            out.set(j, i as usize, terms.into_iter().sum());
        }
    }
    Ok(out)
}

/// Scalar observables of one snapshot needed by the Newton and energy checks.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DynamicsObservables {
    pub t: f64,
    pub mass: f64,
    pub mean_x: f64,
    /// `Σ V'(x) rho(x)`.
    pub mean_vprime: f64,
    /// `½ Σ v_j² q^j`.
    pub kinetic: f64,
    /// `Σ V(x) rho(x)`, if the potential is known.
    pub potential: Option<f64>,
    pub edge_occupancy: f64,
    /// Smallest negative entry of the density, or 0 if there is none.
    pub min_entry: f64,
}

pub fn observe(q: &MultiDensity, nr: &NewtonRates, t: f64) -> DynamicsObservables {
    let grid = &q.grid;
    let c = grid.c();
    let j_max = q.j_max;
    let nv = q.nv();
    let mut rho = Vec::with_capacity(grid.len());
    let mut kin = Vec::with_capacity(grid.len());
    let mut edge = Vec::with_capacity(grid.len());
    let j2: Vec<f64> = (-j_max..=j_max).map(|j| f64::from(j * j)).collect();
    let mut min_entry: f64 = 0.0;
    for col in q.q.chunks_exact(nv) {
        let (mut r, mut k) = (0.0, 0.0);
        for (v, w) in col.iter().zip(&j2) {
            r += v;
            k += w * v;
        }
        if col.iter().fold(0u64, |acc, v| acc | v.to_bits()) >> 63 == 1 {
            min_entry = col.iter().copied().fold(min_entry, f64::min);
        }
        rho.push(r);
        kin.push(k);
        edge.push(if j_max == 0 { 0.0 } else { col[0] + col[nv - 1] });
    }
    let weighted = |f: &dyn Fn(f64) -> f64| exec::sum(rho.iter().enumerate().map(|(i, r)| f(grid.x_at(i)) * r));
    DynamicsObservables {
        t,
        mass: exec::sum(rho.iter().copied()),
        mean_x: weighted(&|x| x),
        mean_vprime: weighted(&|x| nr.vprime(x)),
        kinetic: 0.5 * c * c * exec::sum(kin),
        potential: nr.potential.as_ref().map(|v| weighted(&|x| v(x))),
        edge_occupancy: exec::sum(edge),
        min_entry,
    }
}

/// One time row of a Newton or energy report.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DynamicsRow {
    pub t: f64,
    #[serde(rename = "d2Ex_dt2")]
    pub d2ex_dt2: Option<f64>,
    #[serde(rename = "E_Vprime")]
    pub e_vprime: f64,
    pub energy: Option<f64>,
    pub drift: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NewtonReport {
    pub rows: Vec<DynamicsRow>,
    /// Sign `s` in `d²E[x]/dt² ≈ s·E[V']`, fitted from the run (`0` if undetermined).
    pub empirical_sign: f64,
    /// Largest `|d²E[x]/dt² - s·E[V']| / max|E[V']|` over the interior rows.
    pub max_rel_error: f64,
    pub max_edge_occupancy: f64,
    pub edge_flagged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnergyReport {
    pub rows: Vec<DynamicsRow>,
    /// `θc²`, the predicted drift.
    pub predicted_drift: f64,
    pub max_edge_occupancy: f64,
    pub edge_flagged: bool,
}

fn edge_stats(obs: &[DynamicsObservables]) -> (f64, bool) {
    let m = obs.iter().map(|o| o.edge_occupancy).fold(0.0, f64::max);
    (m, m > EDGE_OCCUPANCY_FLAG)
}

/// Second central differences of `E[x]` against `E[V']` (endpoints dropped).
pub fn newton_check_observables(obs: &[DynamicsObservables], h: f64) -> Result<NewtonReport> {
    if obs.len() < 3 {
        return Err(Error::TooFewSnapshots { needed: 3, got: obs.len() });
    }
    let mut rows: Vec<DynamicsRow> = obs
        .iter()
        .map(|o| DynamicsRow {
            t: o.t,
            d2ex_dt2: None,
            e_vprime: o.mean_vprime,
            energy: o.potential.map(|p| p + o.kinetic),
            drift: None,
        })
        .collect();
    for n in 1..obs.len() - 1 {
        rows[n].d2ex_dt2 = Some((obs[n + 1].mean_x - 2.0 * obs[n].mean_x + obs[n - 1].mean_x) / (h * h));
    }
    let interior = &rows[1..rows.len() - 1];
    let dot = exec::sum(interior.iter().map(|r| r.d2ex_dt2.unwrap() * r.e_vprime));
    let scale = interior.iter().map(|r| r.e_vprime.abs()).fold(0.0, f64::max);
    let sign = if scale == 0.0 || dot == 0.0 { 0.0 } else { dot.signum() };
    let err = interior
        .iter()
        .map(|r| (r.d2ex_dt2.unwrap() - sign * r.e_vprime).abs())
        .fold(0.0, f64::max);
    let (max_edge, flagged) = edge_stats(obs);
    Ok(NewtonReport {
        rows,
        empirical_sign: sign,
        max_rel_error: if scale > 0.0 { err / scale } else { err },
        max_edge_occupancy: max_edge,
        edge_flagged: flagged,
    })
}

/// Central-difference drift of `½E[v²] + E[V]` against `θc²` (endpoints dropped).
pub fn energy_check_observables(obs: &[DynamicsObservables], nr: &NewtonRates, h: f64) -> Result<EnergyReport> {
    if obs.len() < 3 {
        return Err(Error::TooFewSnapshots { needed: 3, got: obs.len() });
    }
    let energies: Vec<f64> = obs
        .iter()
        .map(|o| o.potential.map(|p| p + o.kinetic).ok_or(Error::MissingPotential))
        .collect::<Result<_>>()?;
    let mut rows: Vec<DynamicsRow> = obs
        .iter()
        .zip(&energies)
        .map(|(o, e)| DynamicsRow {
            t: o.t,
            d2ex_dt2: None,
            e_vprime: o.mean_vprime,
            energy: Some(*e),
            drift: None,
        })
        .collect();
    for n in 1..obs.len() - 1 {
        rows[n].drift = Some((energies[n + 1] - energies[n - 1]) / (2.0 * h));
    }
    let (max_edge, flagged) = edge_stats(obs);
    Ok(EnergyReport {
        rows,
        predicted_drift: nr.theta * nr.c * nr.c,
        max_edge_occupancy: max_edge,
        edge_flagged: flagged,
    })
}

pub fn newton_check(trajectory: &[MultiDensity], nr: &NewtonRates) -> Result<NewtonReport> {
    let h = trajectory.first().map_or(1.0, |q| q.grid.dt);
    let obs: Vec<_> = trajectory.iter().enumerate().map(|(k, q)| observe(q, nr, q.grid.time(k))).collect();
    newton_check_observables(&obs, h)
}

pub fn energy_check(trajectory: &[MultiDensity], nr: &NewtonRates) -> Result<EnergyReport> {
    if nr.potential.is_none() {
        return Err(Error::MissingPotential);
    }
    let h = trajectory.first().map_or(1.0, |q| q.grid.dt);
    let obs: Vec<_> = trajectory.iter().enumerate().map(|(k, q)| observe(q, nr, q.grid.time(k))).collect();
    energy_check_observables(&obs, nr, h)
}

/// Run a Newton-rate simulation from a point mass at `(node 0, j = 0)` and
/// collect the observables of every snapshot without storing the snapshots.
pub fn run_newton_observables(
    grid: GridSpec,
    nr: &NewtonRates,
    j_max: i32,
    n_steps: usize,
    exec: Exec,
) -> Result<(Vec<DynamicsObservables>, MultiDensity)> {
    let q0 = MultiDensity::point(grid, j_max, 0, 0)?;
    let full = required_grid(&q0, n_steps);
    let mixing = NewtonMixing::new(nr.clone(), j_max, &full)?;
    let mut obs = Vec::with_capacity(n_steps + 1);
    let last = simulate_multi_observed(&q0, &mixing, n_steps, exec, |k, q| obs.push(observe(q, nr, q.grid.time(k))))?;
    Ok((obs, last))
}
