//! The two-velocity stepper and the velocity fields derived from it.
//!
//! One step moves every up-mover one node right and every down-mover one node
//! left, then lets each walker switch direction with the probabilities of its
//! arrival node:
//!
//! ```text
//! q+'[m] = (1 - a) q+[m-1] + b q-[m+1]
//! q-'[m] =      a  q+[m-1] + (1 - b) q-[m+1]
//! ```

use crate::error::{Error, Result};
use crate::exec::{self, Exec};
use crate::lattice::{GridSpec, JointDensity2, RateSpec2};

/// Nodes with `rho` below this are masked out of velocity fields.
pub const DEFAULT_RHO_FLOOR: f64 = 1e-14;

#[derive(Clone, Debug)]
pub struct BinomialTrajectory {
    pub grid: GridSpec,
    /// `snapshots[k]` is the density at time `k * dt`.
    pub snapshots: Vec<JointDensity2>,
    pub rates: RateSpec2,
}

impl BinomialTrajectory {
    pub fn last(&self) -> &JointDensity2 {
        self.snapshots.last().expect("a trajectory always holds its initial snapshot")
    }

    pub fn time(&self, k: usize) -> f64 {
        self.grid.time(k)
    }
}

/// Per-node step probabilities, skipping nodes that receive no mass.
fn arrival_probabilities(q: &JointDensity2, rates: &RateSpec2, t: f64, exec: Exec) -> Result<Vec<(f64, f64)>> {
    let grid = q.grid;
    let n = grid.len();
    if rates.constant_values().is_some() {
        let ab = rates.step_probabilities(t, 0.0, grid.dt)?;
        return Ok(vec![ab; n]);
    }
    exec::map_indexed(exec, n, |i| {
        let from_left = i > 0 && q.q_plus[i - 1] != 0.0;
        let from_right = i + 1 < n && q.q_minus[i + 1] != 0.0;
        if from_left || from_right {
            rates.step_probabilities(t, grid.x_at(i), grid.dt)
        } else {
            Ok((0.0, 0.0))
        }
    })
    .into_iter()
    .collect()
}

/// Advance `q` (the density at time `t`) by one step of length `grid.dt`.
pub fn step_binomial(q: &JointDensity2, rates: &RateSpec2, t: f64) -> Result<JointDensity2> {
    step_binomial_with(q, rates, t, Exec::default())
}

pub fn step_binomial_with(q: &JointDensity2, rates: &RateSpec2, t: f64, exec: Exec) -> Result<JointDensity2> {
    let mut out = JointDensity2::zeros(q.grid);
    step_into(q, rates, t, exec, &mut out)?;
    Ok(out)
}

fn step_into(q: &JointDensity2, rates: &RateSpec2, t: f64, exec: Exec, out: &mut JointDensity2) -> Result<()> {
    let grid = q.grid;
    let n = grid.len();
    if q.q_plus[n - 1] != 0.0 {
        return Err(Error::OutOfGrid { node: grid.m_max, velocity: 1, t });
    }
    if q.q_minus[0] != 0.0 {
        return Err(Error::OutOfGrid { node: grid.m_min, velocity: -1, t });
    }
    let probs = arrival_probabilities(q, rates, t, exec)?;
    let (qp, qm) = (&q.q_plus, &q.q_minus);
    exec::fill_pairs(exec, &mut out.q_plus, &mut out.q_minus, |i| {
        let up = if i > 0 { qp[i - 1] } else { 0.0 };
        let down = if i + 1 < n { qm[i + 1] } else { 0.0 };
        let (a, b) = probs[i];
        ((1.0 - a) * up + b * down, a * up + (1.0 - b) * down)
    });
    Ok(())
}

/// Grid covering `q`'s support widened by `n_steps` nodes each side, or `q.grid` if it already does.
pub fn required_grid(q: &JointDensity2, n_steps: usize) -> GridSpec {
    let n = n_steps as i64;
    match q.support() {
        Some((lo, hi)) => GridSpec {
            m_min: q.grid.m_min.min(lo - n),
            m_max: q.grid.m_max.max(hi + n),
            ..q.grid
        },
        None => q.grid,
    }
}

/// Run `n_steps` steps, calling `observe(k, density)` for `k = 0..=n_steps`,
/// and return the final density. The grid is widened first if the light cone
/// of the initial support does not fit.
pub fn simulate_observed<F>(
    initial: &JointDensity2,
    rates: &RateSpec2,
    n_steps: usize,
    exec: Exec,
    mut observe: F,
) -> Result<JointDensity2>
where
    F: FnMut(usize, &JointDensity2),
{
    let grid = required_grid(initial, n_steps);
    let mut cur = initial.embed(grid)?;
    let mut next = JointDensity2::zeros(grid);
    observe(0, &cur);
    for k in 0..n_steps {
        step_into(&cur, rates, grid.time(k), exec, &mut next)?;
        std::mem::swap(&mut cur, &mut next);
        observe(k + 1, &cur);
    }
    Ok(cur)
}

pub fn simulate(initial: &JointDensity2, rates: &RateSpec2, n_steps: usize) -> Result<BinomialTrajectory> {
    simulate_with(initial, rates, n_steps, Exec::default())
}

pub fn simulate_with(
    initial: &JointDensity2,
    rates: &RateSpec2,
    n_steps: usize,
    exec: Exec,
) -> Result<BinomialTrajectory> {
    let mut snapshots = Vec::with_capacity(n_steps + 1);
    simulate_observed(initial, rates, n_steps, exec, |_, q| snapshots.push(q.clone()))?;
    Ok(BinomialTrajectory {
        grid: snapshots[0].grid,
        snapshots,
        rates: rates.clone(),
    })
}

/// Mass on the upper and lower ballistic wavefronts after `n_steps`.
///
/// Switched paths can land on the same nodes as the wavefronts, so the lobes
/// are separated by linearity: each occupied initial node is propagated on
/// its own, and only the node `n_steps` away on each side is counted.
/// For `n_steps = 0` the lobes are the up and down masses.
pub fn ballistic_lobe_masses(initial: &JointDensity2, rates: &RateSpec2, n_steps: usize, exec: Exec) -> Result<(f64, f64)> {
    if n_steps == 0 {
        return Ok((
            exec::sum(initial.q_plus.iter().copied()),
            exec::sum(initial.q_minus.iter().copied()),
        ));
    }
    let grid = initial.grid;
    let n = n_steps as i64;
    let sources: Vec<usize> = (0..grid.len()).filter(|&i| initial.rho(i) > 0.0).collect();
    // Each source runs sequentially; the batch is what gets spread over threads.
    let per_source = exec::map_indexed(exec, sources.len(), |s| -> Result<(f64, f64)> {
        let i = sources[s];
        let m0 = grid.node(i);
        let local = GridSpec { m_min: m0 - n, m_max: m0 + n, ..grid };
        let mut q = JointDensity2::zeros(local);
        let c = n as usize;
        q.q_plus[c] = initial.q_plus[i];
        q.q_minus[c] = initial.q_minus[i];
        let last = simulate_observed(&q, rates, n_steps, Exec::Sequential, |_, _| {})?;
        let hi = last.grid.index(m0 + n).unwrap();
        let lo = last.grid.index(m0 - n).unwrap();
        Ok((last.rho(hi), last.rho(lo)))
    });
    let per_source: Vec<(f64, f64)> = per_source.into_iter().collect::<Result<_>>()?;
    Ok((
        exec::sum(per_source.iter().map(|p| p.0)),
        exec::sum(per_source.iter().map(|p| p.1)),
    ))
}

/// Per-node velocity (or acceleration) with a validity mask; masked values are NaN.
#[derive(Clone, Debug, PartialEq)]
pub struct VelocityField {
    pub grid: GridSpec,
    pub values: Vec<f64>,
    pub valid: Vec<bool>,
}

impl VelocityField {
    pub(crate) fn from_fn(grid: GridSpec, rho: impl Fn(usize) -> f64, rho_floor: f64, f: impl Fn(usize, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        let mut valid = Vec::with_capacity(grid.len());
        for i in 0..grid.len() {
            let r = rho(i);
            if r >= rho_floor && r > 0.0 {
                values.push(f(i, r));
                valid.push(true);
            } else {
                values.push(f64::NAN);
                valid.push(false);
            }
        }
        VelocityField { grid, values, valid }
    }

    /// Value at node `m`, `None` if masked or off the grid.
    pub fn at(&self, m: i64) -> Option<f64> {
        let i = self.grid.index(m)?;
        self.valid[i].then_some(self.values[i])
    }

    /// `Σ value·weight` over valid nodes.
    pub fn weighted_sum(&self, weights: impl Fn(usize) -> f64) -> f64 {
        exec::sum((0..self.values.len()).filter(|i| self.valid[*i]).map(|i| self.values[i] * weights(i)))
    }

    pub fn valid_values(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        (0..self.values.len())
            .filter(|i| self.valid[*i])
            .map(|i| (self.grid.node(i), self.values[i]))
    }
}

/// Conditional mean exit velocity `c (q+ - q-) / rho`.
pub fn forward_velocity(q: &JointDensity2, c: f64, rho_floor: f64) -> VelocityField {
    VelocityField::from_fn(q.grid, |i| q.rho(i), rho_floor, |i, r| c * (q.q_plus[i] - q.q_minus[i]) / r)
}

/// Conditional mean velocity of the step that arrived at each node at time `t`,
/// reconstructed by inverting that step: `v- = (v + c(a - b)) / (1 - a - b)`
/// with `a, b` the probabilities used at `(t - h, x)`.
pub fn backward_velocity(q_t: &JointDensity2, rates: &RateSpec2, t: f64, h: f64, rho_floor: f64) -> Result<VelocityField> {
    let grid = q_t.grid;
    let c = grid.c();
    let mut coeffs = Vec::with_capacity(grid.len());
    for i in 0..grid.len() {
        let r = q_t.rho(i);
        if r >= rho_floor && r > 0.0 {
            let x = grid.x_at(i);
            let (a, b) = rates.step_probabilities(t - h, x, h)?;
            let det = 1.0 - a - b;
            if det <= 0.0 {
                return Err(Error::Singular { x, det });
            }
            coeffs.push((c * (a - b), det));
        } else {
            coeffs.push((0.0, 1.0));
        }
    }
    let v = forward_velocity(q_t, c, rho_floor);
    Ok(VelocityField::from_fn(grid, |i| q_t.rho(i), rho_floor, |i, _| {
        let (shift, det) = coeffs[i];
        (v.values[i] + shift) / det
    }))
}

/// Backward velocity straight from the previous snapshot:
/// `c (q+_prev[m-1] - q-_prev[m+1]) / rho_cur[m]`. Both snapshots must share a grid.
pub fn backward_velocity_bayes(q_prev: &JointDensity2, q_cur: &JointDensity2, rho_floor: f64) -> Result<VelocityField> {
    if q_prev.grid != q_cur.grid {
        return Err(Error::InvalidGrid("snapshots live on different grids".into()));
    }
    let grid = q_cur.grid;
    let n = grid.len();
    let c = grid.c();
    Ok(VelocityField::from_fn(grid, |i| q_cur.rho(i), rho_floor, |i, r| {
        let up = if i > 0 { q_prev.q_plus[i - 1] } else { 0.0 };
        let down = if i + 1 < n { q_prev.q_minus[i + 1] } else { 0.0 };
        c * (up - down) / r
    }))
}

/// `(v - v-) / h`, the per-node acceleration.
pub fn acceleration_field(q_t: &JointDensity2, rates: &RateSpec2, t: f64, h: f64) -> Result<VelocityField> {
    acceleration_field_with_floor(q_t, rates, t, h, DEFAULT_RHO_FLOOR)
}

pub fn acceleration_field_with_floor(
    q_t: &JointDensity2,
    rates: &RateSpec2,
    t: f64,
    h: f64,
    rho_floor: f64,
) -> Result<VelocityField> {
    let v = forward_velocity(q_t, q_t.grid.c(), rho_floor);
    let vb = backward_velocity(q_t, rates, t, h, rho_floor)?;
    Ok(VelocityField::from_fn(q_t.grid, |i| q_t.rho(i), rho_floor, |i, _| {
        (v.values[i] - vb.values[i]) / h
    }))
}

/// Undo the switching half of the step that produced `q_t`: returns the
/// pre-switch masses `(q+_prev[m-1], q-_prev[m+1])` at every node.
pub fn invert_switching(q_t: &JointDensity2, rates: &RateSpec2, t: f64, h: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let grid = q_t.grid;
    let mut up = Vec::with_capacity(grid.len());
    let mut down = Vec::with_capacity(grid.len());
    for i in 0..grid.len() {
        let x = grid.x_at(i);
        let (a, b) = rates.step_probabilities(t - h, x, h)?;
        let det = 1.0 - a - b;
        if det <= 0.0 {
            return Err(Error::Singular { x, det });
        }
        let (p, m) = (q_t.q_plus[i], q_t.q_minus[i]);
        up.push(((1.0 - b) * p - b * m) / det);
        down.push(((1.0 - a) * m - a * p) / det);
    }
    Ok((up, down))
}
