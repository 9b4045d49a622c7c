//! Exhaustive path enumeration for velocity-Markov lattice walks.
//!
//! Every velocity path of length `n_steps` is walked explicitly and its
//! probability (the product of the switching probabilities along the path)
//! is accumulated at the final `(node, exit velocity)` pair. Nothing here
//! touches a node-indexed array or the shift-then-mix factorization used by
//! the production steppers, which is what makes it usable as a check on them.
//!
//! Conventions match the steppers: a walker at node `m` with exit velocity
//! `k` moves to `m + k`; the transition law is then evaluated at the arrival
//! node for the step index `s` (time `s * dt`) that is being taken.

use std::collections::BTreeMap;
use std::fmt;

/// Hard cap on the number of explicit paths per initial entry.
pub const MAX_PATHS: f64 = 1e7;

/// Switching law between steps.
pub enum Rule<'a> {
    /// Two velocities `+1` and `-1`. The closure maps `(step, arrival_node)`
    /// to `(a, b)`: `a` is the probability that an up-mover turns down,
    /// `b` the probability that a down-mover turns up.
    Binomial(&'a dyn Fn(usize, i64) -> (f64, f64)),
    /// Velocities `-j_max..=j_max`. The closure maps
    /// `(step, arrival_node, from_velocity, to_velocity)` to a probability.
    Multi {
        j_max: i32,
        prob: &'a dyn Fn(usize, i64, i32, i32) -> f64,
    },
}

pub struct PathEnumeration<'a> {
    pub n_steps: usize,
    /// `(node, exit velocity, mass)` triples.
    pub initial: Vec<(i64, i32, f64)>,
    pub rule: Rule<'a>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum OracleError {
    TooManyPaths { velocities: usize, n_steps: usize },
    BadVelocity(i32),
}

impl fmt::Display for OracleError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OracleError::TooManyPaths { velocities, n_steps } => write!(
                f,
                "{velocities}^{n_steps} paths exceeds the enumeration limit of {MAX_PATHS:e}"
            ),
            OracleError::BadVelocity(v) => write!(f, "initial velocity {v} is not in the rule's velocity set"),
        }
    }
}

impl std::error::Error for OracleError {}

/// Exact joint density keyed by `(node, exit velocity)`.
pub type Distribution = BTreeMap<(i64, i32), f64>;

impl Rule<'_> {
    fn velocities(&self) -> Vec<i32> {
        match self {
            Rule::Binomial(_) => vec![1, -1],
            Rule::Multi { j_max, .. } => (-*j_max..=*j_max).collect(),
        }
    }

    fn prob(&self, step: usize, node: i64, from: i32, to: i32) -> f64 {
        match self {
            Rule::Binomial(f) => {
                let (a, b) = f(step, node);
                match (from, to) {
                    (1, 1) => 1.0 - a,
                    (1, -1) => a,
                    (-1, 1) => b,
                    (-1, -1) => 1.0 - b,
                    _ => 0.0,
                }
            }
            Rule::Multi { prob, .. } => prob(step, node, from, to),
        }
    }
}

pub fn enumerate_distribution(pe: &PathEnumeration<'_>) -> Result<Distribution, OracleError> {
    let velocities = pe.rule.velocities();
    let paths = (velocities.len() as f64).powi(pe.n_steps as i32);
    if paths > MAX_PATHS {
        return Err(OracleError::TooManyPaths {
            velocities: velocities.len(),
            n_steps: pe.n_steps,
        });
    }
    let mut out = Distribution::new();
    for &(node, vel, mass) in &pe.initial {
        if !velocities.contains(&vel) {
            return Err(OracleError::BadVelocity(vel));
        }
        walk(pe, &velocities, 0, node, vel, mass, &mut out);
    }
    Ok(out)
}

fn walk(
    pe: &PathEnumeration<'_>,
    velocities: &[i32],
    step: usize,
    node: i64,
    vel: i32,
    weight: f64,
    out: &mut Distribution,
) {
    if step == pe.n_steps {
        *out.entry((node, vel)).or_insert(0.0) += weight;
        return;
    }
    let arrival = node + i64::from(vel);
    for &next in velocities {
        let p = pe.rule.prob(step, arrival, vel, next);
        if p != 0.0 {
            walk(pe, velocities, step + 1, arrival, next, weight * p, out);
        }
    }
}

/// Total mass of an enumerated distribution.
pub fn total(dist: &Distribution) -> f64 {
    dist.values().sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_step_matches_hand_computation() {
        let rates = |_: usize, _: i64| (0.006, 0.006);
        let pe = PathEnumeration {
            n_steps: 1,
            initial: vec![(0, 1, 1.0)],
            rule: Rule::Binomial(&rates),
        };
        let d = enumerate_distribution(&pe).unwrap();
        assert_eq!(d.len(), 2);
        assert!((d[&(1, 1)] - 0.994).abs() < 1e-15);
        assert!((d[&(1, -1)] - 0.006).abs() < 1e-15);
    }

    #[test]
    fn zero_steps_is_identity() {
        let rates = |_: usize, _: i64| (0.3, 0.1);
        let pe = PathEnumeration {
            n_steps: 0,
            initial: vec![(2, 1, 0.25), (-1, -1, 0.75)],
            rule: Rule::Binomial(&rates),
        };
        let d = enumerate_distribution(&pe).unwrap();
        assert_eq!(d[&(2, 1)], 0.25);
        assert_eq!(d[&(-1, -1)], 0.75);
    }

    #[test]
    fn mass_is_preserved() {
        let rates = |s: usize, m: i64| (0.1 + 0.01 * s as f64, 0.2 + 0.05 * (m.rem_euclid(3)) as f64);
        let pe = PathEnumeration {
            n_steps: 9,
            initial: vec![(0, 1, 0.4), (1, -1, 0.6)],
            rule: Rule::Binomial(&rates),
        };
        let d = enumerate_distribution(&pe).unwrap();
        assert!((total(&d) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn blowup_guard() {
        let prob = |_: usize, _: i64, _: i32, _: i32| 0.2;
        let pe = PathEnumeration {
            n_steps: 11,
            initial: vec![(0, 0, 1.0)],
            rule: Rule::Multi { j_max: 2, prob: &prob },
        };
        assert!(matches!(
            enumerate_distribution(&pe),
            Err(OracleError::TooManyPaths { .. })
        ));
    }
}
