#![allow(dead_code)]

use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use velmarkov::binomial::simulate_observed;
use velmarkov::multinomial::{simulate_multi_observed, MultiDensity, RateMatrix};
use velmarkov::{Exec, GridSpec, JointDensity2, RateFn, RateForm, RateSpec2};
use velmarkov_oracle::{enumerate_distribution, total, PathEnumeration, Rule};

/// Switching probability that varies with step and node.
#[derive(Clone, Copy)]
pub struct Wave {
    base: f64,
    amp: f64,
    kx: f64,
    kt: f64,
}

impl Wave {
    fn random(rng: &mut ChaCha8Rng) -> Self {
        let base: f64 = rng.gen_range(0.05..0.95);
        let room = base.min(1.0 - base);
        Wave {
            base,
            amp: rng.gen_range(0.0..room),
            kx: rng.gen_range(-2.0..2.0),
            kt: rng.gen_range(-2.0..2.0),
        }
    }

    fn at(&self, step: usize, node: i64) -> f64 {
        self.base + self.amp * (self.kx * node as f64 + self.kt * step as f64).sin()
    }
}

pub fn random_initial(rng: &mut ChaCha8Rng, velocities: &[i32]) -> Vec<(i64, i32, f64)> {
    let count = rng.gen_range(1..=4);
    let mut entries: Vec<(i64, i32, f64)> = (0..count)
        .map(|_| {
            let v = velocities[rng.gen_range(0..velocities.len())];
            (rng.gen_range(-3..=3), v, rng.gen_range(0.1..1.0))
        })
        .collect();
    let s: f64 = entries.iter().map(|e| e.2).sum();
    for e in &mut entries {
        e.2 /= s;
    }
    entries
}

/// One random two-velocity instance with `n <= 10`; returns the largest node error.
pub fn binomial_instance(rng: &mut ChaCha8Rng) -> f64 {
    let mut worst: f64 = 0.0;
    let n = rng.gen_range(0..=10);
    let (wa, wb) = (Wave::random(rng), Wave::random(rng));
    let initial = random_initial(rng, &[1, -1]);

    let grid = GridSpec::new(1.0, 1.0, -3, 3).unwrap();
    let mut q = JointDensity2::zeros(grid);
    for &(m, v, w) in &initial {
        let i = grid.index(m).unwrap();
        if v == 1 {
            q.q_plus[i] += w;
        } else {
            q.q_minus[i] += w;
        }
    }
    // dx = dt = 1, so t is the step index and x the node
    let rates = RateSpec2::new(
        RateFn::field(move |t, x| wa.at(t.round() as usize, x.round() as i64)),
        RateFn::field(move |t, x| wb.at(t.round() as usize, x.round() as i64)),
        RateForm::StepProbability,
    );
    let last = simulate_observed(&q, &rates, n, Exec::Sequential, |_, _| {}).unwrap();

    let rule = |s: usize, m: i64| (wa.at(s, m), wb.at(s, m));
    let pe = PathEnumeration {
        n_steps: n,
        initial: initial.clone(),
        rule: Rule::Binomial(&rule),
    };
    let dist = enumerate_distribution(&pe).unwrap();
    assert!((total(&dist) - 1.0).abs() < 1e-13);
    for &(m, v) in dist.keys() {
        assert!(last.grid.contains(m), "oracle node {m} (v={v}) off grid");
    }
    for i in 0..last.grid.len() {
        let m = last.grid.node(i);
        let up = dist.get(&(m, 1)).copied().unwrap_or(0.0);
        let down = dist.get(&(m, -1)).copied().unwrap_or(0.0);
        worst = worst.max((last.q_plus[i] - up).abs()).max((last.q_minus[i] - down).abs());
    }
    worst
}

/// One random multi-velocity instance with `J <= 2`, `n <= 6`; returns the largest node error.
pub fn multinomial_instance(rng: &mut ChaCha8Rng) -> f64 {
    let mut worst: f64 = 0.0;
    let j_max: i32 = rng.gen_range(1..=2);
    let nv = (2 * j_max + 1) as usize;
    let n = rng.gen_range(0..=6);
    let weights: Arc<Vec<f64>> = Arc::new((0..nv * nv).map(|_| rng.gen_range(0.05..1.0)).collect());
    let (kx, kt) = (rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
    let velocities: Vec<i32> = (-j_max..=j_max).collect();
    let initial = random_initial(rng, &velocities);

    // column-stochastic matrix P[j][k] = P(next j | current k), varying with step and node
    let w = Arc::clone(&weights);
    let prob = move |s: usize, m: i64, from: i32, to: i32| -> f64 {
        let raw = |j: usize, k: usize| {
            w[j * nv + k] * (1.5 + ((j + 2 * k) as f64 + kx * m as f64 + kt * s as f64).sin())
        };
        let k = (from + j_max) as usize;
        let col: f64 = (0..nv).map(|j| raw(j, k)).sum();
        raw((to + j_max) as usize, k) / col
    };

    let grid = GridSpec::new(1.0, 1.0, -3, 3).unwrap();
    let mut q = MultiDensity::zeros(grid, j_max).unwrap();
    for &(m, v, mass) in &initial {
        let i = grid.index(m).unwrap();
        q.set(v, i, q.get(v, i) + mass);
    }
    let p2 = prob.clone();
    let matrix = RateMatrix::field(j_max, RateForm::StepProbability, move |t, x, out| {
        let (s, m) = (t.round() as usize, x.round() as i64);
        for to in -j_max..=j_max {
            for from in -j_max..=j_max {
                out[(to + j_max) as usize * nv + (from + j_max) as usize] = p2(s, m, from, to);
            }
        }
    });
    let last = simulate_multi_observed(&q, &matrix, n, Exec::Sequential, |_, _| {}).unwrap();

    let pe = PathEnumeration {
        n_steps: n,
        initial,
        rule: Rule::Multi { j_max, prob: &prob },
    };
    let dist = enumerate_distribution(&pe).unwrap();
    assert!((total(&dist) - 1.0).abs() < 1e-13);
    for i in 0..last.grid.len() {
        let m = last.grid.node(i);
        for j in -j_max..=j_max {
            let want = dist.get(&(m, j)).copied().unwrap_or(0.0);
            worst = worst.max((last.get(j, i) - want).abs());
        }
    }
    worst
}

/// `(1/π) ∫_0^π e^{z cos θ} cos(nθ) dθ` by the trapezoid rule, which is
/// spectrally accurate for periodic integrands. Scaled by `e^{-z}` inside.
pub fn i_integral(z: f64, n: f64) -> f64 {
    let steps = 2000;
    let h = std::f64::consts::PI / steps as f64;
    let mut acc = 0.0;
    for k in 0..=steps {
        let th = k as f64 * h;
        let w = if k == 0 || k == steps { 0.5 } else { 1.0 };
        acc += w * (z * (th.cos() - 1.0)).exp() * (n * th).cos();
    }
    acc * h / std::f64::consts::PI * z.exp()
}

/// `∫_0^∞ e^{-z cosh t} dt`, trapezoid on a cut-off range.
pub fn k0_integral(z: f64) -> f64 {
    let h: f64 = 0.01;
    let mut acc = 0.5 * (-z).exp();
    let mut t = h;
    loop {
        let v = (-z * t.cosh()).exp();
        acc += v;
        if v < 1e-300 || z * t.cosh() > 800.0 {
            break;
        }
        t += h;
    }
    acc * h
}

/// `Σ (z²/4)^k / (k!)²`, plain forward summation.
pub fn i0_series(z: f64) -> f64 {
    let q = z * z / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..400 {
        term *= q / (k * k) as f64;
        sum += term;
    }
    sum
}

/// `(z/2) Σ (z²/4)^k / (k! (k+1)!)`.
pub fn i1_series(z: f64) -> f64 {
    let q = z * z / 4.0;
    let mut term = 0.5 * z;
    let mut sum = term;
    for k in 1..400 {
        term *= q / (k * (k + 1)) as f64;
        sum += term;
    }
    sum
}

