//! Data-parallel helpers for per-node work.
//!
//! Every stepper writes each output node from read-only inputs, so nodes can
//! be computed in any order. With the `parallel` feature the work is spread
//! over the rayon pool; without it (or with [`Exec::Sequential`]) the same
//! closures run in a plain loop. Both paths produce bit-identical results:
//! per-node arithmetic never depends on the schedule, and reductions are left
//! to the callers, which sum sequentially.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Minimum nodes handed to a rayon task; small grids stay on one thread.
#[cfg(feature = "parallel")]
const MIN_CHUNK_NODES: usize = 512;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Exec {
    Sequential,
    /// Falls back to sequential when built without the `parallel` feature.
    #[default]
    Parallel,
}

impl Exec {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }
}

/// Fill `out` in chunks of `width` values; `f(node_index, chunk)` writes one node.
/// On failure the error of the lowest failing node is returned.
pub(crate) fn try_fill_chunks<F, E>(exec: Exec, out: &mut [f64], width: usize, f: F) -> Result<(), E>
where
    F: Fn(usize, &mut [f64]) -> Result<(), E> + Sync + Send,
    E: Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        let results: Vec<Result<(), E>> = out
            .par_chunks_mut(width)
            .enumerate()
            .with_min_len(MIN_CHUNK_NODES)
            .map(|(i, c)| f(i, c))
            .collect();
        return results.into_iter().collect();
    }
    let _ = exec;
    out.chunks_mut(width).enumerate().try_for_each(|(i, c)| f(i, c))
}

/// Fill two equally sized arrays node by node.
pub(crate) fn fill_pairs<F>(exec: Exec, a: &mut [f64], b: &mut [f64], f: F)
where
    F: Fn(usize) -> (f64, f64) + Sync + Send,
{
    debug_assert_eq!(a.len(), b.len());
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        a.par_iter_mut()
            .zip(b.par_iter_mut())
            .enumerate()
            .with_min_len(MIN_CHUNK_NODES)
            .for_each(|(i, (x, y))| (*x, *y) = f(i));
        return;
    }
    let _ = exec;
    for (i, (x, y)) in a.iter_mut().zip(b.iter_mut()).enumerate() {
        (*x, *y) = f(i);
    }
}

/// Map over `0..n`, preserving order.
pub(crate) fn map_indexed<T, F>(exec: Exec, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        return (0..n).into_par_iter().with_min_len(16).map(f).collect();
    }
    let _ = exec;
    (0..n).map(f).collect()
}

/// Compensated (Neumaier) summation.
pub fn sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut s = 0.0_f64;
    let mut comp = 0.0_f64;
    for v in values {
        let t = s + v;
        if s.abs() >= v.abs() {
            comp += (s - t) + v;
        } else {
            comp += (v - t) + s;
        }
        s = t;
    }
    s + comp
}
