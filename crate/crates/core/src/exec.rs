//! Execution policy for the data-parallel inner loops.
//!
//! Every helper here produces bitwise identical results under both
//! policies: element-wise maps have no ordering dependence, and reductions
//! always sum fixed-size chunks and then fold the partials left to right.
//! Without the `parallel` feature, [`Exec::Parallel`] runs sequentially.

use serde::{Deserialize, Serialize};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Elements per reduction chunk.
pub const CHUNK: usize = 4096;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Exec {
    Sequential,
    #[default]
    Parallel,
}

impl Exec {
    /// Whether this policy actually fans out across threads in this build.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }
}

/// `out[i] = f(i)` for every index.
pub fn fill<T, F>(exec: Exec, out: &mut [T], f: F)
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        out.par_chunks_mut(CHUNK).enumerate().for_each(|(c, chunk)| {
            let base = c * CHUNK;
            for (k, slot) in chunk.iter_mut().enumerate() {
                *slot = f(base + k);
            }
        });
        return;
    }
    let _ = exec;
    for (i, slot) in out.iter_mut().enumerate() {
        *slot = f(i);
    }
}

/// `(a[i], b[i]) = f(i)` for every index; `a` and `b` have equal length.
pub fn fill2<T, F>(exec: Exec, a: &mut [T], b: &mut [T], f: F)
where
    T: Send,
    F: Fn(usize) -> (T, T) + Sync + Send,
{
    assert_eq!(a.len(), b.len());
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        a.par_chunks_mut(CHUNK)
            .zip(b.par_chunks_mut(CHUNK))
            .enumerate()
            .for_each(|(c, (ca, cb))| {
                let base = c * CHUNK;
                for (k, (sa, sb)) in ca.iter_mut().zip(cb.iter_mut()).enumerate() {
                    (*sa, *sb) = f(base + k);
                }
            });
        return;
    }
    let _ = exec;
    for (i, (sa, sb)) in a.iter_mut().zip(b.iter_mut()).enumerate() {
        (*sa, *sb) = f(i);
    }
}

/// Calls `f(index, chunk)` on consecutive `len`-sized chunks of `data`.
pub fn chunks_mut<T, F>(exec: Exec, data: &mut [T], len: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        data.par_chunks_mut(len).enumerate().for_each(|(i, c)| f(i, c));
        return;
    }
    let _ = exec;
    for (i, c) in data.chunks_mut(len).enumerate() {
        f(i, c);
    }
}

/// `Σ_{i<n} f(i)` with a fixed summation tree.
pub fn sum<F>(exec: Exec, n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    let chunks = n.div_ceil(CHUNK);
    let partial = |c: usize| {
        let end = ((c + 1) * CHUNK).min(n);
        (c * CHUNK..end).map(&f).sum::<f64>()
    };
    let partials = map_collect(exec, chunks, partial);
    partials.into_iter().sum()
}

/// `(0..n).map(f).collect()`, possibly in parallel; order is preserved.
pub fn map_collect<T, F>(exec: Exec, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = exec;
    (0..n).map(f).collect()
}

/// Runs two closures, concurrently when the policy allows.
pub fn join<A, B, RA, RB>(exec: Exec, a: A, b: B) -> (RA, RB)
where
    A: FnOnce() -> RA + Send,
    B: FnOnce() -> RB + Send,
    RA: Send,
    RB: Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        return rayon::join(a, b);
    }
    let _ = exec;
    (a(), b())
}
