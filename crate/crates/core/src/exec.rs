//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature (on by default) the `Parallel` strategy maps work
//! onto the rayon pool; without it every strategy runs sequentially. Results are
//! always returned in index order, so callers see identical output either way.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

impl Execution {
    /// `f(0), f(1), ..., f(n-1)` in index order.
    pub fn map<T, F>(self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match self {
            Execution::Sequential => (0..n).map(f).collect(),
            Execution::Parallel => par_map(n, f),
        }
    }

    /// Index of the smallest key; ties go to the lowest index. NaN keys are skipped.
    pub fn argmin_by_key<F>(self, n: usize, key: F) -> Option<(usize, f64)>
    where
        F: Fn(usize) -> f64 + Sync + Send,
    {
        let better = |a: Option<(usize, f64)>, b: Option<(usize, f64)>| match (a, b) {
            (None, x) | (x, None) => x,
            (Some(x), Some(y)) => {
                if y.1 < x.1 || (y.1 == x.1 && y.0 < x.0) {
                    Some(y)
                } else {
                    Some(x)
                }
            }
        };
        let lift = |i: usize| {
            let v = key(i);
            if v.is_nan() {
                None
            } else {
                Some((i, v))
            }
        };
        match self {
            Execution::Sequential => (0..n).map(lift).fold(None, better),
            Execution::Parallel => par_argmin(n, lift, better),
        }
    }
}

#[cfg(feature = "parallel")]
fn par_map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn par_map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).map(f).collect()
}

type Cand = Option<(usize, f64)>;

#[cfg(feature = "parallel")]
fn par_argmin<L, B>(n: usize, lift: L, better: B) -> Cand
where
    L: Fn(usize) -> Cand + Sync + Send,
    B: Fn(Cand, Cand) -> Cand + Sync + Send,
{
    (0..n).into_par_iter().map(lift).reduce(|| None, better)
}

#[cfg(not(feature = "parallel"))]
fn par_argmin<L, B>(n: usize, lift: L, better: B) -> Cand
where
    L: Fn(usize) -> Cand + Sync + Send,
    B: Fn(Cand, Cand) -> Cand + Sync + Send,
{
    (0..n).map(lift).fold(None, better)
}

/// Runs `f` on a pool limited to `workers` threads (0 = rayon default).
#[cfg(feature = "parallel")]
pub fn with_workers<T: Send, F: FnOnce() -> T + Send>(workers: usize, f: F) -> T {
    if workers == 0 {
        return f();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) => pool.install(f),
        Err(_) => f(),
    }
}

#[cfg(not(feature = "parallel"))]
pub fn with_workers<T: Send, F: FnOnce() -> T + Send>(_workers: usize, f: F) -> T {
    f()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strategies_agree() {
        let f = |i: usize| (i * 7919) % 13;
        assert_eq!(Execution::Sequential.map(100, f), Execution::Parallel.map(100, f));
    }

    #[test]
    fn argmin_ties_pick_lowest_index() {
        let key = |i: usize| if i % 5 == 3 { -1.0 } else { i as f64 };
        for ex in [Execution::Sequential, Execution::Parallel] {
            assert_eq!(ex.argmin_by_key(1000, key), Some((3, -1.0)));
        }
        assert_eq!(Execution::Parallel.argmin_by_key(0, |_| 0.0), None);
        assert_eq!(Execution::Sequential.argmin_by_key(3, |_| f64::NAN), None);
    }
}
