//! Action distributions: the SOIDS information-ratio minimizer, Feel-Good
//! Thompson sampling, the exploratory design and mixtures of these.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use serde::Serialize;

use crate::error::{arg, Result};
use crate::exec::Execution;
use crate::posterior::ParameterSamples;
use crate::surrogate::SurrogateStats;

const SUM_TOL: f64 = 1e-10;

/// A probability vector over the action set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Policy {
    probs: Vec<f64>,
}

impl Policy {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        validate_probs(&probs)?;
        Ok(Self { probs })
    }

    pub fn dirac(k: usize, index: usize) -> Result<Self> {
        if index >= k {
            return arg(format!("dirac index {index} out of range for {k} actions"));
        }
        let mut probs = vec![0.0; k];
        probs[index] = 1.0;
        Ok(Self { probs })
    }

    pub fn uniform(k: usize) -> Self {
        Self { probs: vec![1.0 / k as f64; k] }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn support(&self) -> Vec<usize> {
        (0..self.len()).filter(|&k| self.probs[k] > 0.0).collect()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        draw_index(&self.probs, rng)
    }
}

fn validate_probs(probs: &[f64]) -> Result<()> {
    if probs.is_empty() {
        return arg("policy over an empty action set");
    }
    if probs.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
        return arg("policy has a negative or non-finite entry");
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > SUM_TOL {
        return arg(format!("policy sums to {total}, not 1"));
    }
    Ok(())
}

/// Draws an index from a categorical distribution with one uniform draw.
pub fn sample_action<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> Result<usize> {
    validate_probs(probs)?;
    Ok(draw_index(probs, rng))
}

fn draw_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (k, p) in probs.iter().enumerate() {
        if *p > 0.0 {
            acc += p;
            last = k;
            if u < acc {
                return k;
            }
        }
    }
    last
}

/// Result of the two-point IR minimization.
#[derive(Debug, Clone, PartialEq)]
pub struct SoidsChoice {
    pub policy: Policy,
    /// `IR^(2)` of `policy`; `None` when the posterior is degenerate.
    pub ratio: Option<f64>,
    /// Every action has zero information gain; `policy` is the Dirac on the smallest gap.
    pub degenerate: bool,
}

/// Minimum of `q -> ((1-q) a_j + q a_k)^2 / ((1-q) g_j + q g_k)` on `[0, 1]`.
///
/// The derivative factors as `(A + Bq) (2B(G + Hq) - H(A + Bq))`, so apart
/// from the endpoints the only candidate is `q = (HA - 2BG) / (BH)`.
fn pair_minimum(aj: f64, ak: f64, gj: f64, gk: f64) -> (f64, f64) {
    let f = |q: f64| {
        let num = (1.0 - q) * aj + q * ak;
        let den = (1.0 - q) * gj + q * gk;
        if den > 0.0 {
            num * num / den
        } else if num == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    };
    let mut best = (0.0, f(0.0));
    let v1 = f(1.0);
    if v1 < best.1 {
        best = (1.0, v1);
    }
    let (a, b, g, h) = (aj, ak - aj, gj, gk - gj);
    if b != 0.0 && h != 0.0 {
        let q = (h * a - 2.0 * b * g) / (b * h);
        if q > 0.0 && q < 1.0 {
            let v = f(q);
            if v < best.1 {
                best = (q, v);
            }
        }
    }
    best
}

/// Minimizes `IR^(2)` over the simplex by scanning all singletons and pairs of
/// actions. Ties are broken toward the lowest candidate index, singletons first.
pub fn soids_policy(stats: &SurrogateStats, exec: Execution) -> Result<SoidsChoice> {
    let k = stats.num_actions();
    let gaps = &stats.per_action_gap;
    let info = &stats.per_action_info;
    if k == 0 {
        return arg("no actions");
    }
    if info.iter().all(|g| *g == 0.0) {
        let best = exec
            .argmin_by_key(k, |i| gaps[i])
            .map(|(i, _)| i)
            .unwrap_or(0);
        return Ok(SoidsChoice { policy: Policy::dirac(k, best)?, ratio: None, degenerate: true });
    }

    let pairs: Vec<(u32, u32)> = (0..k as u32)
        .flat_map(|i| (i + 1..k as u32).map(move |j| (i, j)))
        .collect();
    let n = k + pairs.len();
    let eval = |c: usize| -> (f64, f64, usize, usize) {
        if c < k {
            let (_, v) = pair_minimum(gaps[c], gaps[c], info[c], info[c]);
            (v, 0.0, c, c)
        } else {
            let (i, j) = pairs[c - k];
            let (i, j) = (i as usize, j as usize);
            if info[i] == 0.0 && info[j] == 0.0 {
                return (f64::INFINITY, 0.0, i, j);
            }
            let (q, v) = pair_minimum(gaps[i], gaps[j], info[i], info[j]);
            (v, q, i, j)
        }
    };
    let (best, value) = exec
        .argmin_by_key(n, |c| eval(c).0)
        .ok_or_else(|| crate::error::Error::Internal("pair scan found no candidate".into()))?;
    if !value.is_finite() {
        return Err(crate::error::Error::Internal("pair scan found no finite ratio".into()));
    }
    let (_, q, i, j) = eval(best);
    let mut probs = vec![0.0; k];
    probs[i] += 1.0 - q;
    probs[j] += q;
    let policy = Policy::new(probs)?;
    let ratio = stats.info_ratio(&policy, 2.0).ok().or(Some(0.0));
    Ok(SoidsChoice { policy, ratio, degenerate: false })
}

/// Among the maximizers of `<theta, a>`, the action with the fewest nonzero
/// coordinates, then the lowest index.
pub fn sparse_argmax(actions: &DMatrix<f64>, theta: &DVector<f64>) -> usize {
    let r = actions * theta;
    let best = r.max();
    let mut choice: Option<(usize, usize)> = None;
    for k in 0..r.len() {
        if r[k] == best {
            let nnz = actions.row(k).iter().filter(|x| **x != 0.0).count();
            if choice.is_none_or(|(_, c)| nnz < c) {
                choice = Some((k, nnz));
            }
        }
    }
    choice.map(|(k, _)| k).unwrap_or(0)
}

/// Feel-Good Thompson sampling: the empirical distribution of the samples' optimal actions.
pub fn fgts_policy(samples: &ParameterSamples, actions: &DMatrix<f64>) -> Result<Policy> {
    if samples.dim() != actions.ncols() {
        return arg("samples and actions differ in dimension");
    }
    let m = samples.len() as f64;
    let mut probs = vec![0.0; actions.nrows()];
    for theta in samples.samples() {
        probs[sparse_argmax(actions, theta)] += 1.0 / m;
    }
    // exact renormalization keeps the sum within tolerance for any M
    let total: f64 = probs.iter().sum();
    Policy::new(probs.into_iter().map(|p| p / total).collect())
}

pub fn mixture_policy(base: &Policy, mu: &Policy, gamma: f64) -> Result<Policy> {
    if base.len() != mu.len() {
        return arg("mixture of policies over different action sets");
    }
    if !(0.0..=1.0).contains(&gamma) {
        return arg(format!("mixture weight {gamma} outside [0, 1]"));
    }
    let probs: Vec<f64> = base
        .probs
        .iter()
        .zip(&mu.probs)
        .map(|(b, m)| (1.0 - gamma) * b + gamma * m)
        .collect();
    let total: f64 = probs.iter().sum();
    Policy::new(probs.into_iter().map(|p| p / total).collect())
}

/// Smallest `IR^(gamma_ir)` over mixtures `(1 - w) base + w mu` for `w` on a
/// uniform grid of `[0, 1]` plus the stationary weight of the 3-IR bound.
pub fn best_mixture_ratio(
    stats: &SurrogateStats,
    base: &Policy,
    mu: &Policy,
    gamma_ir: f64,
    grid: usize,
) -> Result<(f64, f64)> {
    let rb = stats.surrogate_regret(base);
    let rm = stats.surrogate_regret(mu);
    let mut weights: Vec<f64> = (0..=grid).map(|i| i as f64 / grid as f64).collect();
    if rm > rb {
        let w = rb / (2.0 * (rm - rb));
        if w > 0.0 && w <= 1.0 {
            weights.push(w);
        }
    }
    let mut best = (1.0, f64::INFINITY);
    for w in weights {
        let p = mixture_policy(base, mu, w)?;
        if let Ok(v) = stats.info_ratio(&p, gamma_ir) {
            if v < best.1 {
                best = (w, v);
            }
        }
    }
    Ok(best)
}

/// Every action with positive probability has at most `s` nonzero coordinates.
pub fn sparse_action_screen(policy: &Policy, actions: &DMatrix<f64>, s: usize) -> bool {
    policy
        .support()
        .into_iter()
        .all(|k| actions.row(k).iter().filter(|x| **x != 0.0).count() <= s)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExploratoryDesign {
    pub mu: Policy,
    /// Smallest eigenvalue of `sum_k mu_k a_k a_k^T`.
    pub c_min: f64,
}

pub const DESIGN_ITERATIONS: usize = 500;

fn design_matrix(actions: &DMatrix<f64>, w: &[f64]) -> DMatrix<f64> {
    let weighted = DMatrix::from_fn(actions.nrows(), actions.ncols(), |i, j| w[i] * actions[(i, j)]);
    actions.transpose() * weighted
}

fn min_eigen(m: DMatrix<f64>) -> (f64, DVector<f64>) {
    let eig = SymmetricEigen::new(m);
    let mut idx = 0;
    for i in 1..eig.eigenvalues.len() {
        if eig.eigenvalues[i] < eig.eigenvalues[idx] {
            idx = i;
        }
    }
    (eig.eigenvalues[idx], eig.eigenvectors.column(idx).into_owned())
}

/// Smallest eigenvalue of the design matrix of `mu`.
pub fn design_min_eigenvalue(actions: &DMatrix<f64>, mu: &Policy) -> f64 {
    min_eigen(design_matrix(actions, mu.probs())).0
}

/// Euclidean projection onto the probability simplex (sort-based).
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut acc = 0.0;
    let mut theta = 0.0;
    for (i, ui) in u.iter().enumerate() {
        acc += ui;
        let t = (acc - 1.0) / (i + 1) as f64;
        if ui - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|x| (x - theta).max(0.0)).collect()
}

/// Approximate maximizer of `sigma_min(sum_k mu_k a_k a_k^T)` over the simplex by
/// projected supergradient ascent from the uniform design.
///
/// The supergradient `(v . a_k)^2` uses a unit eigenvector `v` of the smallest
/// eigenvalue. Steps are `1/sqrt(iter)` along the supergradient scaled to unit
/// max-norm. Returns the best iterate; `c_min = 0` when the actions do not span.
pub fn exploratory_design(actions: &DMatrix<f64>) -> Result<ExploratoryDesign> {
    exploratory_design_with(actions, DESIGN_ITERATIONS)
}

pub fn exploratory_design_with(actions: &DMatrix<f64>, iterations: usize) -> Result<ExploratoryDesign> {
    let k = actions.nrows();
    if k == 0 {
        return arg("empty action set");
    }
    let d = actions.ncols();
    let mut mu = vec![1.0 / k as f64; k];
    let (mut lam, mut v) = min_eigen(design_matrix(actions, &mu));
    let scale = design_matrix(actions, &mu).trace() / d as f64;
    if k < d || lam <= 1e-12 * scale.max(f64::MIN_POSITIVE) {
        return Ok(ExploratoryDesign { mu: Policy::new(mu)?, c_min: 0.0 });
    }
    let mut best = (mu.clone(), lam);
    for it in 1..=iterations {
        let proj = actions * &v;
        let g: Vec<f64> = proj.iter().map(|x| x * x).collect();
        let gmax = g.iter().cloned().fold(0.0, f64::max);
        if gmax <= 0.0 {
            break;
        }
        let step = 1.0 / (it as f64).sqrt() / gmax;
        let moved: Vec<f64> = mu.iter().zip(&g).map(|(m, gi)| m + step * gi).collect();
        mu = project_simplex(&moved);
        (lam, v) = min_eigen(design_matrix(actions, &mu));
        if lam > best.1 {
            best = (mu.clone(), lam);
        }
    }
    let total: f64 = best.0.iter().sum();
    let mu = Policy::new(best.0.iter().map(|p| p / total).collect())?;
    let c_min = design_min_eigenvalue(actions, &mu).max(0.0);
    Ok(ExploratoryDesign { mu, c_min })
}
