//! Brute-force oracles and numerical checks of the inequalities the algorithm relies on.
//!
//! Every checker is deterministic given its seed and reports the largest
//! violation found. Deterministic identities compare against a small absolute
//! tolerance. Monte Carlo checks report `estimate - bound - 3 SE`, so they pass
//! when the estimate lies within three standard errors of the bound.

use std::collections::HashSet;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{arg, Result};
use crate::exec::Execution;
use crate::policy::{project_simplex, soids_policy, Policy};
use crate::posterior::{gaps_under, ParameterSamples};
use crate::prior::{ln_binomial, uniform_l1_ball, SubsetPrior};
use crate::schedules::{
    c_t, lambda_experimental, lambda_theorem2, lambda_theorem2_branches, lambda_theorem3, w_log_coefficients,
    ScheduleState,
};
use crate::surrogate::{true_info_gain, SurrogateStats};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LemmaReport {
    pub lemma: String,
    pub instances: usize,
    pub max_violation: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl LemmaReport {
    fn new(lemma: Lemma, instances: usize, max_violation: f64) -> Self {
        let tolerance = lemma.tolerance();
        Self {
            lemma: lemma.id().to_string(),
            instances,
            max_violation,
            tolerance,
            pass: max_violation <= tolerance,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Lemma {
    GirMinimizer,
    Amgm,
    Covering,
    SigTig,
    Supermartingale,
    Lipschitz,
    ScheduleBounds,
    Hoeffding,
    KlPrior,
    WLog,
    ScheduleMonotone,
    ImplicitRb,
}

/// Monte Carlo draws per configuration in the statistical checks.
pub const MC_DRAWS: usize = 100_000;
/// Default simplex mesh spacing for the brute-force IR minimizer.
pub const DEFAULT_MESH: f64 = 0.02;
/// Cap on mesh points; the spacing is coarsened until the mesh fits.
pub const MESH_POINT_BUDGET: f64 = 200_000.0;
/// Relative slack on the IR-minimizer comparison.
pub const GIR_SLACK: f64 = 0.01;

impl Lemma {
    pub const ALL: [Lemma; 12] = [
        Lemma::GirMinimizer,
        Lemma::Amgm,
        Lemma::Covering,
        Lemma::SigTig,
        Lemma::Supermartingale,
        Lemma::Lipschitz,
        Lemma::ScheduleBounds,
        Lemma::Hoeffding,
        Lemma::KlPrior,
        Lemma::WLog,
        Lemma::ScheduleMonotone,
        Lemma::ImplicitRb,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Lemma::GirMinimizer => "gir_minimizer",
            Lemma::Amgm => "amgm",
            Lemma::Covering => "covering",
            Lemma::SigTig => "sig_tig",
            Lemma::Supermartingale => "supermartingale",
            Lemma::Lipschitz => "lipschitz",
            Lemma::ScheduleBounds => "schedule_bounds",
            Lemma::Hoeffding => "hoeffding",
            Lemma::KlPrior => "kl_prior",
            Lemma::WLog => "w_log",
            Lemma::ScheduleMonotone => "schedule_monotone",
            Lemma::ImplicitRb => "implicit_rb",
        }
    }

    pub fn from_id(id: &str) -> Option<Lemma> {
        Self::ALL.into_iter().find(|l| l.id() == id)
    }

    /// The single tolerance table for all checks.
    pub fn tolerance(self) -> f64 {
        match self {
            Lemma::GirMinimizer => GIR_SLACK,
            Lemma::Amgm => 1e-12,
            Lemma::Covering => 1e-12,
            Lemma::SigTig => 1e-12,
            Lemma::Lipschitz => 1e-12,
            Lemma::ScheduleBounds => 1e-12,
            Lemma::WLog => 0.0,
            Lemma::ScheduleMonotone => 0.0,
            Lemma::ImplicitRb => 1e-10,
            Lemma::Supermartingale | Lemma::Hoeffding | Lemma::KlPrior => 0.0,
        }
    }

    fn stream(self) -> u64 {
        Self::ALL.iter().position(|l| *l == self).unwrap_or(0) as u64
    }

    pub fn run(self, seed: u64) -> Result<LemmaReport> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(self.stream());
        match self {
            Lemma::GirMinimizer => check_gir_minimizer(100, &mut rng),
            Lemma::Amgm => Ok(check_amgm_constants(&mut rng)),
            Lemma::Covering => {
                let mut worst = f64::NEG_INFINITY;
                let mut n = 0;
                for (d, s) in [(3, 1), (4, 2), (6, 2)] {
                    for rho in [0.5, 0.25, 0.1] {
                        let r = check_covering_bound(d, s, rho, &mut rng)?;
                        worst = worst.max(r.max_violation);
                        n += r.instances;
                    }
                }
                Ok(LemmaReport::new(Lemma::Covering, n, worst))
            }
            Lemma::SigTig => check_sig_tig(500, &mut rng),
            Lemma::Supermartingale => check_supermartingale(5, &mut rng),
            Lemma::Lipschitz => Ok(check_lipschitz(1000, &mut rng)),
            Lemma::ScheduleBounds => Ok(check_schedule_bounds()),
            Lemma::Hoeffding => Ok(check_hoeffding(&mut rng)),
            Lemma::KlPrior => check_kl_prior(&mut rng),
            Lemma::WLog => Ok(check_w_log()),
            Lemma::ScheduleMonotone => check_schedule_monotone(&mut rng),
            Lemma::ImplicitRb => Ok(check_implicit_rb(200, &mut rng)),
        }
    }
}

/// Runs the named checks (all when `lemmas` is empty), in table order.
pub fn run_checks(lemmas: &[Lemma], seed: u64, exec: Execution) -> Result<Vec<LemmaReport>> {
    let list: Vec<Lemma> = if lemmas.is_empty() { Lemma::ALL.to_vec() } else { lemmas.to_vec() };
    exec.map(list.len(), |i| list[i].run(seed)).into_iter().collect()
}

fn ir_value(gap: &[f64], info: &[f64], p: &[f64], gamma: f64) -> f64 {
    let r: f64 = p.iter().zip(gap).map(|(a, b)| a * b).sum();
    let g: f64 = p.iter().zip(info).map(|(a, b)| a * b).sum();
    if g > 0.0 {
        r.powf(gamma) / g
    } else if r == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    ln_binomial(n, k).exp()
}

/// Largest number of divisions `n <= requested` whose simplex mesh fits the point budget.
pub fn mesh_divisions(k: usize, requested: usize) -> usize {
    let mut n = requested.max(1);
    while n > 1 && binomial(n + k - 1, k - 1) > MESH_POINT_BUDGET {
        n -= 1;
    }
    n
}

/// Minimum of `IR^gamma` over the simplex mesh `{c / n : c in N^K, sum c = n}`.
pub fn mesh_minimum(stats: &SurrogateStats, gamma: f64, divisions: usize) -> (Vec<f64>, f64) {
    let k = stats.num_actions();
    let n = divisions;
    let mut counts = vec![0usize; k];
    counts[k - 1] = n;
    let mut best = (Vec::new(), f64::INFINITY);
    let mut p = vec![0.0; k];
    loop {
        for i in 0..k {
            p[i] = counts[i] as f64 / n as f64;
        }
        let v = ir_value(&stats.per_action_gap, &stats.per_action_info, &p, gamma);
        if v < best.1 {
            best = (p.clone(), v);
        }
        // next composition in lexicographic order of the first K-1 counts
        let mut i = k - 1;
        loop {
            if i == 0 {
                return best;
            }
            i -= 1;
            if counts[k - 1] > 0 {
                counts[i] += 1;
                counts[k - 1] -= 1;
                break;
            }
            counts[k - 1] += counts[i];
            counts[i] = 0;
        }
    }
}

fn refine(stats: &SurrogateStats, gamma: f64, start: Vec<f64>) -> (Vec<f64>, f64) {
    let (a, g) = (&stats.per_action_gap, &stats.per_action_info);
    let mut x = start;
    let mut fx = ir_value(a, g, &x, gamma);
    let mut step = 0.1;
    for _ in 0..2000 {
        if !fx.is_finite() || fx == 0.0 {
            break;
        }
        let r: f64 = x.iter().zip(a).map(|(p, v)| p * v).sum();
        let i: f64 = x.iter().zip(g).map(|(p, v)| p * v).sum();
        let grad: Vec<f64> = (0..x.len())
            .map(|k| gamma * r.powf(gamma - 1.0) * a[k] / i - r.powf(gamma) * g[k] / (i * i))
            .collect();
        let mut improved = false;
        for _ in 0..60 {
            let cand = project_simplex(&x.iter().zip(&grad).map(|(p, d)| p - step * d).collect::<Vec<_>>());
            let fc = ir_value(a, g, &cand, gamma);
            if fc < fx {
                let gain = fx - fc;
                x = cand;
                fx = fc;
                step *= 1.5;
                improved = gain > 1e-15 * fx.abs();
                break;
            }
            step *= 0.5;
        }
        if !improved {
            break;
        }
    }
    (x, fx)
}

/// Minimizes `IR^gamma` over the simplex by a mesh search refined with projected
/// gradient descent. The mesh is coarsened when the requested spacing would
/// exceed [`MESH_POINT_BUDGET`] points.
pub fn brute_ir_minimizer(stats: &SurrogateStats, gamma: f64, mesh: f64) -> Result<(Policy, f64)> {
    let k = stats.num_actions();
    if k > 8 {
        return arg(format!("brute-force minimizer supports at most 8 actions, got {k}"));
    }
    if !(mesh > 0.0 && mesh <= 1.0) {
        return arg("mesh spacing must lie in (0, 1]");
    }
    let n = mesh_divisions(k, (1.0 / mesh).round() as usize);
    let (p0, v0) = mesh_minimum(stats, gamma, n);
    let (p1, v1) = refine(stats, gamma, p0.clone());
    let (p, v) = if v1 <= v0 { (p1, v1) } else { (p0, v0) };
    let total: f64 = p.iter().sum();
    Ok((Policy::new(p.iter().map(|x| x / total).collect())?, v))
}

fn random_stats<R: Rng + ?Sized>(rng: &mut R) -> Result<SurrogateStats> {
    let k = rng.random_range(2..=8);
    let m = rng.random_range(2..=16);
    let d = rng.random_range(2..=4);
    let actions = DMatrix::from_fn(k, d, |_, _| rng.random_range(-1.0..1.0));
    let samples = (0..m).map(|_| DVector::from_vec(uniform_l1_ball(d, rng))).collect();
    SurrogateStats::from_samples(&ParameterSamples::new(samples)?, &actions)
}

/// Compares the 2-IR minimizer against the brute-force minimum of `IR^gamma`
/// for `gamma` in {2, 3, 4}. The violation is `IR(soids) / (2^(gamma-2) min) - 1`.
pub fn check_gir_minimizer<R: Rng + ?Sized>(trials: usize, rng: &mut R) -> Result<LemmaReport> {
    let mut worst = f64::NEG_INFINITY;
    let mut n = 0;
    while n < trials {
        let st = random_stats(rng)?;
        if st.per_action_info.iter().all(|g| *g == 0.0) {
            continue;
        }
        n += 1;
        let pol = soids_policy(&st, Execution::Sequential)?.policy;
        for gamma in [2.0, 3.0, 4.0] {
            let (_, min) = brute_ir_minimizer(&st, gamma, DEFAULT_MESH)?;
            let v = ir_value(&st.per_action_gap, &st.per_action_info, pol.probs(), gamma);
            let bound = 2f64.powf(gamma - 2.0) * min;
            let viol = if bound > 0.0 { v / bound - 1.0 } else if v == 0.0 { -1.0 } else { f64::INFINITY };
            worst = worst.max(viol);
        }
    }
    Ok(LemmaReport::new(Lemma::GirMinimizer, n, worst))
}

/// `c_p^* = (p-1) (1/p)^(p/(p-1))`.
pub fn amgm_c_star(p: f64) -> f64 {
    (p - 1.0) * (1.0 / p).powf(p / (p - 1.0))
}

/// `c_p = p (1/(p-1))^((p-1)/p)`.
pub fn amgm_c(p: f64) -> f64 {
    p * (1.0 / (p - 1.0)).powf((p - 1.0) / p)
}

pub fn check_amgm_constants<R: Rng + ?Sized>(rng: &mut R) -> LemmaReport {
    let mut worst: f64 = 0.0;
    let mut n = 0;
    for p in [2.0, 3.0, 4.0, 7.5] {
        let (cs, c) = (amgm_c_star(p), amgm_c(p));
        worst = worst.max((c * cs.powf((p - 1.0) / p) - 1.0).abs());
        if p == 2.0 {
            worst = worst.max((c - 2.0).abs());
        } else if c >= 2.0 {
            worst = worst.max(c - 2.0 + 1.0);
        }
        for _ in 0..2000 {
            let x: f64 = rng.random_range(1e-3..10.0);
            let y: f64 = rng.random_range(1e-3..10.0);
            let lam: f64 = rng.random_range(1e-2..10.0);
            let lhs = (x * y).powf(1.0 / p);
            let rhs = x / lam + cs * (lam * y).powf(1.0 / (p - 1.0));
            worst = worst.max((lhs - rhs) / rhs.max(1.0));
            n += 1;
        }
    }
    worst = worst.max((amgm_c_star(3.0) - 2.0 / 3f64.powf(1.5)).abs());
    LemmaReport::new(Lemma::Amgm, n, worst)
}

/// Builds the per-support lattice cover of the s-sparse unit l1 ball in R^d with
/// spacing `2 rho / s`, checks random points against it and compares its size
/// with `C(d, s) (1 + 2/rho)^s`.
pub fn check_covering_bound<R: Rng + ?Sized>(d: usize, s: usize, rho: f64, rng: &mut R) -> Result<LemmaReport> {
    if d > 6 || s == 0 || s > d {
        return arg("covering check runs at d <= 6 and 1 <= s <= d");
    }
    let h = 2.0 * rho / s as f64;
    let reach = (1.0 / h + 1.0).ceil() as i64;
    let mut cover: HashSet<Vec<i64>> = HashSet::new();
    for support in subsets(d, s) {
        let mut z = vec![-reach; s];
        loop {
            let excess: f64 = z.iter().map(|&v| ((v as f64).abs() * h - h / 2.0).max(0.0)).sum();
            if excess <= 1.0 {
                let mut full = vec![0i64; d];
                for (j, &c) in support.iter().zip(&z) {
                    full[*j] = c;
                }
                cover.insert(full);
            }
            let mut i = 0;
            while i < s && z[i] == reach {
                z[i] = -reach;
                i += 1;
            }
            if i == s {
                break;
            }
            z[i] += 1;
        }
    }
    let bound = ln_binomial(d, s) + s as f64 * (1.0 + 2.0 / rho).ln();
    let mut worst = (cover.len() as f64).ln() - bound;

    let prior = SubsetPrior::new(d, s)?;
    let trials = 2000;
    for _ in 0..trials {
        let theta = prior.sample(rng);
        let idx: Vec<i64> = theta.iter().map(|v| (v / h).round() as i64).collect();
        if !cover.contains(&idx) {
            return Ok(LemmaReport::new(Lemma::Covering, trials, f64::INFINITY));
        }
        let dist: f64 = theta.iter().zip(&idx).map(|(v, c)| (v - *c as f64 * h).abs()).sum();
        worst = worst.max(dist - rho);
    }
    Ok(LemmaReport::new(Lemma::Covering, trials, worst))
}

/// All subsets of `0..d` of size `k`, in lexicographic order.
pub fn subsets(d: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..k).collect();
    if k > d {
        return out;
    }
    loop {
        out.push(cur.clone());
        let mut i = k;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if cur[i] < d - k + i {
                cur[i] += 1;
                for j in i + 1..k {
                    cur[j] = cur[j - 1] + 1;
                }
                break;
            }
        }
        if k == 0 {
            return out;
        }
    }
}

fn random_policy<R: Rng + ?Sized>(k: usize, rng: &mut R) -> Result<Policy> {
    let w: Vec<f64> = (0..k).map(|_| rng.random::<f64>()).collect();
    let z: f64 = w.iter().sum();
    Policy::new(w.iter().map(|x| x / z).collect())
}

/// Surrogate information gain never exceeds the gain measured against any fixed parameter.
pub fn check_sig_tig<R: Rng + ?Sized>(trials: usize, rng: &mut R) -> Result<LemmaReport> {
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..trials {
        let (k, d, m) = (rng.random_range(1..20), rng.random_range(1..8), rng.random_range(1..30));
        let actions = DMatrix::from_fn(k, d, |_, _| rng.random_range(-1.0..1.0));
        let samples = ParameterSamples::new((0..m).map(|_| DVector::from_vec(uniform_l1_ball(d, rng))).collect())?;
        let theta0 = DVector::from_vec(uniform_l1_ball(d, rng));
        let pol = random_policy(k, rng)?;
        let sig = SurrogateStats::from_samples(&samples, &actions)?.surrogate_info_gain(&pol);
        let tig = true_info_gain(&samples, &pol, &actions, &theta0)?;
        worst = worst.max(sig - tig);
    }
    Ok(LemmaReport::new(Lemma::SigTig, trials, worst))
}

fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// The Gaussian likelihood-ratio product along a fixed action sequence has mean at most one.
pub fn check_supermartingale<R: Rng + ?Sized>(configs: usize, rng: &mut R) -> Result<LemmaReport> {
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..configs {
        let d = rng.random_range(2..6);
        let theta = DVector::from_vec(uniform_l1_ball(d, rng));
        let theta0 = DVector::from_vec(uniform_l1_ball(d, rng));
        let steps = rng.random_range(1..5);
        let actions = DMatrix::from_fn(steps, d, |_, _| rng.random_range(-1.0..1.0));
        let m0 = &actions * &theta0;
        let m1 = &actions * &theta;
        let draws: Vec<f64> = (0..MC_DRAWS)
            .map(|_| {
                let mut log_ratio = 0.0;
                for t in 0..steps {
                    let eps: f64 = StandardNormal.sample(rng);
                    let y = m0[t] + eps;
                    log_ratio += 0.5 * ((m0[t] - y).powi(2) - (m1[t] - y).powi(2));
                }
                log_ratio.exp()
            })
            .collect();
        let (mean, se) = mean_and_se(&draws);
        worst = worst.max(mean - 1.0 - 3.0 * se);
    }
    Ok(LemmaReport::new(Lemma::Supermartingale, configs * MC_DRAWS, worst))
}

/// `|Delta(pi, theta) - Delta(pi, theta')| <= 2 ||theta - theta'||_1` for actions in `[-1, 1]^d`.
pub fn check_lipschitz<R: Rng + ?Sized>(trials: usize, rng: &mut R) -> LemmaReport {
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..trials {
        let (k, d) = (rng.random_range(1..15), rng.random_range(1..8));
        let actions = DMatrix::from_fn(k, d, |_, _| rng.random_range(-1.0..1.0));
        let a = DVector::from_vec(uniform_l1_ball(d, rng));
        let b = DVector::from_vec(uniform_l1_ball(d, rng));
        let w: Vec<f64> = (0..k).map(|_| rng.random::<f64>()).collect();
        let z: f64 = w.iter().sum();
        let ga = gaps_under(&actions, &a);
        let gb = gaps_under(&actions, &b);
        let diff: f64 = (0..k).map(|i| w[i] / z * (ga[i] - gb[i])).sum();
        worst = worst.max(diff.abs() - 2.0 * (&a - &b).lp_norm(1));
    }
    LemmaReport::new(Lemma::Lipschitz, trials, worst)
}

/// Both learning-rate inequalities with the information ratio replaced by its worst case.
/// The violation is `lhs / rhs - 1`.
pub fn check_schedule_bounds() -> LemmaReport {
    let c3 = amgm_c_star(3.0);
    let mut worst = f64::NEG_INFINITY;
    let mut n = 0;
    for d in [4usize, 10, 20, 40, 100, 1000] {
        for s in [1usize, 2, 5, 10] {
            if s > d {
                continue;
            }
            for c_min in [1.0 / d as f64, 0.01, 0.1, 0.5] {
                for t_max in [10usize, 100, 1000] {
                    n += 1;
                    let ct = c_t(t_max, d, s);
                    let (df, sf, tf) = (d as f64, s as f64, t_max as f64);
                    let (l2_last, l3_last) = lambda_theorem2_branches(t_max - 1, d, s, c_min);
                    let l3_last = l3_last.unwrap_or(f64::NAN);
                    let mut sum2 = 0.0;
                    let mut sum3 = 0.0;
                    for t in 1..=t_max {
                        let (l2, l3) = lambda_theorem2_branches(t - 1, d, s, c_min);
                        sum2 += 32.0 / 3.0 * l2 * 2.0 * df;
                        sum3 += 16.0 / 3.0 * c3 * (3.0 * l3.unwrap_or(f64::NAN) * 54.0 * sf / c_min).sqrt();
                    }
                    let lhs2 = ct / l2_last + sum2;
                    let rhs2 = 16.0 * (2.0 / 3.0 * ct * df * tf).sqrt();
                    let lhs3 = ct / l3_last + sum3;
                    let rhs3 = 12.0 * 6f64.cbrt() * (sf * ct / c_min).cbrt() * tf.powf(2.0 / 3.0);
                    worst = worst.max(lhs2 / rhs2 - 1.0).max(lhs3 / rhs3 - 1.0);
                }
            }
        }
    }
    LemmaReport::new(Lemma::ScheduleBounds, n, worst)
}

/// `(1/eta) log E exp(eta X) <= E X + eta E X^2` whenever `eta X <= 1`, and
/// `<= 2 E X` when additionally `X >= 0`.
pub fn check_hoeffding<R: Rng + ?Sized>(rng: &mut R) -> LemmaReport {
    let mut worst = f64::NEG_INFINITY;
    let mut configs = 0;
    for eta in [0.25, 1.0, 4.0] {
        let hi = 1.0 / eta;
        // (lower end of the support, shape) pairs; shape 0 is uniform, 1 is a two-point law
        for (lo, shape) in [(0.0, 0), (0.0, 1), (-2.0 * hi, 0), (-hi, 1)] {
            configs += 1;
            let xs: Vec<f64> = (0..MC_DRAWS)
                .map(|_| match shape {
                    0 => rng.random_range(lo..=hi),
                    _ => {
                        if rng.random::<f64>() < 0.3 {
                            hi
                        } else {
                            lo
                        }
                    }
                })
                .collect();
            let n = xs.len() as f64;
            let me = xs.iter().map(|x| (eta * x).exp()).sum::<f64>() / n;
            let lhs = me.ln() / eta;
            let mx = xs.iter().sum::<f64>() / n;
            let mx2 = xs.iter().map(|x| x * x).sum::<f64>() / n;
            // delta-method linearization of lhs - rhs per draw
            let lin = |x: f64, rhs: &dyn Fn(f64) -> f64| (eta * x).exp() / (eta * me) - rhs(x);
            let first = |x: f64| x + eta * x * x;
            let zs: Vec<f64> = xs.iter().map(|&x| lin(x, &first)).collect();
            let (_, se) = mean_and_se(&zs);
            worst = worst.max(lhs - (mx + eta * mx2) - 3.0 * se);
            if lo >= 0.0 {
                let second = |x: f64| 2.0 * x;
                let zs: Vec<f64> = xs.iter().map(|&x| lin(x, &second)).collect();
                let (_, se) = mean_and_se(&zs);
                worst = worst.max(lhs - 2.0 * mx - 3.0 * se);
            }
        }
    }
    LemmaReport::new(Lemma::Hoeffding, configs * MC_DRAWS, worst)
}

/// Log-density of the subset prior's mixture at a point with exactly `s` nonzero
/// coordinates, with respect to Lebesgue measure on its coordinate plane.
fn mixture_log_density(prior: &SubsetPrior, theta: &DVector<f64>) -> Result<f64> {
    let s = prior.sparsity();
    let support: Vec<usize> = (0..theta.len()).filter(|&j| theta[j] != 0.0).collect();
    if theta.lp_norm(1) > 1.0 {
        return Ok(f64::NEG_INFINITY);
    }
    let log_vol = s as f64 * 2f64.ln() - ln_factorial(s);
    let mut terms = Vec::new();
    for set in subsets(prior.dim(), s) {
        if support.iter().all(|j| set.contains(j)) && support.len() == s {
            terms.push(prior.subset_log_mass(&set)? - log_vol);
        }
    }
    Ok(crate::posterior::logsumexp(&terms))
}

fn ln_factorial(n: usize) -> f64 {
    (1..=n).map(|k| (k as f64).ln()).sum()
}

/// Monte Carlo KL divergence between the uniform law on `(1-eps) theta + eps Theta_S`
/// and the subset prior, against `s log(2ed / (eps s))`.
pub fn check_kl_prior<R: Rng + ?Sized>(rng: &mut R) -> Result<LemmaReport> {
    let (d, s) = (4usize, 2usize);
    let prior = SubsetPrior::new(d, s)?;
    let mut worst = f64::NEG_INFINITY;
    let mut configs = 0;
    for support in [vec![0usize, 1], vec![1, 3], vec![2, 3]] {
        let mut center = DVector::zeros(d);
        let w = uniform_l1_ball(s, rng);
        for (j, v) in support.iter().zip(&w) {
            center[*j] = if *v == 0.0 { 0.1 } else { *v };
        }
        for eps in [0.5f64, 0.1] {
            configs += 1;
            let log_p = -(s as f64 * eps.ln() + s as f64 * 2f64.ln() - ln_factorial(s));
            let mut draws = Vec::with_capacity(MC_DRAWS);
            for _ in 0..MC_DRAWS {
                let u = uniform_l1_ball(s, rng);
                let mut theta = &center * (1.0 - eps);
                for (j, v) in support.iter().zip(&u) {
                    theta[*j] += eps * v;
                }
                draws.push(log_p - mixture_log_density(&prior, &theta)?);
            }
            let (mean, se) = mean_and_se(&draws);
            let bound = s as f64 * (2.0 * std::f64::consts::E * d as f64 / (eps * s as f64)).ln();
            worst = worst.max(mean - bound - 3.0 * se);
        }
    }
    Ok(LemmaReport::new(Lemma::KlPrior, configs * MC_DRAWS, worst))
}

/// `t >= a log(e t) + b` for every `t >= 2 a log(e a) + 2 b`, on a grid of `(d, s, t)`.
pub fn check_w_log() -> LemmaReport {
    let mut worst = f64::NEG_INFINITY;
    let mut n = 0;
    for d in [2usize, 5, 10, 20, 40, 100, 1000, 10_000] {
        for s in 1..=(d / 2).min(50) {
            let (a, b) = w_log_coefficients(d, s);
            let t0 = 2.0 * a * (std::f64::consts::E * a).ln() + 2.0 * b;
            for k in 0..100 {
                let t = t0 * (1.0 + 0.1 * k as f64);
                worst = worst.max(a * (std::f64::consts::E * t).ln() + b - t);
                n += 1;
            }
        }
    }
    LemmaReport::new(Lemma::WLog, n, worst)
}

/// All schedules are nonincreasing in `t`.
pub fn check_schedule_monotone<R: Rng + ?Sized>(rng: &mut R) -> Result<LemmaReport> {
    let mut worst = f64::NEG_INFINITY;
    let mut n = 0;
    for (d, s) in [(20usize, 2usize), (40, 4), (100, 10), (1000, 5)] {
        for c_min in [0.0, 0.01, 0.1] {
            for t in 1..10_000 {
                worst = worst.max(lambda_theorem2(t + 1, d, s, c_min) - lambda_theorem2(t, d, s, c_min));
                n += 1;
            }
            let mut st = ScheduleState::new(d, s, c_min);
            let mut prev = lambda_theorem3(&st)?;
            for _ in 0..2000 {
                st.record(rng.random_range(0.0..2.0 * d as f64), rng.random_range(0.0..100.0));
                let cur = lambda_theorem3(&st)?;
                worst = worst.max(cur - prev);
                prev = cur;
                n += 1;
            }
        }
        for t in 1..10_000 {
            worst = worst.max(lambda_experimental(t + 1, d, s) - lambda_experimental(t, d, s));
            n += 1;
        }
    }
    Ok(LemmaReport::new(Lemma::ScheduleMonotone, n, worst))
}

/// `sum_t a_t f(sum_{i<=t} a_i) <= int_{a_0}^{sum a} f` for nonincreasing `f`,
/// with `f = 1/sqrt(x)` and `f = 1/x`.
pub fn check_implicit_rb<R: Rng + ?Sized>(trials: usize, rng: &mut R) -> LemmaReport {
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..trials {
        let len = rng.random_range(1..200);
        let a: Vec<f64> = (0..=len).map(|_| rng.random_range(0.0..5.0)).collect();
        let a0 = a[0].max(1e-3);
        let mut acc = a0;
        let (mut lhs_sqrt, mut lhs_inv) = (0.0, 0.0);
        for &x in &a[1..] {
            acc += x;
            lhs_sqrt += x / acc.sqrt();
            lhs_inv += x / acc;
        }
        worst = worst.max(lhs_sqrt - 2.0 * (acc.sqrt() - a0.sqrt()));
        worst = worst.max(lhs_inv - (acc / a0).ln());
    }
    LemmaReport::new(Lemma::ImplicitRb, trials, worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn brute_matches_pair_formula_for_two_actions() {
        let st = SurrogateStats::from_parts(vec![1.0, 2.0], vec![1.0, 4.0]).unwrap();
        let (p, v) = brute_ir_minimizer(&st, 2.0, DEFAULT_MESH).unwrap();
        // (1+q)^2 / (1+3q) is minimized at q = 1/3 with value 8/9
        assert!((v - 8.0 / 9.0).abs() < 1e-6);
        assert!((p.probs()[1] - 1.0 / 3.0).abs() < 1e-3);
    }

    #[test]
    fn brute_finds_dirac_optimum() {
        let st = SurrogateStats::from_parts(vec![0.5, 0.0, 0.7], vec![0.2, 0.3, 0.1]).unwrap();
        let (p, v) = brute_ir_minimizer(&st, 3.0, DEFAULT_MESH).unwrap();
        assert_eq!(v, 0.0);
        assert_eq!(p, Policy::dirac(3, 1).unwrap());
    }

    #[test]
    fn mesh_halving_never_increases_minimum() {
        let mut r = rng(3);
        for _ in 0..20 {
            let st = random_stats(&mut r).unwrap();
            let k = st.num_actions();
            let n = mesh_divisions(k, 10);
            if mesh_divisions(k, 2 * n) < 2 * n {
                continue;
            }
            let coarse = mesh_minimum(&st, 2.0, n).1;
            let fine = mesh_minimum(&st, 2.0, 2 * n).1;
            assert!(fine <= coarse);
        }
    }

    #[test]
    fn brute_rejects_large_action_sets() {
        let st = SurrogateStats::from_parts(vec![1.0; 9], vec![1.0; 9]).unwrap();
        assert!(brute_ir_minimizer(&st, 2.0, 0.1).is_err());
    }

    #[test]
    fn mesh_budget_coarsens_large_problems() {
        assert_eq!(mesh_divisions(3, 50), 50);
        let n = mesh_divisions(8, 50);
        assert!(n < 50 && binomial(n + 7, 7) <= MESH_POINT_BUDGET);
        assert!(binomial(n + 8, 7) > MESH_POINT_BUDGET);
        // with one division the mesh is the set of vertices
        let st = SurrogateStats::from_parts(vec![1.0, 0.5, 2.0], vec![1.0, 1.0, 1.0]).unwrap();
        let (p, v) = mesh_minimum(&st, 2.0, 1);
        assert_eq!((p, v), (vec![0.0, 1.0, 0.0], 0.25));
    }

    #[test]
    fn subsets_enumerate_all() {
        assert_eq!(subsets(4, 2).len(), 6);
        assert_eq!(subsets(4, 2)[0], vec![0, 1]);
        assert_eq!(subsets(4, 2)[5], vec![2, 3]);
        assert_eq!(subsets(3, 3), vec![vec![0, 1, 2]]);
    }

    #[test]
    fn amgm_constants() {
        assert!((amgm_c(2.0) - 2.0).abs() < 1e-15);
        assert!((amgm_c_star(3.0) - 2.0 / 27f64.sqrt()).abs() < 1e-15);
        assert!(check_amgm_constants(&mut rng(1)).pass);
    }

    #[test]
    fn deterministic_checks_pass() {
        let mut r = rng(5);
        for rep in [
            check_lipschitz(300, &mut r),
            check_schedule_bounds(),
            check_w_log(),
            check_implicit_rb(50, &mut r),
            check_sig_tig(100, &mut r).unwrap(),
            check_schedule_monotone(&mut r).unwrap(),
            check_covering_bound(4, 2, 0.25, &mut r).unwrap(),
        ] {
            assert!(rep.pass, "{rep:?}");
        }
    }

    #[test]
    fn covering_rejects_large_dimension() {
        assert!(check_covering_bound(7, 2, 0.5, &mut rng(0)).is_err());
    }

    #[test]
    fn mixture_density_matches_closed_form() {
        let prior = SubsetPrior::new(4, 2).unwrap();
        let theta = DVector::from_row_slice(&[0.2, 0.0, -0.3, 0.0]);
        let want = prior.subset_log_mass(&[0, 2]).unwrap() - (4f64 / 2.0).ln();
        assert!((mixture_log_density(&prior, &theta).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn reports_are_deterministic_and_named() {
        let a = Lemma::Amgm.run(7).unwrap();
        assert_eq!(a, Lemma::Amgm.run(7).unwrap());
        assert_eq!(Lemma::from_id("kl_prior"), Some(Lemma::KlPrior));
        assert_eq!(Lemma::from_id("nope"), None);
        for l in Lemma::ALL {
            assert_eq!(Lemma::from_id(l.id()), Some(l));
        }
    }
}
