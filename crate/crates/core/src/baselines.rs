//! Comparison algorithms: LinUCB, LASSO explore-then-commit and OTCS.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::{argmax_first, cumulative_regret, Instance, RegretTrace};
use crate::error::{arg, Error, Result};
use crate::policy::Policy;
use crate::posterior::{MalaSampler, OptimisticTarget, ParameterSamples, SamplerConfig, SufficientStats};
use crate::prior::RelaxedPrior;

/// Regularized least-squares state `G = lambda I + sum a a^T`, `b = sum y a`.
#[derive(Debug, Clone, PartialEq)]
pub struct RidgeState {
    pub gram: DMatrix<f64>,
    pub moment: DVector<f64>,
    pub lambda_ridge: f64,
}

/// Cholesky factor of the Gram matrix with the quantities the index policies need.
pub struct RidgeSolve {
    chol: Cholesky<f64, Dyn>,
}

impl RidgeSolve {
    pub fn solve(&self, v: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(v)
    }

    pub fn log_det(&self) -> f64 {
        let l = self.chol.l_dirty();
        2.0 * (0..l.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>()
    }

    /// `||a_k||_{G^-1}` for every row of `actions`.
    pub fn action_norms(&self, actions: &DMatrix<f64>) -> Vec<f64> {
        let mut z = actions.transpose();
        self.chol.l_dirty().solve_lower_triangular_mut(&mut z);
        (0..z.ncols()).map(|k| z.column(k).norm()).collect()
    }
}

impl RidgeState {
    pub fn new(d: usize, lambda_ridge: f64) -> Result<Self> {
        if !(lambda_ridge > 0.0) {
            return arg("ridge parameter must be positive");
        }
        Ok(Self {
            gram: DMatrix::identity(d, d) * lambda_ridge,
            moment: DVector::zeros(d),
            lambda_ridge,
        })
    }

    pub fn dim(&self) -> usize {
        self.moment.len()
    }

    pub fn push(&mut self, a: &DVector<f64>, y: f64) {
        self.gram.ger(1.0, a, a, 1.0);
        self.moment.axpy(y, a, 1.0);
    }

    pub fn factor(&self) -> Result<RidgeSolve> {
        Cholesky::new(self.gram.clone())
            .map(|chol| RidgeSolve { chol })
            .ok_or_else(|| Error::Internal("ridge Gram matrix is not positive definite".into()))
    }

    /// `log(det G / lambda^d)`.
    pub fn log_det_ratio(&self, solve: &RidgeSolve) -> f64 {
        solve.log_det() - self.dim() as f64 * self.lambda_ridge.ln()
    }
}

fn optimistic_index(center: &DVector<f64>, actions: &DMatrix<f64>, norms: &[f64], radius: f64) -> usize {
    let means = actions * center;
    let scores: Vec<f64> = (0..actions.nrows()).map(|k| means[k] + radius * norms[k]).collect();
    argmax_first(&scores)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinUcbConfig {
    pub lambda_ridge: f64,
    pub delta: f64,
    /// Bound on `||theta_0||`.
    pub norm_bound: f64,
}

impl Default for LinUcbConfig {
    fn default() -> Self {
        Self { lambda_ridge: 1.0, delta: 0.01, norm_bound: 10.0 }
    }
}

/// Self-normalized ellipsoid radius `sqrt(lambda) S + sqrt(2 log(1/delta) + log(det G / lambda^d))`.
pub fn linucb_radius(state: &RidgeState, solve: &RidgeSolve, delta: f64, norm_bound: f64) -> f64 {
    state.lambda_ridge.sqrt() * norm_bound + (2.0 * (1.0 / delta).ln() + state.log_det_ratio(solve)).sqrt()
}

pub fn linucb_action(state: &RidgeState, actions: &DMatrix<f64>, delta: f64, norm_bound: f64) -> Result<usize> {
    let solve = state.factor()?;
    let theta = solve.solve(&state.moment);
    let beta = linucb_radius(state, &solve, delta, norm_bound);
    Ok(optimistic_index(&theta, actions, &solve.action_norms(actions), beta))
}

pub fn linucb_run<R: Rng + ?Sized>(instance: &Instance, horizon: usize, cfg: &LinUcbConfig, rng: &mut R) -> Result<RegretTrace> {
    let actions = instance.actions();
    let mut state = RidgeState::new(instance.dim(), cfg.lambda_ridge)?;
    let mut gaps = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let k = linucb_action(&state, actions, cfg.delta, cfg.norm_bound)?;
        let y = instance.pull(k, rng)?;
        state.push(&actions.row(k).transpose(), y);
        gaps.push(instance.gap(k)?);
    }
    cumulative_regret(&gaps)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LassoModel {
    pub coef: DVector<f64>,
    pub reg: f64,
    pub converged: bool,
    pub sweeps: usize,
}

pub const LASSO_TOL: f64 = 1e-8;
pub const LASSO_MAX_SWEEPS: usize = 10_000;

fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

/// Value of `(1/2n) ||y - X theta||^2 + reg ||theta||_1`.
pub fn lasso_objective(x: &DMatrix<f64>, y: &DVector<f64>, coef: &DVector<f64>, reg: f64) -> f64 {
    let r = y - x * coef;
    r.norm_squared() / (2.0 * y.len() as f64) + reg * coef.lp_norm(1)
}

/// Cyclic coordinate descent for the LASSO.
pub fn lasso_fit(x: &DMatrix<f64>, y: &DVector<f64>, reg: f64) -> Result<LassoModel> {
    let (n, d) = x.shape();
    if n == 0 || y.len() != n {
        return arg("LASSO needs at least one row and matching responses");
    }
    if !(reg > 0.0) {
        return arg("LASSO regularization must be positive");
    }
    let nf = n as f64;
    let col_sq: Vec<f64> = (0..d).map(|j| x.column(j).norm_squared() / nf).collect();
    let mut coef = DVector::zeros(d);
    let mut resid = y.clone();
    let mut converged = false;
    let mut sweeps = 0;
    while sweeps < LASSO_MAX_SWEEPS {
        sweeps += 1;
        let mut max_change: f64 = 0.0;
        for j in 0..d {
            if col_sq[j] == 0.0 {
                continue;
            }
            let col = x.column(j);
            let old = coef[j];
            let rho = col.dot(&resid) / nf + col_sq[j] * old;
            let new = soft_threshold(rho, reg) / col_sq[j];
            if new != old {
                resid.axpy(old - new, &col, 1.0);
                coef[j] = new;
                max_change = max_change.max((new - old).abs());
            }
        }
        if max_change < LASSO_TOL {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("LASSO stopped after {sweeps} sweeps without converging");
    }
    Ok(LassoModel { coef, reg, converged, sweeps })
}

/// Exploration length used for each dimension in the experiments.
pub fn default_exploration_length(d: usize) -> usize {
    if d <= 20 {
        50
    } else {
        100
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct EstcConfig {
    /// Exploration rounds; `None` picks the per-dimension default.
    pub exploration_length: Option<usize>,
    pub exploration: EstcExploration,
}

/// Distribution of the exploration-phase actions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum EstcExploration {
    /// Uniform over the action set.
    #[default]
    Uniform,
    /// The design maximizing the minimum eigenvalue of the action covariance.
    Design,
}

/// Regularization for ESTC: `4 sqrt(log d / t1)` for the objective
/// `(1/n) ||y - X theta||^2 + reg ||theta||_1`, i.e. half that value in the
/// `(1/2n)` scaling used by [`lasso_fit`].
pub fn estc_regularization(d: usize, t1: usize) -> f64 {
    2.0 * ((d as f64).ln() / t1 as f64).sqrt()
}

/// Explore uniformly for `t1` rounds, fit the LASSO, then commit to the greedy action.
pub fn estc_run<R: Rng + ?Sized>(instance: &Instance, horizon: usize, t1: usize, rng: &mut R) -> Result<RegretTrace> {
    estc_run_with(instance, horizon, t1, None, rng)
}

/// As [`estc_run`], drawing exploration actions from `explore` when given.
pub fn estc_run_with<R: Rng + ?Sized>(
    instance: &Instance,
    horizon: usize,
    t1: usize,
    explore: Option<&Policy>,
    rng: &mut R,
) -> Result<RegretTrace> {
    if explore.is_some_and(|p| p.len() != instance.num_actions()) {
        return arg("exploration policy and action set differ in size");
    }
    if t1 == 0 || t1 > horizon {
        return arg(format!("exploration length {t1} must lie in 1..={horizon}"));
    }
    let (k, d) = (instance.num_actions(), instance.dim());
    let actions = instance.actions();
    let mut x = DMatrix::zeros(t1, d);
    let mut y = DVector::zeros(t1);
    let mut gaps = Vec::with_capacity(horizon);
    for t in 0..t1 {
        let a = match explore {
            Some(p) => p.sample(rng),
            None => rng.random_range(0..k),
        };
        y[t] = instance.pull(a, rng)?;
        x.set_row(t, &actions.row(a));
        gaps.push(instance.gap(a)?);
    }
    if t1 < horizon {
        let model = lasso_fit(&x, &y, estc_regularization(d, t1))?;
        let choice = argmax_first((actions * &model.coef).as_slice());
        for _ in t1..horizon {
            instance.pull(choice, rng)?;
            gaps.push(instance.gap(choice)?);
        }
    }
    cumulative_regret(&gaps)
}

/// Radius of the OTCS confidence ellipsoid as a function of the round.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OtcsRadius {
    Constant { value: f64 },
    /// `scale * (sqrt(lambda) S + sqrt(2 log(t^2/delta) + log(det G / lambda^d)))`.
    SelfNormalized { delta: f64, norm_bound: f64, scale: f64 },
    /// `scale * sqrt(lambda S^2 + 2 log(1/delta) + excess)`, where `excess` is the
    /// squared loss of the online predictions minus that of the ridge fit.
    OnlineToConfidence { delta: f64, norm_bound: f64, scale: f64 },
    /// `scale * sqrt(2 log(1/delta) + C_t)` with the sparse complexity term `C_t = 5 + 2s log(edt/s)`.
    Sparse { delta: f64, scale: f64 },
}

impl Default for OtcsRadius {
    fn default() -> Self {
        OtcsRadius::Sparse { delta: 0.01, scale: 1.0 }
    }
}

/// Data the radius may depend on at a given round.
pub struct RadiusContext<'a> {
    pub t: usize,
    pub sparsity: usize,
    pub state: &'a RidgeState,
    pub solve: &'a RidgeSolve,
    /// `sum_s (y_s - yhat_s)^2` of the online predictions.
    pub prediction_loss: f64,
    /// `sum_s y_s^2`.
    pub sum_sq: f64,
}

impl RadiusContext<'_> {
    /// `min_theta sum_s (y_s - <theta, a_s>)^2 + lambda ||theta||^2`.
    pub fn ridge_loss(&self) -> f64 {
        let fit = self.solve.solve(&self.state.moment);
        (self.sum_sq - self.state.moment.dot(&fit)).max(0.0)
    }
}

impl OtcsRadius {
    pub fn radius(&self, ctx: &RadiusContext<'_>) -> f64 {
        let lam = ctx.state.lambda_ridge;
        match *self {
            OtcsRadius::Constant { value } => value,
            OtcsRadius::SelfNormalized { delta, norm_bound, scale } => {
                let tt = ctx.t.max(1) as f64;
                let inner = (2.0 * (tt * tt / delta).ln() + ctx.state.log_det_ratio(ctx.solve)).max(0.0);
                scale * (lam.sqrt() * norm_bound + inner.sqrt())
            }
            OtcsRadius::OnlineToConfidence { delta, norm_bound, scale } => {
                let excess = (ctx.prediction_loss - ctx.ridge_loss()).max(0.0);
                scale * (lam * norm_bound * norm_bound + 2.0 * (1.0 / delta).ln() + excess).sqrt()
            }
            OtcsRadius::Sparse { delta, scale } => {
                let c = crate::schedules::c_t(ctx.t.max(1), ctx.state.dim(), ctx.sparsity);
                scale * (2.0 * (1.0 / delta).ln() + c).sqrt()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OtcsConfig {
    pub eta: f64,
    pub lambda_ridge: f64,
    pub radius: OtcsRadius,
    pub sampler: SamplerConfig,
    pub prior: RelaxedPrior,
}

impl Default for OtcsConfig {
    fn default() -> Self {
        Self {
            eta: 0.5,
            lambda_ridge: 1.0,
            radius: OtcsRadius::default(),
            sampler: SamplerConfig::default(),
            prior: RelaxedPrior::default(),
        }
    }
}

/// Optimistic index around the sample mean of an exponential-weights posterior.
pub fn otcs_action(samples: &ParameterSamples, actions: &DMatrix<f64>, solve: &RidgeSolve, radius: f64) -> usize {
    optimistic_index(samples.mean(), actions, &solve.action_norms(actions), radius)
}

pub fn otcs_run<R: Rng + ?Sized>(instance: &Instance, horizon: usize, cfg: &OtcsConfig, rng: &mut R) -> Result<RegretTrace> {
    let actions = instance.actions();
    let d = instance.dim();
    let mut stats = SufficientStats::new(d);
    let mut ridge = RidgeState::new(d, cfg.lambda_ridge)?;
    let mut sampler = MalaSampler::new(cfg.sampler)?;
    let mut prediction_loss = 0.0;
    let mut gaps = Vec::with_capacity(horizon);
    for t in 1..=horizon {
        let (samples, _) = {
            let target = OptimisticTarget::new(&cfg.prior, &stats, actions, cfg.eta, 0.0)?;
            sampler.sample(&target, rng)?
        };
        let solve = ridge.factor()?;
        let ctx = RadiusContext { t, sparsity: instance.sparsity(), state: &ridge, solve: &solve, prediction_loss, sum_sq: stats.sum_sq };
        let k = otcs_action(&samples, actions, &solve, cfg.radius.radius(&ctx));
        let y = instance.pull(k, rng)?;
        let a = actions.row(k).transpose();
        prediction_loss += (y - a.dot(samples.mean())).powi(2);
        stats.push(&a, y);
        ridge.push(&a, y);
        gaps.push(instance.gap(k)?);
    }
    cumulative_regret(&gaps)
}
