//! The optimistic posterior: tempered Gaussian likelihood times an exponential
//! bonus on the cumulative gaps of the played actions.
//!
//! Two backends share the same target. [`GridPosterior`] computes exact
//! normalized log-weights over a finite candidate set; [`MalaSampler`] draws
//! approximate samples under the [`RelaxedPrior`] with Metropolis-adjusted
//! Langevin moves.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::env::History;
use crate::error::{arg, Error, Result};
use crate::prior::{MixtureConsts, RelaxedPrior};

/// Numerically stable `ln sum exp`.
pub fn logsumexp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// `max_{a'} <theta, a'> - <theta, a_k>` for every action.
pub fn gaps_under(actions: &DMatrix<f64>, theta: &DVector<f64>) -> DVector<f64> {
    let r = actions * theta;
    let best = r.max();
    r.map(|x| best - x)
}

fn check_history(history: &History, actions: &DMatrix<f64>) -> Result<()> {
    if let Some(rec) = history.records().iter().find(|r| r.action_index >= actions.nrows()) {
        return arg(format!(
            "history references action {} but only {} actions exist",
            rec.action_index,
            actions.nrows()
        ));
    }
    Ok(())
}

/// Exact optimistic posterior over a finite grid of candidate parameters.
#[derive(Debug, Clone)]
pub struct GridPosterior {
    grid: Vec<DVector<f64>>,
    log_weights: Vec<f64>,
    eta: f64,
    lambda: f64,
}

impl GridPosterior {
    /// Builds the posterior in one shot from the full history.
    ///
    /// `prior_log_masses` defaults to uniform over the grid. The log-likelihood
    /// is the unnormalized Gaussian `-(y - <theta, a>)^2 / 2`.
    pub fn new(
        grid: Vec<DVector<f64>>,
        prior_log_masses: Option<&[f64]>,
        history: &History,
        actions: &DMatrix<f64>,
        eta: f64,
        lambda: f64,
    ) -> Result<Self> {
        if grid.is_empty() {
            return arg("grid is empty");
        }
        if !(eta > 0.0) || !(lambda >= 0.0) {
            return arg(format!("need eta > 0 and lambda >= 0, got eta = {eta}, lambda = {lambda}"));
        }
        let d = actions.ncols();
        if grid.iter().any(|g| g.len() != d) {
            return arg(format!("grid points must have length {d}"));
        }
        if let Some(p) = prior_log_masses {
            if p.len() != grid.len() {
                return arg("prior masses and grid differ in length");
            }
        }
        check_history(history, actions)?;

        let mut log_weights: Vec<f64> = grid
            .iter()
            .enumerate()
            .map(|(i, theta)| {
                let gaps = gaps_under(actions, theta);
                let rewards = actions * theta;
                let mut loglik = 0.0;
                let mut bonus = 0.0;
                for rec in history.records() {
                    let resid = rec.reward - rewards[rec.action_index];
                    loglik -= 0.5 * resid * resid;
                    bonus += gaps[rec.action_index];
                }
                let prior = prior_log_masses.map_or(0.0, |p| p[i]);
                prior + eta * loglik + lambda * bonus
            })
            .collect();
        let z = logsumexp(&log_weights);
        if !z.is_finite() {
            return Err(Error::Internal("grid posterior has no finite weight".into()));
        }
        for w in &mut log_weights {
            *w -= z;
        }
        Ok(Self { grid, log_weights, eta, lambda })
    }

    pub fn grid(&self) -> &[DVector<f64>] {
        &self.grid
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    pub fn weights(&self) -> Vec<f64> {
        self.log_weights.iter().map(|w| w.exp()).collect()
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn mean(&self) -> DVector<f64> {
        let mut m = DVector::zeros(self.grid[0].len());
        for (g, w) in self.grid.iter().zip(&self.log_weights) {
            m.axpy(w.exp(), g, 1.0);
        }
        m
    }
}

/// Running sums that make the likelihood and the gap bonus O(d^2 + K d) to evaluate.
#[derive(Debug, Clone, PartialEq)]
pub struct SufficientStats {
    pub count: usize,
    /// `sum a a^T`
    pub gram: DMatrix<f64>,
    /// `sum y a`
    pub moment: DVector<f64>,
    /// `sum y^2`
    pub sum_sq: f64,
    /// `sum a`
    pub action_sum: DVector<f64>,
}

impl SufficientStats {
    pub fn new(d: usize) -> Self {
        Self {
            count: 0,
            gram: DMatrix::zeros(d, d),
            moment: DVector::zeros(d),
            sum_sq: 0.0,
            action_sum: DVector::zeros(d),
        }
    }

    pub fn from_history(history: &History, actions: &DMatrix<f64>) -> Result<Self> {
        check_history(history, actions)?;
        let mut st = Self::new(actions.ncols());
        for rec in history.records() {
            st.push(&actions.row(rec.action_index).transpose(), rec.reward);
        }
        Ok(st)
    }

    pub fn push(&mut self, a: &DVector<f64>, y: f64) {
        self.count += 1;
        self.gram.ger(1.0, a, a, 1.0);
        self.moment.axpy(y, a, 1.0);
        self.sum_sq += y * y;
        self.action_sum += a;
    }
}

/// Log-density (up to a constant) of the optimistic posterior under the relaxed prior.
pub struct OptimisticTarget<'a> {
    prior: MixtureConsts,
    stats: &'a SufficientStats,
    actions: &'a DMatrix<f64>,
    eta: f64,
    lambda: f64,
}

impl<'a> OptimisticTarget<'a> {
    pub fn new(
        prior: &RelaxedPrior,
        stats: &'a SufficientStats,
        actions: &'a DMatrix<f64>,
        eta: f64,
        lambda: f64,
    ) -> Result<Self> {
        prior.validate()?;
        if !(eta > 0.0) || !(lambda >= 0.0) {
            return arg(format!("need eta > 0 and lambda >= 0, got eta = {eta}, lambda = {lambda}"));
        }
        if stats.gram.nrows() != actions.ncols() {
            return arg("sufficient statistics and actions differ in dimension");
        }
        Ok(Self { prior: prior.constants(), stats, actions, eta, lambda })
    }

    pub fn dim(&self) -> usize {
        self.actions.ncols()
    }

    /// Returns the log-density and writes a subgradient into `grad`.
    pub fn eval(&self, theta: &DVector<f64>, grad: &mut DVector<f64>, scratch: &mut Scratch) -> f64 {
        let st = self.stats;
        let mut value = 0.0;
        for j in 0..theta.len() {
            let (v, g) = self.prior.eval(theta[j]);
            value += v;
            grad[j] = g;
        }
        if st.count == 0 {
            return value;
        }
        // -eta/2 * (sum y^2 - 2 theta.b + theta^T G theta)
        scratch.gram_theta.gemv(1.0, &st.gram, theta, 0.0);
        let quad = theta.dot(&scratch.gram_theta);
        let lin = theta.dot(&st.moment);
        value -= 0.5 * self.eta * (st.sum_sq - 2.0 * lin + quad);
        grad.axpy(self.eta, &st.moment, 1.0);
        grad.axpy(-self.eta, &scratch.gram_theta, 1.0);

        if self.lambda > 0.0 {
            // lambda * (n * max_k <theta, a_k> - <theta, sum a>)
            scratch.rewards.gemv(1.0, self.actions, theta, 0.0);
            let best = crate::env::argmax_first(scratch.rewards.as_slice());
            let n = st.count as f64;
            value += self.lambda * (n * scratch.rewards[best] - theta.dot(&st.action_sum));
            for j in 0..theta.len() {
                grad[j] += self.lambda * (n * self.actions[(best, j)] - st.action_sum[j]);
            }
        }
        value
    }

    pub fn scratch(&self) -> Scratch {
        Scratch {
            gram_theta: DVector::zeros(self.dim()),
            rewards: DVector::zeros(self.actions.nrows()),
        }
    }
}

pub struct Scratch {
    gram_theta: DVector<f64>,
    rewards: DVector<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    /// Number of retained samples.
    #[serde(rename = "M", alias = "num_samples")]
    pub num_samples: usize,
    pub burn_in: usize,
    pub thin: usize,
    /// Initial Langevin step size.
    pub step_size: f64,
    pub target_acceptance: f64,
    /// Probability of replacing the Langevin move by a random-walk move of one
    /// coordinate with scale `jump_scale` times the current step. The choice
    /// ignores the state, so the target is preserved.
    pub jump_prob: f64,
    pub jump_scale: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            num_samples: 100,
            burn_in: 500,
            thin: 10,
            step_size: 0.1,
            target_acceptance: 0.5,
            jump_prob: 0.0,
            jump_scale: 10.0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_samples < 2 {
            return arg(format!("sampler needs at least 2 samples, got {}", self.num_samples));
        }
        if self.thin == 0 {
            return arg("thin must be at least 1");
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return arg("step_size must be positive");
        }
        if !(self.target_acceptance > 0.0 && self.target_acceptance < 1.0) {
            return arg("target_acceptance must lie in (0, 1)");
        }
        if !(0.0..1.0).contains(&self.jump_prob) || !(self.jump_scale >= 1.0 && self.jump_scale.is_finite()) {
            return arg("need 0 <= jump_prob < 1 and a finite jump_scale >= 1");
        }
        Ok(())
    }
}

/// Draws from (an approximation of) a parameter distribution, with their mean.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSamples {
    samples: Vec<DVector<f64>>,
    mean: DVector<f64>,
}

impl ParameterSamples {
    pub fn new(samples: Vec<DVector<f64>>) -> Result<Self> {
        let Some(first) = samples.first() else {
            return arg("at least one sample is required");
        };
        let d = first.len();
        if samples.iter().any(|s| s.len() != d) {
            return arg("samples differ in dimension");
        }
        let mean = posterior_mean(&samples);
        Ok(Self { samples, mean })
    }

    pub fn samples(&self) -> &[DVector<f64>] {
        &self.samples
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Arithmetic mean of a nonempty batch.
pub fn posterior_mean(samples: &[DVector<f64>]) -> DVector<f64> {
    let mut m = DVector::zeros(samples[0].len());
    for s in samples {
        m += s;
    }
    m / samples.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerDiagnostics {
    /// Fraction of accepted proposals after burn-in.
    pub acceptance_rate: f64,
    /// Step size in use after adaptation.
    pub step_size: f64,
}

/// Metropolis-adjusted Langevin sampler with step-size adaptation during burn-in.
///
/// The chain state and the adapted step persist across calls, so consecutive
/// rounds warm-start from the previous round's last draw.
#[derive(Debug, Clone)]
pub struct MalaSampler {
    cfg: SamplerConfig,
    step: f64,
    state: Option<DVector<f64>>,
}

impl MalaSampler {
    pub fn new(cfg: SamplerConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { cfg, step: cfg.step_size, state: None })
    }

    pub fn config(&self) -> &SamplerConfig {
        &self.cfg
    }

    pub fn step_size(&self) -> f64 {
        self.step
    }

    pub fn sample<R: Rng + ?Sized>(
        &mut self,
        target: &OptimisticTarget<'_>,
        rng: &mut R,
    ) -> Result<(ParameterSamples, SamplerDiagnostics)> {
        let d = target.dim();
        let mut theta = match self.state.take() {
            Some(s) if s.len() == d => s,
            _ => DVector::zeros(d),
        };
        let mut scratch = target.scratch();
        let mut grad = DVector::zeros(d);
        let mut lp = target.eval(&theta, &mut grad, &mut scratch);
        if !lp.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Initialization(format!("target is {lp} at the starting point")));
        }

        let cfg = self.cfg;
        let total = cfg.burn_in + cfg.num_samples * cfg.thin;
        let mut log_step = self.step.ln();
        let mut prop = DVector::zeros(d);
        let mut prop_grad = DVector::zeros(d);
        let mut noise: DVector<f64> = DVector::zeros(d);
        let mut kept = Vec::with_capacity(cfg.num_samples);
        let mut accepted = 0usize;

        for iter in 0..total {
            let jump = cfg.jump_prob > 0.0 && rng.random::<f64>() < cfg.jump_prob;
            let h = log_step.exp();
            let mut log_alpha = f64::NEG_INFINITY;
            let prop_lp = if jump {
                // symmetric random-walk move of one coordinate, no drift
                let j = rng.random_range(0..d);
                let z: f64 = <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng);
                prop.copy_from(&theta);
                prop[j] += h * cfg.jump_scale * z;
                let prop_lp = target.eval(&prop, &mut prop_grad, &mut scratch);
                if prop_lp.is_finite() {
                    log_alpha = prop_lp - lp;
                }
                prop_lp
            } else {
                let half_h2 = 0.5 * h * h;
                for j in 0..d {
                    noise[j] = <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng);
                    prop[j] = theta[j] + half_h2 * grad[j] + h * noise[j];
                }
                let prop_lp = target.eval(&prop, &mut prop_grad, &mut scratch);
                if prop_lp.is_finite() {
                    // reverse move theta <- prop
                    let mut rev = 0.0;
                    for j in 0..d {
                        let r = theta[j] - prop[j] - half_h2 * prop_grad[j];
                        rev += r * r;
                    }
                    let fwd = noise.norm_squared();
                    log_alpha = prop_lp - lp - rev / (2.0 * h * h) + 0.5 * fwd;
                }
                prop_lp
            };
            let u: f64 = rng.random();
            let accept = u.ln() < log_alpha;
            if accept {
                std::mem::swap(&mut theta, &mut prop);
                std::mem::swap(&mut grad, &mut prop_grad);
                lp = prop_lp;
            }
            if iter < cfg.burn_in {
                if jump {
                    continue;
                }
                let a = if log_alpha.is_nan() { 0.0 } else { log_alpha.min(0.0).exp() };
                log_step += (a - cfg.target_acceptance) / ((iter + 1) as f64).powf(0.6);
            } else {
                if accept {
                    accepted += 1;
                }
                if (iter - cfg.burn_in + 1) % cfg.thin == 0 {
                    kept.push(theta.clone());
                }
            }
        }

        self.step = log_step.exp();
        self.state = Some(theta);
        let diag = SamplerDiagnostics {
            acceptance_rate: accepted as f64 / (cfg.num_samples * cfg.thin) as f64,
            step_size: self.step,
        };
        Ok((ParameterSamples::new(kept)?, diag))
    }
}

/// One-shot sampling from the optimistic posterior given a history, starting at zero.
#[allow(clippy::too_many_arguments)]
pub fn mcmc_sample<R: Rng + ?Sized>(
    prior: &RelaxedPrior,
    history: &History,
    actions: &DMatrix<f64>,
    eta: f64,
    lambda: f64,
    cfg: SamplerConfig,
    rng: &mut R,
) -> Result<(ParameterSamples, SamplerDiagnostics)> {
    let stats = SufficientStats::from_history(history, actions)?;
    let target = OptimisticTarget::new(prior, &stats, actions, eta, lambda)?;
    MalaSampler::new(cfg)?.sample(&target, rng)
}
