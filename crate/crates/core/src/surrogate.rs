//! Sample-average estimators of the surrogate regret, the surrogate information
//! gain and the generalized information ratio.

use nalgebra::{DMatrix, DVector};

use crate::error::{arg, Error, Result};
use crate::policy::Policy;
use crate::posterior::ParameterSamples;

/// Per-action estimates computed once per round and reused for every policy.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateStats {
    /// `(1/M) sum_i Delta(a_k, theta_i)`
    pub per_action_gap: Vec<f64>,
    /// `(1/2M) sum_i <theta_i - mean, a_k>^2`
    pub per_action_info: Vec<f64>,
    pub mean_param: DVector<f64>,
}

impl SurrogateStats {
    pub fn from_samples(samples: &ParameterSamples, actions: &DMatrix<f64>) -> Result<Self> {
        if samples.dim() != actions.ncols() {
            return arg(format!(
                "samples have dimension {}, actions {}",
                samples.dim(),
                actions.ncols()
            ));
        }
        let k = actions.nrows();
        let m = samples.len() as f64;
        let mean_rewards = actions * samples.mean();
        let mut gap = vec![0.0; k];
        let mut info = vec![0.0; k];
        for theta in samples.samples() {
            let r = actions * theta;
            let best = r.max();
            for a in 0..k {
                gap[a] += best - r[a];
                let c = r[a] - mean_rewards[a];
                info[a] += c * c;
            }
        }
        for a in 0..k {
            gap[a] /= m;
            info[a] /= 2.0 * m;
        }
        Ok(Self { per_action_gap: gap, per_action_info: info, mean_param: samples.mean().clone() })
    }

    /// Direct construction, used by tests and oracles.
    pub fn from_parts(per_action_gap: Vec<f64>, per_action_info: Vec<f64>) -> Result<Self> {
        if per_action_gap.len() != per_action_info.len() || per_action_gap.is_empty() {
            return arg("gap and info arrays must be nonempty and of equal length");
        }
        if per_action_gap.iter().chain(&per_action_info).any(|x| !(*x >= 0.0)) {
            return arg("gaps and information gains must be nonnegative");
        }
        Ok(Self { per_action_gap, per_action_info, mean_param: DVector::zeros(0) })
    }

    pub fn num_actions(&self) -> usize {
        self.per_action_gap.len()
    }

    pub fn surrogate_regret(&self, policy: &Policy) -> f64 {
        dot(policy.probs(), &self.per_action_gap)
    }

    pub fn surrogate_info_gain(&self, policy: &Policy) -> f64 {
        dot(policy.probs(), &self.per_action_info)
    }

    /// `regret^gamma / info`, or [`Error::DegenerateRatio`] when the information gain is zero.
    pub fn info_ratio(&self, policy: &Policy, gamma: f64) -> Result<f64> {
        ratio(self.surrogate_regret(policy), self.surrogate_info_gain(policy), gamma)
    }
}

pub(crate) fn ratio(regret: f64, info: f64, gamma: f64) -> Result<f64> {
    if !(info > 0.0) {
        return Err(Error::DegenerateRatio);
    }
    Ok(regret.powf(gamma) / info)
}

fn dot(p: &[f64], v: &[f64]) -> f64 {
    p.iter().zip(v).map(|(a, b)| a * b).sum()
}

/// Information gain measured against a known parameter instead of the sample mean.
pub fn true_info_gain(
    samples: &ParameterSamples,
    policy: &Policy,
    actions: &DMatrix<f64>,
    theta0: &DVector<f64>,
) -> Result<f64> {
    if samples.dim() != actions.ncols() || theta0.len() != actions.ncols() {
        return arg("dimension mismatch between samples, actions and theta0");
    }
    if policy.len() != actions.nrows() {
        return arg("policy and action set differ in size");
    }
    let r0 = actions * theta0;
    let m = samples.len() as f64;
    let mut per_action = vec![0.0; actions.nrows()];
    for theta in samples.samples() {
        let r = actions * theta;
        for a in 0..per_action.len() {
            let c = r[a] - r0[a];
            per_action[a] += c * c;
        }
    }
    Ok(dot(policy.probs(), &per_action) / (2.0 * m))
}
