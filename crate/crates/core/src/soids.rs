//! The SOIDS agent: optimistic posterior sampling followed by 2-IR minimization.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{cumulative_regret, Instance, RegretTrace};
use crate::error::{arg, Result};
use crate::exec::Execution;
use crate::policy::{
    best_mixture_ratio, exploratory_design, fgts_policy, soids_policy, sparse_action_screen, ExploratoryDesign,
};
use crate::posterior::{MalaSampler, OptimisticTarget, SamplerConfig, SufficientStats};
use crate::prior::RelaxedPrior;
use crate::schedules::{Schedule, ScheduleState};
use crate::surrogate::SurrogateStats;

/// What the agent may learn about the environment: the action set, the
/// sparsity level and noisy rewards.
pub trait RewardOracle {
    fn actions(&self) -> &DMatrix<f64>;
    fn sparsity(&self) -> usize;
    fn pull(&mut self, k: usize, rng: &mut dyn rand::RngCore) -> Result<f64>;
}

/// Exposes an [`Instance`] through pulls only.
pub struct InstanceOracle<'a>(pub &'a Instance);

impl RewardOracle for InstanceOracle<'_> {
    fn actions(&self) -> &DMatrix<f64> {
        self.0.actions()
    }
    fn sparsity(&self) -> usize {
        self.0.sparsity()
    }
    fn pull(&mut self, k: usize, rng: &mut dyn rand::RngCore) -> Result<f64> {
        self.0.pull(k, rng)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SoidsConfig {
    /// Likelihood temperature; `None` uses the schedule's default.
    pub eta: Option<f64>,
    pub schedule: Schedule,
    pub sampler: SamplerConfig,
    pub prior: RelaxedPrior,
    /// Log FGTS and mixture ratios each round (slower).
    pub diagnostics: bool,
    /// Grid resolution for the mixture weight in the diagnostics.
    pub mixture_grid: usize,
}

impl Default for SoidsConfig {
    fn default() -> Self {
        Self {
            eta: None,
            schedule: Schedule::default(),
            sampler: SamplerConfig::default(),
            prior: RelaxedPrior::default(),
            diagnostics: false,
            mixture_grid: 200,
        }
    }
}

impl SoidsConfig {
    pub fn eta(&self) -> f64 {
        self.eta.unwrap_or_else(|| self.schedule.default_eta())
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta() > 0.0) {
            return arg("eta must be positive");
        }
        if self.mixture_grid == 0 {
            return arg("mixture grid needs at least one interval");
        }
        self.sampler.validate()?;
        self.prior.validate()
    }
}

/// One line of the per-round log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundLog {
    pub round: usize,
    pub lambda: f64,
    pub action: usize,
    pub surrogate_regret: f64,
    pub surrogate_info_gain: f64,
    pub ir2: Option<f64>,
    pub ir3: Option<f64>,
    pub acceptance: f64,
    pub step_size: f64,
    pub degenerate: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ir2_fgts: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ir3_mixture: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sparse_screen: Option<bool>,
}

pub struct SoidsAgent {
    cfg: SoidsConfig,
    eta: f64,
    actions: DMatrix<f64>,
    stats: SufficientStats,
    sampler: MalaSampler,
    schedule: ScheduleState,
    design: Option<ExploratoryDesign>,
    exec: Execution,
}

impl SoidsAgent {
    pub fn new(actions: &DMatrix<f64>, s: usize, cfg: SoidsConfig, exec: Execution) -> Result<Self> {
        cfg.validate()?;
        let d = actions.ncols();
        let needs_design = cfg.diagnostics || cfg.schedule != Schedule::Experimental;
        let design = if needs_design { Some(exploratory_design(actions)?) } else { None };
        let c_min = design.as_ref().map_or(0.0, |des| des.c_min);
        if needs_design && c_min == 0.0 && cfg.schedule != Schedule::Experimental {
            log::info!("actions do not span R^{d}; using the 2-IR learning rate only");
        }
        Ok(Self {
            eta: cfg.eta(),
            sampler: MalaSampler::new(cfg.sampler)?,
            cfg,
            actions: actions.clone(),
            stats: SufficientStats::new(d),
            schedule: ScheduleState::new(d, s, c_min),
            design,
            exec,
        })
    }

    pub fn design(&self) -> Option<&ExploratoryDesign> {
        self.design.as_ref()
    }

    pub fn rounds_played(&self) -> usize {
        self.stats.count
    }

    /// Plays one round against `oracle`.
    pub fn round<O: RewardOracle + ?Sized, R: Rng>(&mut self, oracle: &mut O, rng: &mut R) -> Result<RoundLog> {
        let t = self.stats.count + 1;
        let lambda = self.cfg.schedule.lambda(t - 1, &self.schedule)?.min(0.5);
        let (samples, diag) = {
            let target = OptimisticTarget::new(&self.cfg.prior, &self.stats, &self.actions, self.eta, lambda)?;
            self.sampler.sample(&target, rng)?
        };
        let st = SurrogateStats::from_samples(&samples, &self.actions)?;
        let choice = soids_policy(&st, self.exec)?;
        let ir2 = choice.ratio;
        let ir3 = if choice.degenerate { None } else { st.info_ratio(&choice.policy, 3.0).ok() };

        let (mut ir2_fgts, mut ir3_mixture, mut sparse_screen) = (None, None, None);
        if self.cfg.diagnostics {
            let fgts = fgts_policy(&samples, &self.actions)?;
            ir2_fgts = st.info_ratio(&fgts, 2.0).ok();
            sparse_screen = Some(sparse_action_screen(&fgts, &self.actions, self.schedule.s));
            if let Some(des) = &self.design {
                if des.c_min > 0.0 {
                    let (_, v) = best_mixture_ratio(&st, &fgts, &des.mu, 3.0, self.cfg.mixture_grid)?;
                    ir3_mixture = v.is_finite().then_some(v);
                }
            }
        }

        let action = choice.policy.sample(rng);
        let y = oracle.pull(action, rng)?;
        self.stats.push(&self.actions.row(action).transpose(), y);
        self.schedule.record(ir2.unwrap_or(0.0), ir3.unwrap_or(0.0));

        Ok(RoundLog {
            round: t,
            lambda,
            action,
            surrogate_regret: st.surrogate_regret(&choice.policy),
            surrogate_info_gain: st.surrogate_info_gain(&choice.policy),
            ir2,
            ir3,
            acceptance: diag.acceptance_rate,
            step_size: diag.step_size,
            degenerate: choice.degenerate,
            ir2_fgts,
            ir3_mixture,
            sparse_screen,
        })
    }
}

#[derive(Debug, Clone)]
pub struct SoidsRun {
    pub trace: RegretTrace,
    pub logs: Vec<RoundLog>,
    pub c_min: Option<f64>,
}

pub fn run_soids(instance: &Instance, horizon: usize, cfg: &SoidsConfig, seed: u64) -> Result<SoidsRun> {
    run_soids_with(instance, horizon, cfg, &mut ChaCha8Rng::seed_from_u64(seed), Execution::default())
}

pub fn run_soids_with<R: Rng>(
    instance: &Instance,
    horizon: usize,
    cfg: &SoidsConfig,
    rng: &mut R,
    exec: Execution,
) -> Result<SoidsRun> {
    if horizon == 0 {
        return arg("horizon must be at least 1");
    }
    let mut agent = SoidsAgent::new(instance.actions(), instance.sparsity(), cfg.clone(), exec)?;
    let mut oracle = InstanceOracle(instance);
    let mut logs = Vec::with_capacity(horizon);
    let mut gaps = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let log = agent.round(&mut oracle, rng)?;
        gaps.push(instance.gap(log.action)?);
        logs.push(log);
    }
    Ok(SoidsRun {
        trace: cumulative_regret(&gaps)?,
        logs,
        c_min: agent.design().map(|d| d.c_min),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::make_paper_instance;
    use nalgebra::DVector;

    fn small_cfg(schedule: Schedule) -> SoidsConfig {
        SoidsConfig {
            schedule,
            sampler: SamplerConfig { num_samples: 20, burn_in: 50, thin: 2, ..SamplerConfig::default() },
            ..SoidsConfig::default()
        }
    }

    fn instance(seed: u64) -> Instance {
        make_paper_instance(10, 15, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    /// Serves rewards from a fixed parameter the test keeps to itself.
    struct Stub {
        actions: DMatrix<f64>,
        theta: DVector<f64>,
        pulls: usize,
    }

    impl RewardOracle for Stub {
        fn actions(&self) -> &DMatrix<f64> {
            &self.actions
        }
        fn sparsity(&self) -> usize {
            1
        }
        fn pull(&mut self, k: usize, _rng: &mut dyn rand::RngCore) -> Result<f64> {
            self.pulls += 1;
            Ok(self.actions.row(k).transpose().dot(&self.theta))
        }
    }

    #[test]
    fn agent_runs_against_reward_stub() {
        let inst = instance(1);
        let mut stub = Stub { actions: inst.actions().clone(), theta: inst.theta0().clone(), pulls: 0 };
        let mut agent = SoidsAgent::new(stub.actions(), 1, small_cfg(Schedule::Experimental), Execution::Sequential).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for t in 1..=5 {
            let log = agent.round(&mut stub, &mut rng).unwrap();
            assert_eq!(log.round, t);
        }
        assert_eq!(stub.pulls, 5);
        assert_eq!(agent.rounds_played(), 5);
    }

    #[test]
    fn first_round_uses_prior_only_target() {
        let inst = instance(3);
        let run = run_soids(&inst, 1, &small_cfg(Schedule::Experimental), 4).unwrap();
        assert_eq!(run.logs.len(), 1);
        assert_eq!(run.trace.len(), 1);
        assert_eq!(run.logs[0].lambda, 0.5);
    }

    #[test]
    fn identical_seeds_give_identical_logs() {
        let inst = instance(5);
        let cfg = small_cfg(Schedule::Experimental);
        let a = run_soids(&inst, 8, &cfg, 9).unwrap();
        let b = run_soids(&inst, 8, &cfg, 9).unwrap();
        assert_eq!(a.logs, b.logs);
        assert_eq!(a.trace, b.trace);
        assert!(a.trace.cumulative.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn theorem_schedules_use_nonincreasing_rates() {
        let inst = instance(6);
        for schedule in [Schedule::Theorem2, Schedule::Theorem3] {
            let run = run_soids(&inst, 12, &small_cfg(schedule), 1).unwrap();
            let lams: Vec<f64> = run.logs.iter().map(|l| l.lambda).collect();
            assert!(lams.windows(2).all(|w| w[1] <= w[0]), "{schedule:?}: {lams:?}");
            assert!(lams.iter().all(|l| *l <= 0.5 && *l > 0.0));
        }
    }

    #[test]
    fn eta_follows_schedule() {
        assert_eq!(SoidsConfig::default().eta(), 0.5);
        assert_eq!(small_cfg(Schedule::Theorem2).eta(), 0.25);
        let bad = SoidsConfig { eta: Some(0.0), ..SoidsConfig::default() };
        assert!(bad.validate().is_err());
        assert!(run_soids(&instance(1), 0, &SoidsConfig::default(), 0).is_err());
    }

    #[test]
    fn diagnostics_are_logged() {
        let inst = instance(7);
        let cfg = SoidsConfig { diagnostics: true, ..small_cfg(Schedule::Experimental) };
        let run = run_soids(&inst, 5, &cfg, 3).unwrap();
        for log in &run.logs {
            assert!(log.sparse_screen.is_some());
            if let (Some(a), Some(b)) = (log.ir2, log.ir2_fgts) {
                assert!(a <= b * (1.0 + 1e-12));
            }
        }
    }
}
