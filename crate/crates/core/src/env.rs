//! Problem instances, reward generation and regret accounting.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{arg, Error, Result};

/// A sparse linear bandit problem with a finite action set.
///
/// Actions are stored as the rows of a `K x d` matrix. The unit-ball bound on
/// `theta0` used by the theory is not enforced: the experiment instances have
/// `||theta0||_1 = 10`.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    d: usize,
    s: usize,
    theta0: DVector<f64>,
    actions: DMatrix<f64>,
    noise_std: f64,
}

impl Instance {
    pub fn new(s: usize, theta0: DVector<f64>, actions: DMatrix<f64>, noise_std: f64) -> Result<Self> {
        let d = theta0.len();
        if d == 0 {
            return arg("dimension must be positive");
        }
        if s == 0 || s > d {
            return arg(format!("sparsity {s} must lie in [1, {d}]"));
        }
        if actions.nrows() == 0 {
            return arg("action set is empty");
        }
        if actions.ncols() != d {
            return arg(format!("actions have length {}, expected {d}", actions.ncols()));
        }
        if actions.iter().any(|x| !x.is_finite() || x.abs() > 1.0) {
            return arg("every action must satisfy max_j |a_j| <= 1");
        }
        if theta0.iter().any(|x| !x.is_finite()) {
            return arg("theta0 must be finite");
        }
        let nnz = theta0.iter().filter(|x| **x != 0.0).count();
        if nnz > s {
            return arg(format!("theta0 has {nnz} nonzero components, sparsity is {s}"));
        }
        if !(noise_std >= 0.0 && noise_std.is_finite()) {
            return arg("noise_std must be a nonnegative real");
        }
        Ok(Self { d, s, theta0, actions, noise_std })
    }

    pub fn from_rows(s: usize, theta0: Vec<f64>, rows: &[Vec<f64>], noise_std: f64) -> Result<Self> {
        let d = theta0.len();
        if rows.iter().any(|r| r.len() != d) {
            return arg("all actions must have the same length as theta0");
        }
        let actions = DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j]);
        Self::new(s, DVector::from_vec(theta0), actions, noise_std)
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn sparsity(&self) -> usize {
        self.s
    }

    pub fn theta0(&self) -> &DVector<f64> {
        &self.theta0
    }

    pub fn actions(&self) -> &DMatrix<f64> {
        &self.actions
    }

    pub fn num_actions(&self) -> usize {
        self.actions.nrows()
    }

    pub fn noise_std(&self) -> f64 {
        self.noise_std
    }

    fn check_index(&self, k: usize) -> Result<()> {
        if k >= self.num_actions() {
            return arg(format!("action index {k} out of range (K = {})", self.num_actions()));
        }
        Ok(())
    }

    pub fn mean_reward(&self, k: usize) -> Result<f64> {
        self.check_index(k)?;
        Ok(self.actions.row(k).transpose().dot(&self.theta0))
    }

    /// Noisy reward of action `k`. Always consumes exactly one standard normal
    /// draw from `rng`, including when `noise_std` is zero.
    pub fn pull<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> Result<f64> {
        let mean = self.mean_reward(k)?;
        let eps: f64 = StandardNormal.sample(rng);
        Ok(mean + self.noise_std * eps)
    }

    pub fn gap(&self, k: usize) -> Result<f64> {
        self.check_index(k)?;
        let rewards = &self.actions * &self.theta0;
        Ok(rewards.max() - rewards[k])
    }

    /// Gaps of all actions under `theta0`.
    pub fn gaps(&self) -> Vec<f64> {
        let rewards = &self.actions * &self.theta0;
        let best = rewards.max();
        rewards.iter().map(|r| best - r).collect()
    }

    pub fn optimal_action(&self) -> usize {
        argmax_reward(&self.actions, &self.theta0)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&InstanceDoc::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: InstanceDoc = serde_json::from_str(text)?;
        Self::try_from(doc)
    }
}

/// JSON layout of an [`Instance`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstanceDoc {
    pub d: usize,
    pub s: usize,
    pub theta0: Vec<f64>,
    pub actions: Vec<Vec<f64>>,
    pub noise_std: f64,
}

impl From<&Instance> for InstanceDoc {
    fn from(inst: &Instance) -> Self {
        Self {
            d: inst.d,
            s: inst.s,
            theta0: inst.theta0.iter().copied().collect(),
            actions: inst
                .actions
                .row_iter()
                .map(|r| r.iter().copied().collect())
                .collect(),
            noise_std: inst.noise_std,
        }
    }
}

impl TryFrom<InstanceDoc> for Instance {
    type Error = Error;

    fn try_from(doc: InstanceDoc) -> Result<Self> {
        if doc.theta0.len() != doc.d {
            return arg(format!("theta0 has length {}, d = {}", doc.theta0.len(), doc.d));
        }
        Instance::from_rows(doc.s, doc.theta0, &doc.actions, doc.noise_std)
    }
}

/// Index of the action with the largest reward under `theta`; lowest index wins ties.
pub fn argmax_reward(actions: &DMatrix<f64>, theta: &DVector<f64>) -> usize {
    let rewards = actions * theta;
    argmax_first(rewards.as_slice())
}

pub(crate) fn argmax_first(values: &[f64]) -> usize {
    let mut best = 0;
    for (k, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = k;
        }
    }
    best
}

/// The experiment instance: `s = max(1, d/10)`, the first `s` coordinates of
/// `theta0` equal `10/s`, `k` actions uniform on `[-1, 1]^d`, unit noise.
pub fn make_paper_instance<R: Rng + ?Sized>(d: usize, k: usize, rng: &mut R) -> Result<Instance> {
    if d == 0 || k == 0 {
        return arg("d and K must be positive");
    }
    let s = (d / 10).max(1);
    let theta0 = DVector::from_fn(d, |j, _| if j < s { 10.0 / s as f64 } else { 0.0 });
    let unif = Uniform::new_inclusive(-1.0, 1.0).map_err(|e| Error::Internal(e.to_string()))?;
    // row-major fill so the draw order does not depend on the matrix layout
    let mut rows = Vec::with_capacity(k);
    for _ in 0..k {
        rows.push((0..d).map(|_| unif.sample(rng)).collect::<Vec<f64>>());
    }
    let actions = DMatrix::from_fn(k, d, |i, j| rows[i][j]);
    Instance::new(s, theta0, actions, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryRecord {
    pub round: usize,
    pub action_index: usize,
    pub reward: f64,
}

/// Interaction history; rounds are strictly increasing.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct History {
    records: Vec<HistoryRecord>,
}

impl History {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, record: HistoryRecord) -> Result<()> {
        if let Some(last) = self.records.last() {
            if record.round <= last.round {
                return arg(format!(
                    "round {} does not follow round {}",
                    record.round, last.round
                ));
            }
        }
        self.records.push(record);
        Ok(())
    }

    pub fn records(&self) -> &[HistoryRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn from_pairs(pairs: &[(usize, f64)]) -> Self {
        let records = pairs
            .iter()
            .enumerate()
            .map(|(i, &(action_index, reward))| HistoryRecord { round: i + 1, action_index, reward })
            .collect();
        Self { records }
    }
}

/// Per-round gaps and their running sum.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RegretTrace {
    pub gaps: Vec<f64>,
    pub cumulative: Vec<f64>,
}

impl RegretTrace {
    pub fn len(&self) -> usize {
        self.gaps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gaps.is_empty()
    }

    pub fn final_regret(&self) -> f64 {
        self.cumulative.last().copied().unwrap_or(0.0)
    }
}

pub fn cumulative_regret(gaps: &[f64]) -> Result<RegretTrace> {
    if let Some(g) = gaps.iter().find(|g| !(**g >= 0.0)) {
        return arg(format!("negative or non-finite gap {g}"));
    }
    let mut acc = 0.0;
    let cumulative = gaps
        .iter()
        .map(|g| {
            acc += g;
            acc
        })
        .collect();
    Ok(RegretTrace { gaps: gaps.to_vec(), cumulative })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn two_arm(theta0: Vec<f64>, noise: f64) -> Instance {
        Instance::from_rows(1, theta0, &[vec![1.0, 0.0], vec![0.0, 1.0]], noise).unwrap()
    }

    #[test]
    fn noiseless_pull_is_mean_reward() {
        let inst = Instance::from_rows(1, vec![1.0, 0.0], &[vec![0.5, -1.0]], 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(inst.pull(0, &mut rng).unwrap(), 0.5);
        let zero = Instance::from_rows(1, vec![0.0, 0.0], &[vec![0.5, -1.0]], 0.0).unwrap();
        assert_eq!(zero.pull(0, &mut rng).unwrap(), 0.0);
    }

    #[test]
    fn noisy_pull_uses_first_normal_draw() {
        let inst = two_arm(vec![1.0, 0.0], 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let y = inst.pull(0, &mut rng).unwrap();
        let mut replay = ChaCha8Rng::seed_from_u64(42);
        let eps: f64 = StandardNormal.sample(&mut replay);
        assert_eq!(y, 1.0 + eps);
    }

    #[test]
    fn pull_rejects_bad_index() {
        let inst = two_arm(vec![1.0, 0.0], 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(inst.pull(2, &mut rng), Err(Error::Argument(_))));
        assert!(inst.gap(7).is_err());
    }

    #[test]
    fn gaps_by_enumeration() {
        let inst = two_arm(vec![1.0, 0.0], 0.0);
        assert_eq!(inst.gap(0).unwrap(), 0.0);
        assert_eq!(inst.gap(1).unwrap(), 1.0);
        let zero = two_arm(vec![0.0, 0.0], 0.0);
        assert!(zero.gaps().iter().all(|g| *g == 0.0));
    }

    #[test]
    fn rejects_out_of_box_actions_and_dense_theta() {
        assert!(Instance::from_rows(1, vec![1.0, 0.0], &[vec![1.5, 0.0]], 0.0).is_err());
        assert!(Instance::from_rows(1, vec![1.0, 1.0], &[vec![1.0, 0.0]], 0.0).is_err());
        assert!(Instance::from_rows(1, vec![1.0, 0.0], &[vec![1.0]], 0.0).is_err());
    }

    #[test]
    fn cumulative_regret_cases() {
        assert!(cumulative_regret(&[]).unwrap().is_empty());
        assert_eq!(cumulative_regret(&[1.0, 1.0, 1.0]).unwrap().cumulative, vec![1.0, 2.0, 3.0]);
        assert!(cumulative_regret(&[1.0, -0.5]).is_err());
    }

    #[test]
    fn benchmark_instance_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let inst = make_paper_instance(20, 200, &mut rng).unwrap();
        assert_eq!(inst.sparsity(), 2);
        assert_eq!(inst.num_actions(), 200);
        assert_eq!(&inst.theta0().as_slice()[..3], &[5.0, 5.0, 0.0]);
        let inst = make_paper_instance(100, 50, &mut rng).unwrap();
        assert_eq!(inst.sparsity(), 10);
        assert!(inst.theta0().iter().take(10).all(|x| *x == 1.0));
        assert!(inst.actions().iter().all(|a| a.abs() <= 1.0));
    }

    #[test]
    fn json_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let inst = make_paper_instance(20, 5, &mut rng).unwrap();
        let back = Instance::from_json(&inst.to_json().unwrap()).unwrap();
        assert_eq!(inst, back);
    }

    #[test]
    fn history_rounds_increase() {
        let mut h = History::new();
        h.push(HistoryRecord { round: 1, action_index: 0, reward: 0.0 }).unwrap();
        assert!(h.push(HistoryRecord { round: 1, action_index: 0, reward: 0.0 }).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn gaps_nonnegative_with_zero_min(seed in 0u64..500, d in 1usize..12, k in 1usize..20) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let inst = make_paper_instance(d, k, &mut rng).unwrap();
                let gaps = inst.gaps();
                prop_assert!(gaps.iter().all(|g| *g >= 0.0));
                prop_assert_eq!(gaps.iter().cloned().fold(f64::INFINITY, f64::min), 0.0);
                prop_assert_eq!(gaps[inst.optimal_action()], 0.0);
            }

            #[test]
            fn regret_matches_prefix_sums(gaps in proptest::collection::vec(0.0f64..10.0, 0..60)) {
                let trace = cumulative_regret(&gaps).unwrap();
                for t in 0..gaps.len() {
                    let mut naive = 0.0;
                    for u in 0..=t { naive += gaps[u]; }
                    prop_assert!((trace.cumulative[t] - naive).abs() <= 1e-9 * naive.max(1.0));
                    if t > 0 { prop_assert!(trace.cumulative[t] >= trace.cumulative[t - 1]); }
                }
            }
        }
    }
}
