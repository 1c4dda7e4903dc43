//! Evaluation: normalized expected value difference, demonstration
//! negative log-likelihood and seed aggregation.

use alloc::string::String;
use alloc::vec::Vec;

use crate::irl::Trajectory;
use crate::math::{l1_norm, mean_std};
use crate::mdp::{
    hard_value_iteration, policy_evaluation, soft_value_iteration, RewardVector, StochasticPolicy, TabularMdp,
    DEFAULT_MAX_ITERS,
};
use crate::{Error, Result};

/// Log-probability floor for actions the policy never takes.
pub const LOG_FLOOR: f64 = -30.0;

/// Scales `r` to unit L1 norm.
pub fn normalize_reward(r: &RewardVector) -> Result<RewardVector> {
    let norm = l1_norm(r);
    if norm == 0.0 {
        return Err(Error::ZeroReward);
    }
    r.scaled(1.0 / norm)
}

/// Ground-truth side of the EVD computation, reusable across many learned
/// rewards on the same MDP.
#[derive(Debug, Clone)]
pub struct EvdReference {
    reward: RewardVector,
    initial: Vec<f64>,
    optimal_value: f64,
    tol: f64,
}

impl EvdReference {
    /// `initial` is the evaluation start distribution.
    pub fn new(mdp: &TabularMdp, r_true: &RewardVector, initial: &[f64], tol: f64) -> Result<Self> {
        if initial.len() != mdp.n_states() {
            return Err(Error::Dimension {
                what: "initial distribution",
                expected: mdp.n_states(),
                got: initial.len(),
            });
        }
        let reward = normalize_reward(r_true)?;
        let mut reference = Self {
            reward,
            initial: initial.to_vec(),
            optimal_value: 0.0,
            tol,
        };
        let hard = hard_value_iteration(mdp, &reference.reward, tol, DEFAULT_MAX_ITERS)?;
        reference.optimal_value = reference.value_of(mdp, &hard.policy)?;
        Ok(reference)
    }

    pub fn normalized_reward(&self) -> &RewardVector {
        &self.reward
    }

    fn value_of(&self, mdp: &TabularMdp, actions: &[usize]) -> Result<f64> {
        let policy = StochasticPolicy::from_greedy(actions, mdp.n_actions());
        let v = policy_evaluation(mdp, &self.reward, &policy, self.tol)?;
        Ok(v.iter().zip(&self.initial).map(|(v, p)| v * p).sum())
    }

    /// Value lost by acting greedily on `learned` instead of the true reward.
    pub fn evd(&self, mdp: &TabularMdp, learned: &RewardVector) -> Result<f64> {
        let hard = hard_value_iteration(mdp, learned, self.tol, DEFAULT_MAX_ITERS)?;
        self.evd_of_policy(mdp, &hard.policy)
    }

    pub fn evd_of_policy(&self, mdp: &TabularMdp, actions: &[usize]) -> Result<f64> {
        let gap = self.optimal_value - self.value_of(mdp, actions)?;
        Ok(gap.max(0.0))
    }
}

/// Normalized EVD of `r_learned` against `r_true`, averaged over `initial`.
pub fn evd(mdp: &TabularMdp, r_true: &RewardVector, r_learned: &RewardVector, initial: &[f64], tol: f64) -> Result<f64> {
    EvdReference::new(mdp, r_true, initial, tol)?.evd(mdp, r_learned)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Nll {
    pub total: f64,
    pub steps: usize,
    /// Steps whose log-probability hit [`LOG_FLOOR`].
    pub clamped: usize,
}

impl Nll {
    pub fn per_step(&self) -> f64 {
        if self.steps == 0 {
            0.0
        } else {
            self.total / self.steps as f64
        }
    }

    pub fn merge(&mut self, other: Nll) {
        self.total += other.total;
        self.steps += other.steps;
        self.clamped += other.clamped;
    }
}

/// `−Σ log π(a|s)` over the demo steps under the soft-optimal policy of `reward`.
pub fn nll(mdp: &TabularMdp, reward: &RewardVector, trajectories: &[Trajectory], tol: f64) -> Result<Nll> {
    let soft = soft_value_iteration(mdp, reward, tol, DEFAULT_MAX_ITERS)?;
    let mut out = Nll::default();
    for step in trajectories.iter().flat_map(|t| &t.steps) {
        let p = soft.policy.prob(step.state, step.action);
        let mut lp = crate::math::ln(p);
        if !(lp > LOG_FLOOR) {
            lp = LOG_FLOOR;
            out.clamped += 1;
        }
        out.total -= lp;
        out.steps += 1;
    }
    Ok(out)
}

/// One finished training run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub env: String,
    pub algorithm: String,
    pub n_traj: usize,
    pub seed: u64,
    pub evd: f64,
    pub epoch_seconds: f64,
}

/// Mean and sample standard deviation over seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub env: String,
    pub algorithm: String,
    pub n_traj: usize,
    pub seed_count: usize,
    pub evd_mean: f64,
    pub evd_std: f64,
    pub time_mean_s: f64,
    pub time_std_s: f64,
}

/// Groups runs by `(env, algorithm, n_traj)` in order of first appearance.
pub fn aggregate(records: &[RunRecord]) -> Vec<TableRow> {
    let mut keys: Vec<(&str, &str, usize)> = Vec::new();
    for r in records {
        let key = (r.env.as_str(), r.algorithm.as_str(), r.n_traj);
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.into_iter()
        .map(|(env, algorithm, n_traj)| {
            let group: Vec<&RunRecord> = records
                .iter()
                .filter(|r| r.env == env && r.algorithm == algorithm && r.n_traj == n_traj)
                .collect();
            let evds: Vec<f64> = group.iter().map(|r| r.evd).collect();
            let times: Vec<f64> = group.iter().map(|r| r.epoch_seconds).collect();
            let (evd_mean, evd_std) = mean_std(&evds);
            let (time_mean_s, time_std_s) = mean_std(&times);
            TableRow {
                env: env.into(),
                algorithm: algorithm.into(),
                n_traj,
                seed_count: group.len(),
                evd_mean,
                evd_std,
                time_mean_s,
                time_std_s,
            }
        })
        .collect()
}
