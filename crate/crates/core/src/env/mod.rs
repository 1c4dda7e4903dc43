//! Benchmark environments as context-annotated MDP bundles, plus expert
//! demonstration sampling.

use alloc::sync::Arc;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::context::{Context, ContextDag};
use crate::irl::{DemoSet, EvalTask, Step, TrainingTask, Trajectory};
use crate::mdp::{hard_value_iteration, soft_value_iteration, RewardVector, StochasticPolicy, TabularMdp, DEFAULT_MAX_ITERS};
use crate::metrics::EvdReference;
use crate::{Error, Result};

pub mod goalnav;
pub mod grid;
pub mod jctnav;
pub mod taxi;

/// Dynamics, ground truth and start distribution of one context.
#[derive(Debug, Clone)]
pub struct ContextEnv {
    pub context: Context,
    /// Shared between contexts with identical dynamics.
    pub mdp: Arc<TabularMdp>,
    pub true_reward: RewardVector,
    pub initial: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct EnvBundle {
    pub name: &'static str,
    pub dag: ContextDag,
    /// One entry per enumerated context, in enumeration order.
    pub contexts: Vec<ContextEnv>,
}

impl EnvBundle {
    pub fn context_env(&self, context: &Context) -> Result<&ContextEnv> {
        self.contexts.iter().find(|c| &c.context == context).ok_or(Error::UnknownContext)
    }

    pub fn feature_dim(&self) -> usize {
        self.contexts.first().map_or(0, |c| c.mdp.feature_dim())
    }

    /// Training tasks on each context's own MDP.
    pub fn training_tasks(&self, demos: &DemoSet) -> Vec<TrainingTask> {
        self.contexts
            .iter()
            .map(|c| TrainingTask {
                context: c.context.clone(),
                mdp: c.mdp.clone(),
                trajectories: demos.trajectories(&c.context).to_vec(),
            })
            .collect()
    }

    pub fn eval_tasks(&self, tol: f64) -> Result<Vec<EvalTask>> {
        self.contexts
            .iter()
            .map(|c| {
                Ok(EvalTask {
                    context: c.context.clone(),
                    mdp: c.mdp.clone(),
                    reference: EvdReference::new(&c.mdp, &c.true_reward, &c.initial, tol)?,
                })
            })
            .collect()
    }
}

/// How the demonstrator picks actions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Expert {
    /// Boltzmann-optimal policy of `beta · R*`.
    Soft { beta: f64 },
    /// Greedy optimal policy of `R*`.
    Greedy,
}

impl Default for Expert {
    fn default() -> Self {
        Expert::Soft { beta: 1.0 }
    }
}

/// The expert's action distribution for `reward` on `mdp`.
pub fn expert_policy(mdp: &TabularMdp, reward: &RewardVector, expert: Expert) -> Result<StochasticPolicy> {
    match expert {
        Expert::Soft { beta } => Ok(soft_value_iteration(mdp, &reward.scaled(beta)?, 1e-9, DEFAULT_MAX_ITERS)?.policy),
        Expert::Greedy => {
            let hard = hard_value_iteration(mdp, reward, 1e-9, DEFAULT_MAX_ITERS)?;
            Ok(StochasticPolicy::from_greedy(&hard.policy, mdp.n_actions()))
        }
    }
}

/// Index drawn from a discrete distribution.
pub fn sample_index(rng: &mut impl Rng, probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        acc += p;
        last = i;
        if u < acc {
            return i;
        }
    }
    last
}

pub fn sample_successor(rng: &mut impl Rng, mdp: &TabularMdp, state: usize, action: usize) -> usize {
    let succ = mdp.successors(state, action);
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for &(n, p) in succ {
        acc += p;
        if u < acc {
            return n;
        }
    }
    succ.last().map_or(state, |&(n, _)| n)
}

/// Rolls `policy` from `start` until a terminal state or `max_len` steps.
/// The terminal state itself is not recorded.
pub fn sample_trajectory(
    rng: &mut impl Rng,
    mdp: &TabularMdp,
    policy: &StochasticPolicy,
    context: &Context,
    start: usize,
    max_len: usize,
) -> Trajectory {
    let mut steps = Vec::new();
    let mut state = start;
    while !mdp.is_terminal(state) && steps.len() < max_len {
        let action = sample_index(rng, policy.row(state));
        steps.push(Step::new(state, action));
        state = sample_successor(rng, mdp, state, action);
    }
    let mut t = Trajectory::new(context.clone(), steps);
    t.truncated = !mdp.is_terminal(state);
    t
}

/// `n_traj` expert rollouts in one context.
pub fn generate_demos(
    bundle: &EnvBundle,
    context: &Context,
    n_traj: usize,
    max_len: usize,
    expert: Expert,
    seed: u64,
) -> Result<DemoSet> {
    let env = bundle.context_env(context)?;
    let policy = expert_policy(&env.mdp, &env.true_reward, expert)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut set = DemoSet::new();
    for _ in 0..n_traj {
        let start = sample_index(&mut rng, &env.initial);
        set.push(sample_trajectory(&mut rng, &env.mdp, &policy, context, start, max_len));
    }
    Ok(set)
}

/// `n_traj` rollouts dealt round-robin over the bundle's contexts.
pub fn generate_demo_set(bundle: &EnvBundle, n_traj: usize, max_len: usize, expert: Expert, seed: u64) -> Result<DemoSet> {
    let policies = bundle
        .contexts
        .iter()
        .map(|c| expert_policy(&c.mdp, &c.true_reward, expert))
        .collect::<Result<Vec<_>>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut set = DemoSet::new();
    for i in 0..n_traj {
        let k = i % bundle.contexts.len();
        let env = &bundle.contexts[k];
        let start = sample_index(&mut rng, &env.initial);
        set.push(sample_trajectory(&mut rng, &env.mdp, &policies[k], &env.context, start, max_len));
    }
    Ok(set)
}

/// Uniform distribution over the non-terminal states of `mdp`.
pub fn uniform_nonterminal(mdp: &TabularMdp) -> Vec<f64> {
    let count = (0..mdp.n_states()).filter(|&s| !mdp.is_terminal(s)).count().max(1);
    (0..mdp.n_states())
        .map(|s| if mdp.is_terminal(s) { 0.0 } else { 1.0 / count as f64 })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_index_respects_support() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let i = sample_index(&mut rng, &[0.0, 0.3, 0.0, 0.7, 0.0]);
            assert!(i == 1 || i == 3);
        }
    }
}
