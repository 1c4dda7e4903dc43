//! Finite tabular MDPs and dynamic programming over them.
//!
//! Terminal states keep a self-loop in the kernel (every row is still a
//! distribution) but the solvers treat them as absorbing with zero onward
//! reward: a terminal state collects `R(s)` once and no mass or value flows
//! out of it.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Deref;

use crate::math::{exp, l1_norm, ln, logsumexp, zeros};
use crate::{Error, Result};

/// Mass tolerance for a transition row.
pub const ROW_SUM_TOL: f64 = 1e-9;
/// Default Bellman residual tolerance.
pub const DEFAULT_TOL: f64 = 1e-6;
/// Default iteration cap for value iteration.
pub const DEFAULT_MAX_ITERS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub state: usize,
    pub action: usize,
    pub next: usize,
    pub prob: f64,
}

impl Transition {
    pub fn new(state: usize, action: usize, next: usize, prob: f64) -> Self {
        Self {
            state,
            action,
            next,
            prob,
        }
    }
}

/// One violated MDP invariant.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    Discount(f64),
    StateIndex { entry: usize, state: usize },
    ActionIndex { entry: usize, action: usize },
    NegativeProbability { entry: usize, prob: f64 },
    ProbabilityMass { state: usize, action: usize, total: f64 },
    FeatureShape { expected: usize, got: usize },
    EmptyFeatures,
    NonFiniteFeature { state: usize },
    TerminalMask { expected: usize, got: usize },
}

impl core::fmt::Display for Violation {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            Violation::Discount(g) => write!(f, "discount {g} outside [0, 1)"),
            Violation::StateIndex { entry, state } => {
                write!(f, "transition {entry}: state index {state} out of range")
            }
            Violation::ActionIndex { entry, action } => {
                write!(f, "transition {entry}: action index {action} out of range")
            }
            Violation::NegativeProbability { entry, prob } => {
                write!(f, "transition {entry}: negative probability {prob}")
            }
            Violation::ProbabilityMass {
                state,
                action,
                total,
            } => write!(f, "row ({state}, {action}) sums to {total}"),
            Violation::FeatureShape { expected, got } => {
                write!(f, "feature matrix has {got} entries, expected {expected}")
            }
            Violation::EmptyFeatures => write!(f, "feature dimension must be at least 1"),
            Violation::NonFiniteFeature { state } => write!(f, "state {state} has a non-finite feature"),
            Violation::TerminalMask { expected, got } => {
                write!(f, "terminal mask has {got} entries, expected {expected}")
            }
        }
    }
}

/// A finite MDP with a sparse transition kernel and per-state features.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp {
    n_states: usize,
    n_actions: usize,
    discount: f64,
    transitions: Vec<Transition>,
    feature_dim: usize,
    features: Vec<f64>,
    terminal: Vec<bool>,
    // CSR index over (state, action) rows.
    row_start: Vec<usize>,
    successors: Vec<(usize, f64)>,
}

impl TabularMdp {
    /// Builds and validates an MDP. `features` is row-major `n_states x feature_dim`.
    pub fn new(
        n_states: usize,
        n_actions: usize,
        discount: f64,
        transitions: Vec<Transition>,
        feature_dim: usize,
        features: Vec<f64>,
        terminal: Vec<bool>,
    ) -> Result<Self> {
        let mdp = Self::from_parts(
            n_states,
            n_actions,
            discount,
            transitions,
            feature_dim,
            features,
            terminal,
        );
        let report = mdp.validate();
        if let Some(first) = report.first() {
            return Err(Error::InvalidMdp(format!(
                "{first} ({} violation(s))",
                report.len()
            )));
        }
        Ok(mdp)
    }

    /// Assembles an MDP without checking it. Entries with out-of-range
    /// indices are kept for [`validate`](Self::validate) but left out of the
    /// successor index.
    pub fn from_parts(
        n_states: usize,
        n_actions: usize,
        discount: f64,
        transitions: Vec<Transition>,
        feature_dim: usize,
        features: Vec<f64>,
        terminal: Vec<bool>,
    ) -> Self {
        let rows = n_states * n_actions;
        let mut counts = vec![0usize; rows + 1];
        for t in &transitions {
            if t.state < n_states && t.action < n_actions && t.next < n_states {
                counts[t.state * n_actions + t.action + 1] += 1;
            }
        }
        for i in 0..rows {
            counts[i + 1] += counts[i];
        }
        let row_start = counts.clone();
        let mut fill = counts;
        let mut successors = vec![(0usize, 0.0f64); row_start[rows]];
        for t in &transitions {
            if t.state < n_states && t.action < n_actions && t.next < n_states {
                let row = t.state * n_actions + t.action;
                successors[fill[row]] = (t.next, t.prob);
                fill[row] += 1;
            }
        }
        let terminal = if terminal.is_empty() {
            vec![false; n_states]
        } else {
            terminal
        };
        Self {
            n_states,
            n_actions,
            discount,
            transitions,
            feature_dim,
            features,
            terminal,
            row_start,
            successors,
        }
    }

    /// Lists every violated invariant; empty when the MDP is well formed.
    pub fn validate(&self) -> Vec<Violation> {
        let mut report = Vec::new();
        if !(0.0..1.0).contains(&self.discount) {
            report.push(Violation::Discount(self.discount));
        }
        let mut mass = vec![0.0; self.n_states * self.n_actions];
        for (entry, t) in self.transitions.iter().enumerate() {
            let mut ok = true;
            if t.state >= self.n_states {
                report.push(Violation::StateIndex {
                    entry,
                    state: t.state,
                });
                ok = false;
            }
            if t.next >= self.n_states {
                report.push(Violation::StateIndex {
                    entry,
                    state: t.next,
                });
                ok = false;
            }
            if t.action >= self.n_actions {
                report.push(Violation::ActionIndex {
                    entry,
                    action: t.action,
                });
                ok = false;
            }
            if !(t.prob >= 0.0) {
                report.push(Violation::NegativeProbability {
                    entry,
                    prob: t.prob,
                });
            }
            if ok {
                mass[t.state * self.n_actions + t.action] += t.prob;
            }
        }
        for (row, &total) in mass.iter().enumerate() {
            if !((total - 1.0).abs() <= ROW_SUM_TOL) {
                report.push(Violation::ProbabilityMass {
                    state: row / self.n_actions,
                    action: row % self.n_actions,
                    total,
                });
            }
        }
        if self.feature_dim == 0 {
            report.push(Violation::EmptyFeatures);
        } else if self.features.len() != self.n_states * self.feature_dim {
            report.push(Violation::FeatureShape {
                expected: self.n_states * self.feature_dim,
                got: self.features.len(),
            });
        } else {
            for s in 0..self.n_states {
                if self.features(s).iter().any(|x| !x.is_finite()) {
                    report.push(Violation::NonFiniteFeature { state: s });
                }
            }
        }
        if self.terminal.len() != self.n_states {
            report.push(Violation::TerminalMask {
                expected: self.n_states,
                got: self.terminal.len(),
            });
        }
        report
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    /// Row-major `n_states x feature_dim` feature matrix.
    pub fn feature_matrix(&self) -> &[f64] {
        &self.features
    }

    pub fn features(&self, state: usize) -> &[f64] {
        &self.features[state * self.feature_dim..(state + 1) * self.feature_dim]
    }

    pub fn is_terminal(&self, state: usize) -> bool {
        self.terminal[state]
    }

    pub fn terminal_mask(&self) -> &[bool] {
        &self.terminal
    }

    /// `(next_state, probability)` pairs of row `(state, action)`.
    #[inline]
    pub fn successors(&self, state: usize, action: usize) -> &[(usize, f64)] {
        let row = state * self.n_actions + action;
        &self.successors[self.row_start[row]..self.row_start[row + 1]]
    }

    /// Copy of this MDP with a different feature matrix.
    pub fn with_features(&self, feature_dim: usize, features: Vec<f64>) -> Result<Self> {
        if feature_dim == 0 || features.len() != self.n_states * feature_dim {
            return Err(Error::Dimension {
                what: "feature matrix",
                expected: self.n_states * feature_dim.max(1),
                got: features.len(),
            });
        }
        let mut out = self.clone();
        out.feature_dim = feature_dim;
        out.features = features;
        Ok(out)
    }

    #[inline]
    fn expected_next(&self, state: usize, action: usize, v: &[f64]) -> f64 {
        self.successors(state, action)
            .iter()
            .map(|&(n, p)| p * v[n])
            .sum()
    }

    fn check_reward(&self, reward: &RewardVector) -> Result<()> {
        if reward.len() != self.n_states {
            return Err(Error::Dimension {
                what: "reward",
                expected: self.n_states,
                got: reward.len(),
            });
        }
        Ok(())
    }
}

/// Per-state reward `R(s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardVector(Vec<f64>);

impl RewardVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("reward"));
        }
        Ok(Self(values))
    }

    pub fn zeros(n: usize) -> Self {
        Self(zeros(n))
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(self.0.iter().map(|x| x * c).collect())
    }
}

impl Deref for RewardVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// `pi(a|s)` stored row-major `n_states x n_actions`.
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticPolicy {
    n_actions: usize,
    probs: Vec<f64>,
}

impl StochasticPolicy {
    pub fn new(n_states: usize, n_actions: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != n_states * n_actions {
            return Err(Error::Dimension {
                what: "policy",
                expected: n_states * n_actions,
                got: probs.len(),
            });
        }
        for row in probs.chunks(n_actions) {
            let total: f64 = row.iter().sum();
            if row.iter().any(|p| !(*p >= 0.0)) || (total - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::InvalidMdp(String::from(
                    "policy rows must be distributions",
                )));
            }
        }
        Ok(Self { n_actions, probs })
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        Self {
            n_actions,
            probs: vec![1.0 / n_actions as f64; n_states * n_actions],
        }
    }

    /// One-hot policy from a deterministic action choice.
    pub fn from_greedy(actions: &[usize], n_actions: usize) -> Self {
        let mut probs = vec![0.0; actions.len() * n_actions];
        for (s, &a) in actions.iter().enumerate() {
            probs[s * n_actions + a] = 1.0;
        }
        Self { n_actions, probs }
    }

    pub fn n_states(&self) -> usize {
        self.probs.len() / self.n_actions
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn row(&self, state: usize) -> &[f64] {
        &self.probs[state * self.n_actions..(state + 1) * self.n_actions]
    }

    pub fn prob(&self, state: usize, action: usize) -> f64 {
        self.probs[state * self.n_actions + action]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.probs
    }
}

/// State values and action values.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueFunctions {
    pub v: Vec<f64>,
    /// Row-major `n_states x n_actions`.
    pub q: Vec<f64>,
    pub n_actions: usize,
}

impl ValueFunctions {
    pub fn q(&self, state: usize, action: usize) -> f64 {
        self.q[state * self.n_actions + action]
    }

    pub fn q_row(&self, state: usize) -> &[f64] {
        &self.q[state * self.n_actions..(state + 1) * self.n_actions]
    }
}

#[derive(Debug, Clone)]
pub struct SoftSolution {
    pub values: ValueFunctions,
    pub policy: StochasticPolicy,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct HardSolution {
    pub values: ValueFunctions,
    /// Greedy action per state, lowest index on ties.
    pub policy: Vec<usize>,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}

/// Soft value iteration: `Q(s,a) = R(s) + gamma * E[V(s')]`,
/// `V(s) = logsumexp_a Q(s,a)`, `pi(a|s) = exp(Q(s,a) - V(s))`.
///
/// A terminal state's continuation is the zero-reward absorbing tail, whose
/// soft value is `ln|A| / (1 - gamma)`.
pub fn soft_value_iteration(
    mdp: &TabularMdp,
    reward: &RewardVector,
    tol: f64,
    max_iters: usize,
) -> Result<SoftSolution> {
    soft_value_iteration_from(mdp, reward, &zeros(mdp.n_states), tol, max_iters)
}

/// [`soft_value_iteration`] started from `v0` instead of zero.
pub fn soft_value_iteration_from(
    mdp: &TabularMdp,
    reward: &RewardVector,
    v0: &[f64],
    tol: f64,
    max_iters: usize,
) -> Result<SoftSolution> {
    mdp.check_reward(reward)?;
    let (ns, na) = (mdp.n_states, mdp.n_actions);
    if v0.len() != ns {
        return Err(Error::Dimension {
            what: "initial values",
            expected: ns,
            got: v0.len(),
        });
    }
    let gamma = mdp.discount;
    let tail = gamma * ln(na as f64) / (1.0 - gamma);
    let mut v = v0.to_vec();
    let mut v_new = zeros(ns);
    let mut q = zeros(ns * na);
    let mut iterations = 0;
    let mut residual = f64::INFINITY;
    while iterations < max_iters.max(1) {
        iterations += 1;
        residual = 0.0;
        for s in 0..ns {
            let row = &mut q[s * na..(s + 1) * na];
            if mdp.terminal[s] {
                row.fill(reward[s] + tail);
            } else {
                for (a, qa) in row.iter_mut().enumerate() {
                    *qa = reward[s] + gamma * mdp.expected_next(s, a, &v);
                }
            }
            v_new[s] = logsumexp(row);
            residual = f64::max(residual, (v_new[s] - v[s]).abs());
        }
        core::mem::swap(&mut v, &mut v_new);
        if residual.is_nan() || v.iter().any(|x| !x.is_finite()) {
            return Err(Error::Diverged { iterations });
        }
        if residual <= tol {
            break;
        }
    }
    let mut probs = zeros(ns * na);
    for s in 0..ns {
        for a in 0..na {
            probs[s * na + a] = exp(q[s * na + a] - v[s]);
        }
        // exp rounding can leave the row a few ulps away from 1
        let total: f64 = probs[s * na..(s + 1) * na].iter().sum();
        for p in &mut probs[s * na..(s + 1) * na] {
            *p /= total;
        }
    }
    Ok(SoftSolution {
        values: ValueFunctions {
            v,
            q,
            n_actions: na,
        },
        policy: StochasticPolicy {
            n_actions: na,
            probs,
        },
        iterations,
        residual,
        converged: residual <= tol,
    })
}

/// Index of the largest entry; entries within a relative `1e-9` of the
/// maximum count as ties and the lowest index wins.
pub fn greedy_action(q_row: &[f64]) -> usize {
    let max = q_row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let slack = 1e-9 * f64::max(1.0, max.abs());
    q_row
        .iter()
        .position(|&x| x >= max - slack)
        .unwrap_or(0)
}

/// Hard value iteration `V(s) = max_a Q(s,a)` with a greedy policy.
pub fn hard_value_iteration(
    mdp: &TabularMdp,
    reward: &RewardVector,
    tol: f64,
    max_iters: usize,
) -> Result<HardSolution> {
    mdp.check_reward(reward)?;
    let (ns, na) = (mdp.n_states, mdp.n_actions);
    let gamma = mdp.discount;
    let mut v = zeros(ns);
    let mut v_new = zeros(ns);
    let mut q = zeros(ns * na);
    let mut iterations = 0;
    let mut residual = f64::INFINITY;
    while iterations < max_iters.max(1) {
        iterations += 1;
        residual = 0.0;
        for s in 0..ns {
            let row = &mut q[s * na..(s + 1) * na];
            if mdp.terminal[s] {
                row.fill(reward[s]);
            } else {
                for (a, qa) in row.iter_mut().enumerate() {
                    *qa = reward[s] + gamma * mdp.expected_next(s, a, &v);
                }
            }
            v_new[s] = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            residual = f64::max(residual, (v_new[s] - v[s]).abs());
        }
        core::mem::swap(&mut v, &mut v_new);
        if residual.is_nan() || v.iter().any(|x| !x.is_finite()) {
            return Err(Error::Diverged { iterations });
        }
        if residual <= tol {
            break;
        }
    }
    let policy = (0..ns).map(|s| greedy_action(&q[s * na..(s + 1) * na])).collect();
    Ok(HardSolution {
        values: ValueFunctions {
            v,
            q,
            n_actions: na,
        },
        policy,
        iterations,
        residual,
        converged: residual <= tol,
    })
}

/// Iterative policy evaluation; stops once the sup-norm distance to the
/// fixed point is guaranteed to be below `tol`.
pub fn policy_evaluation(
    mdp: &TabularMdp,
    reward: &RewardVector,
    policy: &StochasticPolicy,
    tol: f64,
) -> Result<Vec<f64>> {
    mdp.check_reward(reward)?;
    check_policy(mdp, policy)?;
    if !tol.is_finite() || tol <= 0.0 {
        return Err(Error::Config(format!("tolerance must be positive, got {tol}")));
    }
    let (ns, na) = (mdp.n_states, mdp.n_actions);
    let gamma = mdp.discount;
    let stop = tol * (1.0 - gamma);
    let mut v = zeros(ns);
    let mut v_new = zeros(ns);
    let cap = 10 * crate::math::discount_horizon(gamma, stop.min(1e-3)) + 1000;
    for iteration in 1..=cap {
        let mut residual: f64 = 0.0;
        for s in 0..ns {
            let mut value = reward[s];
            if !mdp.terminal[s] {
                let mut cont = 0.0;
                for a in 0..na {
                    let p = policy.probs[s * na + a];
                    if p != 0.0 {
                        cont += p * mdp.expected_next(s, a, &v);
                    }
                }
                value += gamma * cont;
            }
            v_new[s] = value;
            residual = residual.max((value - v[s]).abs());
        }
        core::mem::swap(&mut v, &mut v_new);
        if !residual.is_finite() {
            return Err(Error::Diverged {
                iterations: iteration,
            });
        }
        if residual <= stop {
            break;
        }
    }
    Ok(v)
}

fn check_policy(mdp: &TabularMdp, policy: &StochasticPolicy) -> Result<()> {
    if policy.n_actions != mdp.n_actions || policy.n_states() != mdp.n_states {
        return Err(Error::Dimension {
            what: "policy",
            expected: mdp.n_states * mdp.n_actions,
            got: policy.probs.len(),
        });
    }
    Ok(())
}

/// Pushes `mass` one step through the policy-induced chain without
/// discounting. Terminal states absorb their mass.
pub fn push_forward(mdp: &TabularMdp, policy: &StochasticPolicy, mass: &[f64]) -> Vec<f64> {
    let mut out = zeros(mdp.n_states);
    push_into(mdp, policy, mass, 1.0, &mut out);
    out
}

fn push_into(mdp: &TabularMdp, policy: &StochasticPolicy, mass: &[f64], scale: f64, out: &mut [f64]) {
    let na = mdp.n_actions;
    out.fill(0.0);
    for (s, &m) in mass.iter().enumerate() {
        if m == 0.0 || mdp.terminal[s] {
            continue;
        }
        let m = scale * m;
        for a in 0..na {
            let w = m * policy.probs[s * na + a];
            if w == 0.0 {
                continue;
            }
            for &(n, p) in mdp.successors(s, a) {
                out[n] += w * p;
            }
        }
    }
}

/// Like [`occupancy_from_initial`], but stops early once the bound on the
/// omitted tail, `|last term|_1 * gamma / (1 - gamma)`, is at most `tail_tol`.
pub fn occupancy_with_tolerance(
    mdp: &TabularMdp,
    policy: &StochasticPolicy,
    initial: &[f64],
    max_iters: usize,
    tail_tol: f64,
) -> Result<Vec<f64>> {
    check_policy(mdp, policy)?;
    if initial.len() != mdp.n_states {
        return Err(Error::Dimension {
            what: "initial mass",
            expected: mdp.n_states,
            got: initial.len(),
        });
    }
    if initial.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("initial mass"));
    }
    let gamma = mdp.discount;
    let mut acc = initial.to_vec();
    let mut cur = initial.to_vec();
    let mut next = zeros(mdp.n_states);
    for _ in 0..max_iters {
        push_into(mdp, policy, &cur, gamma, &mut next);
        for (a, x) in acc.iter_mut().zip(&next) {
            *a += x;
        }
        core::mem::swap(&mut cur, &mut next);
        if l1_norm(&cur) * gamma / (1.0 - gamma) <= tail_tol {
            break;
        }
    }
    Ok(acc)
}

/// Discounted occupancy `sum_{t=0}^{n_iters} gamma^t * initial * P_pi^t`.
pub fn occupancy_from_initial(
    mdp: &TabularMdp,
    policy: &StochasticPolicy,
    initial: &[f64],
    n_iters: usize,
) -> Result<Vec<f64>> {
    check_policy(mdp, policy)?;
    if initial.len() != mdp.n_states {
        return Err(Error::Dimension {
            what: "initial mass",
            expected: mdp.n_states,
            got: initial.len(),
        });
    }
    if initial.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("initial mass"));
    }
    let mut acc = initial.to_vec();
    let mut cur = initial.to_vec();
    let mut next = zeros(mdp.n_states);
    for _ in 0..n_iters {
        push_into(mdp, policy, &cur, mdp.discount, &mut next);
        if next.iter().all(|&x| x == 0.0) {
            break;
        }
        for (a, x) in acc.iter_mut().zip(&next) {
            *a += x;
        }
        core::mem::swap(&mut cur, &mut next);
    }
    Ok(acc)
}
