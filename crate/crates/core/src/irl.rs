//! Maximum-entropy IRL over a context hierarchy: demonstration statistics,
//! expected visitation, the likelihood loss and its gradient, and the
//! training loop shared by CHIRL and the baseline reward heads.

use alloc::borrow::Cow;
use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::context::{Context, ContextDag};
use crate::math::discount_horizon;
use crate::math::l1_norm;
use crate::mdp::{
    occupancy_from_initial, occupancy_with_tolerance, soft_value_iteration, soft_value_iteration_from, RewardVector,
    StochasticPolicy, TabularMdp, ValueFunctions,
};
use crate::metrics::EvdReference;
use crate::reward_net::{Adam, ModularRewardNet, NetShape, ParamGradients};
use crate::{Error, Result};

/// Tail mass left out of the truncated occupancy sum.
pub const PROPAGATE_TOL: f64 = 1e-6;

/// One demonstrated `(state, action)`; `outcome` records where a macro
/// action terminated when the demonstrator logged it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Step {
    pub state: usize,
    pub action: usize,
    pub outcome: Option<usize>,
}

impl Step {
    pub fn new(state: usize, action: usize) -> Self {
        Self {
            state,
            action,
            outcome: None,
        }
    }

    pub fn with_outcome(state: usize, action: usize, outcome: usize) -> Self {
        Self {
            state,
            action,
            outcome: Some(outcome),
        }
    }
}

/// Single-context demonstration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trajectory {
    pub context: Context,
    pub steps: Vec<Step>,
    /// Hit the length limit before reaching a terminal state.
    pub truncated: bool,
}

impl Trajectory {
    pub fn new(context: Context, steps: Vec<Step>) -> Self {
        Self {
            context,
            steps,
            truncated: false,
        }
    }
}

/// A raw demo step carrying its own `(variable, value)` label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledStep {
    pub label: Vec<(String, String)>,
    pub step: Step,
}

/// Demonstrations grouped by context.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DemoSet {
    groups: BTreeMap<Context, Vec<Trajectory>>,
}

impl DemoSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a trajectory; empty ones are dropped.
    pub fn push(&mut self, trajectory: Trajectory) {
        if !trajectory.steps.is_empty() {
            self.groups.entry(trajectory.context.clone()).or_default().push(trajectory);
        }
    }

    pub fn extend(&mut self, other: DemoSet) {
        for t in other.into_trajectories() {
            self.push(t);
        }
    }

    pub fn contexts(&self) -> impl Iterator<Item = &Context> {
        self.groups.keys()
    }

    pub fn trajectories(&self, context: &Context) -> &[Trajectory] {
        self.groups.get(context).map_or(&[], Vec::as_slice)
    }

    /// All trajectories, grouped by context in context order.
    pub fn iter(&self) -> impl Iterator<Item = &Trajectory> {
        self.groups.values().flatten()
    }

    pub fn into_trajectories(self) -> impl Iterator<Item = Trajectory> {
        self.groups.into_values().flatten()
    }

    pub fn n_trajectories(&self) -> usize {
        self.groups.values().map(Vec::len).sum()
    }

    pub fn total_steps(&self) -> usize {
        self.iter().map(|t| t.steps.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }
}

/// Splits each trajectory wherever the context changes.
pub fn split_resolved(raw: impl IntoIterator<Item = Vec<(Context, Step)>>) -> DemoSet {
    let mut set = DemoSet::new();
    for trajectory in raw {
        let mut current: Option<Trajectory> = None;
        for (context, step) in trajectory {
            match &mut current {
                Some(t) if t.context == context => t.steps.push(step),
                _ => {
                    if let Some(t) = current.take() {
                        set.push(t);
                    }
                    current = Some(Trajectory::new(context, vec![step]));
                }
            }
        }
        if let Some(t) = current {
            set.push(t);
        }
    }
    set
}

/// Resolves every step's label against `dag` and splits at context changes.
pub fn split_by_context(dag: &ContextDag, raw: &[Vec<LabeledStep>]) -> Result<DemoSet> {
    let mut cache: BTreeMap<&[(String, String)], Context> = BTreeMap::new();
    let mut resolved = Vec::with_capacity(raw.len());
    for trajectory in raw {
        let mut steps = Vec::with_capacity(trajectory.len());
        for s in trajectory {
            let context = match cache.get(s.label.as_slice()) {
                Some(c) => c.clone(),
                None => {
                    let c = dag.resolve_label(&s.label)?;
                    cache.insert(&s.label, c.clone());
                    c
                }
            };
            steps.push((context, s.step));
        }
        resolved.push(steps);
    }
    Ok(split_resolved(resolved))
}

/// Empirical visitation counts of one context's demonstrations.
#[derive(Debug, Clone, PartialEq)]
pub struct VisitationStats {
    /// State visit counts `μ_D`.
    pub mu: Vec<f64>,
    /// `μ_D` minus `γ·T(s,a,·)` for every demonstrated step.
    pub nu: Vec<f64>,
    pub steps: usize,
    pub trajectories: usize,
}

pub fn svf(mdp: &TabularMdp, trajectories: &[Trajectory]) -> Result<VisitationStats> {
    let n = mdp.n_states();
    let gamma = mdp.discount();
    let mut mu = vec![0.0; n];
    let mut nu = vec![0.0; n];
    let mut steps = 0;
    for step in trajectories.iter().flat_map(|t| &t.steps) {
        if step.state >= n || step.action >= mdp.n_actions() {
            return Err(Error::Dimension {
                what: "demo step",
                expected: n,
                got: step.state,
            });
        }
        mu[step.state] += 1.0;
        nu[step.state] += 1.0;
        if !mdp.is_terminal(step.state) {
            for &(next, p) in mdp.successors(step.state, step.action) {
                nu[next] -= gamma * p;
            }
        }
        steps += 1;
    }
    Ok(VisitationStats {
        mu,
        nu,
        steps,
        trajectories: trajectories.len(),
    })
}

/// Default occupancy horizon: the discounted tail after it is below
/// [`PROPAGATE_TOL`] per unit of initial mass.
pub fn default_horizon(gamma: f64) -> usize {
    discount_horizon(gamma, PROPAGATE_TOL * (1.0 - gamma))
}

/// Expected visitation `μ_R` of the soft-optimal policy for `reward`,
/// started from `nu`.
pub fn expected_svf(mdp: &TabularMdp, reward: &RewardVector, nu: &[f64], vi_tol: f64, propagate_iters: usize) -> Result<Vec<f64>> {
    let soft = soft_value_iteration(mdp, reward, vi_tol, crate::mdp::DEFAULT_MAX_ITERS)?;
    occupancy_from_initial(mdp, &soft.policy, nu, propagate_iters)
}

/// Occupancy from `nu`: exactly `iters` steps when given, otherwise up to
/// [`default_horizon`] steps, stopping once the tail bound drops below
/// [`PROPAGATE_TOL`] per unit of `|nu|_1`.
fn propagate(mdp: &TabularMdp, policy: &StochasticPolicy, nu: &[f64], iters: Option<usize>) -> Result<Vec<f64>> {
    match iters {
        Some(n) => occupancy_from_initial(mdp, policy, nu, n),
        None => occupancy_with_tolerance(mdp, policy, nu, default_horizon(mdp.discount()), PROPAGATE_TOL * l1_norm(nu)),
    }
}

/// `−Σ (Q(s,a) − V(s))` over the demonstrated steps.
pub fn demo_nll(values: &ValueFunctions, trajectories: &[Trajectory]) -> f64 {
    trajectories
        .iter()
        .flat_map(|t| &t.steps)
        .map(|s| values.v[s.state] - values.q(s.state, s.action))
        .sum()
}

/// Reward learners compared in the experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Algorithm {
    /// Modular net over the context DAG, trained on abstracted subtask MDPs.
    Chirl,
    /// Same modular net, trained on the flat MDP of every context.
    ChirlNoAbstraction,
    /// One monolithic net over `[φ; one-hot context]`.
    DeepIrl,
    /// Linear reward over `[φ; one-hot context]`.
    MaxEntLinear,
    /// One independent net per context over `[φ; one-hot context]`.
    Hirl,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [
        Algorithm::Chirl,
        Algorithm::ChirlNoAbstraction,
        Algorithm::DeepIrl,
        Algorithm::MaxEntLinear,
        Algorithm::Hirl,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Chirl => "chirl",
            Algorithm::ChirlNoAbstraction => "chirl-no-abstraction",
            Algorithm::DeepIrl => "deepirl",
            Algorithm::MaxEntLinear => "maxent",
            Algorithm::Hirl => "hirl",
        }
    }

    pub fn model_kind(self) -> ModelKind {
        match self {
            Algorithm::Chirl | Algorithm::ChirlNoAbstraction => ModelKind::Modular,
            Algorithm::DeepIrl => ModelKind::Monolithic,
            Algorithm::MaxEntLinear => ModelKind::Linear,
            Algorithm::Hirl => ModelKind::PerContext,
        }
    }

    /// Whether training runs on abstracted subtask MDPs where the
    /// environment provides them.
    pub fn uses_abstraction(self) -> bool {
        self == Algorithm::Chirl
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Config(alloc::format!("unknown algorithm `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Modular,
    Monolithic,
    Linear,
    PerContext,
}

/// Gradients for every net of a [`RewardModel`].
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGradients(pub Vec<ParamGradients>);

impl ModelGradients {
    pub fn zeros_like(model: &RewardModel) -> Self {
        Self(model.nets.iter().map(|n| ParamGradients::zeros(n.n_params())).collect())
    }

    pub fn fill_zero(&mut self) {
        for g in &mut self.0 {
            g.as_mut_slice().fill(0.0);
        }
    }

    pub fn scale(&mut self, c: f64) {
        self.0.iter_mut().for_each(|g| g.scale(c));
    }

    pub fn flat(&self) -> Vec<f64> {
        self.0.iter().flat_map(|g| g.as_slice().iter().copied()).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(ParamGradients::is_finite)
    }
}

/// A reward function of (context, state features) backed by one or more
/// modular nets.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardModel {
    kind: ModelKind,
    nets: Vec<ModularRewardNet>,
    contexts: Vec<Context>,
    base_dim: usize,
}

impl RewardModel {
    /// `base_dim` is the state feature width; the context one-hot is
    /// appended for the baseline kinds.
    pub fn new(kind: ModelKind, dag: &ContextDag, base_dim: usize, shape: &NetShape, seed: u64) -> Result<Self> {
        let contexts = dag.enumerate_contexts()?;
        let k = contexts.len();
        let nets = match kind {
            ModelKind::Modular => vec![ModularRewardNet::new(dag.clone(), base_dim, shape)?],
            ModelKind::Monolithic => vec![ModularRewardNet::new(ContextDag::trivial(), base_dim + k, shape)?],
            ModelKind::Linear => vec![ModularRewardNet::new(ContextDag::trivial(), base_dim + k, &NetShape::linear())?],
            ModelKind::PerContext => (0..k)
                .map(|_| ModularRewardNet::new(ContextDag::trivial(), base_dim + k, shape))
                .collect::<Result<_>>()?,
        };
        let mut model = Self {
            kind,
            nets,
            contexts,
            base_dim,
        };
        model.init_params(seed);
        Ok(model)
    }

    pub fn init_params(&mut self, seed: u64) {
        for (i, net) in self.nets.iter_mut().enumerate() {
            net.init_params(seed.wrapping_add(i as u64));
        }
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn nets(&self) -> &[ModularRewardNet] {
        &self.nets
    }

    pub fn nets_mut(&mut self) -> &mut [ModularRewardNet] {
        &mut self.nets
    }

    pub fn contexts(&self) -> &[Context] {
        &self.contexts
    }

    pub fn base_dim(&self) -> usize {
        self.base_dim
    }

    pub fn n_params(&self) -> usize {
        self.nets.iter().map(ModularRewardNet::n_params).sum()
    }

    fn context_index(&self, context: &Context) -> Result<usize> {
        self.contexts.iter().position(|c| c == context).ok_or(Error::UnknownContext)
    }

    /// The net that scores `context` and the context to pass to it.
    fn route(&self, context: &Context) -> Result<(usize, Context)> {
        match self.kind {
            ModelKind::Modular => {
                self.context_index(context)?;
                Ok((0, context.clone()))
            }
            ModelKind::Monolithic | ModelKind::Linear => {
                self.context_index(context)?;
                Ok((0, Context::trivial()))
            }
            ModelKind::PerContext => Ok((self.context_index(context)?, Context::trivial())),
        }
    }

    /// Net input rows for `context`: the state features, with the context
    /// one-hot appended for the baseline kinds.
    pub fn input_features<'a>(&self, context: &Context, features: &'a [f64]) -> Result<Cow<'a, [f64]>> {
        let d = self.base_dim;
        if d == 0 || features.len() % d != 0 {
            return Err(Error::Dimension {
                what: "feature matrix",
                expected: d,
                got: features.len(),
            });
        }
        if self.kind == ModelKind::Modular {
            self.context_index(context)?;
            return Ok(Cow::Borrowed(features));
        }
        let k = self.contexts.len();
        let index = self.context_index(context)?;
        let mut out = Vec::with_capacity(features.len() / d * (d + k));
        for row in features.chunks(d) {
            out.extend_from_slice(row);
            out.extend((0..k).map(|j| if j == index { 1.0 } else { 0.0 }));
        }
        Ok(Cow::Owned(out))
    }

    /// Reward from prepared net input (see [`input_features`](Self::input_features)).
    pub fn reward_from_input(&self, context: &Context, input: &[f64]) -> Result<RewardVector> {
        let (net, inner) = self.route(context)?;
        self.nets[net].forward(&inner, input)
    }

    pub fn reward(&self, context: &Context, features: &[f64]) -> Result<RewardVector> {
        let input = self.input_features(context, features)?;
        self.reward_from_input(context, &input)
    }

    /// Adds `upstream·∂R/∂θ + λ1·sgn(θκ) + λ2·θκ` into `grads`.
    pub fn accumulate_gradient(
        &self,
        context: &Context,
        input: &[f64],
        upstream: &[f64],
        l1: f64,
        l2: f64,
        grads: &mut ModelGradients,
    ) -> Result<()> {
        let (net, inner) = self.route(context)?;
        self.nets[net].backward_into(&inner, input, upstream, &mut grads.0[net])?;
        self.nets[net].regularizer_grad_into(l1, l2, &inner, &mut grads.0[net])
    }

    pub fn regularizer_value(&self, context: &Context, l1: f64, l2: f64) -> Result<f64> {
        let (net, inner) = self.route(context)?;
        self.nets[net].regularizer_value(l1, l2, &inner)
    }

    pub fn sgd_step(&mut self, grads: &ModelGradients, lr: f64) -> Result<()> {
        if !grads.is_finite() {
            return Err(Error::NonFinite("gradients"));
        }
        for (net, g) in self.nets.iter_mut().zip(&grads.0) {
            net.sgd_step(g, lr)?;
        }
        Ok(())
    }

    /// All parameters, net by net.
    pub fn flat_params(&self) -> Vec<f64> {
        self.nets.iter().flat_map(|n| n.params().iter().copied()).collect()
    }

    pub fn set_flat_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.n_params() {
            return Err(Error::Dimension {
                what: "parameter vector",
                expected: self.n_params(),
                got: params.len(),
            });
        }
        let mut at = 0;
        for net in &mut self.nets {
            let n = net.n_params();
            net.set_params(params[at..at + n].to_vec())?;
            at += n;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Optimizer {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IrlConfig {
    pub learning_rate: f64,
    pub l1: f64,
    pub l2: f64,
    pub epochs: usize,
    pub vi_tol: f64,
    pub vi_max_iters: usize,
    /// Occupancy horizon; `None` uses [`default_horizon`].
    pub propagate_iters: Option<usize>,
    pub seed: u64,
    /// One randomly drawn context per step instead of a full sweep.
    pub sample_context: bool,
    /// Divide each context's visitation statistics by its trajectory count.
    pub normalize_by_trajectories: bool,
    pub optimizer: Optimizer,
    /// Evaluate EVD every this many epochs and after the last; 0 evaluates
    /// only after the last epoch.
    pub eval_every: usize,
}

impl Default for IrlConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-2,
            l1: 1e-3,
            l2: 0.8,
            epochs: 500,
            vi_tol: 1e-6,
            vi_max_iters: crate::mdp::DEFAULT_MAX_ITERS,
            propagate_iters: None,
            seed: 0,
            sample_context: false,
            normalize_by_trajectories: false,
            optimizer: Optimizer::Sgd,
            eval_every: 1,
        }
    }
}

impl IrlConfig {
    pub fn validate(&self) -> Result<()> {
        let rates = [self.learning_rate, self.l1, self.l2];
        if rates.iter().any(|r| !r.is_finite() || *r < 0.0) {
            return Err(Error::Config("learning rate and regularizers must be finite and nonnegative".into()));
        }
        if !(self.vi_tol > 0.0) {
            return Err(Error::Config("value-iteration tolerance must be positive".into()));
        }
        Ok(())
    }
}

/// One context's training data: dynamics (with state features) and demos.
#[derive(Debug, Clone)]
pub struct TrainingTask {
    pub context: Context,
    pub mdp: Arc<TabularMdp>,
    pub trajectories: Vec<Trajectory>,
}

/// One context's evaluation: dynamics whose features feed the model, and
/// the ground-truth side of EVD.
#[derive(Debug, Clone)]
pub struct EvalTask {
    pub context: Context,
    pub mdp: Arc<TabularMdp>,
    pub reference: EvdReference,
}

/// Mean normalized EVD of `model` over `tasks`.
pub fn mean_evd(model: &RewardModel, tasks: &[EvalTask]) -> Result<f64> {
    if tasks.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for task in tasks {
        let reward = model.reward(&task.context, task.mdp.feature_matrix())?;
        total += task.reference.evd(&task.mdp, &reward)?;
    }
    Ok(total / tasks.len() as f64)
}

/// Source of wall-clock seconds for epoch timing.
pub trait Clock {
    fn now_seconds(&self) -> f64;
}

/// Clock that always reads zero.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoClock;

impl Clock for NoClock {
    fn now_seconds(&self) -> f64 {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    /// Sum of the per-context losses seen during the epoch.
    pub loss: f64,
    /// NaN when the epoch was not evaluated.
    pub evd: f64,
    pub epoch_seconds: f64,
}

struct Prepared<'a> {
    task: &'a TrainingTask,
    input: Vec<f64>,
    stats: VisitationStats,
    scale: f64,
}

fn prepare<'a>(model: &RewardModel, tasks: &'a [TrainingTask], cfg: &IrlConfig) -> Result<Vec<Prepared<'a>>> {
    tasks
        .iter()
        .map(|task| {
            let input = model.input_features(&task.context, task.mdp.feature_matrix())?.into_owned();
            let stats = svf(&task.mdp, &task.trajectories)?;
            let scale = if cfg.normalize_by_trajectories && stats.trajectories > 0 {
                1.0 / stats.trajectories as f64
            } else {
                1.0
            };
            Ok(Prepared {
                task,
                input,
                stats,
                scale,
            })
        })
        .collect()
}

/// Loss of one context; adds its gradient into `grads`. With `warm`, soft
/// VI starts from and updates the stored values.
fn context_pass(
    model: &RewardModel,
    p: &Prepared,
    cfg: &IrlConfig,
    warm: Option<&mut Vec<f64>>,
    grads: &mut ModelGradients,
) -> Result<f64> {
    let context = &p.task.context;
    let reward = model.reward_from_input(context, &p.input)?;
    let soft = match warm {
        Some(v) => {
            let soft = soft_value_iteration_from(&p.task.mdp, &reward, v, cfg.vi_tol, cfg.vi_max_iters)?;
            v.clone_from(&soft.values.v);
            soft
        }
        None => soft_value_iteration(&p.task.mdp, &reward, cfg.vi_tol, cfg.vi_max_iters)?,
    };
    let mu_r = propagate(&p.task.mdp, &soft.policy, &p.stats.nu, cfg.propagate_iters)?;
    let upstream: Vec<f64> = mu_r.iter().zip(&p.stats.mu).map(|(r, d)| p.scale * (r - d)).collect();
    let nll = p.scale * demo_nll(&soft.values, &p.task.trajectories);
    let reg = model.regularizer_value(context, cfg.l1, cfg.l2)?;
    model.accumulate_gradient(context, &p.input, &upstream, cfg.l1, cfg.l2, grads)?;
    Ok(nll + reg)
}

/// Total loss `Σκ (NLLκ + λ1|θκ| + ½λ2‖θκ‖²)`.
pub fn loss(model: &RewardModel, tasks: &[TrainingTask], cfg: &IrlConfig) -> Result<f64> {
    let prepared = prepare(model, tasks, cfg)?;
    let mut total = 0.0;
    for p in &prepared {
        let context = &p.task.context;
        let reward = model.reward_from_input(context, &p.input)?;
        let soft = soft_value_iteration(&p.task.mdp, &reward, cfg.vi_tol, cfg.vi_max_iters)?;
        total += p.scale * demo_nll(&soft.values, &p.task.trajectories);
        total += model.regularizer_value(context, cfg.l1, cfg.l2)?;
    }
    Ok(total)
}

/// Gradient of [`loss`]: per context `(μ_R − μ_D)·∂R/∂θ` plus the
/// regularizer gradient, summed over contexts.
pub fn gradient(model: &RewardModel, tasks: &[TrainingTask], cfg: &IrlConfig) -> Result<ModelGradients> {
    let prepared = prepare(model, tasks, cfg)?;
    let mut grads = ModelGradients::zeros_like(model);
    for p in &prepared {
        context_pass(model, p, cfg, None, &mut grads)?;
    }
    Ok(grads)
}

enum OptState {
    Sgd,
    Adam(Vec<Adam>),
}

impl OptState {
    fn new(model: &RewardModel, cfg: &IrlConfig) -> Self {
        match cfg.optimizer {
            Optimizer::Sgd => OptState::Sgd,
            Optimizer::Adam => OptState::Adam(model.nets.iter().map(|n| Adam::new(n.n_params(), cfg.learning_rate)).collect()),
        }
    }

    fn step(&mut self, model: &mut RewardModel, grads: &ModelGradients, lr: f64) -> Result<()> {
        match self {
            OptState::Sgd => model.sgd_step(grads, lr),
            OptState::Adam(states) => {
                for ((opt, net), g) in states.iter_mut().zip(&mut model.nets).zip(&grads.0) {
                    opt.step(net, g)?;
                }
                Ok(())
            }
        }
    }
}

/// Runs `cfg.epochs` epochs. Each epoch either sweeps every task and takes
/// one step on the averaged gradient, or (with `sample_context`) takes one
/// step per randomly drawn task, as many draws as there are tasks.
///
/// `evaluate` is called outside the timed section.
pub fn train(
    model: &mut RewardModel,
    tasks: &[TrainingTask],
    cfg: &IrlConfig,
    clock: &dyn Clock,
    evaluate: &mut dyn FnMut(&RewardModel) -> Result<f64>,
) -> Result<Vec<EpochLog>> {
    cfg.validate()?;
    let mut logs = Vec::with_capacity(cfg.epochs);
    if cfg.epochs == 0 || tasks.is_empty() {
        return Ok(logs);
    }
    let prepared = prepare(model, tasks, cfg)?;
    let mut grads = ModelGradients::zeros_like(model);
    let mut opt = OptState::new(model, cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let k = prepared.len();
    let mut warm: Vec<Vec<f64>> = prepared.iter().map(|p| vec![0.0; p.task.mdp.n_states()]).collect();
    for epoch in 1..=cfg.epochs {
        let start = clock.now_seconds();
        let mut epoch_loss = 0.0;
        if cfg.sample_context {
            for _ in 0..k {
                let i = rng.random_range(0..k);
                grads.fill_zero();
                epoch_loss += context_pass(model, &prepared[i], cfg, Some(&mut warm[i]), &mut grads)?;
                check(epoch, epoch_loss, &grads)?;
                opt.step(model, &grads, cfg.learning_rate)?;
            }
        } else {
            grads.fill_zero();
            for (p, v) in prepared.iter().zip(&mut warm) {
                epoch_loss += context_pass(model, p, cfg, Some(v), &mut grads)?;
            }
            grads.scale(1.0 / k as f64);
            check(epoch, epoch_loss, &grads)?;
            opt.step(model, &grads, cfg.learning_rate)?;
        }
        let epoch_seconds = clock.now_seconds() - start;
        let due = epoch == cfg.epochs || (cfg.eval_every > 0 && epoch % cfg.eval_every == 0);
        let evd = if due { evaluate(model)? } else { f64::NAN };
        logs.push(EpochLog {
            epoch,
            loss: epoch_loss,
            evd,
            epoch_seconds,
        });
    }
    Ok(logs)
}

fn check(epoch: usize, loss: f64, grads: &ModelGradients) -> Result<()> {
    if !loss.is_finite() {
        return Err(Error::TrainingDiverged {
            epoch,
            reason: "non-finite loss".to_string(),
        });
    }
    if !grads.is_finite() {
        return Err(Error::TrainingDiverged {
            epoch,
            reason: "non-finite gradient".to_string(),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests;
