//! Taxi with a MAXQ task hierarchy.
//!
//! Flat states are `(x, y, p, d)`: taxi cell, passenger location (one of the
//! four landmarks or [`IN_TAXI`]) and destination landmark. The root calls
//! Get then Put; both call the parameterized Nav(t) macro. Each subtask has
//! an abstracted sub-MDP that drops the irrelevant dimensions:
//!
//! * Nav(t): `(x, y)`, primitive moves, terminal at landmark `t`.
//! * Get: `(x, y, p)`, actions Nav(R..B) and Pickup, terminal once `p` is
//!   [`IN_TAXI`].
//! * Put: `(x, y, d)` with the passenger aboard, actions Nav(R..B) and
//!   Putdown, plus one absorbing "delivered" state.
//!
//! The flat version of every subtask runs the same actions over all flat
//! states and is used by learners without abstraction and for evaluation.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::grid::{Direction, GridLayout};
use super::{expert_policy, sample_index, sample_successor, ContextEnv, EnvBundle, Expert};
use crate::context::{Context, ContextDag, DagNode};
use crate::irl::{DemoSet, EvalTask, RewardModel, Step, TrainingTask, Trajectory};
use crate::mdp::{hard_value_iteration, RewardVector, TabularMdp, Transition, DEFAULT_MAX_ITERS};
use crate::metrics::EvdReference;
use crate::{Error, Result};

pub const GRID_SIZES: [usize; 4] = [5, 10, 15, 20];
pub const LANDMARKS: [&str; 4] = ["R", "G", "Y", "B"];
/// Passenger value meaning "riding in the taxi".
pub const IN_TAXI: usize = 4;
/// Marks a state dimension dropped by abstraction.
pub const IGNORE: usize = usize::MAX;
pub const DISCOUNT: f64 = 0.9;

pub const STEP_REWARD: f64 = -1.0;
pub const ILLEGAL_REWARD: f64 = -10.0;
pub const DELIVERY_REWARD: f64 = 20.0;

/// Action index of Pickup (in Get) and Putdown (in Put); 0..=3 are Nav(t).
pub const PICK_OR_DROP: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subtask {
    Get,
    Put,
    Nav(usize),
}

impl Subtask {
    pub fn n_actions(self) -> usize {
        match self {
            Subtask::Nav(_) => 4,
            Subtask::Get | Subtask::Put => 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TaxiState {
    pub x: usize,
    pub y: usize,
    /// Landmark index, [`IN_TAXI`], or [`IGNORE`].
    pub p: usize,
    /// Landmark index or [`IGNORE`].
    pub d: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Primitive {
    Move(Direction),
    Pickup,
    Putdown,
}

/// One MAXQ node: its abstract state space, terminal set and actions.
#[derive(Debug, Clone, PartialEq)]
pub struct MaxqSubtask {
    pub id: Subtask,
    /// Abstract states, in index order; `None` is the delivered sink.
    pub states: Vec<Option<TaxiState>>,
    pub terminal: Vec<bool>,
    /// Nav(t) for macro actions, primitive moves otherwise.
    pub actions: Vec<&'static str>,
}

impl MaxqSubtask {
    pub fn active_count(&self) -> usize {
        self.terminal.iter().filter(|t| !**t).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaxiDomain {
    pub size: usize,
    pub layout: GridLayout,
    pub discount: f64,
    landmarks: [usize; 4],
}

impl TaxiDomain {
    pub fn new(size: usize) -> Result<Self> {
        if size == 0 || size % 5 != 0 {
            return Err(Error::Config(alloc::format!("taxi grid size must be a positive multiple of 5, got {size}")));
        }
        let layout = GridLayout::classic_taxi(size / 5);
        let mut landmarks = [0; 4];
        for (i, name) in LANDMARKS.iter().enumerate() {
            let l = layout.landmark(name).expect("classic layout has all landmarks");
            landmarks[i] = layout.cell(l.x, l.y);
        }
        Ok(Self {
            size,
            layout,
            discount: DISCOUNT,
            landmarks,
        })
    }

    pub fn n_cells(&self) -> usize {
        self.size * self.size
    }

    pub fn n_flat(&self) -> usize {
        self.n_cells() * 5 * 4
    }

    pub fn landmark_cell(&self, t: usize) -> usize {
        self.landmarks[t]
    }

    pub fn flat_index(&self, s: TaxiState) -> usize {
        (self.layout.cell(s.x, s.y) * 5 + s.p) * 4 + s.d
    }

    pub fn flat_state(&self, index: usize) -> TaxiState {
        let d = index % 4;
        let p = (index / 4) % 5;
        let (x, y) = self.layout.coords(index / 20);
        TaxiState { x, y, p, d }
    }

    /// A flat state is reachable unless the passenger waits at its own
    /// destination.
    pub fn is_valid(&self, s: TaxiState) -> bool {
        s.p == IN_TAXI || s.p != s.d
    }

    pub fn feature_dim(&self) -> usize {
        self.n_cells() + 12
    }

    /// Cell one-hot, passenger one-hot + IGNORE flag, destination one-hot +
    /// IGNORE flag, subtask-exit flag. The sink has no cell.
    pub fn features(&self, state: Option<TaxiState>, exit: bool) -> Vec<f64> {
        let n = self.n_cells();
        let mut f = vec![0.0; n + 12];
        let (p, d) = match state {
            Some(s) => {
                f[self.layout.cell(s.x, s.y)] = 1.0;
                (s.p, s.d)
            }
            None => (IGNORE, IGNORE),
        };
        f[n + if p == IGNORE { 5 } else { p }] = 1.0;
        f[n + 6 + if d == IGNORE { 4 } else { d }] = 1.0;
        f[n + 11] = if exit { 1.0 } else { 0.0 };
        f
    }

    /// Abstract states of a subtask in index order.
    pub fn subtask(&self, id: Subtask) -> MaxqSubtask {
        let n = self.n_cells();
        let mut states = Vec::new();
        let mut terminal = Vec::new();
        for cell in 0..n {
            let (x, y) = self.layout.coords(cell);
            match id {
                Subtask::Nav(t) => {
                    states.push(Some(TaxiState { x, y, p: IGNORE, d: IGNORE }));
                    terminal.push(cell == self.landmarks[t]);
                }
                Subtask::Get => {
                    for p in 0..5 {
                        states.push(Some(TaxiState { x, y, p, d: IGNORE }));
                        terminal.push(p == IN_TAXI);
                    }
                }
                Subtask::Put => {
                    for d in 0..4 {
                        states.push(Some(TaxiState { x, y, p: IGNORE, d }));
                        terminal.push(false);
                    }
                }
            }
        }
        if id == Subtask::Put {
            states.push(None);
            terminal.push(true);
        }
        let actions = match id {
            Subtask::Nav(_) => vec!["North", "South", "East", "West"],
            Subtask::Get => vec!["Nav(R)", "Nav(G)", "Nav(Y)", "Nav(B)", "Pickup"],
            Subtask::Put => vec!["Nav(R)", "Nav(G)", "Nav(Y)", "Nav(B)", "Putdown"],
        };
        MaxqSubtask {
            id,
            states,
            terminal,
            actions,
        }
    }

    /// Abstract state-space size, not counting Put's delivered sink.
    pub fn abstract_size(&self, id: Subtask) -> usize {
        match id {
            Subtask::Nav(_) => self.n_cells(),
            Subtask::Get => self.n_cells() * 5,
            Subtask::Put => self.n_cells() * 4,
        }
    }

    /// Abstract index of a flat state for a subtask.
    pub fn abstract_index(&self, id: Subtask, s: TaxiState) -> usize {
        let cell = self.layout.cell(s.x, s.y);
        match id {
            Subtask::Nav(_) => cell,
            Subtask::Get => cell * 5 + s.p,
            Subtask::Put if s.p == IN_TAXI => cell * 4 + s.d,
            Subtask::Put => self.n_cells() * 4,
        }
    }

    pub fn abstraction_map(&self, id: Subtask) -> Vec<usize> {
        (0..self.n_flat()).map(|i| self.abstract_index(id, self.flat_state(i))).collect()
    }

    /// Termination of macro `Nav(t)`: the taxi ends on landmark `t`.
    pub fn nav_termination(&self, s: TaxiState, t: usize) -> TaxiState {
        let (x, y) = self.layout.coords(self.landmarks[t]);
        TaxiState { x, y, ..s }
    }

    /// Successor distribution of one flat-state action within a subtask.
    fn flat_outcomes(&self, id: Subtask, s: TaxiState, action: usize) -> Vec<(TaxiState, f64)> {
        let cell = self.layout.cell(s.x, s.y);
        match id {
            Subtask::Nav(_) => self
                .layout
                .noisy_step(s.x, s.y, Direction::ALL[action])
                .into_iter()
                .map(|(c, p)| {
                    let (x, y) = self.layout.coords(c);
                    (TaxiState { x, y, ..s }, p)
                })
                .collect(),
            Subtask::Get | Subtask::Put if action < 4 => vec![(self.nav_termination(s, action), 1.0)],
            Subtask::Get => {
                if s.p < 4 && cell == self.landmarks[s.p] {
                    vec![(TaxiState { p: IN_TAXI, ..s }, 1.0)]
                } else {
                    vec![(s, 1.0)]
                }
            }
            Subtask::Put => {
                if s.p == IN_TAXI && cell == self.landmarks[s.d] {
                    vec![(TaxiState { p: s.d, ..s }, 1.0)]
                } else {
                    vec![(s, 1.0)]
                }
            }
        }
    }

    pub fn flat_terminal(&self, id: Subtask, s: TaxiState) -> bool {
        match id {
            Subtask::Nav(t) => self.layout.cell(s.x, s.y) == self.landmarks[t],
            Subtask::Get => s.p == IN_TAXI,
            Subtask::Put => s.p != IN_TAXI,
        }
    }

    /// The subtask over all flat states, with flat features.
    pub fn flat_mdp(&self, id: Subtask) -> Result<TabularMdp> {
        let n = self.n_flat();
        let na = id.n_actions();
        let mut transitions = Vec::with_capacity(n * na * 3);
        let mut terminal = Vec::with_capacity(n);
        let mut features = Vec::with_capacity(n * self.feature_dim());
        for i in 0..n {
            let s = self.flat_state(i);
            let term = self.flat_terminal(id, s);
            terminal.push(term);
            features.extend(self.features(Some(s), term));
            for a in 0..na {
                if term {
                    transitions.push(Transition::new(i, a, i, 1.0));
                } else {
                    for (next, p) in self.flat_outcomes(id, s, a) {
                        transitions.push(Transition::new(i, a, self.flat_index(next), p));
                    }
                }
            }
        }
        TabularMdp::new(n, na, self.discount, transitions, self.feature_dim(), features, terminal)
    }

    /// The abstracted subtask MDP.
    pub fn abstract_mdp(&self, id: Subtask) -> Result<TabularMdp> {
        let task = self.subtask(id);
        let n = task.states.len();
        let na = id.n_actions();
        let mut transitions = Vec::with_capacity(n * na * 3);
        let mut features = Vec::with_capacity(n * self.feature_dim());
        for (i, state) in task.states.iter().enumerate() {
            features.extend(self.features(*state, task.terminal[i]));
            for a in 0..na {
                match state {
                    Some(s) if !task.terminal[i] => {
                        // a representative flat state: dropped dims filled in
                        let rep = TaxiState {
                            p: if s.p == IGNORE { IN_TAXI } else { s.p },
                            d: if s.d == IGNORE { 0 } else { s.d },
                            ..*s
                        };
                        for (next, p) in self.flat_outcomes(id, rep, a) {
                            transitions.push(Transition::new(i, a, self.abstract_index(id, next), p));
                        }
                    }
                    _ => transitions.push(Transition::new(i, a, i, 1.0)),
                }
            }
        }
        TabularMdp::new(n, na, self.discount, transitions, self.feature_dim(), features, task.terminal)
    }

    /// Subtask pseudo-reward: −1 on active states, 0 on terminal ones.
    pub fn pseudo_reward(mdp: &TabularMdp) -> Result<RewardVector> {
        RewardVector::new((0..mdp.n_states()).map(|s| if mdp.is_terminal(s) { 0.0 } else { STEP_REWARD }).collect())
    }

    /// Flat simulator: one primitive action with its environment reward.
    pub fn simulate(&self, rng: &mut impl Rng, s: TaxiState, action: Primitive) -> (TaxiState, f64) {
        let cell = self.layout.cell(s.x, s.y);
        match action {
            Primitive::Move(dir) => {
                let outcomes = self.layout.noisy_step(s.x, s.y, dir);
                let probs: Vec<f64> = outcomes.iter().map(|o| o.1).collect();
                let (x, y) = self.layout.coords(outcomes[sample_index(rng, &probs)].0);
                (TaxiState { x, y, ..s }, STEP_REWARD)
            }
            Primitive::Pickup if s.p < 4 && cell == self.landmarks[s.p] => (TaxiState { p: IN_TAXI, ..s }, STEP_REWARD),
            Primitive::Putdown if s.p == IN_TAXI && cell == self.landmarks[s.d] => (TaxiState { p: s.d, ..s }, DELIVERY_REWARD),
            Primitive::Pickup | Primitive::Putdown => (s, ILLEGAL_REWARD),
        }
    }
}

pub fn taxi_dag() -> ContextDag {
    let nodes = vec![
        DagNode::root("root"),
        DagNode::internal("get", "subtask", &["Get"]),
        DagNode::internal("put", "subtask", &["Put"]),
        DagNode::internal("nav", "nav", &LANDMARKS),
        DagNode::leaf("leaf"),
    ];
    let edges = [
        ("root", "get"),
        ("root", "put"),
        ("get", "leaf"),
        ("put", "leaf"),
        ("get", "nav"),
        ("put", "nav"),
        ("nav", "leaf"),
    ];
    ContextDag::from_named_edges(nodes, &edges).expect("static DAG is valid")
}

/// Per-context Taxi data beyond the flat [`ContextEnv`].
#[derive(Debug, Clone)]
pub struct TaxiContext {
    pub context: Context,
    pub subtask: Subtask,
    /// Context of the calling subtask (for Nav), else `None`.
    pub parent: Option<usize>,
    pub abstract_mdp: Arc<TabularMdp>,
    /// Flat state -> abstract state.
    pub map: Arc<Vec<usize>>,
    /// Flat dynamics with the abstract state's features on every flat state.
    pub lifted_mdp: Arc<TabularMdp>,
}

#[derive(Debug, Clone)]
pub struct TaxiBundle {
    pub domain: TaxiDomain,
    /// Flat MDPs, flat ground truth and evaluation start distributions.
    pub env: EnvBundle,
    pub subtasks: Vec<TaxiContext>,
}

/// Outcome of running learned subtask policies on the flat simulator.
#[derive(Debug, Clone, PartialEq)]
pub struct Execution {
    pub trace: Vec<(TaxiState, Primitive)>,
    pub success: bool,
    pub total_reward: f64,
    pub budget_exceeded: bool,
}

pub fn build_taxi(size: usize) -> Result<TaxiBundle> {
    let domain = TaxiDomain::new(size)?;
    let dag = taxi_dag();
    let contexts = dag.enumerate_contexts()?;
    let ids = [Subtask::Get, Subtask::Put, Subtask::Nav(0), Subtask::Nav(1), Subtask::Nav(2), Subtask::Nav(3)];
    let mut flat = Vec::new();
    let mut abstracted = Vec::new();
    let mut maps = Vec::new();
    let mut lifted = Vec::new();
    for id in ids {
        let f = domain.flat_mdp(id)?;
        let a = domain.abstract_mdp(id)?;
        let map = domain.abstraction_map(id);
        let mut feats = Vec::with_capacity(f.n_states() * domain.feature_dim());
        for &m in &map {
            feats.extend_from_slice(a.features(m));
        }
        lifted.push(Arc::new(f.with_features(domain.feature_dim(), feats)?));
        flat.push(Arc::new(f));
        abstracted.push(Arc::new(a));
        maps.push(Arc::new(map));
    }
    let slot = |id: Subtask| ids.iter().position(|&x| x == id).expect("known subtask");

    let mut envs = Vec::with_capacity(contexts.len());
    let mut subtasks = Vec::with_capacity(contexts.len());
    for context in &contexts {
        let label = dag.label(context);
        let id = match label.iter().find(|(k, _)| k == "nav") {
            Some((_, t)) => Subtask::Nav(LANDMARKS.iter().position(|l| l == t).expect("landmark value")),
            None if label[0].1 == "Get" => Subtask::Get,
            None => Subtask::Put,
        };
        let parent = match id {
            Subtask::Nav(_) => {
                let parent_label = [label[0].clone()];
                let pc = dag.resolve_label(&parent_label)?;
                contexts.iter().position(|c| *c == pc)
            }
            _ => None,
        };
        let k = slot(id);
        let mdp = flat[k].clone();
        let initial = start_distribution(&domain, id, &mdp);
        envs.push(ContextEnv {
            context: context.clone(),
            true_reward: TaxiDomain::pseudo_reward(&mdp)?,
            mdp,
            initial,
        });
        subtasks.push(TaxiContext {
            context: context.clone(),
            subtask: id,
            parent,
            abstract_mdp: abstracted[k].clone(),
            map: maps[k].clone(),
            lifted_mdp: lifted[k].clone(),
        });
    }
    Ok(TaxiBundle {
        domain,
        env: EnvBundle {
            name: "taxi",
            dag,
            contexts: envs,
        },
        subtasks,
    })
}

/// Uniform over valid, non-terminal flat states where the subtask can be
/// invoked: Get needs the passenger waiting, Put needs it aboard.
fn start_distribution(domain: &TaxiDomain, id: Subtask, mdp: &TabularMdp) -> Vec<f64> {
    let ok: Vec<bool> = (0..mdp.n_states())
        .map(|i| {
            let s = domain.flat_state(i);
            let callable = match id {
                Subtask::Get => s.p != IN_TAXI,
                Subtask::Put => s.p == IN_TAXI,
                Subtask::Nav(_) => true,
            };
            callable && domain.is_valid(s) && !mdp.is_terminal(i)
        })
        .collect();
    let count = ok.iter().filter(|x| **x).count().max(1) as f64;
    ok.iter().map(|&x| if x { 1.0 / count } else { 0.0 }).collect()
}

impl TaxiBundle {
    pub fn n_contexts(&self) -> usize {
        self.subtasks.len()
    }

    fn nav_context(&self, parent: usize, t: usize) -> usize {
        self.subtasks
            .iter()
            .position(|c| c.parent == Some(parent) && c.subtask == Subtask::Nav(t))
            .expect("every Get/Put context has Nav children")
    }

    fn top_context(&self, id: Subtask) -> usize {
        self.subtasks.iter().position(|c| c.subtask == id).expect("Get and Put contexts exist")
    }

    /// Uniform over starts with the passenger waiting away from its
    /// destination.
    pub fn sample_start(&self, rng: &mut impl Rng) -> TaxiState {
        let cells = self.domain.n_cells();
        let cell = rng.random_range(0..cells);
        let p = rng.random_range(0..4);
        let mut d = rng.random_range(0..3);
        if d >= p {
            d += 1;
        }
        let (x, y) = self.domain.layout.coords(cell);
        TaxiState { x, y, p, d }
    }

    /// Expert episodes on flat states. Every subtask invocation becomes one
    /// trajectory of its context; Get/Put macro steps record where the
    /// called Nav ended.
    pub fn generate_episodes(&self, n_episodes: usize, expert: Expert, seed: u64) -> Result<DemoSet> {
        let policies = self
            .env
            .contexts
            .iter()
            .map(|c| expert_policy(&c.mdp, &c.true_reward, expert))
            .collect::<Result<Vec<_>>>()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut set = DemoSet::new();
        let nav_budget = 10 * self.domain.n_cells();
        let top_budget = 20;
        for _ in 0..n_episodes {
            let mut s = self.domain.flat_index(self.sample_start(&mut rng));
            for id in [Subtask::Get, Subtask::Put] {
                let k = self.top_context(id);
                let mdp = &self.env.contexts[k].mdp;
                let mut steps = Vec::new();
                while !mdp.is_terminal(s) && steps.len() < top_budget {
                    let a = sample_index(&mut rng, policies[k].row(s));
                    let next = if a < PICK_OR_DROP {
                        let nk = self.nav_context(k, a);
                        let nav_mdp = &self.env.contexts[nk].mdp;
                        let mut nav_steps = Vec::new();
                        let mut cur = s;
                        while !nav_mdp.is_terminal(cur) && nav_steps.len() < nav_budget {
                            let m = sample_index(&mut rng, policies[nk].row(cur));
                            nav_steps.push(Step::new(cur, m));
                            cur = sample_successor(&mut rng, nav_mdp, cur, m);
                        }
                        let mut t = Trajectory::new(self.subtasks[nk].context.clone(), nav_steps);
                        t.truncated = !nav_mdp.is_terminal(cur);
                        set.push(t);
                        cur
                    } else {
                        sample_successor(&mut rng, mdp, s, a)
                    };
                    steps.push(Step::with_outcome(s, a, next));
                    s = next;
                }
                let mut t = Trajectory::new(self.subtasks[k].context.clone(), steps);
                t.truncated = !mdp.is_terminal(s);
                set.push(t);
            }
        }
        Ok(set)
    }

    /// Maps flat-state demos onto each context's abstract states.
    pub fn abstract_demos(&self, flat: &DemoSet) -> DemoSet {
        let mut out = DemoSet::new();
        for t in flat.iter() {
            let Some(c) = self.subtasks.iter().find(|c| c.context == t.context) else {
                continue;
            };
            let steps = t
                .steps
                .iter()
                .map(|s| Step {
                    state: c.map[s.state],
                    action: s.action,
                    outcome: s.outcome.map(|o| c.map[o]),
                })
                .collect();
            let mut mapped = Trajectory::new(t.context.clone(), steps);
            mapped.truncated = t.truncated;
            out.push(mapped);
        }
        out
    }

    /// Training tasks from flat-state demos, on abstract or flat MDPs.
    pub fn training_tasks(&self, flat_demos: &DemoSet, abstraction: bool) -> Vec<TrainingTask> {
        if !abstraction {
            return self.env.training_tasks(flat_demos);
        }
        let demos = self.abstract_demos(flat_demos);
        self.subtasks
            .iter()
            .map(|c| TrainingTask {
                context: c.context.clone(),
                mdp: c.abstract_mdp.clone(),
                trajectories: demos.trajectories(&c.context).to_vec(),
            })
            .collect()
    }

    /// Evaluation on the flat subtask MDPs; with `abstraction`, the model
    /// sees each flat state through its abstract state's features.
    pub fn eval_tasks(&self, abstraction: bool, tol: f64) -> Result<Vec<EvalTask>> {
        self.env
            .contexts
            .iter()
            .zip(&self.subtasks)
            .map(|(e, c)| {
                Ok(EvalTask {
                    context: e.context.clone(),
                    mdp: if abstraction { c.lifted_mdp.clone() } else { e.mdp.clone() },
                    reference: EvdReference::new(&e.mdp, &e.true_reward, &e.initial, tol)?,
                })
            })
            .collect()
    }

    /// Learned reward of every context on flat states.
    pub fn flat_rewards(&self, model: &RewardModel, abstraction: bool) -> Result<Vec<RewardVector>> {
        self.env
            .contexts
            .iter()
            .zip(&self.subtasks)
            .map(|(e, c)| {
                let mdp = if abstraction { &c.lifted_mdp } else { &e.mdp };
                model.reward(&e.context, mdp.feature_matrix())
            })
            .collect()
    }

    /// Greedy subtask policies from hard value iteration on `rewards`
    /// (one flat reward per context), in context order.
    pub fn greedy_policies(&self, rewards: &[RewardVector]) -> Result<Vec<Vec<usize>>> {
        if rewards.len() != self.n_contexts() {
            return Err(Error::Dimension {
                what: "per-context rewards",
                expected: self.n_contexts(),
                got: rewards.len(),
            });
        }
        self.env
            .contexts
            .iter()
            .zip(rewards)
            .map(|(e, r)| Ok(hard_value_iteration(&e.mdp, r, 1e-9, DEFAULT_MAX_ITERS)?.policy))
            .collect()
    }

    /// Root calls Get (unless the passenger is aboard) then Put; macros call
    /// Nav, which runs primitive moves until its landmark. Only primitive
    /// actions touch the simulator and count against `budget`.
    pub fn execute_hierarchical_policy(&self, policies: &[Vec<usize>], start: TaxiState, seed: u64, budget: usize) -> Execution {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = &self.domain;
        let mut s = start;
        let mut trace = Vec::new();
        let mut total_reward = 0.0;
        let mut success = false;
        // macro calls execute no primitive, so bound them separately
        let mut calls = 0;
        'root: for id in [Subtask::Get, Subtask::Put] {
            let k = self.top_context(id);
            while !d.flat_terminal(id, s) {
                if trace.len() >= budget || calls >= budget {
                    break 'root;
                }
                calls += 1;
                let a = policies[k][d.flat_index(s)];
                if a < PICK_OR_DROP {
                    let nk = self.nav_context(k, a);
                    while !d.flat_terminal(Subtask::Nav(a), s) {
                        if trace.len() >= budget {
                            break 'root;
                        }
                        let m = Primitive::Move(Direction::ALL[policies[nk][d.flat_index(s)]]);
                        trace.push((s, m));
                        let (next, r) = d.simulate(&mut rng, s, m);
                        total_reward += r;
                        s = next;
                    }
                } else {
                    let prim = if id == Subtask::Get { Primitive::Pickup } else { Primitive::Putdown };
                    trace.push((s, prim));
                    let (next, r) = d.simulate(&mut rng, s, prim);
                    total_reward += r;
                    success |= prim == Primitive::Putdown && r == DELIVERY_REWARD;
                    s = next;
                }
            }
        }
        let budget_exceeded = !success && (trace.len() >= budget || calls >= budget);
        Execution {
            trace,
            success,
            total_reward,
            budget_exceeded,
        }
    }

    /// Success rate over `episodes` random starts, and whether any context's
    /// reward was constant (its greedy policy is then pure tie-breaking).
    pub fn success_rate(&self, rewards: &[RewardVector], episodes: usize, seed: u64, budget: usize) -> Result<(f64, bool)> {
        let policies = self.greedy_policies(rewards)?;
        let degenerate = rewards.iter().any(|r| r.iter().all(|&x| x == r[0]));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut wins = 0;
        for e in 0..episodes {
            let start = self.sample_start(&mut rng);
            if self.execute_hierarchical_policy(&policies, start, seed.wrapping_add(e as u64), budget).success {
                wins += 1;
            }
        }
        Ok((wins as f64 / episodes.max(1) as f64, degenerate))
    }

    /// Checks that each abstract transition, pushed back through the
    /// abstraction map, matches the flat dynamics from every flat state
    /// that maps onto it. Returns the number of checked `(state, action)`
    /// pairs.
    pub fn check_abstraction(&self) -> Result<usize> {
        let mut checked = 0;
        for (e, c) in self.env.contexts.iter().zip(&self.subtasks) {
            let flat = &e.mdp;
            let abs = &c.abstract_mdp;
            for i in 0..flat.n_states() {
                let a_state = c.map[i];
                if flat.is_terminal(i) != abs.is_terminal(a_state) {
                    return Err(Error::InvalidMdp(alloc::format!("terminal mismatch at flat state {i}")));
                }
                if flat.is_terminal(i) || !self.domain.is_valid(self.domain.flat_state(i)) {
                    continue;
                }
                for a in 0..flat.n_actions() {
                    let mut image: Vec<(usize, f64)> = Vec::new();
                    for &(n, p) in flat.successors(i, a) {
                        let m = c.map[n];
                        match image.iter_mut().find(|(x, _)| *x == m) {
                            Some(entry) => entry.1 += p,
                            None => image.push((m, p)),
                        }
                    }
                    let mut expected = abs.successors(a_state, a).to_vec();
                    image.sort_by_key(|x| x.0);
                    expected.sort_by_key(|x| x.0);
                    let same = image.len() == expected.len()
                        && image.iter().zip(&expected).all(|(x, y)| x.0 == y.0 && (x.1 - y.1).abs() < 1e-12);
                    if !same {
                        return Err(Error::InvalidMdp(alloc::format!(
                            "abstraction unsound at flat state {i}, action {a}"
                        )));
                    }
                    checked += 1;
                }
            }
        }
        Ok(checked)
    }
}

#[cfg(test)]
mod tests;
