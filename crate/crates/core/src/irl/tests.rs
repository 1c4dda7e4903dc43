use super::*;
use crate::context::DagNode;
use crate::env::{expert_policy, sample_index, sample_trajectory, Expert};
use crate::mdp::{StochasticPolicy, Transition};
use crate::reward_net::NetShape;

fn two_context_dag() -> ContextDag {
    let nodes = vec![DagNode::root("root"), DagNode::internal_indexed("a", "a", 2), DagNode::leaf("leaf")];
    ContextDag::from_named_edges(nodes, &[("root", "a"), ("a", "leaf")]).unwrap()
}

/// Random dense MDP; the last state is terminal.
fn random_mdp(seed: u64, n: usize, n_actions: usize, d: usize, gamma: f64) -> TabularMdp {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut transitions = Vec::new();
    let mut terminal = vec![false; n];
    terminal[n - 1] = true;
    for s in 0..n {
        for a in 0..n_actions {
            if terminal[s] {
                transitions.push(Transition::new(s, a, s, 1.0));
                continue;
            }
            let w: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 0.05).collect();
            let total: f64 = w.iter().sum();
            for (next, x) in w.iter().enumerate() {
                transitions.push(Transition::new(s, a, next, x / total));
            }
        }
    }
    let features = (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect();
    TabularMdp::new(n, n_actions, gamma, transitions, d, features, terminal).unwrap()
}

/// Solves `x (I − γ P_π) = b` densely; terminal rows of `P_π` are zero.
fn dense_occupancy(mdp: &TabularMdp, policy: &StochasticPolicy, b: &[f64]) -> Vec<f64> {
    let n = mdp.n_states();
    let gamma = mdp.discount();
    // a[j][i] holds (I − γP)ᵀ so the system reads aᵀ-wise as a·x = b
    let mut a = vec![vec![0.0; n + 1]; n];
    for i in 0..n {
        a[i][i] += 1.0;
        a[i][n] = b[i];
    }
    for s in 0..n {
        if mdp.is_terminal(s) {
            continue;
        }
        for act in 0..mdp.n_actions() {
            for &(next, p) in mdp.successors(s, act) {
                a[next][s] -= gamma * policy.prob(s, act) * p;
            }
        }
    }
    for col in 0..n {
        let pivot = (col..n).max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs())).unwrap();
        a.swap(col, pivot);
        for row in 0..n {
            if row != col {
                let f = a[row][col] / a[col][col];
                for k in col..=n {
                    a[row][k] -= f * a[col][k];
                }
            }
        }
    }
    (0..n).map(|i| a[i][n] / a[i][i]).collect()
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let scale: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
    diff / scale
}

fn ctx(dag: &ContextDag, i: usize) -> Context {
    dag.enumerate_contexts().unwrap()[i].clone()
}

#[test]
fn split_at_context_changes() {
    let dag = two_context_dag();
    let (a, b) = (ctx(&dag, 0), ctx(&dag, 1));
    let raw = vec![vec![
        (a.clone(), Step::new(0, 0)),
        (a.clone(), Step::new(1, 0)),
        (b.clone(), Step::new(2, 1)),
        (a.clone(), Step::new(0, 1)),
    ]];
    let set = split_resolved(raw);
    assert_eq!(set.n_trajectories(), 3);
    assert_eq!(set.trajectories(&a).len(), 2);
    assert_eq!(set.trajectories(&a)[0].steps.len(), 2);
    assert_eq!(set.trajectories(&b)[0].steps, vec![Step::new(2, 1)]);
    assert_eq!(set.total_steps(), 4);
}

#[test]
fn split_by_labels() {
    let dag = two_context_dag();
    let lab = |v: &str| vec![("a".to_string(), v.to_string())];
    let raw = vec![vec![
        LabeledStep { label: lab("0"), step: Step::new(0, 0) },
        LabeledStep { label: lab("1"), step: Step::new(1, 0) },
    ]];
    let set = split_by_context(&dag, &raw).unwrap();
    assert_eq!(set.trajectories(&ctx(&dag, 1)).len(), 1);
    let bad = vec![vec![LabeledStep { label: lab("7"), step: Step::new(0, 0) }]];
    assert!(split_by_context(&dag, &bad).is_err());
}

#[test]
fn empty_demo_set() {
    let set = split_resolved(Vec::<Vec<(Context, Step)>>::new());
    assert!(set.is_empty());
    assert_eq!(set.n_trajectories(), 0);
    let mdp = random_mdp(1, 3, 2, 2, 0.9);
    let stats = svf(&mdp, &[]).unwrap();
    assert!(stats.mu.iter().chain(&stats.nu).all(|&x| x == 0.0));
}

#[test]
fn svf_single_step() {
    let mdp = random_mdp(2, 3, 2, 2, 0.9);
    let t = Trajectory::new(Context::trivial(), vec![Step::new(0, 1)]);
    let stats = svf(&mdp, &[t]).unwrap();
    assert_eq!(stats.mu, vec![1.0, 0.0, 0.0]);
    let mut nu = vec![1.0, 0.0, 0.0];
    for &(n, p) in mdp.successors(0, 1) {
        nu[n] -= 0.9 * p;
    }
    assert_eq!(stats.nu, nu);
    let bad = Trajectory::new(Context::trivial(), vec![Step::new(9, 0)]);
    assert!(svf(&mdp, &[bad]).is_err());
}

#[test]
fn expected_svf_matches_dense_solve() {
    for seed in 0..5 {
        let mdp = random_mdp(seed, 5, 3, 2, 0.9);
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let reward = RewardVector::new((0..5).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let nu: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mu = expected_svf(&mdp, &reward, &nu, 1e-12, default_horizon(0.9)).unwrap();
        let policy = soft_value_iteration(&mdp, &reward, 1e-12, crate::mdp::DEFAULT_MAX_ITERS).unwrap().policy;
        let oracle = dense_occupancy(&mdp, &policy, &nu);
        let l1: f64 = nu.iter().map(|x| x.abs()).sum();
        let err = mu.iter().zip(&oracle).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err <= 1e-6 * l1, "seed {seed}: {err}");
    }
}

fn terminal_pair() -> TabularMdp {
    let transitions = vec![
        Transition::new(0, 0, 1, 1.0),
        Transition::new(0, 1, 1, 1.0),
        Transition::new(1, 0, 1, 1.0),
        Transition::new(1, 1, 1, 1.0),
    ];
    TabularMdp::new(2, 2, 0.9, transitions, 2, vec![1.0, 0.0, 0.0, 1.0], vec![false, true]).unwrap()
}

#[test]
fn consistent_demo_is_a_fixed_point() {
    let dag = ContextDag::trivial();
    let mut model = RewardModel::new(ModelKind::Modular, &dag, 2, &NetShape::default(), 3).unwrap();
    let tasks = vec![TrainingTask {
        context: Context::trivial(),
        mdp: Arc::new(terminal_pair()),
        trajectories: vec![Trajectory::new(Context::trivial(), vec![Step::new(0, 1)])],
    }];
    let cfg = IrlConfig {
        l1: 0.0,
        l2: 0.0,
        epochs: 3,
        ..IrlConfig::default()
    };
    let before = model.flat_params();
    train(&mut model, &tasks, &cfg, &NoClock, &mut |_| Ok(0.0)).unwrap();
    assert_eq!(model.flat_params(), before);
}

fn fd_tasks(dag: &ContextDag, d: usize) -> Vec<TrainingTask> {
    dag.enumerate_contexts()
        .unwrap()
        .into_iter()
        .enumerate()
        .map(|(i, context)| {
            let mdp = random_mdp(10 + i as u64, 4, 3, d, 0.8);
            let mut rng = ChaCha8Rng::seed_from_u64(20 + i as u64);
            let trajectories = (0..3)
                .map(|_| {
                    let steps = (0..4).map(|_| Step::new(rng.random_range(0..3), rng.random_range(0..3))).collect();
                    Trajectory::new(context.clone(), steps)
                })
                .collect();
            TrainingTask {
                context,
                mdp: Arc::new(mdp),
                trajectories,
            }
        })
        .collect()
}

#[test]
fn gradient_matches_finite_differences() {
    let dag = two_context_dag();
    let d = 3;
    let tasks = fd_tasks(&dag, d);
    let shape = NetShape {
        interface: 3,
        hidden: vec![4],
        identity_leaf: false,
    };
    let cfg = IrlConfig {
        l1: 1e-3,
        l2: 0.1,
        vi_tol: 1e-13,
        propagate_iters: Some(400),
        ..IrlConfig::default()
    };
    for kind in [ModelKind::Modular, ModelKind::Monolithic, ModelKind::Linear, ModelKind::PerContext] {
        let mut model = RewardModel::new(kind, &dag, d, &shape, 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let params: Vec<f64> = (0..model.n_params()).map(|_| rng.random_range(-1.0..1.0)).collect();
        model.set_flat_params(&params).unwrap();
        let analytic = gradient(&model, &tasks, &cfg).unwrap().flat();
        let h = 1e-5;
        let mut numeric = vec![0.0; params.len()];
        for i in 0..params.len() {
            let mut p = params.clone();
            p[i] += h;
            model.set_flat_params(&p).unwrap();
            let up = loss(&model, &tasks, &cfg).unwrap();
            p[i] -= 2.0 * h;
            model.set_flat_params(&p).unwrap();
            let down = loss(&model, &tasks, &cfg).unwrap();
            numeric[i] = (up - down) / (2.0 * h);
        }
        let err = rel_err(&analytic, &numeric);
        assert!(err <= 1e-3, "{kind:?}: relative error {err}");
    }
}

#[test]
fn single_state_mdp_trains() {
    let transitions = vec![Transition::new(0, 0, 0, 1.0), Transition::new(0, 1, 0, 1.0)];
    let mdp = TabularMdp::new(1, 2, 0.9, transitions, 1, vec![1.0], vec![false]).unwrap();
    let dag = ContextDag::trivial();
    let mut model = RewardModel::new(ModelKind::Modular, &dag, 1, &NetShape::default(), 0).unwrap();
    let tasks = vec![TrainingTask {
        context: Context::trivial(),
        mdp: Arc::new(mdp),
        trajectories: vec![Trajectory::new(Context::trivial(), vec![Step::new(0, 0); 5])],
    }];
    let cfg = IrlConfig {
        epochs: 5,
        ..IrlConfig::default()
    };
    let logs = train(&mut model, &tasks, &cfg, &NoClock, &mut |_| Ok(0.0)).unwrap();
    assert_eq!(logs.len(), 5);
    assert!(logs.iter().all(|l| l.loss.is_finite()));
}

#[test]
fn zero_epochs_leave_model_untouched() {
    let dag = two_context_dag();
    let tasks = fd_tasks(&dag, 2);
    let mut model = RewardModel::new(ModelKind::Modular, &dag, 2, &NetShape::default(), 1).unwrap();
    let before = model.clone();
    let cfg = IrlConfig {
        epochs: 0,
        ..IrlConfig::default()
    };
    let logs = train(&mut model, &tasks, &cfg, &NoClock, &mut |_| Ok(0.0)).unwrap();
    assert!(logs.is_empty());
    assert_eq!(model, before);
}

#[test]
fn training_is_deterministic() {
    let dag = two_context_dag();
    let tasks = fd_tasks(&dag, 2);
    for sample_context in [false, true] {
        let cfg = IrlConfig {
            epochs: 4,
            sample_context,
            eval_every: 2,
            ..IrlConfig::default()
        };
        let run = || {
            let mut model = RewardModel::new(ModelKind::Modular, &dag, 2, &NetShape::default(), 9).unwrap();
            let logs = train(&mut model, &tasks, &cfg, &NoClock, &mut |_| Ok(1.0)).unwrap();
            (model.flat_params(), logs)
        };
        let (p1, l1) = run();
        let (p2, l2) = run();
        assert_eq!(p1, p2);
        assert_eq!(l1.len(), 4);
        assert!(l1[0].evd.is_nan() && l1[1].evd == 1.0 && l1[3].evd == 1.0);
        assert_eq!(l1.iter().map(|l| l.loss).collect::<Vec<_>>(), l2.iter().map(|l| l.loss).collect::<Vec<_>>());
    }
}

#[test]
fn loss_decreases_under_sgd() {
    let dag = two_context_dag();
    let tasks = fd_tasks(&dag, 2);
    let mut model = RewardModel::new(ModelKind::Modular, &dag, 2, &NetShape::default(), 4).unwrap();
    let cfg = IrlConfig {
        epochs: 30,
        learning_rate: 1e-2,
        l2: 0.0,
        l1: 0.0,
        eval_every: 0,
        ..IrlConfig::default()
    };
    let start = loss(&model, &tasks, &cfg).unwrap();
    train(&mut model, &tasks, &cfg, &NoClock, &mut |_| Ok(0.0)).unwrap();
    assert!(loss(&model, &tasks, &cfg).unwrap() < start);
}

#[test]
fn expected_visitation_matches_soft_policy_demos() {
    let mdp = random_mdp(31, 5, 2, 2, 0.9);
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    let reward = RewardVector::new((0..5).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
    let policy = expert_policy(&mdp, &reward, Expert::Soft { beta: 1.0 }).unwrap();
    let start = [0.25, 0.25, 0.25, 0.25, 0.0];
    let trajectories: Vec<Trajectory> = (0..20_000)
        .map(|_| {
            let s = sample_index(&mut rng, &start);
            sample_trajectory(&mut rng, &mdp, &policy, &Context::trivial(), s, 1000)
        })
        .collect();
    let stats = svf(&mdp, &trajectories).unwrap();
    let mu_r = expected_svf(&mdp, &reward, &stats.nu, 1e-12, default_horizon(0.9)).unwrap();
    let err = rel_err(&mu_r, &stats.mu);
    assert!(err < 0.02, "relative error {err}");
}

/// State 0 either stays or moves into the absorbing state 1.
fn stay_or_leave() -> TabularMdp {
    let transitions = vec![
        Transition::new(0, 0, 0, 1.0),
        Transition::new(0, 1, 1, 1.0),
        Transition::new(1, 0, 1, 1.0),
        Transition::new(1, 1, 1, 1.0),
    ];
    TabularMdp::new(2, 2, 0.9, transitions, 2, vec![1.0, 0.0, 0.0, 1.0], vec![false, true]).unwrap()
}

#[test]
fn deterministic_two_state_visitation_matches_generator() {
    let mdp = stay_or_leave();
    let reward = RewardVector::new(vec![-2.0, 2.0]).unwrap();
    let policy = expert_policy(&mdp, &reward, Expert::Soft { beta: 1.0 }).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let n = 400_000;
    let trajectories: Vec<Trajectory> = (0..n)
        .map(|_| sample_trajectory(&mut rng, &mdp, &policy, &Context::trivial(), 0, 1000))
        .collect();
    let stats = svf(&mdp, &trajectories).unwrap();
    let mu_r = expected_svf(&mdp, &reward, &stats.nu, 1e-13, default_horizon(0.9)).unwrap();
    for s in 0..2 {
        let err = (mu_r[s] - stats.mu[s]).abs() / n as f64;
        assert!(err <= 1e-3, "state {s}: {err}");
    }
}

#[test]
fn goalnav_svf_matches_counting_oracle() {
    let bundle = crate::env::goalnav::build_goalnav();
    let mdp = &bundle.contexts[0].mdp;
    let c = Context::trivial();
    let steps = |v: &[(usize, usize)]| v.iter().map(|&(s, a)| Step::new(s, a)).collect();
    let trajectories = [
        Trajectory::new(c.clone(), steps(&[(7, 3), (12, 0), (11, 3)])),
        Trajectory::new(c, steps(&[(6, 0), (1, 3), (0, 1)])),
    ];
    let stats = svf(mdp, &trajectories).unwrap();
    // numpy counting oracle
    let mut mu = vec![0.0; 25];
    for s in [0, 1, 6, 7, 11, 12] {
        mu[s] = 1.0;
    }
    let nu = [
        0.2799999999999999, 0.1899999999999999, -0.09000000000000001, 0.0, 0.0, -0.09000000000000001, 0.7300000000000001,
        -0.44000000000000017, 0.0, 0.0, -0.7200000000000001, 0.91, 0.91, -0.09000000000000001, 0.0, 0.0, -0.09000000000000001,
        0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0,
    ];
    assert_eq!(stats.mu, mu);
    for (a, b) in stats.nu.iter().zip(&nu) {
        assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
    }
}

#[test]
fn algorithm_names_round_trip() {
    for a in Algorithm::ALL {
        assert_eq!(a.name().parse::<Algorithm>().unwrap(), a);
    }
    assert!("nope".parse::<Algorithm>().is_err());
}

#[test]
fn baseline_inputs_append_context_one_hot() {
    let dag = two_context_dag();
    let model = RewardModel::new(ModelKind::Monolithic, &dag, 2, &NetShape::default(), 0).unwrap();
    let input = model.input_features(&ctx(&dag, 1), &[0.5, 0.25, 1.0, 2.0]).unwrap();
    assert_eq!(&*input, &[0.5, 0.25, 0.0, 1.0, 1.0, 2.0, 0.0, 1.0]);
    let hirl = RewardModel::new(ModelKind::PerContext, &dag, 2, &NetShape::default(), 0).unwrap();
    assert_eq!(hirl.nets().len(), 2);
    assert_ne!(hirl.nets()[0].params(), hirl.nets()[1].params());
}
