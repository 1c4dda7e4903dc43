use super::*;

fn ground_truth(bundle: &TaxiBundle) -> Vec<RewardVector> {
    bundle.env.contexts.iter().map(|c| c.true_reward.clone()).collect()
}

#[test]
fn state_space_sizes_at_grid_5() {
    let d = TaxiDomain::new(5).unwrap();
    assert_eq!(d.abstract_size(Subtask::Get), 125);
    assert_eq!(d.abstract_size(Subtask::Put), 100);
    assert_eq!(d.abstract_size(Subtask::Nav(2)), 25);
    assert_eq!(d.n_flat(), 500);
    assert_eq!(d.abstract_mdp(Subtask::Put).unwrap().n_states(), 101);
}

#[test]
fn rejects_bad_grid_size() {
    assert!(TaxiDomain::new(7).is_err());
    assert!(TaxiDomain::new(0).is_err());
}

#[test]
fn ten_contexts_with_nav_parents() {
    let b = build_taxi(5).unwrap();
    assert_eq!(b.n_contexts(), 10);
    let navs = b.subtasks.iter().filter(|c| matches!(c.subtask, Subtask::Nav(_))).count();
    assert_eq!(navs, 8);
    for c in &b.subtasks {
        if let Some(p) = c.parent {
            assert!(matches!(b.subtasks[p].subtask, Subtask::Get | Subtask::Put));
        }
    }
    // Nav(t) under Get and under Put share one abstract MDP
    let get = b.top_context(Subtask::Get);
    let put = b.top_context(Subtask::Put);
    assert!(Arc::ptr_eq(&b.subtasks[b.nav_context(get, 1)].abstract_mdp, &b.subtasks[b.nav_context(put, 1)].abstract_mdp));
}

#[test]
fn flat_index_roundtrip() {
    let d = TaxiDomain::new(10).unwrap();
    for i in (0..d.n_flat()).step_by(7) {
        assert_eq!(d.flat_index(d.flat_state(i)), i);
    }
}

#[test]
fn abstraction_is_sound() {
    for size in [5, 10] {
        let b = build_taxi(size).unwrap();
        assert!(b.check_abstraction().unwrap() > 0);
    }
}

#[test]
fn features_mark_ignored_dims() {
    let d = TaxiDomain::new(5).unwrap();
    let n = d.n_cells();
    let f = d.features(Some(TaxiState { x: 1, y: 0, p: IGNORE, d: 2 }), false);
    assert_eq!(f.len(), n + 12);
    assert_eq!(f[1], 1.0);
    assert_eq!(f[n + 5], 1.0);
    assert_eq!(f[n + 6 + 2], 1.0);
    assert_eq!(f.iter().sum::<f64>(), 3.0);
    let sink = d.features(None, true);
    assert_eq!(sink.iter().sum::<f64>(), 3.0);
    assert_eq!(sink[n + 11], 1.0);
}

#[test]
fn simulator_rewards() {
    let d = TaxiDomain::new(5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let at_r = TaxiState { x: 0, y: 0, p: 0, d: 1 };
    let (s, r) = d.simulate(&mut rng, at_r, Primitive::Putdown);
    assert_eq!((s, r), (at_r, ILLEGAL_REWARD));
    let (s, r) = d.simulate(&mut rng, at_r, Primitive::Pickup);
    assert_eq!((s.p, r), (IN_TAXI, STEP_REWARD));
    let at_g = TaxiState { x: 4, y: 0, p: IN_TAXI, d: 1 };
    let (s, r) = d.simulate(&mut rng, at_g, Primitive::Putdown);
    assert_eq!((s.p, r), (1, DELIVERY_REWARD));
}

#[test]
fn single_putdown_when_already_there() {
    let b = build_taxi(5).unwrap();
    let policies = b.greedy_policies(&ground_truth(&b)).unwrap();
    let start = TaxiState { x: 4, y: 0, p: IN_TAXI, d: 1 };
    let run = b.execute_hierarchical_policy(&policies, start, 0, 200);
    assert!(run.success);
    assert_eq!(run.trace, vec![(start, Primitive::Putdown)]);
}

#[test]
fn ground_truth_policies_deliver() {
    let b = build_taxi(5).unwrap();
    let (rate, degenerate) = b.success_rate(&ground_truth(&b), 100, 3, 200).unwrap();
    assert_eq!(rate, 1.0);
    assert!(!degenerate);
}

#[test]
fn zero_rewards_flagged() {
    let b = build_taxi(5).unwrap();
    let zeros: Vec<_> = b.env.contexts.iter().map(|c| RewardVector::zeros(c.mdp.n_states())).collect();
    let (_, degenerate) = b.success_rate(&zeros, 10, 3, 200).unwrap();
    assert!(degenerate);
    let start = TaxiState { x: 2, y: 2, p: 0, d: 1 };
    let run = b.execute_hierarchical_policy(&b.greedy_policies(&zeros).unwrap(), start, 0, 50);
    assert!(run.trace.len() <= 50);
}

#[test]
fn episodes_cover_every_context() {
    let b = build_taxi(5).unwrap();
    let demos = b.generate_episodes(40, Expert::default(), 9).unwrap();
    assert_eq!(demos.contexts().count(), 10);
    let get = &b.subtasks[b.top_context(Subtask::Get)].context;
    for t in demos.trajectories(get) {
        for s in &t.steps {
            let next = b.domain.flat_state(s.outcome.unwrap());
            if s.action < PICK_OR_DROP && !t.truncated {
                assert_eq!(b.domain.layout.cell(next.x, next.y), b.domain.landmark_cell(s.action));
            }
        }
    }
    let mapped = b.abstract_demos(&demos);
    assert_eq!(mapped.n_trajectories(), demos.n_trajectories());
    for task in b.training_tasks(&demos, true) {
        for t in &task.trajectories {
            assert!(t.steps.iter().all(|s| s.state < task.mdp.n_states() && !task.mdp.is_terminal(s.state)));
        }
    }
}

#[test]
fn episodes_are_seeded() {
    let b = build_taxi(5).unwrap();
    let a = b.generate_episodes(5, Expert::default(), 1).unwrap();
    let c = b.generate_episodes(5, Expert::default(), 1).unwrap();
    assert_eq!(a, c);
}
