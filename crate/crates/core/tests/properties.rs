use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use chirl_core::context::Context;
use chirl_core::irl::{default_horizon, expected_svf, svf, Step, Trajectory};
use chirl_core::mdp::{
    hard_value_iteration, occupancy_from_initial, soft_value_iteration, RewardVector, TabularMdp, Transition, DEFAULT_MAX_ITERS,
};
use chirl_core::metrics::{evd, nll, normalize_reward};

fn random_mdp(seed: u64, n: usize, n_actions: usize, gamma: f64, sparse: bool) -> TabularMdp {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut transitions = Vec::new();
    let mut terminal = vec![false; n];
    terminal[n - 1] = n > 1;
    for s in 0..n {
        for a in 0..n_actions {
            if terminal[s] {
                transitions.push(Transition::new(s, a, s, 1.0));
            } else if sparse {
                transitions.push(Transition::new(s, a, rng.random_range(0..n), 1.0));
            } else {
                let w: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 0.01).collect();
                let total: f64 = w.iter().sum();
                for (next, x) in w.iter().enumerate() {
                    transitions.push(Transition::new(s, a, next, x / total));
                }
            }
        }
    }
    let features = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    TabularMdp::new(n, n_actions, gamma, transitions, 1, features, terminal).unwrap()
}

fn reward(seed: u64, n: usize) -> RewardVector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    RewardVector::new((0..n).map(|_| rng.random_range(-3.0..3.0)).collect()).unwrap()
}

fn mdp_strategy() -> impl Strategy<Value = (u64, usize, usize, f64, bool)> {
    (any::<u64>(), 1usize..9, 1usize..5, 0.0f64..0.97, any::<bool>())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn soft_policy_rows_are_distributions((seed, n, na, gamma, sparse) in mdp_strategy()) {
        let mdp = random_mdp(seed, n, na, gamma, sparse);
        let soft = soft_value_iteration(&mdp, &reward(seed, n), 1e-10, DEFAULT_MAX_ITERS).unwrap();
        for s in 0..n {
            let total: f64 = (0..na).map(|a| soft.policy.prob(s, a)).sum();
            prop_assert!((total - 1.0).abs() < 1e-9);
            let q = soft.values.q_row(s);
            // V is a log-sum-exp over Q, so it dominates every Q
            prop_assert!(q.iter().all(|&x| x <= soft.values.v[s] + 1e-12));
        }
    }

    #[test]
    fn occupancy_mass_is_bounded((seed, n, na, gamma, sparse) in mdp_strategy()) {
        let mdp = random_mdp(seed, n, na, gamma, sparse);
        let policy = soft_value_iteration(&mdp, &reward(seed, n), 1e-8, DEFAULT_MAX_ITERS).unwrap().policy;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let nu: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let mass: f64 = nu.iter().sum();
        let mu = occupancy_from_initial(&mdp, &policy, &nu, default_horizon(gamma)).unwrap();
        prop_assert!(mu.iter().all(|&x| x >= 0.0));
        let total: f64 = mu.iter().sum();
        prop_assert!(total >= mass - 1e-12);
        prop_assert!(total <= mass / (1.0 - gamma) + 1e-9);
        for (m, v) in mu.iter().zip(&nu) {
            prop_assert!(*m >= *v - 1e-12);
        }
    }

    #[test]
    fn expected_svf_is_linear_in_nu((seed, n, na, gamma, sparse) in mdp_strategy(), c in -3.0f64..3.0) {
        let mdp = random_mdp(seed, n, na, gamma, sparse);
        let r = reward(seed, n);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let nu: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let scaled: Vec<f64> = nu.iter().map(|x| c * x).collect();
        let iters = 200;
        let a = expected_svf(&mdp, &r, &nu, 1e-10, iters).unwrap();
        let b = expected_svf(&mdp, &r, &scaled, 1e-10, iters).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((c * x - y).abs() <= 1e-9 * (1.0 + y.abs()));
        }
    }

    #[test]
    fn svf_counts_steps((seed, n, na, gamma, sparse) in mdp_strategy(), len in 0usize..12) {
        let mdp = random_mdp(seed, n, na, gamma, sparse);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 2);
        let steps: Vec<Step> = (0..len).map(|_| Step::new(rng.random_range(0..n), rng.random_range(0..na))).collect();
        let at_terminal = steps.iter().filter(|s| mdp.is_terminal(s.state)).count();
        let stats = svf(&mdp, &[Trajectory::new(Context::trivial(), steps)]).unwrap();
        prop_assert_eq!(stats.mu.iter().sum::<f64>(), len as f64);
        // each non-terminal step removes exactly γ of successor mass
        let expected = len as f64 - gamma * (len - at_terminal) as f64;
        prop_assert!((stats.nu.iter().sum::<f64>() - expected).abs() < 1e-9);
    }

    #[test]
    fn evd_is_nonnegative_and_scale_free((seed, n, na, gamma, sparse) in mdp_strategy(), c in 0.01f64..100.0) {
        prop_assume!(n > 1);
        let mdp = random_mdp(seed, n, na, gamma, sparse);
        let r_true = reward(seed, n);
        let r = reward(seed.wrapping_add(1), n);
        let mut initial = vec![1.0 / (n - 1) as f64; n];
        initial[n - 1] = 0.0;
        let e = evd(&mdp, &r_true, &r, &initial, 1e-10).unwrap();
        prop_assert!(e >= 0.0);
        prop_assert_eq!(evd(&mdp, &r_true, &r_true, &initial, 1e-10).unwrap(), 0.0);
        let p1 = hard_value_iteration(&mdp, &r, 1e-10, DEFAULT_MAX_ITERS).unwrap().policy;
        let p2 = hard_value_iteration(&mdp, &r.scaled(c).unwrap(), 1e-10, DEFAULT_MAX_ITERS).unwrap().policy;
        prop_assert_eq!(p1, p2);
        let normalized = normalize_reward(&r_true).unwrap();
        prop_assert!((evd(&mdp, &normalized, &r, &initial, 1e-10).unwrap() - e).abs() <= 1e-9);
    }

    #[test]
    fn nll_is_nonnegative((seed, n, na, gamma, sparse) in mdp_strategy(), len in 0usize..10) {
        let mdp = random_mdp(seed, n, na, gamma, sparse);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 3);
        let steps: Vec<Step> = (0..len).map(|_| Step::new(rng.random_range(0..n), rng.random_range(0..na))).collect();
        let out = nll(&mdp, &reward(seed, n), &[Trajectory::new(Context::trivial(), steps)], 1e-8).unwrap();
        prop_assert!(out.per_step() >= 0.0);
        prop_assert_eq!(out.steps, len);
    }
}
