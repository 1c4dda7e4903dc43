//! GoalNav: a 5×5 grid with walls; the context picks which of four
//! landmarks is the destination.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use super::grid::{Direction, GridLayout};
use super::{uniform_nonterminal, ContextEnv, EnvBundle};
use crate::context::{ContextDag, DagNode};
use crate::mdp::{RewardVector, TabularMdp, Transition};
use crate::{Error, Result};

pub const DESTINATIONS: [&str; 4] = ["R", "G", "Y", "B"];
pub const GOAL_REWARD: f64 = 5.0;
pub const DISCOUNT: f64 = 0.9;

pub fn goalnav_dag() -> ContextDag {
    let nodes = vec![
        DagNode::root("root"),
        DagNode::internal("dest", "dest", &DESTINATIONS),
        DagNode::leaf("leaf"),
    ];
    ContextDag::from_named_edges(nodes, &[("root", "dest"), ("dest", "leaf")]).expect("static DAG is valid")
}

/// Noisy four-way moves over the grid, one-hot cell features, `goal`
/// absorbing.
pub fn navigation_mdp(layout: &GridLayout, goal: usize, discount: f64) -> Result<TabularMdp> {
    let n = layout.n_cells();
    let mut transitions = Vec::with_capacity(n * 4 * 3);
    for cell in 0..n {
        let (x, y) = layout.coords(cell);
        for (a, dir) in Direction::ALL.into_iter().enumerate() {
            if cell == goal {
                transitions.push(Transition::new(cell, a, cell, 1.0));
            } else {
                for (next, p) in layout.noisy_step(x, y, dir) {
                    transitions.push(Transition::new(cell, a, next, p));
                }
            }
        }
    }
    let mut features = vec![0.0; n * n];
    for s in 0..n {
        features[s * n + s] = 1.0;
    }
    let mut terminal = vec![false; n];
    terminal[goal] = true;
    TabularMdp::new(n, 4, discount, transitions, n, features, terminal)
}

pub fn build_goalnav() -> EnvBundle {
    build_goalnav_with(&GridLayout::classic_taxi(1), DISCOUNT).expect("built-in layout is valid")
}

pub fn build_goalnav_with(layout: &GridLayout, discount: f64) -> Result<EnvBundle> {
    layout.validate()?;
    let dag = goalnav_dag();
    let contexts = dag
        .enumerate_contexts()?
        .into_iter()
        .enumerate()
        .map(|(i, context)| {
            let mark = layout
                .landmark(DESTINATIONS[i])
                .ok_or_else(|| Error::Config(alloc::format!("layout lacks landmark {}", DESTINATIONS[i])))?;
            let goal = layout.cell(mark.x, mark.y);
            let mdp = navigation_mdp(layout, goal, discount)?;
            let mut reward = vec![0.0; layout.n_cells()];
            reward[goal] = GOAL_REWARD;
            let initial = uniform_nonterminal(&mdp);
            Ok(ContextEnv {
                context,
                mdp: Arc::new(mdp),
                true_reward: RewardVector::new(reward)?,
                initial,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EnvBundle {
        name: "goalnav",
        dag,
        contexts,
    })
}
