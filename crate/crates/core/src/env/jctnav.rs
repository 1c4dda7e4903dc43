//! JctNav: a vehicle crosses a junction of two 8-lane roads. The context is
//! the traffic rule (drive on the left or right) and the intention (straight,
//! turn left, turn right).
//!
//! Layout: a vertical road occupying columns `col..col+9` and a horizontal
//! road occupying rows `row..row+9`, each with a one-cell center divider.
//! The vehicle enters from the south arm heading north. Lanes are numbered
//! by offset across the road, skipping the divider: 0..=3 on the west
//! (vertical) or north (horizontal) half, 4..=7 on the other half.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{uniform_nonterminal, ContextEnv, EnvBundle};
use crate::context::{ContextDag, DagNode};
use crate::mdp::{RewardVector, TabularMdp, Transition};
use crate::{Error, Result};

pub const GRID: usize = 32;
pub const ROAD_WIDTH: usize = 9;
pub const DIVIDER_OFFSET: usize = 4;
/// Minimum distance between a road and the grid edge.
pub const MARGIN: usize = 6;
pub const DISCOUNT: f64 = 0.9;

pub const RULES: [&str; 2] = ["LS", "RS"];
pub const INTENTIONS: [&str; 3] = ["ST", "TL", "TR"];

pub const CORRECT: f64 = 0.0;
pub const WRONG_SIDE: f64 = -10.0;
pub const DIVIDER: f64 = -5.0;
pub const PASS: f64 = 1.0;

/// Coarse localization value for cells outside any lane.
pub const ELSEWHERE: usize = 8;
pub const FEATURE_DIM: usize = 9 + 9 * 3;

/// Moves: stay, then N, NE, E, SE, S, SW, W, NW.
pub const MOVES: [(i64, i64); 9] = [(0, 0), (0, -1), (1, -1), (1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1)];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellClass {
    OnRoad,
    OffRoad,
    Divider,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rule {
    LeftSide,
    RightSide,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Intention {
    Straight,
    TurnLeft,
    TurnRight,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct JctLayout {
    pub size: usize,
    /// First column of the vertical road.
    pub col: usize,
    /// First row of the horizontal road.
    pub row: usize,
}

impl JctLayout {
    /// Road offsets drawn uniformly from the positions that keep
    /// [`MARGIN`] free cells on both sides.
    pub fn generate(size: usize, seed: u64) -> Result<Self> {
        if size < ROAD_WIDTH + 2 * MARGIN {
            return Err(Error::Config(alloc::format!(
                "a {size}x{size} grid cannot hold a {ROAD_WIDTH}-wide road with margin {MARGIN}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let hi = size - ROAD_WIDTH - MARGIN;
        let col = rng.random_range(MARGIN..=hi);
        let row = rng.random_range(MARGIN..=hi);
        Ok(Self { size, col, row })
    }

    pub fn validate(&self) -> Result<()> {
        let hi = self.size.saturating_sub(ROAD_WIDTH + MARGIN);
        if self.size < ROAD_WIDTH + 2 * MARGIN || !(MARGIN..=hi).contains(&self.col) || !(MARGIN..=hi).contains(&self.row) {
            return Err(Error::Config("road placement violates the edge margin".into()));
        }
        Ok(())
    }

    pub fn n_cells(&self) -> usize {
        self.size * self.size
    }

    pub fn cell(&self, x: usize, y: usize) -> usize {
        y * self.size + x
    }

    fn in_vertical(&self, x: usize) -> bool {
        (self.col..self.col + ROAD_WIDTH).contains(&x)
    }

    fn in_horizontal(&self, y: usize) -> bool {
        (self.row..self.row + ROAD_WIDTH).contains(&y)
    }

    pub fn in_box(&self, x: usize, y: usize) -> bool {
        self.in_vertical(x) && self.in_horizontal(y)
    }

    pub fn class(&self, x: usize, y: usize) -> CellClass {
        if self.in_box(x, y) {
            CellClass::OnRoad
        } else if self.in_vertical(x) {
            if x - self.col == DIVIDER_OFFSET {
                CellClass::Divider
            } else {
                CellClass::OnRoad
            }
        } else if self.in_horizontal(y) {
            if y - self.row == DIVIDER_OFFSET {
                CellClass::Divider
            } else {
                CellClass::OnRoad
            }
        } else {
            CellClass::OffRoad
        }
    }

    /// Lane index 0..=7, or [`ELSEWHERE`] off the lanes (including the
    /// junction box and the dividers).
    pub fn lane(&self, x: usize, y: usize) -> usize {
        if self.in_box(x, y) {
            return ELSEWHERE;
        }
        let offset = if self.in_vertical(x) {
            x - self.col
        } else if self.in_horizontal(y) {
            y - self.row
        } else {
            return ELSEWHERE;
        };
        match offset {
            o if o < DIVIDER_OFFSET => o,
            o if o > DIVIDER_OFFSET => o - 1,
            _ => ELSEWHERE,
        }
    }

    /// Exit cells of an intention: the far edge of the outbound arm.
    pub fn is_exit(&self, x: usize, y: usize, intention: Intention) -> bool {
        let last = self.size - 1;
        let cls = self.class(x, y);
        if cls != CellClass::OnRoad {
            return false;
        }
        match intention {
            Intention::Straight => y == 0 && self.in_vertical(x),
            Intention::TurnLeft => x == 0 && self.in_horizontal(y),
            Intention::TurnRight => x == last && self.in_horizontal(y),
        }
    }

    /// Whether `(x, y)` lies in a lane whose travel direction matches the
    /// route on that arm.
    fn on_route_lane(&self, x: usize, y: usize, rule: Rule, intention: Intention) -> bool {
        let lane = self.lane(x, y);
        if lane == ELSEWHERE {
            return false;
        }
        // lanes 4..=7 are the east (vertical) or south (horizontal) half
        let second_half = lane >= 4;
        let (northbound, westbound, eastbound) = match rule {
            Rule::RightSide => (second_half, !second_half, second_half),
            Rule::LeftSide => (!second_half, second_half, !second_half),
        };
        let south_arm = self.in_vertical(x) && y >= self.row + ROAD_WIDTH;
        let north_arm = self.in_vertical(x) && y < self.row;
        let west_arm = self.in_horizontal(y) && x < self.col;
        let east_arm = self.in_horizontal(y) && x >= self.col + ROAD_WIDTH;
        if south_arm {
            return northbound;
        }
        match intention {
            Intention::Straight => north_arm && northbound,
            Intention::TurnLeft => west_arm && westbound,
            Intention::TurnRight => east_arm && eastbound,
        }
    }

    pub fn reward(&self, x: usize, y: usize, rule: Rule, intention: Intention) -> f64 {
        if self.is_exit(x, y, intention) {
            return if self.on_route_lane(x, y, rule, intention) { PASS } else { WRONG_SIDE };
        }
        match self.class(x, y) {
            CellClass::Divider => DIVIDER,
            CellClass::OnRoad if self.in_box(x, y) || self.on_route_lane(x, y, rule, intention) => CORRECT,
            _ => WRONG_SIDE,
        }
    }

    /// One-hot lane (9) followed by the one-hot class of each cell in the
    /// 3×3 neighborhood, row by row; cells past the edge count as off-road.
    pub fn features(&self, x: usize, y: usize) -> [f64; FEATURE_DIM] {
        let mut f = [0.0; FEATURE_DIM];
        f[self.lane(x, y)] = 1.0;
        let mut k = 0;
        for dy in -1i64..=1 {
            for dx in -1i64..=1 {
                let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                let inside = nx >= 0 && ny >= 0 && (nx as usize) < self.size && (ny as usize) < self.size;
                let cls = if inside { self.class(nx as usize, ny as usize) } else { CellClass::OffRoad };
                let c = match cls {
                    CellClass::OnRoad => 0,
                    CellClass::OffRoad => 1,
                    CellClass::Divider => 2,
                };
                f[9 + 3 * k + c] = 1.0;
                k += 1;
            }
        }
        f
    }

    pub fn mdp(&self, intention: Intention, discount: f64) -> Result<TabularMdp> {
        let n = self.n_cells();
        let s = self.size as i64;
        let mut transitions = Vec::with_capacity(n * MOVES.len());
        let mut terminal = vec![false; n];
        let mut features = Vec::with_capacity(n * FEATURE_DIM);
        for y in 0..self.size {
            for x in 0..self.size {
                let cell = self.cell(x, y);
                terminal[cell] = self.is_exit(x, y, intention);
                features.extend_from_slice(&self.features(x, y));
                for (a, (dx, dy)) in MOVES.iter().enumerate() {
                    let next = if terminal[cell] {
                        cell
                    } else {
                        let nx = (x as i64 + dx).clamp(0, s - 1) as usize;
                        let ny = (y as i64 + dy).clamp(0, s - 1) as usize;
                        self.cell(nx, ny)
                    };
                    transitions.push(Transition::new(cell, a, next, 1.0));
                }
            }
        }
        TabularMdp::new(n, MOVES.len(), discount, transitions, FEATURE_DIM, features, terminal)
    }
}

pub fn jctnav_dag() -> ContextDag {
    let nodes = vec![
        DagNode::root("root"),
        DagNode::internal("rule", "rule", &RULES),
        DagNode::internal("intention", "intention", &INTENTIONS),
        DagNode::leaf("leaf"),
    ];
    ContextDag::from_named_edges(nodes, &[("root", "rule"), ("rule", "intention"), ("intention", "leaf")])
        .expect("static DAG is valid")
}

pub fn build_jctnav(seed: u64) -> Result<EnvBundle> {
    build_jctnav_with(&JctLayout::generate(GRID, seed)?, DISCOUNT)
}

pub fn build_jctnav_with(layout: &JctLayout, discount: f64) -> Result<EnvBundle> {
    layout.validate()?;
    let dag = jctnav_dag();
    let intentions = [Intention::Straight, Intention::TurnLeft, Intention::TurnRight];
    let mdps = intentions
        .iter()
        .map(|&i| layout.mdp(i, discount).map(Arc::new))
        .collect::<Result<Vec<_>>>()?;
    let mut contexts = Vec::new();
    for context in dag.enumerate_contexts()? {
        let (r, i) = (context.assignment[0], context.assignment[1]);
        let rule = [Rule::LeftSide, Rule::RightSide][r];
        let intention = intentions[i];
        let mut reward = Vec::with_capacity(layout.n_cells());
        for y in 0..layout.size {
            for x in 0..layout.size {
                reward.push(layout.reward(x, y, rule, intention));
            }
        }
        let mdp = mdps[i].clone();
        let initial = uniform_nonterminal(&mdp);
        contexts.push(ContextEnv {
            context,
            mdp,
            true_reward: RewardVector::new(reward)?,
            initial,
        });
    }
    Ok(EnvBundle {
        name: "jctnav",
        dag,
        contexts,
    })
}
