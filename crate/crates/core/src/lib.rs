//! Context-hierarchy maximum-entropy inverse reinforcement learning over
//! finite tabular MDPs.
//!
//! The crate is `no_std` (it needs `alloc`). Everything here is a pure
//! function of its inputs: IO, file formats, wall clocks and the experiment
//! driver live in the companion `chirl` crate.
//!
//! Module map:
//!
//! * [`mdp`]: tabular MDPs and the dynamic-programming primitives (soft and
//!   hard value iteration, policy evaluation, discounted occupancy).
//! * [`context`]: the context DAG, context paths and label resolution.
//! * [`reward_net`]: modular reward networks composed along context paths,
//!   with a hand-written backward pass.
//! * [`irl`]: visitation statistics, the likelihood loss and its gradient,
//!   and the training loop for CHIRL and the baseline reward heads.
//! * [`env`]: the GoalNav, JctNav and Taxi benchmarks.
//! * [`metrics`]: normalized EVD, demonstration NLL, seed aggregation.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod context;
pub mod env;
mod error;
pub mod irl;
pub mod math;
pub mod mdp;
pub mod metrics;
pub mod reward_net;

pub use error::{Error, Result};
