//! Discrete-time simulation and tabular multi-agent Q-learning for connected
//! automated vehicles crossing a signal-free four-way intersection.
//!
//! The crate is `no_std` and only needs `alloc`. Everything here is a pure
//! computation driven by caller-owned, seeded random number generators; file
//! formats, configuration loading and the command line live in the `cavq`
//! companion crate.
//!
//! Module map:
//!
//! * [`domain`]: geometry, simulation settings, vehicle state, discretization
//!   and the arrival process.
//! * [`env`]: vehicle dynamics, observations and collision detection.
//! * [`rewards`]: per-step reward terms and their weighted composition.
//! * [`learner`]: Q-tables, epsilon-greedy exploration and the hysteretic,
//!   independent and centralized update rules.
//! * [`fifo`]: first-in-first-out merging schedule.
//! * [`baseline`]: energy-optimal closed-form trajectories for the schedule.
//! * [`harness`]: episode runner, training, evaluation, scenario presets and
//!   paired comparison against the baseline.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod baseline;
pub mod domain;
pub mod env;
pub mod fifo;
pub mod harness;
pub mod learner;
pub mod rewards;

pub use domain::{
    Approach, CavState, ConfigError, DiscreteGrid, IntersectionConfig, Phase, RewardWeights,
    SimConfig, StateKey,
};
pub use env::{ObservedState, StepOutcome, VehicleEvents};
pub use learner::{LearnerConfig, QTable, UpdateMode};
pub use rewards::{Framework, RewardBreakdown};
