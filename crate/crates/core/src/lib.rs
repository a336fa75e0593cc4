//! Test case prioritization for continuous integration as a reinforcement
//! learning problem.
//!
//! * [`dataset`] loads or generates CI histories and derives features.
//! * [`envs`] replays one cycle per episode under the pointwise, pairwise and
//!   listwise formulations.
//! * [`agents`] holds the function approximator, a DQN agent and an n-step
//!   actor-critic agent.
//! * [`orchestrator`] runs the train-then-predict protocol cycle by cycle.
//! * [`metrics`] scores rankings with APFD and NRPA.

pub mod agents;
pub mod dataset;
pub mod envs;
pub mod error;
pub mod exec;
pub mod metrics;
pub mod orchestrator;

pub use error::{Error, Result};
