//! Large deviations of node 1 in a two-node Jackson network whose second
//! server helps the first while idle.
//!
//! * [`network`]: parameters, traffic equations, stability, jump measures.
//! * [`mgf`]: log-MGFs of the jump measures and their level curves.
//! * [`solver`]: analytic decay rate, regime and optimal fluid path.
//! * [`variational`]: independent numerical minimization of the path actions.
//! * [`sim`]: regenerative Monte Carlo with optional splitting.
//! * [`fork`]: the fork network as a second model.

// Negated comparisons deliberately treat NaN as failing the test.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod fork;
pub mod mgf;
pub mod network;
mod numeric;
pub mod sim;
pub mod solver;
pub mod variational;

pub use error::{Error, Result};
pub use fork::{fork_analyze, ForkParams};
pub use mgf::{RegimeMgf, RegimeRole, ThetaPoint};
pub use network::{
    classify_stability, solve_traffic, JumpMeasure, NetworkParams, StabilityClass, StabilityKind,
    TrafficSolution,
};
pub use sim::{estimate_overflow, QueueModel, SimConfig, SimEstimate, Splitting, WalkModel};
pub use solver::{analyze, fluid_path, FluidPath, LdAnalysis, ModelMgfs, Regime};
