//! Optimal annuitization timing with flexible post-retirement labor.
//!
//! The agent consumes, chooses how much to work and invests until an
//! irreversible switch into a life annuity. The solver works in the dual
//! (shadow price) variable where the free-boundary problem has a closed form
//! up to one scalar root.

// `!(x > 0.0)` is used deliberately so NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod boundary;
pub mod dual_utility;
pub mod error;
pub mod model;
mod numerics;
pub mod policy;
pub mod rng;
pub mod simulator;
pub mod sweep;
pub mod verification;

pub use boundary::DualSolution;
pub use error::{Error, Result};
pub use model::{DerivedConstants, Model, ModelParams, Regime, ThresholdScaling};
pub use policy::PolicyPoint;
pub use simulator::{CohortStats, PathRecord, SimulationConfig};
pub use verification::{CheckResult, VerificationReport};
