//! Sliced multi-marginal Monge-Wasserstein distances.

pub mod bench;
pub mod error;
pub mod exec;
pub mod gradients;
pub mod io;
pub mod measures;
pub mod ot1d;
pub mod rlreward;
pub mod rng;
pub mod slicing;
pub mod solvers;
pub mod verify;

pub use error::{Result, SmwError};
pub use exec::Execution;
pub use measures::{DiscreteMeasure, MeasureSet, SimplexWeights};
pub use slicing::{DistanceEstimate, ProjectionSet};
