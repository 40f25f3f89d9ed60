//! Simulation and numerical checks for super-Brownian motion with
//! (1+β)-stable branching.
//!
//! The crate is organized bottom-up: [`rng_stable`] supplies random streams
//! and heavy-tailed samplers, [`kernels_green`] the deterministic kernels,
//! [`particle_sbm`] the branching particle approximation, and the remaining
//! modules the estimators and checks built on top of them.

pub mod error;
pub mod kernels_green;
pub mod quad;
pub mod rng_stable;
pub mod stats;

pub use error::{LabError, Result};
pub mod particle_sbm;
pub mod loglaplace_solver;
pub mod localtime_tanaka;
pub mod stable_path;
pub mod continuity_lab;
