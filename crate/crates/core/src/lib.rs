//! Interval Markov chain abstractions of discrete-time stochastic systems.
//!
//! The pipeline grids a safe box into cells, bounds the one-step transition
//! probabilities between cells by partitioning the noise domain, checks
//! reach-avoid properties with robust interval value iteration, tightens the
//! resulting intervals by clustering successor cells, and cross-checks the
//! verified bounds by simulation.

pub mod cluster;
pub mod config;
pub mod dynamics;
pub mod error;
pub mod geometry;
pub mod imc;
pub mod mc;
pub mod noise;
pub mod pipeline;
pub mod verify;

pub use error::{Error, Result};
