//! Reference computations used by the acceptance suite. Nothing here calls
//! into the code paths it is meant to check.

pub mod chain;
pub mod dist;
pub mod kernel;
pub mod sweep;
pub mod vertices;
