//! Return-landscape analysis for small deterministic control policies.

pub mod bootstrap;
pub mod connectivity;
pub mod env;
pub mod error;
pub mod failure;
pub mod io;
pub mod landscape;
pub mod learner;
pub mod par;
pub mod policy;
pub mod purd;
pub mod rng;
pub mod rollout;
pub mod stabilizer;
pub mod stats;

pub use error::{Error, Result};
