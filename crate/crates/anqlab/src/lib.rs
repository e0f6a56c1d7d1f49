//! Offline Q-learning with adaptive neighborhood constraints, plus the
//! verifier machinery used to check the method's supporting claims.
//!
//! The crate has three layers:
//!
//! - numeric substrate: [`nnet`] (small MLPs with analytic gradients, Adam,
//!   Polyak targets) and [`exec`] (rayon-or-sequential fan-out);
//! - the algorithm: [`env`] / [`data`] synthetic tasks and datasets,
//!   [`learner`] with the four coupled losses, [`variants`] for ablations;
//! - verifiers: [`tabular`] exact-MDP oracles and [`geometry`] Monte Carlo
//!   support-approximation checks, orchestrated by [`harness`].

pub mod data;
pub mod env;
pub mod error;
pub mod exec;
pub mod geometry;
pub mod harness;
pub mod learner;
pub mod nnet;
pub mod tabular;
pub mod variants;
pub mod rng;

pub use error::{Error, Result};
