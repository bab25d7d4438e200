//! Entangling capability of parameterized quantum circuits.
//!
//! Ground-truth labels come from statevector simulation of the
//! Meyer-Wallach measure averaged over sampled rotation angles
//! ([`simulator`]). A from-scratch LSTM regressor ([`model`]) learns to
//! predict those labels from a structure-only gate encoding
//! ([`encoding`]) of each circuit ([`circuit`]). [`dataset`] covers
//! labeling, persistence, splitting and evaluation metrics.

pub mod circuit;
pub mod dataset;
pub mod encoding;
pub mod error;
pub mod model;
pub mod rng;
pub mod simulator;

pub use error::{Error, Result};
