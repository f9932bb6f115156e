//! ECG linkage-attack harness.
//!
//! A 1-D vision transformer learns to map fixed-length ECG windows to the
//! identities an attacker already knows. Probes are matched by softmax
//! confidence and rejected as unknown below a calibrated threshold; the
//! harness then measures how much re-identification risk remains.

pub mod attack;
pub mod cli;
pub mod data;
pub mod error;
pub mod label;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod scenarios;
pub mod seed;
pub mod signal;

pub use error::{Error, Result};
pub use label::Label;
