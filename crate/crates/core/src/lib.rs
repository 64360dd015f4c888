pub mod baselines;
pub mod channel;
pub mod error;
pub mod gas;
pub mod gates;
pub mod harness;
pub mod hubo;
pub mod indicators;
pub mod parallel;
pub mod rng;
pub mod statevector;
pub mod thresholds;

pub use error::{Error, Result};
