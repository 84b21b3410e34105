pub mod baselines;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod moments;
pub mod ppca;

pub use error::{Error, Result};
