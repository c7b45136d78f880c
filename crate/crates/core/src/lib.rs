pub mod bayes;
pub mod error;
#[cfg(feature = "cli")]
pub mod experiment;
pub mod greedy;
pub mod linalg;
pub mod model;
pub mod observability;
pub mod rb;
pub mod sensors;
pub mod timer;

pub use error::{Error, Result};
