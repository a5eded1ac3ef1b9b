pub mod config;
pub mod error;
pub mod estimator;
pub mod gains;
pub mod io;
pub mod linalg;
pub mod model;
pub mod sim;
pub mod subspace;
pub mod threat;

pub use config::Tolerances;
pub use error::{Error, Result};
