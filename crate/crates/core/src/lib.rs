pub mod error;
pub mod exit_measures;
pub mod experiments;
pub mod io;
pub mod kernels;
pub mod rng;
pub mod stats;
pub mod trotter_sim;
pub mod verify;

pub use error::{Error, Result};
