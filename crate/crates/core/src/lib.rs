pub mod calibration;
pub mod config;
pub mod designs;
pub mod divergence;
pub mod error;
pub mod harness;
pub mod inference;
pub mod kernel;
pub mod linalg;
pub mod stats;

pub use error::{Error, Result};
