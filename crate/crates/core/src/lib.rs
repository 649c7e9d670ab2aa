//! Simulation and numerical certification of nonlinear sampled-data
//! control systems under nonuniform sampling.

pub mod consistency;
pub mod dtmodels;
pub mod dynamics;
pub mod error;
pub mod harness;
pub mod probe;
pub mod registry;
pub mod sampling;
pub mod stability;
pub mod status;
pub mod sysdsl;
pub mod vecops;

pub use error::{Error, Result};
