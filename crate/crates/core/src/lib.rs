//! Snapshot compressive video recovery with bagged untrained video priors.
//!
//! The crate covers the binary-mask forward model, a hand-differentiated
//! decoder network, the multi-scale bagged projection, the projected
//! gradient recovery loop, quality metrics, bound evaluators for mask design,
//! and the experiment harness behind the `scibdvp` binary.

pub mod bdvp;
pub mod cube;
pub mod error;
pub mod harness;
pub mod io;
pub mod measurement;
pub mod metrics;
pub mod nn;
pub mod par;
pub mod rng;
pub mod solver;
pub mod theory;

pub use cube::{Measurement, Region, VideoCube, RHO};
pub use error::{Error, Result};
pub use measurement::{add_noise, add_noise_cube, gen_mask, MaskCube, SensingOperator};
pub use par::Exec;
