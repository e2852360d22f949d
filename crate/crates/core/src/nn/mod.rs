//! The untrained video-prior decoder: kernels, forward/backward pass and optimizer.

pub mod adam;
pub mod arch;
mod fpmode;
pub mod model;
pub mod ops;
pub mod real;

pub use adam::Adam;
pub use fpmode::FlushDenormals;
pub use arch::{ConvLayout, DvpArchitecture, FULL_BLOCKS, FULL_CHANNELS};
pub use model::{train_dvp, train_with, DataTerm, DvpModel, FitProblem, LossGrad, TrainReport, Workspace};
pub use real::Real;
