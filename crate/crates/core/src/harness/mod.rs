//! Experiment harness: synthetic corpus, configuration, recovery runs and sweeps.

pub mod config;
pub mod experiments;
pub mod synthetic;

pub use config::{ExperimentConfig, MaskSource, Profile, VideoSource};
pub use experiments::{
    denoise_demo, mask_sweep_csv, param_sweep_csv, prepare, recover_scene, run_recover, sweep_alpha, sweep_mask, sweep_omega,
    theory_bounds_csv, total_variation, DenoiseTrace, MaskSweepRow, ParamSweepRow, RecoverSummary, Scene,
};
pub use synthetic::{corpus, gen_synthetic, SyntheticKind, SyntheticSpec};
