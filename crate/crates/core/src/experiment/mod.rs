//! Configuration, checkpoints and the train / eval / ablate / export commands.

pub mod ablate;
pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod detector;
pub mod export;
pub mod run;
pub mod train;

pub use ablate::{run_arms, suite_arms, Arm, ArmResult, Suite};
pub use config::{ExperimentConfig, TrainConfig};
pub use detector::{Detector, DetectorOutput};
pub use train::{train, LogRow, TrainOutcome};
