//! Global-local attention fusion for multimodal object detection, with a synthetic
//! adverse-weather sensor simulator, an anchor detection head, VOC-style evaluation and
//! the experiment driver behind the `gla` binary.

pub mod detection;
pub mod domain;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod fusion;
pub mod nn;
pub mod sim;

pub use error::{GlaError, Result};
