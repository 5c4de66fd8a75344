//! Files: checkpoints, configs, CSV tables and SVG plots.

pub mod checkpoint;
pub mod config;
pub mod csv;
pub mod svg;

pub use checkpoint::{load_checkpoint, load_checkpoint_expecting, save_checkpoint};
pub use config::ExperimentConfig;
