//! Experiment configuration and the pipelines behind each command.

mod commands;
mod config;
mod image;
mod xcorr_demo;

pub use commands::*;
pub use config::*;
pub use image::*;
pub use xcorr_demo::*;
