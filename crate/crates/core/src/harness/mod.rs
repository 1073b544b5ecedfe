//! Simulation models, experiment runner, CSV plumbing and the wine data.

pub mod config;
pub mod experiment;
pub mod io;
pub mod sim;
pub mod wine;

pub use config::ExperimentConfig;
pub use experiment::{run_experiment, summarize, ExperimentResults, ExperimentSpec, ResultRow, Summary};
pub use sim::{generate_model, ModelId, SimModelSpec};
