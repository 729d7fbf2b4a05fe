//! Configuration-driven experiments: data ingestion and simulation, chain
//! execution, tuning, prediction and trace persistence.

pub mod config;
pub mod data;
pub mod persist;
pub mod presets;
pub mod run;

pub use config::RunConfig;
pub use data::{load_dataset, simulate_poisson_dataset, substream, Dataset};
pub use run::{compare, diagnose, fit, fit_to_dir, FitOutput, predict, predict_to_dir, tune, tune_to_dir, Report};
