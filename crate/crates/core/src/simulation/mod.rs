//! Simulation harness: Matérn Gaussian-process confounders, the data
//! generating model, and the Monte Carlo comparison driver.

pub mod generate;
pub mod gp;
pub mod matern;
pub mod monte_carlo;

pub use generate::{generate_dataset, generate_with, uniform_locations, DataModel, SimulatedDataset};
pub use gp::{sample_gp, GpSampler};
pub use matern::{matern_correlation, MaternParams};
pub use monte_carlo::{run_monte_carlo, MethodSpec, SimulationConfig, SimulationSummary};
