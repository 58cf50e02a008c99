//! Simulation designs, Monte Carlo replication and summary tables.

pub mod design;
pub mod monte_carlo;
pub mod table;

pub use design::{generate_dataset, DesignId, NuScale, SimulationDesign};
pub use monte_carlo::{run_monte_carlo, ParameterSummary, SimulationSummary, VariantSummary, MAX_FAILURE_RATE};
pub use table::{summary_table, SummaryTable};
