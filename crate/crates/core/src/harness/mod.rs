//! Configuration, persistence, sweeps and reports driven by the `fmfd` binary.

pub mod checkpoint;
pub mod checks;
pub mod compare;
pub mod config;
pub mod fit;
pub mod sweep;

pub use checkpoint::{load_orbitals, save_orbitals};
pub use checks::{run_all, CheckOutcome};
pub use compare::{compare_config, format_compare_csv, format_distance_table, run_compare};
pub use config::Config;
pub use fit::{fit_slope, SlopeFit};
pub use sweep::{
    format_csv, parse_csv, run_evolve, run_sweep, run_trajectory, MetricsRecord, RunConfig, SweepConfig, SweepSummary,
};
