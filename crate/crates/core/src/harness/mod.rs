//! Experiment front-end: scenario configuration, seeded instance
//! generation, sweeps and CSV output.

mod config;
mod instance;
mod output;
mod run;

pub use config::{is_proper, Distributions, Method, Range, Scenario, ScenarioConfig, Shape};
pub use instance::{dump_instance, generate_instance, restore_instance, InstanceSpec, INSTANCE_SCHEMA};
pub use output::{
    header_comment, read_results, results_csv, write_aggregates, write_results, AGGREGATE_COLUMNS,
    CSV_SCHEMA_VERSION, RESULT_COLUMNS,
};
pub use run::{emit_plot_data, run_scenario, AggregateRow, ResultRow};
