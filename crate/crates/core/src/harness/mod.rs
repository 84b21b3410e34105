//! Experiment configuration, CSV input and output, and the Monte Carlo driver.

pub mod bench;
pub mod config;
pub mod csv_io;

pub use bench::{run_benchmark, run_method, BenchmarkResult, BenchmarkTable, Method, MethodOutput, Replicate, Simulation, SCHEMA_VERSION};
pub use config::{ExperimentConfig, MechanismEntry};
pub use csv_io::{default_names, load_csv, read_csv, write_csv, write_matrix_csv, CsvTable, NA};
