//! Experiment plumbing: configuration, dataset ingestion, synthetic data,
//! metrics files with manifests, and run comparison.

pub mod config;
pub mod data_io;
pub mod experiment;
pub mod synthetic;

pub use config::{Algorithm, ExperimentConfig};
pub use data_io::{load_csv, load_libsvm, parse_libsvm, write_csv, write_libsvm};
pub use experiment::{build_problem, compare, run_config, run_experiment, write_summary, RunOutcome, SummaryRow};
pub use synthetic::{gen_synthetic, LabelModel, SyntheticSpec};
