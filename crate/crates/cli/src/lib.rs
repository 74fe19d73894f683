//! Experiment harness: config files, repeated paired-seed runs, metrics
//! records, model files and comparison tables.

pub mod config;
pub mod experiment;
pub mod metrics;
pub mod model_io;
pub mod summary;

pub use config::{ConfigError, DataSource, ExperimentConfig, Method, Splits};
pub use experiment::{model_path, run_experiment, run_seed, ExperimentError, RunOptions};
pub use metrics::{read_records, MetricsRecord};
pub use model_io::{load_model, save_model, ModelError, SavedModel};
pub use summary::{render_table, summarize, summarize_records, write_csv, MethodSummary};
