//! Configuration, on-disk formats, and the pipelines that tie the model,
//! sampler, and combination stages together.

pub mod config;
pub mod io;
pub mod pipeline;

pub use config::{KvMap, RunConfig};
pub use pipeline::{combine_run, metrics_run, report_run, run_distributed, run_full, simulate_run};
