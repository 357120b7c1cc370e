//! Dataset collection, evaluation runs, metrics and reports.

mod dataset;
mod eval;
mod metrics;
mod report;
mod training;

use thiserror::Error;

pub use dataset::{collect_dataset, look_around, read_dataset, scene_samples, write_dataset};
pub use eval::{
    read_results, run_episodes, run_eval, scene_params, split_scenes, write_results, BackendSpec, EvalConfig,
    EvalResults, SeedRange, Split, SplitSpec, DEFAULT_HARD_FRACTION,
};
pub use metrics::{compute_metrics, path_weight, Metrics, Scores};
pub use report::render_report;
pub use training::{split_by_scene, train_localizer, TrainOutcome, TrainSettings};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("expert failed on scene {seed}: {message}")]
    ExpertFailure { seed: u64, message: String },
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("no episode results")]
    EmptyResults,
    #[error("format: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, HarnessError>;
