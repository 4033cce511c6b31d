//! Experiment configuration, execution, persistence and reporting.

pub mod config;
pub mod plot;
pub mod record;
pub mod run;
pub mod suite;
pub mod summary;

pub use config::{
    ConfigError, EnvKind, ExperimentConfig, Exploration, MazeSettings, Method, Phase, Schedule,
};
pub use plot::{emit_plots, render_svg, PlotMetric};
pub use record::{Entry, MetricSample, RecordError, RuleEvent, RunRecord};
pub use run::{run_pllb_loop, run_with_backend, sayselect_episode_score, MazeEval, RunError};
pub use suite::{default_threads, load_records, record_file_name, run_suite};
pub use summary::{at_checkpoints, mean_sd, summarize, to_csv_string, write_csv, SummaryRow};
