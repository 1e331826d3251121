//! Experiment orchestration: configs, multi-method runs, metrics and
//! table export.

mod config;
mod export;
mod metrics;
mod run;

pub use config::{
    DmdSettings, ExperimentConfig, GeneratorConfig, KaeSettings, Method, NoiseSettings,
};
pub use export::{
    export, read_steps_csv, read_summary_csv, write_steps_csv, write_summary_csv, ExportPaths,
    StepTable, SUMMARY_HEADER,
};
pub use metrics::{
    eigen_tracking_error, hungarian, kde, kde_reflected, median, normalise_minmax, quantile,
    silverman_bandwidth, Density, TrackingError,
};
pub use run::{
    generate, kae_filter, normalised_gv, run_experiment, run_method, summarise, train_kae,
    MethodRun, RunResult, RunSummary, StepRecord, Stream,
};
