//! Experiment configuration, Monte Carlo regret sweeps and offline replay.

pub mod config;
pub mod experiment;
pub mod replay;

pub use config::{AssumedDynamics, ExperimentConfig, Overrides, PolicyChoice, PolicyConfig, RegretMode};
pub use experiment::{
    run_experiment, run_realization, write_outputs, write_raw_csv, write_summary_csv, ExperimentResult,
    RealizationResult, RealizationTrace, RegretTrace, RAW_FILE, SUMMARY_FILE,
};
pub use replay::{
    generate_log, generate_synthetic_log, replay_all, replay_evaluate, synthetic_log_config, write_replay_csv,
    InteractionLog, LogRecord, ReplayConfig, ReplayResult, SyntheticLogSpec,
};
