//! Batch workflows over `soundscape-core`: indices, corpus mixing,
//! evaluation, threshold tuning and the index/diversity case study.

pub mod commands;
pub mod config;

pub use commands::{
    cmd_case_study, cmd_evaluate, cmd_features, cmd_indices, cmd_mix, cmd_tune, parse_counts, Outcome,
};
pub use config::RunConfig;
