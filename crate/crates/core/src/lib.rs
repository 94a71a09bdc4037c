//! Soundscape analytics toolkit.
//!
//! The pipeline mixes labelled synthetic soundscapes, extracts spectral
//! features and classical acoustic indices, turns per-window classifier
//! scores into recording-level multi-label decisions, and evaluates those
//! decisions (metrics, curves, threshold tuning, error stratification and
//! index/diversity correlation).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod audio_io;
pub mod decision;
pub mod error;
pub mod eval;
pub mod features;
pub mod indices;
pub mod labels;
pub mod scores;
pub mod synthmix;
pub mod util;

pub use audio_io::{decode_wav, resample, slice, write_wav_i16, AudioClip};
pub use decision::{aggregate, apply_pda, count_for_fraction, decide, AnnotationSet, Decision, PdaMode, PdaPolicy, ThresholdMode, ThresholdPolicy};
pub use error::{Error, Result};
pub use eval::{evaluate, macro_f1, stratify_errors, tune_thresholds, EvalReport, Objective};
pub use features::{log_mel, stft_magnitude, MelFilterbank, Scale, Spectrogram};
pub use labels::{Class, LabelSet};
pub use indices::{compute_indices, IndexParams, IndexResult};
pub use synthmix::{build_corpus, draw_recipe, render_mix, render_silence, MixConfig, MixRecipe, MixedClip, SourcePool};
pub use scores::{dump_scores, enumerate_windows, load_scores, ScoreMatrix, WindowSpec};
