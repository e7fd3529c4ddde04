//! Lithium-ion state-of-health estimation with an LSTM trained on
//! per-cycle degradation stress factors.
//!
//! The pipeline: raw samples ([`dataset::ingest`]) are reduced to cycle
//! records ([`dataset::aggregate_cycles`]), framed as sliding windows
//! ([`dataset::make_windows`]), fitted with an LSTM and Adam
//! ([`trainer::train`]) and scored per train/test split
//! ([`evaluator::run_split_experiment`]).

pub mod dataset;
pub mod error;
pub mod evaluator;
pub mod lstm;
pub mod numerics;
pub mod optimizer;
pub mod seeding;
pub mod synth;
pub mod trainer;

pub use error::{Result, SohError};
