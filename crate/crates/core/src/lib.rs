//! Video-based engagement measurement from pre-extracted per-frame affect
//! and behavioral signals.

pub mod dataset;
pub mod error;
pub mod eval;
pub mod features;
pub mod ingest;
pub mod models;
pub mod ordinal;
pub mod run;
pub mod synth;
pub mod training;

pub use error::{Error, Result};
