//! Poverty-probability scorecards from household survey data.
//!
//! The pipeline fits survey-weighted elastic-net logistic regressions,
//! picks a short list of questions by resampling frequency, and turns the
//! final fit into an integer 0–100 scorecard with per-region lookup tables.

pub mod cv;
pub mod data;
pub mod design;
pub mod error;
pub mod evaluation;
pub mod json;
pub mod pipeline;
pub mod rng;
pub mod scorecard;
pub mod selection;
pub mod solver;
pub mod synthetic;

pub use error::{Error, Result};
