//! Batch analytics over confirmed-case reports: ingest, infection-source
//! classification, weekly and spatial transmission dynamics, and gradient
//! boosting regression of case counts against distance and population
//! outflow.

pub mod case_model;
pub mod classify;
pub mod dynamics;
mod error;
pub mod gbr;
pub mod ingest;
pub mod synth;

pub use error::{Error, Result};
