//! Tire force estimation from a single tri-axial accelerometer on the tire
//! inner liner.
//!
//! The crate covers the whole chain: a synthetic rig ([`simulator`]), the
//! contact-patch preprocessing ([`preprocess`]), three estimators
//! ([`mlp`], [`forest`], [`rnn`]), evaluation ([`eval`]) and the file-based
//! workflow behind the command-line tool ([`workflow`]).

pub mod config;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod forest;
pub mod mlp;
pub mod preprocess;
pub mod rng;
pub mod rnn;
pub mod simulator;
pub mod workflow;
mod textfmt;

pub use dataset::FeatureSet;
pub use error::{Error, Result};

pub(crate) fn hex(bytes: &[u8]) -> String {
    use std::fmt::Write;
    bytes.iter().fold(String::with_capacity(bytes.len() * 2), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}
