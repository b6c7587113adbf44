//! Voltage-guided conditional diffusion for vibration signal generation.
//!
//! The crate covers the whole pipeline: dataset types and storage
//! ([`signal`]), noise schedules ([`schedule`]), the noise-prediction
//! network ([`denoiser`]) with its condition branch ([`guidance`]), training
//! and sampling ([`diffusion`]), fidelity metrics ([`metrics`]), a synthetic
//! paired-signal benchmark ([`synth`]) and persistence ([`checkpoint`],
//! [`config`]).

pub mod checkpoint;
pub mod config;
pub mod denoiser;
pub mod diffusion;
pub mod error;
pub mod guidance;
pub mod metrics;
pub mod nn;
pub mod schedule;
pub mod signal;
pub mod synth;

pub use error::{Error, Result};
