//! Fidelity metrics for generated signals: RMSE, PSNR and frequency-spectrum
//! cosine similarity (FSCS).

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PsnrMaxMode {
    /// Peak is `max |y|` of the ground-truth sample.
    #[default]
    PerSampleMaxAbs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FftKind {
    #[default]
    OneSidedMagnitude,
}

/// What PSNR reports when the two signals are identical.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "policy")]
pub enum IdenticalPolicy {
    CapAtValue { db: f64 },
    Error,
}

impl Default for IdenticalPolicy {
    fn default() -> Self {
        IdenticalPolicy::CapAtValue { db: 100.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricConfig {
    pub psnr_max_mode: PsnrMaxMode,
    pub fft_kind: FftKind,
    pub psnr_identical_policy: IdenticalPolicy,
}

fn check_lengths(y: &[f32], y_hat: &[f32]) -> Result<()> {
    if y.len() != y_hat.len() {
        return Err(Error::Shape(format!(
            "signal lengths differ: {} vs {}",
            y.len(),
            y_hat.len()
        )));
    }
    if y.is_empty() {
        return Err(Error::Empty("signals are empty".into()));
    }
    Ok(())
}

fn mse(y: &[f32], y_hat: &[f32]) -> f64 {
    let sum: f64 = y
        .iter()
        .zip(y_hat)
        .map(|(a, b)| {
            let d = *a as f64 - *b as f64;
            d * d
        })
        .sum();
    sum / y.len() as f64
}

pub fn rmse(y: &[f32], y_hat: &[f32]) -> Result<f64> {
    check_lengths(y, y_hat)?;
    Ok(mse(y, y_hat).sqrt())
}

/// Peak signal-to-noise ratio in decibels, `10 log10(MAX^2 / MSE)`.
pub fn psnr(y: &[f32], y_hat: &[f32], cfg: &MetricConfig) -> Result<f64> {
    check_lengths(y, y_hat)?;
    let peak = match cfg.psnr_max_mode {
        PsnrMaxMode::PerSampleMaxAbs => y.iter().fold(0.0f64, |m, v| m.max((*v as f64).abs())),
    };
    if peak == 0.0 {
        return Err(Error::UndefinedReference(
            "ground truth is all zeros, so its peak is zero".into(),
        ));
    }
    let err = mse(y, y_hat);
    if err == 0.0 {
        return match cfg.psnr_identical_policy {
            IdenticalPolicy::CapAtValue { db } => Ok(db),
            IdenticalPolicy::Error => Err(Error::UndefinedReference(
                "signals are identical, PSNR is infinite".into(),
            )),
        };
    }
    Ok(10.0 * (peak * peak / err).log10())
}

/// One-sided magnitude spectrum (`L/2 + 1` bins) of a real signal.
pub fn magnitude_spectrum(x: &[f32]) -> Vec<f64> {
    let mut planner = FftPlanner::<f64>::new();
    magnitude_spectrum_with(&mut planner, x)
}

fn magnitude_spectrum_with(planner: &mut FftPlanner<f64>, x: &[f32]) -> Vec<f64> {
    let fft = planner.plan_fft_forward(x.len());
    let mut buf: Vec<Complex<f64>> = x.iter().map(|v| Complex::new(*v as f64, 0.0)).collect();
    fft.process(&mut buf);
    buf.truncate(x.len() / 2 + 1);
    buf.iter().map(|c| c.norm()).collect()
}

/// Cosine similarity of the one-sided FFT magnitude spectra.
pub fn fscs(y: &[f32], y_hat: &[f32]) -> Result<f64> {
    check_lengths(y, y_hat)?;
    let mut planner = FftPlanner::new();
    let a = magnitude_spectrum_with(&mut planner, y);
    let b = magnitude_spectrum_with(&mut planner, y_hat);
    let dot: f64 = a.iter().zip(&b).map(|(p, q)| p * q).sum();
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::UndefinedSimilarity(
            "a signal has an all-zero spectrum".into(),
        ));
    }
    Ok((dot / (na * nb)).clamp(0.0, 1.0))
}

/// Arithmetic mean and population standard deviation.
pub fn batch_stats(values: &[f64]) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(Error::Empty("no values to summarize".into()));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Ok((mean, var.sqrt()))
}
