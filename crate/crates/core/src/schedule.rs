//! Variance schedules and the closed-form forward process.
//!
//! Step indices are zero based: code index `t` in `0..T` is diffusion step
//! `t + 1`. `alpha_bars[t]` is therefore the product of `1 - betas[i]` for
//! `i` in `0..=t`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::Signal;

pub const DEFAULT_STEPS: usize = 1000;
pub const DEFAULT_BETA_START: f64 = 1e-4;
pub const DEFAULT_BETA_END: f64 = 0.02;
pub const DEFAULT_COSINE_OFFSET: f64 = 0.008;
pub const COSINE_MAX_BETA: f64 = 0.999;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleKind {
    Linear,
    Cosine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleConfig {
    pub kind: ScheduleKind,
    pub steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    pub cosine_offset: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            kind: ScheduleKind::Linear,
            steps: DEFAULT_STEPS,
            beta_start: DEFAULT_BETA_START,
            beta_end: DEFAULT_BETA_END,
            cosine_offset: DEFAULT_COSINE_OFFSET,
        }
    }
}

impl ScheduleConfig {
    pub fn build(&self) -> Result<NoiseSchedule> {
        match self.kind {
            ScheduleKind::Linear => linear_schedule(self.steps, self.beta_start, self.beta_end),
            ScheduleKind::Cosine => cosine_schedule(self.steps, self.cosine_offset),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    kind: ScheduleKind,
    betas: Vec<f64>,
    alphas: Vec<f64>,
    alpha_bars: Vec<f64>,
}

/// Coefficients of one ancestral step under epsilon parameterization:
/// `mean = inv_sqrt_alpha * (x_t - eps_coeff * eps_hat)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepParams {
    pub inv_sqrt_alpha: f64,
    pub eps_coeff: f64,
    pub variance: f64,
}

impl NoiseSchedule {
    fn from_betas(kind: ScheduleKind, betas: Vec<f64>) -> Self {
        let alphas: Vec<f64> = betas.iter().map(|b| 1.0 - b).collect();
        let alpha_bars = alphas
            .iter()
            .scan(1.0f64, |acc, a| {
                *acc *= a;
                Some(*acc)
            })
            .collect();
        Self {
            kind,
            betas,
            alphas,
            alpha_bars,
        }
    }

    pub fn kind(&self) -> ScheduleKind {
        self.kind
    }

    pub fn steps(&self) -> usize {
        self.betas.len()
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bars
    }

    fn check(&self, t: usize) -> Result<()> {
        if t >= self.steps() {
            return Err(Error::Index {
                index: t,
                len: self.steps(),
            });
        }
        Ok(())
    }

    /// `sqrt(alpha_bar_t)` and `sqrt(1 - alpha_bar_t)`.
    pub fn marginal_coeffs(&self, t: usize) -> Result<(f64, f64)> {
        self.check(t)?;
        let ab = self.alpha_bars[t];
        Ok((ab.sqrt(), (1.0 - ab).sqrt()))
    }

    /// Reverse-step coefficients with the fixed variance `sigma_t^2 = beta_t`.
    /// Valid for every `t < T`; the sampler adds no noise at `t = 0`.
    pub fn posterior_step_params(&self, t: usize) -> Result<StepParams> {
        self.check(t)?;
        let beta = self.betas[t];
        Ok(StepParams {
            inv_sqrt_alpha: 1.0 / self.alphas[t].sqrt(),
            eps_coeff: beta / (1.0 - self.alpha_bars[t]).sqrt(),
            variance: beta,
        })
    }

    /// Two-column `(t, alpha_bar_t)` text table for plotting.
    pub fn alpha_bar_table(&self) -> String {
        let mut out = String::from("# t alpha_bar\n");
        for (t, ab) in self.alpha_bars.iter().enumerate() {
            out.push_str(&format!("{t} {ab:.12e}\n"));
        }
        out
    }
}

pub fn linear_schedule(steps: usize, beta_start: f64, beta_end: f64) -> Result<NoiseSchedule> {
    if steps < 2 {
        return Err(Error::Parameter(format!("T must be at least 2, got {steps}")));
    }
    if !(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0) {
        return Err(Error::Parameter(format!(
            "need 0 < beta_start <= beta_end < 1, got [{beta_start}, {beta_end}]"
        )));
    }
    let step = (beta_end - beta_start) / (steps - 1) as f64;
    let mut betas: Vec<f64> = (0..steps).map(|t| beta_start + step * t as f64).collect();
    betas[steps - 1] = beta_end;
    Ok(NoiseSchedule::from_betas(ScheduleKind::Linear, betas))
}

/// Continuous squared-cosine `alpha_bar(t) = f(t) / f(0)` for `t` in `[0, T]`.
pub fn cosine_alpha_bar(t: f64, steps: usize, offset: f64) -> f64 {
    let f = |u: f64| {
        let c = ((u / steps as f64 + offset) / (1.0 + offset) * std::f64::consts::FRAC_PI_2).cos();
        c * c
    };
    f(t) / f(0.0)
}

pub fn cosine_schedule(steps: usize, offset: f64) -> Result<NoiseSchedule> {
    if steps < 2 {
        return Err(Error::Parameter(format!("T must be at least 2, got {steps}")));
    }
    if !(offset > 0.0 && offset.is_finite()) {
        return Err(Error::Parameter(format!("cosine offset must be positive, got {offset}")));
    }
    let betas = (0..steps)
        .map(|t| {
            let prev = cosine_alpha_bar(t as f64, steps, offset);
            let next = cosine_alpha_bar((t + 1) as f64, steps, offset);
            (1.0 - next / prev).clamp(0.0, COSINE_MAX_BETA)
        })
        .collect();
    Ok(NoiseSchedule::from_betas(ScheduleKind::Cosine, betas))
}

/// `x_t = sqrt(alpha_bar_t) x0 + sqrt(1 - alpha_bar_t) eps`, written into `out`.
pub fn q_sample_into(
    x0: &[f32],
    eps: &[f32],
    t: usize,
    sched: &NoiseSchedule,
    out: &mut [f32],
) -> Result<()> {
    if x0.len() != eps.len() || x0.len() != out.len() {
        return Err(Error::Shape(format!(
            "x0 has {} points but eps has {}",
            x0.len(),
            eps.len()
        )));
    }
    let (a, b) = sched.marginal_coeffs(t)?;
    for ((o, &x), &e) in out.iter_mut().zip(x0).zip(eps) {
        *o = (a * x as f64 + b * e as f64) as f32;
    }
    Ok(())
}

pub fn q_sample(x0: &Signal, t: usize, eps: &[f32], sched: &NoiseSchedule) -> Result<Signal> {
    let mut out = vec![0.0f32; x0.len()];
    q_sample_into(x0.values(), eps, t, sched, &mut out)?;
    Signal::new(out, x0.sample_rate_hz())
}
