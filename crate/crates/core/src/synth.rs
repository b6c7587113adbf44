//! Synthetic paired pulse-voltage / vibration records.
//!
//! A speed profile is integrated into shaft phase. The voltage is a
//! rectangular train with one pulse per revolution, and the vibration mixes
//! shaft harmonics, decaying resonance bursts at the fault's characteristic
//! order, and white noise.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{
    normalize_values, split_assignment, Dataset, PairedSample, Signal, DEFAULT_LENGTH,
};

pub const DEFAULT_SAMPLE_RATE_HZ: f64 = 8192.0;
pub const DEFAULT_NOISE_STD: f64 = 0.05;
/// Fraction of each revolution during which the pulse is high.
pub const PULSE_DUTY: f64 = 0.1;
/// Structural resonance excited by fault impacts, as a fraction of the
/// sample rate.
pub const RESONANCE_FRACTION: f64 = 0.15;
pub const BURST_DECAY_S: f64 = 0.004;
pub const OUTER_RACE_ORDER: f64 = 3.57;
pub const INNER_RACE_ORDER: f64 = 5.43;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentKind {
    Standstill,
    Accelerate,
    Steady,
    Decelerate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Segment {
    pub kind: SegmentKind,
    pub duration_s: f64,
    pub start_hz: f64,
    pub end_hz: f64,
}

impl Segment {
    pub fn standstill(duration_s: f64) -> Self {
        Self {
            kind: SegmentKind::Standstill,
            duration_s,
            start_hz: 0.0,
            end_hz: 0.0,
        }
    }

    pub fn steady(duration_s: f64, hz: f64) -> Self {
        Self {
            kind: SegmentKind::Steady,
            duration_s,
            start_hz: hz,
            end_hz: hz,
        }
    }

    pub fn ramp(duration_s: f64, start_hz: f64, end_hz: f64) -> Self {
        let kind = if end_hz >= start_hz {
            SegmentKind::Accelerate
        } else {
            SegmentKind::Decelerate
        };
        Self {
            kind,
            duration_s,
            start_hz,
            end_hz,
        }
    }
}

/// Piecewise-linear shaft speed over time, with an optional slow
/// multiplicative ripple.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpeedProfile {
    pub id: String,
    pub segments: Vec<Segment>,
    /// Relative speed fluctuation amplitude (0 disables it).
    #[serde(default)]
    pub ripple: f64,
    #[serde(default = "default_ripple_period")]
    pub ripple_period_s: f64,
}

fn default_ripple_period() -> f64 {
    1.7
}

impl SpeedProfile {
    pub fn new(id: impl Into<String>, segments: Vec<Segment>) -> Result<Self> {
        let p = Self {
            id: id.into(),
            segments,
            ripple: 0.0,
            ripple_period_s: default_ripple_period(),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_ripple(mut self, ripple: f64, period_s: f64) -> Result<Self> {
        self.ripple = ripple;
        self.ripple_period_s = period_s;
        self.validate()?;
        Ok(self)
    }

    pub fn steady(id: impl Into<String>, hz: f64, duration_s: f64) -> Result<Self> {
        Self::new(id, vec![Segment::steady(duration_s, hz)])
    }

    /// Standstill, run-up, steady running and run-down.
    pub fn vary_state(id: impl Into<String>, hz: f64, timings: [f64; 4]) -> Result<Self> {
        let [still, up, steady, down] = timings;
        Self::new(
            id,
            vec![
                Segment::standstill(still),
                Segment::ramp(up, 0.0, hz),
                Segment::steady(steady, hz),
                Segment::ramp(down, hz, 0.0),
            ],
        )
    }

    pub fn duration_s(&self) -> f64 {
        self.segments.iter().map(|s| s.duration_s).sum()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("speed profile {:?}: {m}", self.id)));
        if self.segments.is_empty() {
            return bad("segments must not be empty".into());
        }
        for (i, s) in self.segments.iter().enumerate() {
            if !(s.duration_s > 0.0) || !s.duration_s.is_finite() {
                return bad(format!("segments[{i}].duration_s must be positive"));
            }
            if !(s.start_hz >= 0.0 && s.end_hz >= 0.0) || !(s.start_hz + s.end_hz).is_finite() {
                return bad(format!("segments[{i}] frequencies must be finite and nonnegative"));
            }
            let ok = match s.kind {
                SegmentKind::Standstill => s.start_hz == 0.0 && s.end_hz == 0.0,
                SegmentKind::Steady => s.start_hz == s.end_hz && s.start_hz > 0.0,
                SegmentKind::Accelerate => s.end_hz > s.start_hz,
                SegmentKind::Decelerate => s.end_hz < s.start_hz,
            };
            if !ok {
                return bad(format!(
                    "segments[{i}].kind {:?} is inconsistent with start_hz {} / end_hz {}",
                    s.kind, s.start_hz, s.end_hz
                ));
            }
            if i > 0 && self.segments[i - 1].end_hz != s.start_hz {
                return bad(format!(
                    "segments[{i}].start_hz {} does not continue from {}",
                    s.start_hz,
                    self.segments[i - 1].end_hz
                ));
            }
        }
        if !(0.0..1.0).contains(&self.ripple) {
            return bad(format!("ripple {} must be in [0, 1)", self.ripple));
        }
        if !(self.ripple_period_s > 0.0) {
            return bad("ripple_period_s must be positive".into());
        }
        Ok(())
    }

    /// Nominal speed at time `t`, with the profile repeating after its end.
    pub fn frequency_at(&self, t: f64) -> f64 {
        let mut t = t.rem_euclid(self.duration_s());
        for s in &self.segments {
            if t < s.duration_s {
                return s.start_hz + (s.end_hz - s.start_hz) * t / s.duration_s;
            }
            t -= s.duration_s;
        }
        self.segments.last().map_or(0.0, |s| s.end_hz)
    }

    /// Per-sample speed over `n` samples; `ripple_phase` sets the phase of
    /// the ripple.
    pub fn frequency_track(&self, sample_rate_hz: f64, n: usize, ripple_phase: f64) -> Vec<f64> {
        (0..n)
            .map(|i| {
                let t = i as f64 / sample_rate_hz;
                let f = self.frequency_at(t);
                f * (1.0 + self.ripple * (TAU * t / self.ripple_period_s + ripple_phase).sin())
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultKind {
    None,
    InnerRace,
    OuterRace,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultSpec {
    pub kind: FaultKind,
    pub severity: f64,
    /// Fault impacts per shaft revolution.
    pub characteristic_order: f64,
}

impl FaultSpec {
    pub fn healthy() -> Self {
        Self {
            kind: FaultKind::None,
            severity: 1.0,
            characteristic_order: OUTER_RACE_ORDER,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.severity > 0.0 && self.severity <= 1.0) {
            return Err(Error::Config(format!(
                "fault severity {} must be in (0, 1]",
                self.severity
            )));
        }
        if !(self.characteristic_order > 1.0) || !self.characteristic_order.is_finite() {
            return Err(Error::Config(format!(
                "characteristic_order {} must exceed 1",
                self.characteristic_order
            )));
        }
        Ok(())
    }

    /// Standard bearing labels: `NC`, `IF1`-`IF3`, `OF1`-`OF3`, with
    /// severities 0.3, 0.6 and 1.0 for degrees 1-3.
    pub fn preset(label: &str) -> Option<Self> {
        let degree = |d: &str| match d {
            "1" => Some(0.3),
            "2" => Some(0.6),
            "3" => Some(1.0),
            _ => None,
        };
        if label == "NC" {
            return Some(Self::healthy());
        }
        let (kind, order, rest) = if let Some(r) = label.strip_prefix("IF") {
            (FaultKind::InnerRace, INNER_RACE_ORDER, r)
        } else if let Some(r) = label.strip_prefix("OF") {
            (FaultKind::OuterRace, OUTER_RACE_ORDER, r)
        } else {
            return None;
        };
        Some(Self {
            kind,
            severity: degree(rest)?,
            characteristic_order: order,
        })
    }
}

pub const PRESET_LABELS: [&str; 7] = ["NC", "IF1", "IF2", "IF3", "OF1", "OF2", "OF3"];

fn shaft_phase(freq: &[f64], sample_rate_hz: f64, phase0: f64) -> Vec<f64> {
    let mut acc = phase0;
    freq.iter()
        .map(|f| {
            acc += f / sample_rate_hz;
            acc
        })
        .collect()
}

fn pulses(freq: &[f64], phase: &[f64]) -> Vec<f32> {
    freq.iter()
        .zip(phase)
        .map(|(f, p)| (*f > 0.0 && p.rem_euclid(1.0) < PULSE_DUTY) as u8 as f32)
        .collect()
}

fn vibration(
    freq: &[f64],
    phase: &[f64],
    fault: &FaultSpec,
    sample_rate_hz: f64,
    noise_std: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<f64> {
    let n = freq.len();
    let mut out: Vec<f64> = freq
        .iter()
        .zip(phase)
        .map(|(f, p)| {
            if *f > 0.0 {
                0.5 * (TAU * p).sin() + 0.25 * (2.0 * TAU * p + 0.7).sin()
            } else {
                0.0
            }
        })
        .collect();
    if fault.kind != FaultKind::None {
        let resonance = RESONANCE_FRACTION * sample_rate_hz;
        let burst: Vec<f64> = (0..(6.0 * BURST_DECAY_S * sample_rate_hz) as usize)
            .map(|i| {
                let t = i as f64 / sample_rate_hz;
                (-t / BURST_DECAY_S).exp() * (TAU * resonance * t).sin()
            })
            .collect();
        let order = fault.characteristic_order;
        for i in 1..n {
            if (order * phase[i]).floor() <= (order * phase[i - 1]).floor() {
                continue;
            }
            let mut amp = fault.severity;
            if fault.kind == FaultKind::InnerRace {
                // The inner race rotates through the load zone once per revolution.
                amp *= 0.5 * (1.0 + (TAU * phase[i]).cos());
            }
            for (o, b) in out[i..].iter_mut().zip(&burst) {
                *o += amp * b;
            }
        }
    }
    if noise_std > 0.0 {
        for v in &mut out {
            let z: f64 = rng.sample(StandardNormal);
            *v += noise_std * z;
        }
    }
    out
}

fn to_f32_normalized(values: &[f64]) -> Vec<f32> {
    normalize_values(&values.iter().map(|v| *v as f32).collect::<Vec<_>>())
}

/// First `len` samples of the pulse train for `profile`, starting at shaft
/// phase zero.
pub fn gen_voltage(profile: &SpeedProfile, sample_rate_hz: f64, len: usize) -> Result<Signal> {
    profile.validate()?;
    let freq = profile.frequency_track(sample_rate_hz, len, 0.0);
    let phase = shaft_phase(&freq, sample_rate_hz, 0.0);
    Signal::new(pulses(&freq, &phase), sample_rate_hz)
}

/// First `len` samples of the vibration for `profile` and `fault`,
/// normalized to unit peak.
pub fn gen_vibration(
    profile: &SpeedProfile,
    fault: &FaultSpec,
    sample_rate_hz: f64,
    len: usize,
    noise_std: f64,
    seed: u64,
) -> Result<Signal> {
    profile.validate()?;
    fault.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let freq = profile.frequency_track(sample_rate_hz, len, 0.0);
    let phase = shaft_phase(&freq, sample_rate_hz, 0.0);
    let v = vibration(&freq, &phase, fault, sample_rate_hz, noise_std, &mut rng);
    Signal::new(to_f32_normalized(&v), sample_rate_hz)
}

/// One block of samples in a dataset: `count` consecutive windows of a
/// continuous record.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetEntry {
    pub label: String,
    pub profile: SpeedProfile,
    pub fault: FaultSpec,
    pub count: usize,
}

/// Generates each entry's record (looping its profile as needed), slices it
/// into non-overlapping windows, normalizes every window and assigns a
/// seeded 70/30 split.
pub fn make_dataset(
    entries: &[DatasetEntry],
    sample_rate_hz: f64,
    len: usize,
    noise_std: f64,
    seed: u64,
) -> Result<Dataset> {
    if entries.is_empty() {
        return Err(Error::Empty("dataset spec has no entries".into()));
    }
    if !(sample_rate_hz > 0.0) || len == 0 || !(noise_std >= 0.0) {
        return Err(Error::Config(
            "sample_rate_hz and length must be positive and noise_std nonnegative".into(),
        ));
    }
    let mut labels: Vec<String> = Vec::new();
    let mut samples = Vec::new();
    for (k, e) in entries.iter().enumerate() {
        e.profile.validate()?;
        e.fault.validate()?;
        if e.count == 0 {
            return Err(Error::Config(format!("entries[{k}].count must be positive")));
        }
        let window_s = len as f64 / sample_rate_hz;
        if e.profile.duration_s() < window_s {
            return Err(Error::InsufficientData {
                needed: len,
                got: (e.profile.duration_s() * sample_rate_hz) as usize,
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(k as u64 + 1);
        let phase0: f64 = rng.gen();
        let ripple_phase: f64 = rng.gen_range(0.0..TAU);
        let n = e.count * len;
        let freq = e.profile.frequency_track(sample_rate_hz, n, ripple_phase);
        let phase = shaft_phase(&freq, sample_rate_hz, phase0);
        let volt = pulses(&freq, &phase);
        let vib = vibration(&freq, &phase, &e.fault, sample_rate_hz, noise_std, &mut rng);
        for w in 0..e.count {
            let span = w * len..(w + 1) * len;
            samples.push(PairedSample::new(
                Signal::new(to_f32_normalized(&vib[span.clone()]), sample_rate_hz)?,
                Signal::new(normalize_values(&volt[span]), sample_rate_hz)?,
                e.label.clone(),
                e.profile.id.clone(),
            )?);
        }
        if !labels.contains(&e.label) {
            labels.push(e.label.clone());
        }
    }
    let split = split_assignment(samples.len(), seed);
    Dataset::new(samples, labels, split)
}

/// Text spec file for [`make_dataset`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    #[serde(default = "default_rate")]
    pub sample_rate_hz: f64,
    #[serde(default = "default_length")]
    pub length: usize,
    #[serde(default = "default_noise")]
    pub noise_std: f64,
    #[serde(default)]
    pub seed: u64,
    pub profiles: Vec<SpeedProfile>,
    pub entries: Vec<EntrySpec>,
}

fn default_rate() -> f64 {
    DEFAULT_SAMPLE_RATE_HZ
}
fn default_length() -> usize {
    DEFAULT_LENGTH
}
fn default_noise() -> f64 {
    DEFAULT_NOISE_STD
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntrySpec {
    pub label: String,
    /// Id of a profile in `profiles`.
    pub profile: String,
    /// Explicit fault; when absent the label must be a preset name.
    #[serde(default)]
    pub fault: Option<FaultSpec>,
    pub count: usize,
}

impl SynthSpec {
    pub fn parse(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text)?;
        spec.entries()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn entries(&self) -> Result<Vec<DatasetEntry>> {
        let mut profiles = BTreeMap::new();
        for p in &self.profiles {
            p.validate()?;
            if profiles.insert(p.id.as_str(), p).is_some() {
                return Err(Error::Config(format!("profiles: duplicate id {:?}", p.id)));
            }
        }
        self.entries
            .iter()
            .enumerate()
            .map(|(i, e)| {
                let profile = profiles.get(e.profile.as_str()).ok_or_else(|| {
                    Error::Config(format!("entries[{i}].profile: unknown profile {:?}", e.profile))
                })?;
                let fault = match e.fault {
                    Some(f) => f,
                    None => FaultSpec::preset(&e.label).ok_or_else(|| {
                        Error::Config(format!(
                            "entries[{i}].fault: required because {:?} is not a preset label",
                            e.label
                        ))
                    })?,
                };
                fault
                    .validate()
                    .map_err(|err| Error::Config(format!("entries[{i}].fault: {err}")))?;
                Ok(DatasetEntry {
                    label: e.label.clone(),
                    profile: (*profile).clone(),
                    fault,
                    count: e.count,
                })
            })
            .collect()
    }

    pub fn generate(&self) -> Result<Dataset> {
        make_dataset(
            &self.entries()?,
            self.sample_rate_hz,
            self.length,
            self.noise_std,
            self.seed,
        )
    }
}

/// Number of pulses (rising edges, plus one if the window starts high).
pub fn count_pulses(voltage: &[f32]) -> usize {
    let mut count = 0;
    let mut prev = 0.0f32;
    for &v in voltage {
        if v > 0.5 && prev <= 0.5 {
            count += 1;
        }
        prev = v;
    }
    count
}
