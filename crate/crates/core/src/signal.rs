//! Signal and dataset types, per-sample normalization, slicing, and the
//! on-disk dataset directory format.
//!
//! A dataset directory holds `manifest.json` plus two raw payloads,
//! `vibration.f32le` and `voltage.f32le`, each row-major `[N, L]`
//! little-endian `f32`.

use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_LENGTH: usize = 2048;
pub const DATASET_FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const VIBRATION_FILE: &str = "vibration.f32le";
pub const VOLTAGE_FILE: &str = "voltage.f32le";
pub const TRAIN_FRACTION: f64 = 0.7;

/// Fixed-length amplitude series.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    values: Vec<f32>,
    sample_rate_hz: f64,
}

impl Signal {
    pub fn new(values: Vec<f32>, sample_rate_hz: f64) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty("signal has no values".into()));
        }
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
            return Err(Error::Parameter(format!(
                "sample rate must be positive, got {sample_rate_hz}"
            )));
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "signal".into(),
                index,
            });
        }
        Ok(Self {
            values,
            sample_rate_hz,
        })
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn max_abs(&self) -> f32 {
        max_abs(&self.values)
    }

    pub fn normalized(&self) -> Signal {
        Signal {
            values: normalize_values(&self.values),
            sample_rate_hz: self.sample_rate_hz,
        }
    }
}

pub(crate) fn max_abs(values: &[f32]) -> f32 {
    values.iter().fold(0.0f32, |m, v| m.max(v.abs()))
}

/// Scales by the maximum absolute value so the result spans `[-1, 1]`.
/// An all-zero input is returned unchanged.
pub fn normalize_values(values: &[f32]) -> Vec<f32> {
    let m = max_abs(values) as f64;
    if m == 0.0 {
        return values.to_vec();
    }
    values.iter().map(|&v| (v as f64 / m) as f32).collect()
}

pub fn normalize(signal: &Signal) -> Signal {
    signal.normalized()
}

/// Cuts `series` into `floor(len / length)` consecutive, non-overlapping
/// signals. The trailing remainder is dropped.
pub fn slice_nonoverlapping(
    series: &[f32],
    length: usize,
    sample_rate_hz: f64,
) -> Result<Vec<Signal>> {
    if length == 0 {
        return Err(Error::Parameter("slice length must be positive".into()));
    }
    if series.len() < length {
        return Err(Error::InsufficientData {
            needed: length,
            got: series.len(),
        });
    }
    series
        .chunks_exact(length)
        .map(|chunk| Signal::new(chunk.to_vec(), sample_rate_hz))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// Time-aligned vibration/voltage pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedSample {
    pub vibration: Signal,
    pub voltage: Signal,
    pub condition_label: String,
    pub speed_profile_id: String,
}

impl PairedSample {
    pub fn new(
        vibration: Signal,
        voltage: Signal,
        condition_label: impl Into<String>,
        speed_profile_id: impl Into<String>,
    ) -> Result<Self> {
        if vibration.len() != voltage.len() {
            return Err(Error::Shape(format!(
                "vibration length {} != voltage length {}",
                vibration.len(),
                voltage.len()
            )));
        }
        if vibration.sample_rate_hz() != voltage.sample_rate_hz() {
            return Err(Error::Shape(format!(
                "vibration rate {} != voltage rate {}",
                vibration.sample_rate_hz(),
                voltage.sample_rate_hz()
            )));
        }
        Ok(Self {
            vibration,
            voltage,
            condition_label: condition_label.into(),
            speed_profile_id: speed_profile_id.into(),
        })
    }
}

/// Serialized form of the dataset metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format_version: u32,
    pub n_samples: usize,
    pub length: usize,
    pub sample_rate_hz: f64,
    /// Declared label set.
    pub labels: Vec<String>,
    pub split: Vec<Split>,
    pub sample_labels: Vec<String>,
    pub profile_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    samples: Vec<PairedSample>,
    labels: Vec<String>,
    split: Vec<Split>,
    length: usize,
    sample_rate_hz: f64,
}

impl Dataset {
    pub fn new(samples: Vec<PairedSample>, labels: Vec<String>, split: Vec<Split>) -> Result<Self> {
        let first = samples
            .first()
            .ok_or_else(|| Error::Empty("dataset has no samples".into()))?;
        let length = first.vibration.len();
        let sample_rate_hz = first.vibration.sample_rate_hz();
        if split.len() != samples.len() {
            return Err(Error::InvalidManifest(format!(
                "split has {} entries for {} samples",
                split.len(),
                samples.len()
            )));
        }
        let declared: BTreeSet<&str> = labels.iter().map(String::as_str).collect();
        if declared.len() != labels.len() {
            return Err(Error::InvalidManifest("duplicate entries in label set".into()));
        }
        for (i, s) in samples.iter().enumerate() {
            if s.vibration.len() != length || s.voltage.len() != length {
                return Err(Error::Shape(format!(
                    "sample {i} has length {} but dataset length is {length}",
                    s.vibration.len()
                )));
            }
            if s.vibration.sample_rate_hz() != sample_rate_hz {
                return Err(Error::Shape(format!("sample {i} has a different sample rate")));
            }
            if !declared.contains(s.condition_label.as_str()) {
                return Err(Error::InvalidManifest(format!(
                    "sample {i} label {:?} not in declared label set",
                    s.condition_label
                )));
            }
        }
        Ok(Self {
            samples,
            labels,
            split,
            length,
            sample_rate_hz,
        })
    }

    pub fn samples(&self) -> &[PairedSample] {
        &self.samples
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn split(&self) -> &[Split] {
        &self.split
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn length(&self) -> usize {
        self.length
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn subset(&self, which: Split) -> Vec<&PairedSample> {
        self.samples
            .iter()
            .zip(&self.split)
            .filter(|(_, s)| **s == which)
            .map(|(p, _)| p)
            .collect()
    }

    pub fn train(&self) -> Vec<&PairedSample> {
        self.subset(Split::Train)
    }

    pub fn test(&self) -> Vec<&PairedSample> {
        self.subset(Split::Test)
    }

    pub fn manifest(&self) -> Manifest {
        Manifest {
            format_version: DATASET_FORMAT_VERSION,
            n_samples: self.samples.len(),
            length: self.length,
            sample_rate_hz: self.sample_rate_hz,
            labels: self.labels.clone(),
            split: self.split.clone(),
            sample_labels: self.samples.iter().map(|s| s.condition_label.clone()).collect(),
            profile_ids: self.samples.iter().map(|s| s.speed_profile_id.clone()).collect(),
        }
    }
}

/// Deterministic seeded train/test assignment: `round(0.7 n)` samples go to
/// the training split.
pub fn split_assignment(n: usize, seed: u64) -> Vec<Split> {
    let n_train = (n as f64 * TRAIN_FRACTION).round() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut split = vec![Split::Test; n];
    for &i in &order[..n_train] {
        split[i] = Split::Train;
    }
    split
}

fn encode_f32le(rows: impl Iterator<Item = f32>) -> Vec<u8> {
    let mut out = Vec::new();
    for v in rows {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn write_f32le(path: &Path, values: &[f32]) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(&encode_f32le(values.iter().copied()))?;
    Ok(())
}

pub fn read_f32le(path: &Path) -> Result<Vec<f32>> {
    let bytes = fs::read(path)?;
    if bytes.len() % 4 != 0 {
        return Err(Error::PayloadMismatch {
            file: path.display().to_string(),
            expected: (bytes.len() / 4 * 4) as u64,
            found: bytes.len() as u64,
        });
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

pub fn write_dataset(dataset: &Dataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let manifest = dataset.manifest();
    fs::write(
        dir.join(MANIFEST_FILE),
        serde_json::to_string_pretty(&manifest)? + "\n",
    )?;
    let vib = encode_f32le(
        dataset
            .samples
            .iter()
            .flat_map(|s| s.vibration.values().iter().copied()),
    );
    let volt = encode_f32le(
        dataset
            .samples
            .iter()
            .flat_map(|s| s.voltage.values().iter().copied()),
    );
    fs::write(dir.join(VIBRATION_FILE), vib)?;
    fs::write(dir.join(VOLTAGE_FILE), volt)?;
    Ok(())
}

fn read_payload(dir: &Path, file: &str, expected_values: usize) -> Result<Vec<f32>> {
    let path = dir.join(file);
    let found = fs::metadata(&path)?.len();
    let expected = expected_values as u64 * 4;
    if found != expected {
        return Err(Error::PayloadMismatch {
            file: file.into(),
            expected,
            found,
        });
    }
    let values = read_f32le(&path)?;
    if let Some(index) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            what: file.into(),
            index,
        });
    }
    Ok(values)
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST_FILE);
    if !path.is_file() {
        return Err(Error::MissingManifest(dir.to_path_buf()));
    }
    let manifest: Manifest = serde_json::from_str(&fs::read_to_string(path)?)?;
    if manifest.format_version != DATASET_FORMAT_VERSION {
        return Err(Error::InvalidManifest(format!(
            "unsupported format_version {}",
            manifest.format_version
        )));
    }
    let n = manifest.n_samples;
    for (key, len) in [
        ("split", manifest.split.len()),
        ("sample_labels", manifest.sample_labels.len()),
        ("profile_ids", manifest.profile_ids.len()),
    ] {
        if len != n {
            return Err(Error::InvalidManifest(format!(
                "{key} has {len} entries but n_samples = {n}"
            )));
        }
    }
    if manifest.length == 0 {
        return Err(Error::InvalidManifest("length must be positive".into()));
    }
    Ok(manifest)
}

pub fn read_dataset(dir: &Path) -> Result<Dataset> {
    let m = read_manifest(dir)?;
    let total = m.n_samples * m.length;
    let vib = read_payload(dir, VIBRATION_FILE, total)?;
    let volt = read_payload(dir, VOLTAGE_FILE, total)?;
    let samples = (0..m.n_samples)
        .map(|i| {
            let rows = i * m.length..(i + 1) * m.length;
            PairedSample::new(
                Signal::new(vib[rows.clone()].to_vec(), m.sample_rate_hz)?,
                Signal::new(volt[rows].to_vec(), m.sample_rate_hz)?,
                m.sample_labels[i].clone(),
                m.profile_ids[i].clone(),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(samples, m.labels, m.split)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn sig(v: &[f32]) -> Signal {
        Signal::new(v.to_vec(), 100.0).unwrap()
    }

    #[test]
    fn normalize_scales_by_max_abs() {
        assert_eq!(normalize(&sig(&[2.0, -4.0, 1.0])).values(), &[0.5, -1.0, 0.25]);
    }

    #[test]
    fn normalize_all_zero_is_unchanged() {
        assert_eq!(normalize(&sig(&[0.0, 0.0, 0.0])).values(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn normalize_random_reaches_unit_max() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let v: Vec<f32> = (0..2048).map(|_| rng.gen_range(-7.0..7.0)).collect();
            let n = normalize(&sig(&v));
            assert_eq!(n.len(), 2048);
            assert_eq!(n.max_abs(), 1.0);
        }
    }

    #[test]
    fn normalize_is_idempotent() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let v: Vec<f32> = (0..512).map(|_| rng.gen_range(-3.0..2.0)).collect();
        let once = normalize(&sig(&v));
        let twice = normalize(&once);
        for (a, b) in once.values().iter().zip(twice.values()) {
            assert!((a - b).abs() as f64 <= 1e-12 * a.abs().max(1e-30) as f64);
        }
    }

    #[test]
    fn slicing_counts_and_remainder() {
        let s: Vec<f32> = (0..5000).map(|i| i as f32).collect();
        let parts = slice_nonoverlapping(&s, 2048, 1.0).unwrap();
        assert_eq!(parts.len(), 2);
        assert_eq!(5000 - parts.len() * 2048, 904);
        let joined: Vec<f32> = parts.iter().flat_map(|p| p.values().to_vec()).collect();
        assert_eq!(&joined[..], &s[..4096]);

        assert_eq!(slice_nonoverlapping(&s[..2048], 2048, 1.0).unwrap().len(), 1);
        assert!(matches!(
            slice_nonoverlapping(&s[..2047], 2048, 1.0),
            Err(Error::InsufficientData { needed: 2048, got: 2047 })
        ));
    }

    #[test]
    fn split_is_seeded_and_70_30() {
        let a = split_assignment(100, 5);
        assert_eq!(a.iter().filter(|s| **s == Split::Train).count(), 70);
        assert_eq!(a, split_assignment(100, 5));
    }

    #[test]
    fn signal_rejects_non_finite() {
        assert!(matches!(
            Signal::new(vec![0.0, f32::NAN], 1.0),
            Err(Error::NonFinite { index: 1, .. })
        ));
    }

    #[test]
    fn paired_sample_requires_equal_lengths() {
        assert!(PairedSample::new(sig(&[1.0, 2.0]), sig(&[1.0]), "NC", "p").is_err());
    }
}
