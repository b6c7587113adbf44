//! Training and ancestral sampling for the noise-prediction model, plus the
//! per-label evaluation protocol.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::denoiser::{Denoiser, DenoiserConfig};
use crate::error::{Error, Result};
use crate::metrics::{batch_stats, fscs, psnr, rmse, MetricConfig};
use crate::nn::{Act, AdamW};
use crate::schedule::{q_sample_into, NoiseSchedule, ScheduleConfig};
use crate::signal::{Dataset, PairedSample};

/// Environment variable capping the worker threads used by evaluation.
pub const THREADS_ENV: &str = "VGCDM_NUM_THREADS";

/// Number of chains denoised together in one batched network call.
pub const SAMPLE_CHUNK: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    #[default]
    Huber,
    Mse,
    Mae,
}

/// Pointwise Huber loss with its knee at 1.
pub fn huber_point(e: f64) -> f64 {
    if e.abs() < 1.0 {
        0.5 * e * e
    } else {
        e.abs() - 0.5
    }
}

/// Mean Huber loss over a residual array.
pub fn huber(e: &[f64]) -> f64 {
    e.iter().map(|v| huber_point(*v)).sum::<f64>() / e.len().max(1) as f64
}

impl LossKind {
    pub fn point(&self, e: f64) -> f64 {
        match self {
            LossKind::Huber => huber_point(e),
            LossKind::Mse => e * e,
            LossKind::Mae => e.abs(),
        }
    }

    fn slope(&self, e: f64) -> f64 {
        match self {
            LossKind::Huber => e.clamp(-1.0, 1.0),
            LossKind::Mse => 2.0 * e,
            LossKind::Mae => e.signum() * (e != 0.0) as u8 as f64,
        }
    }

    /// Mean loss of `pred - target` and its gradient with respect to `pred`.
    pub fn value_and_grad(&self, pred: &[f32], target: &[f32]) -> (f64, Vec<f32>) {
        let n = pred.len() as f64;
        let mut total = 0.0;
        let grad = pred
            .iter()
            .zip(target)
            .map(|(p, t)| {
                let e = *p as f64 - *t as f64;
                total += self.point(e);
                (self.slope(e) / n) as f32
            })
            .collect();
        (total / n, grad)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub loss_kind: LossKind,
    pub schedule: ScheduleConfig,
    pub seed: u64,
    pub condition_enabled: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 16,
            learning_rate: 1e-4,
            weight_decay: 0.1,
            loss_kind: LossKind::Huber,
            schedule: ScheduleConfig::default(),
            seed: 0,
            condition_enabled: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be at least 1".into()));
        }
        if self.schedule.steps < 2 {
            return Err(Error::Config(format!(
                "schedule needs at least 2 steps, got {}",
                self.schedule.steps
            )));
        }
        if self.weight_decay < 0.0 {
            return Err(Error::Config("weight_decay must be nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainReport {
    pub epoch_losses: Vec<f64>,
    pub epoch_seconds: Vec<f64>,
    pub global_step: u64,
    /// Where the trained checkpoint was written, when the caller saved one.
    pub checkpoint: Option<std::path::PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochSummary {
    pub epoch: usize,
    pub mean_loss: f64,
    pub seconds: f64,
    pub global_step: u64,
}

/// Training state that can be checkpointed and resumed between epochs.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub model: Denoiser<f32>,
    pub optimizer: AdamW<f32>,
    pub config: TrainConfig,
    pub global_step: u64,
    pub epochs_done: usize,
    schedule: NoiseSchedule,
}

impl Trainer {
    pub fn new(model_cfg: DenoiserConfig, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        if model_cfg.condition_enabled != cfg.condition_enabled {
            return Err(Error::ConfigMismatch(vec!["condition_enabled".into()]));
        }
        let model = Denoiser::new(model_cfg, cfg.seed)?;
        let optimizer = AdamW::new(&model.params, cfg.learning_rate, cfg.weight_decay);
        Self::resume(model, optimizer, cfg, 0, 0)
    }

    pub fn resume(
        model: Denoiser<f32>,
        optimizer: AdamW<f32>,
        cfg: TrainConfig,
        global_step: u64,
        epochs_done: usize,
    ) -> Result<Self> {
        cfg.validate()?;
        if model.config().condition_enabled != cfg.condition_enabled {
            return Err(Error::ConfigMismatch(vec!["condition_enabled".into()]));
        }
        let schedule = cfg.schedule.build()?;
        Ok(Self {
            model,
            optimizer,
            config: cfg,
            global_step,
            epochs_done,
            schedule,
        })
    }

    pub fn schedule(&self) -> &NoiseSchedule {
        &self.schedule
    }

    fn epoch_rng(&self, epoch: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(1 + epoch as u64);
        rng
    }

    /// Runs one pass over `train` in a seeded random order and returns the
    /// mean batch loss.
    pub fn run_epoch(&mut self, train: &[&PairedSample]) -> Result<EpochSummary> {
        if train.is_empty() {
            return Err(Error::Empty("training split is empty".into()));
        }
        let start = Instant::now();
        let epoch = self.epochs_done;
        let mut rng = self.epoch_rng(epoch);
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut rng);
        let len = self.model.config().length;
        let steps = self.schedule.steps();
        let cond = self.config.condition_enabled;
        let mut total = 0.0;
        let mut batches = 0usize;
        for (step, chunk) in order.chunks(self.config.batch_size).enumerate() {
            let b = chunk.len();
            let mut x_t = vec![0.0f32; b * len];
            let mut eps = vec![0.0f32; b * len];
            let mut c = Vec::with_capacity(if cond { b * len } else { 0 });
            let mut t = Vec::with_capacity(b);
            for (slot, &i) in chunk.iter().enumerate() {
                let sample = train[i];
                if sample.vibration.len() != len {
                    return Err(Error::Shape(format!(
                        "sample length {} does not match model length {len}",
                        sample.vibration.len()
                    )));
                }
                let ti = rng.gen_range(0..steps);
                let e = &mut eps[slot * len..(slot + 1) * len];
                e.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
                q_sample_into(
                    sample.vibration.values(),
                    e,
                    ti,
                    &self.schedule,
                    &mut x_t[slot * len..(slot + 1) * len],
                )?;
                if cond {
                    c.extend_from_slice(sample.voltage.values());
                }
                t.push(ti);
            }
            let x = Act::from_vec(1, b, len, x_t);
            let c = cond.then(|| Act::from_vec(1, b, len, c));
            let (pred, cache) = self.model.forward_train(&x, &t, c.as_ref())?;
            let (loss, grad) = self.config.loss_kind.value_and_grad(&pred.data, &eps);
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, step, loss });
            }
            let grads = self.model.backward(&cache, &Act::from_vec(1, b, len, grad));
            if !grads.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    step,
                    loss: f64::NAN,
                });
            }
            self.optimizer.update(&mut self.model.params, &grads);
            self.global_step += 1;
            total += loss;
            batches += 1;
        }
        self.epochs_done += 1;
        Ok(EpochSummary {
            epoch,
            mean_loss: total / batches as f64,
            seconds: start.elapsed().as_secs_f64(),
            global_step: self.global_step,
        })
    }

    /// Trains until `config.epochs` epochs are done, calling `on_epoch`
    /// after each.
    pub fn run(
        &mut self,
        dataset: &Dataset,
        mut on_epoch: impl FnMut(&EpochSummary),
    ) -> Result<TrainReport> {
        let train = dataset.train();
        let mut report = TrainReport::default();
        while self.epochs_done < self.config.epochs {
            let s = self.run_epoch(&train)?;
            on_epoch(&s);
            report.epoch_losses.push(s.mean_loss);
            report.epoch_seconds.push(s.seconds);
        }
        report.global_step = self.global_step;
        Ok(report)
    }
}

/// Trains a fresh model on the training split of `dataset`.
pub fn train(
    dataset: &Dataset,
    model_cfg: DenoiserConfig,
    cfg: TrainConfig,
) -> Result<(Denoiser<f32>, TrainReport)> {
    if dataset.length() != model_cfg.length {
        return Err(Error::ConfigMismatch(vec!["length".into()]));
    }
    let mut trainer = Trainer::new(model_cfg, cfg)?;
    let report = trainer.run(dataset, |_| {})?;
    Ok((trainer.model, report))
}

/// Random stream for chain `index` of a sampling run seeded with `seed`.
pub fn chain_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Ancestral sampling for a batch of chains driven by an arbitrary noise
/// predictor `predict(x_t, t) -> eps_hat`. Each chain draws its initial
/// noise and per-step noise from its own generator; no noise is added at
/// the final step.
pub fn ancestral_sample(
    sched: &NoiseSchedule,
    len: usize,
    rngs: &mut [ChaCha8Rng],
    mut predict: impl FnMut(&Act<f32>, &[usize]) -> Result<Act<f32>>,
) -> Result<Vec<Vec<f32>>> {
    let b = rngs.len();
    let mut x = Act::zeros(1, b, len);
    for (row, rng) in x.data.chunks_exact_mut(len).zip(rngs.iter_mut()) {
        row.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
    }
    let mut t_buf = vec![0usize; b];
    for t in (0..sched.steps()).rev() {
        t_buf.fill(t);
        let eps = predict(&x, &t_buf)?;
        if eps.data.len() != x.data.len() {
            return Err(Error::Shape("noise prediction has the wrong shape".into()));
        }
        let p = sched.posterior_step_params(t)?;
        let (a, k) = (p.inv_sqrt_alpha as f32, p.eps_coeff as f32);
        let sigma = p.variance.sqrt() as f32;
        for ((row, e_row), rng) in x
            .data
            .chunks_exact_mut(len)
            .zip(eps.data.chunks_exact(len))
            .zip(rngs.iter_mut())
        {
            for (v, e) in row.iter_mut().zip(e_row) {
                *v = a * (*v - k * e);
            }
            if t > 0 {
                for v in row.iter_mut() {
                    let z: f32 = rng.sample(StandardNormal);
                    *v += sigma * z;
                }
            }
        }
    }
    Ok(x.data.chunks_exact(len).map(<[f32]>::to_vec).collect())
}

/// Generates one signal per entry of `seeds`, conditioned on the matching
/// entry of `conditions` when the model is conditional. Chains are
/// denoised together in one batch.
pub fn sample_batch(
    model: &Denoiser<f32>,
    sched: &NoiseSchedule,
    conditions: Option<&[&[f32]]>,
    seeds: &[(u64, u64)],
) -> Result<Vec<Vec<f32>>> {
    let len = model.config().length;
    let latent = match (conditions, model.config().condition_enabled) {
        (Some(cs), true) => {
            if cs.len() != seeds.len() {
                return Err(Error::Shape(format!(
                    "{} conditions for {} chains",
                    cs.len(),
                    seeds.len()
                )));
            }
            let mut data = Vec::with_capacity(cs.len() * len);
            for c in cs {
                if c.len() != len {
                    return Err(Error::Shape(format!(
                        "condition has {} points, model expects {len}",
                        c.len()
                    )));
                }
                data.extend_from_slice(c);
            }
            Some(model.encode_condition(&Act::from_vec(1, cs.len(), len, data))?)
        }
        (None, true) => {
            return Err(Error::Config(
                "conditional model requires a condition signal".into(),
            ))
        }
        (Some(_), false) => {
            return Err(Error::Config(
                "a condition was supplied to an unconditional model".into(),
            ))
        }
        (None, false) => None,
    };
    let mut rngs: Vec<ChaCha8Rng> = seeds.iter().map(|&(s, i)| chain_rng(s, i)).collect();
    ancestral_sample(sched, len, &mut rngs, |x, t| {
        model.forward_with_latent(x, t, latent.as_ref())
    })
}

/// Generates a single signal of the model's length.
pub fn sample(
    model: &Denoiser<f32>,
    sched: &NoiseSchedule,
    condition: Option<&[f32]>,
    seed: u64,
) -> Result<Vec<f32>> {
    let conds = condition.map(|c| vec![c]);
    let mut out = sample_batch(model, sched, conds.as_deref(), &[(seed, 0)])?;
    Ok(out.remove(0))
}

/// Thread count from [`THREADS_ENV`], if set to a positive integer.
pub fn configured_threads() -> Option<usize> {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|n| *n > 0)
}

/// Runs `f` on a pool sized by [`THREADS_ENV`] (or rayon's default).
pub fn with_pool<R: Send>(f: impl FnOnce() -> R + Send) -> Result<R> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = configured_threads() {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(f))
}

/// Generates one signal for each test pair from its voltage. Chain `i`
/// uses stream `i` of `seed`; batches are fixed-size so results do not
/// depend on the worker count.
pub fn generate_for(
    model: &Denoiser<f32>,
    sched: &NoiseSchedule,
    pairs: &[&PairedSample],
    seed: u64,
) -> Result<Vec<Vec<f32>>> {
    let cond = model.config().condition_enabled;
    let indices: Vec<usize> = (0..pairs.len()).collect();
    let chunks: Vec<Result<Vec<Vec<f32>>>> = with_pool(|| {
        indices
            .par_chunks(SAMPLE_CHUNK)
            .map(|idx| {
                let seeds: Vec<(u64, u64)> = idx.iter().map(|&i| (seed, i as u64)).collect();
                let conds: Vec<&[f32]> = idx.iter().map(|&i| pairs[i].voltage.values()).collect();
                sample_batch(model, sched, cond.then_some(&conds[..]), &seeds)
            })
            .collect()
    })?;
    let mut out = Vec::with_capacity(pairs.len());
    for c in chunks {
        out.extend(c?);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub label: String,
    pub count: usize,
    pub rmse: MeanStd,
    pub psnr: MeanStd,
    pub fscs: MeanStd,
}

/// Per-label mean and population std of each metric.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
}

pub const EVAL_CSV_HEADER: &str = "label,rmse_mean,rmse_std,psnr_mean,psnr_std,fscs_mean,fscs_std";

impl EvalReport {
    pub fn row(&self, label: &str) -> Option<&EvalRow> {
        self.rows.iter().find(|r| r.label == label)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(EVAL_CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                r.label, r.rmse.mean, r.rmse.std, r.psnr.mean, r.psnr.std, r.fscs.mean, r.fscs.std
            );
        }
        s
    }
}

/// Scores `generated[i]` against `pairs[i].vibration` and aggregates per
/// label, in the order of `label_order` (labels absent from `pairs` are
/// skipped).
pub fn score(
    pairs: &[&PairedSample],
    generated: &[Vec<f32>],
    label_order: &[String],
    cfg: &MetricConfig,
) -> Result<EvalReport> {
    if pairs.is_empty() {
        return Err(Error::Empty("test set is empty".into()));
    }
    if pairs.len() != generated.len() {
        return Err(Error::Shape(format!(
            "{} generated signals for {} pairs",
            generated.len(),
            pairs.len()
        )));
    }
    let mut per_label: BTreeMap<&str, [Vec<f64>; 3]> = BTreeMap::new();
    for (p, g) in pairs.iter().zip(generated) {
        let y = p.vibration.values();
        let entry = per_label.entry(p.condition_label.as_str()).or_default();
        entry[0].push(rmse(y, g)?);
        entry[1].push(psnr(y, g, cfg)?);
        entry[2].push(fscs(y, g)?);
    }
    let stat = |v: &[f64]| batch_stats(v).map(|(mean, std)| MeanStd { mean, std });
    let mut rows = Vec::new();
    let mut order: Vec<&str> = label_order.iter().map(String::as_str).collect();
    for l in per_label.keys() {
        if !order.contains(l) {
            order.push(l);
        }
    }
    for label in order {
        if let Some([r, p, f]) = per_label.get(label) {
            rows.push(EvalRow {
                label: label.to_string(),
                count: r.len(),
                rmse: stat(r)?,
                psnr: stat(p)?,
                fscs: stat(f)?,
            });
        }
    }
    Ok(EvalReport { rows })
}

/// Generates a signal for every test pair from its voltage and scores it
/// against the recorded vibration.
pub fn evaluate(
    model: &Denoiser<f32>,
    sched: &NoiseSchedule,
    dataset: &Dataset,
    cfg: &MetricConfig,
    seed: u64,
) -> Result<EvalReport> {
    let test = dataset.test();
    if test.is_empty() {
        return Err(Error::Empty("test split is empty".into()));
    }
    let generated = generate_for(model, sched, &test, seed)?;
    score(&test, &generated, dataset.labels(), cfg)
}

pub fn loss_history_csv(losses: &[f64]) -> String {
    let mut s = String::from("epoch,mean_loss\n");
    for (i, l) in losses.iter().enumerate() {
        let _ = writeln!(s, "{i},{l}");
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedule::linear_schedule;

    #[test]
    fn huber_branches() {
        assert_eq!(huber_point(0.5), 0.125);
        assert_eq!(huber_point(2.0), 1.5);
        assert_eq!(huber_point(1.0), 0.5);
        assert_eq!(huber(&[0.5, 2.0]), (0.125 + 1.5) / 2.0);
    }

    #[test]
    fn loss_gradients_match_differences() {
        let pred = [0.3f32, -2.0, 1.5, -0.2];
        let target = [0.0f32; 4];
        for kind in [LossKind::Huber, LossKind::Mse, LossKind::Mae] {
            let (_, g) = kind.value_and_grad(&pred, &target);
            for i in 0..pred.len() {
                let h = 1e-3f32;
                let mut up = pred;
                up[i] += h;
                let mut down = pred;
                down[i] -= h;
                let num = (kind.value_and_grad(&up, &target).0 - kind.value_and_grad(&down, &target).0)
                    / (2.0 * h as f64);
                assert!((num - g[i] as f64).abs() < 1e-3, "{kind:?} {i}");
            }
        }
    }

    #[test]
    fn rejects_bad_train_config() {
        let mut c = TrainConfig::default();
        c.learning_rate = 0.0;
        assert!(c.validate().is_err());
        let mut c = TrainConfig::default();
        c.schedule.steps = 1;
        assert!(c.validate().is_err());
    }

    #[test]
    fn chain_uses_every_step_once() {
        let sched = linear_schedule(20, 1e-4, 0.02).unwrap();
        let mut seen = Vec::new();
        let mut rngs = vec![chain_rng(1, 0), chain_rng(1, 1)];
        ancestral_sample(&sched, 4, &mut rngs, |x, t| {
            seen.push(t[0]);
            Ok(Act::zeros(1, x.b, x.l))
        })
        .unwrap();
        assert_eq!(seen, (0..20).rev().collect::<Vec<_>>());
    }

    #[test]
    fn csv_header() {
        assert!(EvalReport::default().to_csv().starts_with(EVAL_CSV_HEADER));
        assert_eq!(loss_history_csv(&[1.0]), "epoch,mean_loss\n0,1\n");
    }
}
