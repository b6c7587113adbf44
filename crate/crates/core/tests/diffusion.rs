use std::cell::Cell;

use proptest::prelude::*;
use vgcdm::denoiser::{Denoiser, DenoiserConfig};
use vgcdm::diffusion::{
    ancestral_sample, chain_rng, huber, huber_point, sample, sample_batch, LossKind, TrainConfig,
    Trainer,
};
use vgcdm::nn::Act;
use vgcdm::schedule::{linear_schedule, ScheduleConfig};
use vgcdm::signal::Dataset;
use vgcdm::synth::{make_dataset, DatasetEntry, FaultSpec, SpeedProfile};
use vgcdm::Error;

fn tiny(cond: bool) -> DenoiserConfig {
    DenoiserConfig {
        length: 64,
        base_channels: 8,
        channel_multipliers: vec![1, 2],
        time_embed_dim: 16,
        n_heads: 2,
        inner_dim: 8,
        encoder_depth: 1,
        condition_enabled: cond,
        norm_groups: 4,
    }
}

fn small_dataset(count: usize) -> Dataset {
    let entry = DatasetEntry {
        label: "OF3".into(),
        profile: SpeedProfile::steady("s19", 19.0, 20.0).unwrap(),
        fault: FaultSpec::preset("OF3").unwrap(),
        count,
    };
    make_dataset(&[entry], 256.0, 64, 0.05, 1).unwrap()
}

#[test]
fn huber_reference_values() {
    assert_eq!(huber_point(0.5), 0.125);
    assert_eq!(huber_point(2.0), 1.5);
    assert_eq!(huber_point(-2.0), 1.5);
    assert_eq!(huber_point(1.0), 0.5);
    let below = huber_point(1.0 - 1e-12);
    assert!((below - 0.5).abs() < 1e-11);
    assert_eq!(huber(&[0.5, 2.0]), (0.125 + 1.5) / 2.0);
}

#[test]
fn loss_gradients_match_their_values() {
    let pred = [0.3f32, -2.0, 1.5, 0.0];
    let target = [0.0f32, 0.0, 0.0, 0.0];
    let (v, g) = LossKind::Huber.value_and_grad(&pred, &target);
    assert!((v - (0.045 + 1.5 + 1.0 + 0.0) / 4.0).abs() < 1e-7);
    assert_eq!(g, vec![0.3 / 4.0, -0.25, 0.25, 0.0]);
    let (v, g) = LossKind::Mse.value_and_grad(&pred, &target);
    assert!((v - (0.09 + 4.0 + 2.25) / 4.0).abs() < 1e-6);
    assert!((g[1] + 1.0).abs() < 1e-7);
    let (v, _) = LossKind::Mae.value_and_grad(&pred, &target);
    assert!((v - 3.8 / 4.0).abs() < 1e-7);
}

proptest! {
    #[test]
    fn huber_is_half_mse_inside_the_knee(e in -0.999f64..0.999) {
        prop_assert!((huber_point(e) - LossKind::Mse.point(e) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn huber_is_mae_minus_half_outside_the_knee(e in 1.0f64..1e6, neg in any::<bool>()) {
        let e = if neg { -e } else { e };
        prop_assert!((huber_point(e) - (LossKind::Mae.point(e) - 0.5)).abs() < 1e-9);
    }
}

#[test]
fn predictor_runs_once_per_step_in_descending_order() {
    let sched = linear_schedule(50, 1e-4, 0.02).unwrap();
    let mut rngs = vec![chain_rng(3, 0), chain_rng(3, 1)];
    let calls = Cell::new(0usize);
    let out = ancestral_sample(&sched, 16, &mut rngs, |x, t| {
        assert_eq!(t, &[49 - calls.get(); 2][..]);
        calls.set(calls.get() + 1);
        Ok(Act::zeros(1, x.shape().1, 16))
    })
    .unwrap();
    assert_eq!(calls.get(), 50);
    assert_eq!(out.len(), 2);
    assert_ne!(out[0], out[1]);
}

#[test]
fn fresh_conditional_model_ignores_its_condition() {
    let cond = Denoiser::<f32>::new(tiny(true), 4).unwrap();
    let uncond = Denoiser::<f32>::new(tiny(false), 4).unwrap();
    let x = Act::from_vec(1, 2, 64, (0..128).map(|i| ((i * 7 % 13) as f32 - 6.0) / 6.0).collect());
    let c = Act::from_vec(1, 2, 64, (0..128).map(|i| if i % 16 < 2 { 1.0 } else { -1.0 }).collect());
    let t = [5usize, 700];
    let with_c = cond.forward(&x, &t, Some(&c)).unwrap();
    let without = uncond.forward(&x, &t, None).unwrap();
    let worst = with_c
        .data
        .iter()
        .zip(&without.data)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f32, f32::max);
    assert!(worst <= 1e-6, "max abs difference {worst}");

    let sched = linear_schedule(1000, 1e-4, 0.02).unwrap();
    let volt: Vec<f32> = c.row(0, 0).to_vec();
    let a = sample(&cond, &sched, Some(&volt), 9).unwrap();
    let b = sample(&uncond, &sched, None, 9).unwrap();
    assert_eq!(a, b);
}

#[test]
fn sampling_is_seeded_and_finite() {
    let model = Denoiser::<f32>::new(tiny(false), 2).unwrap();
    let sched = linear_schedule(1000, 1e-4, 0.02).unwrap();
    let seeds: Vec<(u64, u64)> = (0..100).map(|s| (s, 0)).collect();
    let out = sample_batch(&model, &sched, None, &seeds).unwrap();
    assert!(out.iter().flatten().all(|v| v.is_finite()));
    assert_eq!(out[7], sample(&model, &sched, None, 7).unwrap());
    assert_ne!(out[7], out[8]);
}

#[test]
fn condition_mismatches_are_rejected() {
    let cond = Denoiser::<f32>::new(tiny(true), 2).unwrap();
    let uncond = Denoiser::<f32>::new(tiny(false), 2).unwrap();
    let sched = linear_schedule(10, 1e-4, 0.02).unwrap();
    assert!(matches!(sample(&cond, &sched, None, 0), Err(Error::Config(_))));
    assert!(matches!(sample(&uncond, &sched, Some(&[0.0; 64]), 0), Err(Error::Config(_))));
    assert!(matches!(sample(&cond, &sched, Some(&[0.0; 32]), 0), Err(Error::Shape(_))));
}

fn train_config(cond: bool, epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size: 8,
        learning_rate: 1e-3,
        condition_enabled: cond,
        schedule: ScheduleConfig::default(),
        ..Default::default()
    }
}

#[test]
fn short_training_reduces_loss_and_leaves_data_untouched() {
    let ds = small_dataset(60);
    let before = ds.clone();
    let mut tr = Trainer::new(tiny(true), train_config(true, 50)).unwrap();
    let report = tr.run(&ds, |_| {}).unwrap();
    assert_eq!(ds, before);
    let l = &report.epoch_losses;
    assert_eq!(l.len(), 50);
    assert!(l.iter().all(|v| v.is_finite()));
    let head: f64 = l[..10].iter().sum::<f64>() / 10.0;
    let tail: f64 = l[40..].iter().sum::<f64>() / 10.0;
    assert!(tail < head, "loss went from {head} to {tail}");
    assert_eq!(report.global_step, 50 * ds.train().len().div_ceil(8) as u64);
}

#[test]
fn training_is_deterministic_and_resumable() {
    let ds = small_dataset(30);
    let mut a = Trainer::new(tiny(true), train_config(true, 4)).unwrap();
    a.run(&ds, |_| {}).unwrap();
    let mut b = Trainer::new(tiny(true), train_config(true, 2)).unwrap();
    b.run(&ds, |_| {}).unwrap();
    b.config.epochs = 4;
    b.run(&ds, |_| {}).unwrap();
    assert_eq!(a.global_step, b.global_step);
    assert_eq!(a.model.params, b.model.params);
}

#[test]
fn guidance_branch_learns_to_use_the_condition() {
    let ds = small_dataset(60);
    let mut tr = Trainer::new(tiny(true), train_config(true, 1)).unwrap();
    let train = ds.train();
    while tr.global_step < 100 {
        tr.run_epoch(&train).unwrap();
    }
    let p = train[0];
    let x = Act::from_vec(1, 1, 64, p.vibration.values().to_vec());
    let c = Act::from_vec(1, 1, 64, p.voltage.values().to_vec());
    let with_c = tr.model.forward(&x, &[100], Some(&c)).unwrap();
    let without = tr.model.forward(&x, &[100], None).unwrap();
    let diff = with_c
        .data
        .iter()
        .zip(&without.data)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f32, f32::max);
    assert!(diff > 1e-4, "condition has no effect ({diff})");
}

#[test]
fn huge_learning_rate_reports_divergence() {
    let ds = small_dataset(30);
    let mut cfg = train_config(false, 20);
    cfg.learning_rate = 1e30;
    let mut tr = Trainer::new(tiny(false), cfg).unwrap();
    match tr.run(&ds, |_| {}) {
        Err(Error::Diverged { .. }) => {}
        other => panic!("expected divergence, got {other:?}"),
    }
}
