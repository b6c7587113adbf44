use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vgcdm::metrics::{batch_stats, fscs, magnitude_spectrum, psnr, rmse, IdenticalPolicy, MetricConfig};
use vgcdm::Error;

/// Direct DFT, one-sided magnitudes.
fn naive_spectrum(x: &[f32]) -> Vec<f64> {
    let n = x.len();
    (0..=n / 2)
        .map(|k| {
            let (mut re, mut im) = (0.0f64, 0.0f64);
            for (j, v) in x.iter().enumerate() {
                let ang = -2.0 * std::f64::consts::PI * ((k * j) % n) as f64 / n as f64;
                re += *v as f64 * ang.cos();
                im += *v as f64 * ang.sin();
            }
            re.hypot(im)
        })
        .collect()
}

fn naive_fscs(y: &[f32], z: &[f32]) -> f64 {
    let (a, b) = (naive_spectrum(y), naive_spectrum(z));
    let dot: f64 = a.iter().zip(&b).map(|(p, q)| p * q).sum();
    let na: f64 = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    dot / (na * nb)
}

fn sine(len: usize, cycles: f64) -> Vec<f32> {
    (0..len)
        .map(|i| (2.0 * std::f64::consts::PI * cycles * i as f64 / len as f64).sin() as f32)
        .collect()
}

#[test]
fn fscs_agrees_with_direct_dft() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for case in 0..100 {
        let len = [64usize, 100, 128, 255][case % 4];
        let y: Vec<f32> = (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let z: Vec<f32> = (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let got = fscs(&y, &z).unwrap();
        let want = naive_fscs(&y, &z);
        assert!((got - want).abs() < 1e-9, "case {case}: {got} vs {want}");
    }
}

#[test]
fn spectrum_agrees_with_direct_dft() {
    let x: Vec<f32> = (0..96).map(|i| ((i * 37 % 11) as f32 - 5.0) / 5.0).collect();
    let got = magnitude_spectrum(&x);
    let want = naive_spectrum(&x);
    assert_eq!(got.len(), 49);
    for (g, w) in got.iter().zip(&want) {
        assert!((g - w).abs() < 1e-9);
    }
}

#[test]
fn orthogonal_tones_have_zero_similarity() {
    let a = sine(2048, 8.0);
    let b = sine(2048, 64.0);
    assert!(fscs(&a, &b).unwrap() < 1e-6);
    assert!((fscs(&a, &a).unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn fscs_ignores_circular_shift_and_scale() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let y: Vec<f32> = (0..256).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut shifted = y.clone();
    shifted.rotate_left(37);
    assert!((fscs(&y, &shifted).unwrap() - 1.0).abs() < 1e-9);
    let scaled: Vec<f32> = y.iter().map(|v| v * 3.5).collect();
    assert!((fscs(&y, &scaled).unwrap() - 1.0).abs() < 1e-9);
}

#[test]
fn zero_spectrum_is_undefined() {
    let z = vec![0.0f32; 32];
    let y = sine(32, 2.0);
    assert!(matches!(fscs(&y, &z), Err(Error::UndefinedSimilarity(_))));
}

#[test]
fn psnr_reference_values() {
    let cfg = MetricConfig::default();
    let y = vec![1.0f32, -0.5, 0.25, 0.0];
    let z = vec![0.9f32, -0.5, 0.25, 0.0];
    // MAX = 1, MSE = 0.01 / 4 -> 10 log10(400).
    let want = 10.0 * 400.0f64.log10();
    assert!((psnr(&y, &z, &cfg).unwrap() - want).abs() < 1e-5);
    assert_eq!(psnr(&y, &y, &cfg).unwrap(), 100.0);
    let strict = MetricConfig {
        psnr_identical_policy: IdenticalPolicy::Error,
        ..cfg
    };
    assert!(psnr(&y, &y, &strict).is_err());
    assert!(matches!(
        psnr(&[0.0; 4], &z, &cfg),
        Err(Error::UndefinedReference(_))
    ));
}

#[test]
fn mismatched_lengths_rejected() {
    assert!(rmse(&[1.0, 2.0], &[1.0]).is_err());
    assert!(fscs(&[1.0, 2.0], &[1.0]).is_err());
    assert!(rmse(&[], &[]).is_err());
}

#[test]
fn batch_stats_population_std() {
    let (m, s) = batch_stats(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]).unwrap();
    assert_eq!(m, 5.0);
    assert_eq!(s, 2.0);
    assert!(batch_stats(&[]).is_err());
}

fn signal(len: usize) -> impl Strategy<Value = Vec<f32>> {
    prop::collection::vec(-4.0f32..4.0, len)
}

proptest! {
    #[test]
    fn rmse_is_a_metric((a, b, c) in (1usize..64).prop_flat_map(|n| (signal(n), signal(n), signal(n)))) {
        let ab = rmse(&a, &b).unwrap();
        prop_assert!(ab >= 0.0);
        prop_assert_eq!(rmse(&a, &a).unwrap(), 0.0);
        prop_assert!((ab - rmse(&b, &a).unwrap()).abs() < 1e-12);
        prop_assert!(rmse(&a, &c).unwrap() <= ab + rmse(&b, &c).unwrap() + 1e-9);
    }

    #[test]
    fn psnr_falls_as_error_grows(y in signal(48), e in signal(48), k in 1.1f32..5.0) {
        prop_assume!(y.iter().any(|v| *v != 0.0));
        prop_assume!(e.iter().any(|v| v.abs() > 1e-3));
        let cfg = MetricConfig::default();
        let small: Vec<f32> = y.iter().zip(&e).map(|(a, b)| a + 0.01 * b).collect();
        let large: Vec<f32> = y.iter().zip(&e).map(|(a, b)| a + 0.01 * k * b).collect();
        prop_assert!(psnr(&y, &large, &cfg).unwrap() < psnr(&y, &small, &cfg).unwrap());
    }

    #[test]
    fn fscs_bounded_and_symmetric(a in signal(64), b in signal(64)) {
        prop_assume!(a.iter().any(|v| *v != 0.0) && b.iter().any(|v| *v != 0.0));
        let s = fscs(&a, &b).unwrap();
        prop_assert!((0.0..=1.0).contains(&s));
        prop_assert!((s - fscs(&b, &a).unwrap()).abs() < 1e-12);
    }
}
