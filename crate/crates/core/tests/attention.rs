use proptest::prelude::*;
use vgcdm::nn::scaled_dot_attention;

fn softmax(row: &[f64]) -> Vec<f64> {
    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = row.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

#[test]
fn hand_computed_two_by_three() {
    let q = [1.0f64, 0.0, 0.0, 1.0];
    let k = [1.0f64, 0.0, 0.0, 1.0, 1.0, 1.0];
    let v = [1.0f64, 2.0, 3.0];
    let (out, w) = scaled_dot_attention(&q, &k, &v, 2, 3, 2, 1).unwrap();
    let r = 1.0 / 2f64.sqrt();
    let w0 = softmax(&[r, 0.0, r]);
    let w1 = softmax(&[0.0, r, r]);
    for (a, b) in w[..3].iter().zip(&w0).chain(w[3..].iter().zip(&w1)) {
        assert!((a - b).abs() < 1e-12);
    }
    assert!((out[0] - (w0[0] + 2.0 * w0[1] + 3.0 * w0[2])).abs() < 1e-12);
    assert!((out[1] - (w1[0] + 2.0 * w1[1] + 3.0 * w1[2])).abs() < 1e-12);
}

#[test]
fn identical_keys_share_weight_equally() {
    let q = [0.3f64, -1.2];
    let k = [0.5f64, 0.5, 0.5, 0.5, 0.5, 0.5];
    let v = [1.0f64, 5.0, 9.0];
    let (out, w) = scaled_dot_attention(&q, &k, &v, 1, 3, 2, 1).unwrap();
    for x in &w {
        assert!((x - 1.0 / 3.0).abs() < 1e-12);
    }
    assert!((out[0] - 5.0).abs() < 1e-12);
}

#[test]
fn rejects_mismatched_operands() {
    assert!(scaled_dot_attention(&[1.0f32; 4], &[1.0; 5], &[1.0; 3], 2, 3, 2, 1).is_err());
}

fn case() -> impl Strategy<Value = (usize, usize, usize, Vec<f64>, Vec<f64>, Vec<f64>)> {
    (1usize..5, 1usize..7, 1usize..5).prop_flat_map(|(lq, lk, d)| {
        (
            Just(lq),
            Just(lk),
            Just(d),
            prop::collection::vec(-3.0f64..3.0, lq * d),
            prop::collection::vec(-3.0f64..3.0, lk * d),
            prop::collection::vec(-3.0f64..3.0, lk),
        )
    })
}

proptest! {
    #[test]
    fn rows_are_distributions((lq, lk, d, q, k, v) in case()) {
        let (_, w) = scaled_dot_attention(&q, &k, &v, lq, lk, d, 1).unwrap();
        for row in w.chunks(lk) {
            prop_assert!(row.iter().all(|x| *x >= 0.0));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn permuting_keys_permutes_weights((lq, lk, d, q, k, v) in case(), rot in 0usize..7) {
        let rot = rot % lk;
        let mut kp = k.clone();
        kp.rotate_left(rot * d);
        let mut vp = v.clone();
        vp.rotate_left(rot);
        let (o1, w1) = scaled_dot_attention(&q, &k, &v, lq, lk, d, 1).unwrap();
        let (o2, w2) = scaled_dot_attention(&q, &kp, &vp, lq, lk, d, 1).unwrap();
        for i in 0..lq {
            prop_assert!((o1[i] - o2[i]).abs() < 1e-10);
            for j in 0..lk {
                prop_assert!((w1[i * lk + (j + rot) % lk] - w2[i * lk + j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn adding_a_constant_along_the_query_keeps_weights((lq, lk, d, q, k, v) in case(), c in -2.0f64..2.0) {
        // Shifting every key by the same vector adds q . shift to a whole row.
        let shift: Vec<f64> = (0..d).map(|i| c * (i as f64 + 1.0)).collect();
        let ks: Vec<f64> = k.iter().enumerate().map(|(i, x)| x + shift[i % d]).collect();
        let (_, w1) = scaled_dot_attention(&q, &k, &v, lq, lk, d, 1).unwrap();
        let (_, w2) = scaled_dot_attention(&q, &ks, &v, lq, lk, d, 1).unwrap();
        for (a, b) in w1.iter().zip(&w2) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }
}
