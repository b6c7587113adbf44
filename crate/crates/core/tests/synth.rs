use vgcdm::metrics::magnitude_spectrum;
use vgcdm::signal::read_dataset;
use vgcdm::synth::{
    count_pulses, gen_vibration, gen_voltage, make_dataset, DatasetEntry, FaultSpec, Segment,
    SpeedProfile, SynthSpec,
};

const RATE: f64 = 8192.0;

#[test]
fn half_second_at_nineteen_hz() {
    let p = SpeedProfile::steady("s19", 19.0, 1.0).unwrap();
    let n = count_pulses(gen_voltage(&p, RATE, 4096).unwrap().values());
    assert!(n == 9 || n == 10, "{n}");
}

#[test]
fn ramp_pulse_count_follows_integrated_speed() {
    for tau in [2.0f64, 4.0] {
        let p = SpeedProfile::new("ramp", vec![Segment::ramp(tau, 0.0, 19.0)]).unwrap();
        let len = (tau * RATE) as usize;
        let n = count_pulses(gen_voltage(&p, RATE, len).unwrap().values()) as f64;
        let expected = 0.5 * 19.0 * tau;
        assert!((n - expected).abs() <= 1.0, "tau {tau}: {n} vs {expected}");
    }
}

#[test]
fn healthy_vibration_sits_on_shaft_harmonics() {
    let p = SpeedProfile::steady("s19", 19.0, 1.0).unwrap();
    let v = gen_vibration(&p, &FaultSpec::healthy(), RATE, 8192, 0.0, 1).unwrap();
    let spec = magnitude_spectrum(v.values());
    let total: f64 = spec.iter().map(|m| m * m).sum();
    let shaft: f64 = [19usize, 38].iter().map(|&k| spec[k] * spec[k]).sum();
    assert!(shaft / total > 0.99, "{}", shaft / total);
    let top = (1..spec.len()).max_by(|a, b| spec[*a].total_cmp(&spec[*b])).unwrap();
    assert_eq!(top, 19);
}

/// First difference squared: suppresses the shaft harmonics and keeps the
/// resonance bursts.
fn burst_energy(x: &[f32]) -> Vec<f64> {
    x.windows(2).map(|w| ((w[1] - w[0]) as f64).powi(2)).collect()
}

#[test]
fn outer_race_impacts_repeat_at_the_fault_period() {
    let p = SpeedProfile::steady("s19", 19.0, 1.0).unwrap();
    let fault = FaultSpec::preset("OF3").unwrap();
    let v = gen_vibration(&p, &fault, RATE, 8192, 0.0, 1).unwrap();
    let e = burst_energy(v.values());
    let mean = e.iter().sum::<f64>() / e.len() as f64;
    let c: Vec<f64> = e.iter().map(|v| v - mean).collect();
    let acf = |lag: usize| c.iter().zip(&c[lag..]).map(|(a, b)| a * b).sum::<f64>();
    let peak = (60..200).max_by(|a, b| acf(*a).total_cmp(&acf(*b))).unwrap();
    let expected = RATE / (fault.characteristic_order * 19.0);
    assert!((peak as f64 - expected).abs() <= 2.0, "{peak} vs {expected}");
}

#[test]
fn outer_race_impacts_per_pulse_match_characteristic_order() {
    let p = SpeedProfile::steady("s19", 19.0, 1.0).unwrap();
    for label in ["OF1", "OF3"] {
        let fault = FaultSpec::preset(label).unwrap();
        let v = gen_vibration(&p, &fault, RATE, 8192, 0.0, 1).unwrap();
        let d: Vec<f64> = burst_energy(v.values()).iter().map(|x| x.sqrt()).collect();
        let threshold = 0.2 * d.iter().cloned().fold(0.0, f64::max);
        let (mut bursts, mut quiet) = (0usize, usize::MAX);
        for x in &d {
            if *x > threshold && quiet > 15 {
                bursts += 1;
            }
            quiet = if *x > threshold { 0 } else { quiet.saturating_add(1) };
        }
        let pulses = count_pulses(gen_voltage(&p, RATE, 8192).unwrap().values());
        let ratio = bursts as f64 / pulses as f64;
        assert!(
            (ratio - fault.characteristic_order).abs() <= 1.0,
            "{label}: {bursts} bursts over {pulses} pulses"
        );
    }
}

#[test]
fn vibration_is_seeded() {
    let p = SpeedProfile::steady("s9", 9.0, 1.0).unwrap();
    let f = FaultSpec::preset("IF1").unwrap();
    let a = gen_vibration(&p, &f, RATE, 2048, 0.05, 4).unwrap();
    let b = gen_vibration(&p, &f, RATE, 2048, 0.05, 4).unwrap();
    let c = gen_vibration(&p, &f, RATE, 2048, 0.05, 5).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn vary_state_windows_cover_the_pulse_taxonomy() {
    let entry = DatasetEntry {
        label: "OF2".into(),
        profile: SpeedProfile::vary_state("v15", 15.0, [1.0, 1.5, 2.0, 1.5]).unwrap(),
        fault: FaultSpec::preset("OF2").unwrap(),
        count: 48,
    };
    let ds = make_dataset(&[entry], RATE, 2048, 0.05, 3).unwrap();
    let counts: Vec<usize> = ds
        .samples()
        .iter()
        .map(|s| count_pulses(s.voltage.values()))
        .collect();
    assert!(counts.contains(&0));
    assert!(counts.iter().any(|c| (1..=2).contains(c)));
    assert!(counts.iter().any(|c| (3..=4).contains(c)));
    assert!(counts.iter().all(|c| *c <= 4), "{counts:?}");
}

#[test]
fn spec_file_generates_a_readable_dataset() {
    let text = r#"
        seed = 4
        length = 1024

        [[profiles]]
        id = "vary"
        segments = [
            { kind = "standstill", duration_s = 0.5, start_hz = 0.0, end_hz = 0.0 },
            { kind = "accelerate", duration_s = 1.0, start_hz = 0.0, end_hz = 15.0 },
            { kind = "steady", duration_s = 1.0, start_hz = 15.0, end_hz = 15.0 },
            { kind = "decelerate", duration_s = 1.0, start_hz = 15.0, end_hz = 0.0 },
        ]

        [[entries]]
        label = "NC"
        profile = "vary"
        count = 6

        [[entries]]
        label = "custom"
        profile = "vary"
        count = 4
        fault = { kind = "inner_race", severity = 0.5, characteristic_order = 4.9 }
    "#;
    let spec = SynthSpec::parse(text).unwrap();
    let ds = spec.generate().unwrap();
    assert_eq!(ds.len(), 10);
    assert_eq!(ds.labels(), ["NC", "custom"]);
    assert_eq!(spec.generate().unwrap(), ds);

    let dir = tempfile::tempdir().unwrap();
    vgcdm::signal::write_dataset(&ds, dir.path()).unwrap();
    assert_eq!(read_dataset(dir.path()).unwrap(), ds);

    let missing_fault = text.replace(
        "fault = { kind = \"inner_race\", severity = 0.5, characteristic_order = 4.9 }",
        "",
    );
    let err = SynthSpec::parse(&missing_fault).unwrap_err().to_string();
    assert!(err.contains("entries[1].fault"), "{err}");
}
