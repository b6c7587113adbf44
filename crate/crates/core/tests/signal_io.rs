use std::fs;

use proptest::prelude::*;
use vgcdm::signal::{
    normalize_values, read_dataset, slice_nonoverlapping, write_dataset, Split, VIBRATION_FILE,
};
use vgcdm::synth::{make_dataset, DatasetEntry, FaultSpec, SpeedProfile};
use vgcdm::Error;

fn ten_pairs() -> vgcdm::signal::Dataset {
    let entries = ["NC", "IF2"].map(|label| DatasetEntry {
        label: label.into(),
        profile: SpeedProfile::steady("s29", 29.0, 2.0).unwrap(),
        fault: FaultSpec::preset(label).unwrap(),
        count: 5,
    });
    make_dataset(&entries, 4096.0, 512, 0.05, 8).unwrap()
}

#[test]
fn dataset_round_trips_bit_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let ds = ten_pairs();
    write_dataset(&ds, dir.path()).unwrap();
    let back = read_dataset(dir.path()).unwrap();
    assert_eq!(back.len(), 10);
    for (a, b) in ds.samples().iter().zip(back.samples()) {
        let bits = |s: &[f32]| s.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(a.vibration.values()), bits(b.vibration.values()));
        assert_eq!(bits(a.voltage.values()), bits(b.voltage.values()));
        assert_eq!(a.condition_label, b.condition_label);
    }
    assert_eq!(back, ds);
}

#[test]
fn short_payload_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    write_dataset(&ten_pairs(), dir.path()).unwrap();
    let path = dir.path().join(VIBRATION_FILE);
    let bytes = fs::read(&path).unwrap();
    fs::write(&path, &bytes[..9 * 512 * 4]).unwrap();
    assert!(matches!(
        read_dataset(dir.path()),
        Err(Error::PayloadMismatch { .. })
    ));
}

#[test]
fn empty_directory_has_no_manifest() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(
        read_dataset(dir.path()),
        Err(Error::MissingManifest(_))
    ));
}

#[test]
fn slicing_examples() {
    let long = vec![0.5f32; 5000];
    assert_eq!(slice_nonoverlapping(&long, 2048, 8192.0).unwrap().len(), 2);
    assert_eq!(slice_nonoverlapping(&long[..2048], 2048, 8192.0).unwrap().len(), 1);
    assert!(matches!(
        slice_nonoverlapping(&long[..2047], 2048, 8192.0),
        Err(Error::InsufficientData { .. })
    ));
}

#[test]
fn split_of_one_hundred() {
    let entry = DatasetEntry {
        label: "NC".into(),
        profile: SpeedProfile::steady("s19", 19.0, 30.0).unwrap(),
        fault: FaultSpec::healthy(),
        count: 100,
    };
    let ds = make_dataset(&[entry], 8192.0, 2048, 0.05, 2).unwrap();
    let train = ds.split().iter().filter(|s| **s == Split::Train).count();
    assert_eq!((train, ds.len() - train), (70, 30));
}

proptest! {
    #[test]
    fn normalized_peak_is_one(v in prop::collection::vec(-100.0f32..100.0, 1..300)) {
        prop_assume!(v.iter().any(|x| *x != 0.0));
        let n = normalize_values(&v);
        prop_assert_eq!(n.iter().fold(0.0f32, |m, x| m.max(x.abs())), 1.0);
        prop_assert_eq!(normalize_values(&n), n.clone());
    }

    #[test]
    fn slices_cover_the_prefix(len in 1usize..3000, l in 1usize..600) {
        prop_assume!(len >= l);
        let series: Vec<f32> = (0..len).map(|i| i as f32).collect();
        let s = slice_nonoverlapping(&series, l, 1.0).unwrap();
        prop_assert_eq!(s.len(), len / l);
        for (k, sig) in s.iter().enumerate() {
            prop_assert_eq!(sig.values(), &series[k * l..(k + 1) * l]);
        }
    }
}
