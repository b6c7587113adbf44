use vgcdm::checkpoint::Checkpoint;
use vgcdm::denoiser::DenoiserConfig;
use vgcdm::diffusion::{TrainConfig, Trainer};
use vgcdm::nn::Act;
use vgcdm::synth::{make_dataset, DatasetEntry, FaultSpec, SpeedProfile};

fn tiny() -> DenoiserConfig {
    DenoiserConfig {
        length: 64,
        base_channels: 8,
        channel_multipliers: vec![1, 2],
        time_embed_dim: 16,
        n_heads: 2,
        inner_dim: 8,
        encoder_depth: 1,
        condition_enabled: true,
        norm_groups: 4,
    }
}

fn trained(epochs: usize) -> (Trainer, vgcdm::signal::Dataset) {
    let entry = DatasetEntry {
        label: "IF3".into(),
        profile: SpeedProfile::steady("s39", 39.0, 10.0).unwrap(),
        fault: FaultSpec::preset("IF3").unwrap(),
        count: 24,
    };
    let ds = make_dataset(&[entry], 256.0, 64, 0.05, 5).unwrap();
    let cfg = TrainConfig {
        epochs,
        batch_size: 4,
        learning_rate: 1e-3,
        ..Default::default()
    };
    let mut tr = Trainer::new(tiny(), cfg).unwrap();
    tr.run(&ds, |_| {}).unwrap();
    (tr, ds)
}

#[test]
fn save_load_is_bit_exact() {
    let (tr, _) = trained(2);
    let ck = Checkpoint::from_trainer(&tr);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.vgc");
    ck.save(&path).unwrap();
    let back = Checkpoint::load(&path).unwrap();
    assert_eq!(back, ck);
    for (a, b) in ck.params.entries().iter().zip(back.params.entries()) {
        assert_eq!(a.name, b.name);
        assert_eq!(a.shape, b.shape);
        assert!(a.data.iter().zip(&b.data).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
    assert_eq!(back.to_bytes().unwrap(), std::fs::read(&path).unwrap());
}

#[test]
fn restored_model_predicts_identically() {
    let (tr, ds) = trained(1);
    let ck = Checkpoint::from_bytes(&Checkpoint::from_trainer(&tr).to_bytes().unwrap()).unwrap();
    let model = ck.denoiser().unwrap();
    let p = &ds.samples()[0];
    let x = Act::from_vec(1, 1, 64, p.vibration.values().to_vec());
    let c = Act::from_vec(1, 1, 64, p.voltage.values().to_vec());
    let a = tr.model.forward(&x, &[10], Some(&c)).unwrap();
    let b = model.forward(&x, &[10], Some(&c)).unwrap();
    assert_eq!(a.data, b.data);
}

#[test]
fn resumed_training_matches_uninterrupted_training() {
    let (full, ds) = trained(3);
    let (partial, _) = trained(1);
    let ck = Checkpoint::from_bytes(&Checkpoint::from_trainer(&partial).to_bytes().unwrap()).unwrap();
    let mut cfg = ck.train.clone();
    cfg.epochs = 3;
    let mut resumed = ck.into_trainer(Some(cfg)).unwrap();
    let step_before = resumed.global_step;
    resumed.run(&ds, |_| {}).unwrap();
    assert!(resumed.global_step > step_before);
    assert_eq!(resumed.global_step, full.global_step);
    assert_eq!(resumed.model.params, full.model.params);
}

#[test]
fn corrupted_payload_is_rejected() {
    let (tr, _) = trained(1);
    let mut bytes = Checkpoint::from_trainer(&tr).to_bytes().unwrap();
    bytes.extend_from_slice(&[0, 0, 0, 0]);
    assert!(Checkpoint::from_bytes(&bytes).is_err());
    bytes[8] = 99;
    assert!(Checkpoint::from_bytes(&bytes).is_err());
}
