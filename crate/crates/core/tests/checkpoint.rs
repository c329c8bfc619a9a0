use iared::error::{CheckpointFault, Error};
use iared::gradcore::Rng;
use iared::harness::checkpoint::{encode, load_checkpoint, save_checkpoint};
use iared::harness::config::RunConfig;
use iared::harness::pipeline::{self, RunDir};
use iared::image::Image;
use iared::model::{Model, ModelConfig};
use iared::policy::TrainState;

fn probe_images(n: usize) -> Vec<Image> {
    let mut rng = Rng::seed_from_u64(40);
    (0..n)
        .map(|_| Image::new(32, 32, 3, (0..32 * 32 * 3).map(|_| rng.uniform()).collect()).unwrap())
        .collect()
}

fn fault(bytes: &[u8]) -> CheckpointFault {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.ckpt");
    std::fs::write(&path, bytes).unwrap();
    match load_checkpoint(&path) {
        Err(Error::Checkpoint(f)) => f,
        other => panic!("expected a checkpoint fault, got {other:?}"),
    }
}

#[test]
fn reloaded_model_gives_identical_logits() {
    let model = Model::init(ModelConfig::toy(), &mut Rng::seed_from_u64(1)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    save_checkpoint(&path, &model, None).unwrap();
    let back = load_checkpoint(&path).unwrap();
    assert!(back.train.is_none());
    for image in probe_images(10) {
        let a = model.infer(&image).unwrap();
        let b = back.model.infer(&image).unwrap();
        assert_eq!(a.logits, b.logits);
        assert_eq!(a.block_live, b.block_live);
    }
}

#[test]
fn corruption_is_reported_by_kind() {
    let model = Model::init(ModelConfig::toy(), &mut Rng::seed_from_u64(2)).unwrap();
    let good = encode(&model, Some(&TrainState::new(3)));

    let mut flipped = good.clone();
    let mid = flipped.len() / 2;
    flipped[mid] ^= 0x10;
    assert_eq!(fault(&flipped), CheckpointFault::ChecksumMismatch);

    assert_eq!(fault(&good[..good.len() - 40]), CheckpointFault::Truncated);

    let mut magic = good.clone();
    magic[0] = b'X';
    assert_eq!(fault(&magic), CheckpointFault::BadMagic);

    let mut version = good.clone();
    version[8] = 9;
    assert!(matches!(
        fault(&version),
        CheckpointFault::VersionMismatch { found: 9, .. }
    ));
}

#[test]
fn resumed_training_matches_uninterrupted() {
    let mut cfg = RunConfig::default();
    cfg.apply_overrides(&[
        "seed=9",
        "train_samples=32",
        "test_samples=8",
        "backbone_epochs=1",
        "interpreter_epochs=1",
        "block_epochs=2",
        "batch_size=8",
    ])
    .unwrap();
    let root = tempfile::tempdir().unwrap();
    let whole = RunDir::new(root.path().join("whole"));
    let a = pipeline::train(&cfg, &whole, None).unwrap();
    assert!(a.finished);

    let parts = RunDir::new(root.path().join("parts"));
    let mut epochs = Vec::new();
    loop {
        let r = pipeline::train(&cfg, &parts, Some(2)).unwrap();
        epochs.push(r.epochs_run);
        if r.finished {
            break;
        }
    }
    // 3 groups of 1 + 2 epochs, two at a time
    assert_eq!(epochs, vec![2, 2, 2, 2, 1]);
    assert_eq!(
        std::fs::read_to_string(whole.log()).unwrap(),
        std::fs::read_to_string(parts.log()).unwrap()
    );
    assert_eq!(
        std::fs::read(whole.checkpoint()).unwrap(),
        std::fs::read(parts.checkpoint()).unwrap()
    );
}

#[test]
fn resume_rejects_a_different_model_shape() {
    let mut cfg = RunConfig::default();
    cfg.apply_overrides(&[
        "train_samples=16",
        "test_samples=4",
        "backbone_epochs=1",
        "batch_size=8",
    ])
    .unwrap();
    let root = tempfile::tempdir().unwrap();
    let dir = RunDir::new(root.path());
    pipeline::train(&cfg, &dir, Some(0)).unwrap();
    cfg.set("embed_dim", "32").unwrap();
    assert!(matches!(
        pipeline::train(&cfg, &dir, None),
        Err(Error::Config(_))
    ));
}
