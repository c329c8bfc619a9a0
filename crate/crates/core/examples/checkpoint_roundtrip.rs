//! Saves a model with its curriculum state, reloads it, and checks the
//! reloaded model predicts bit-identically.

use iared::gradcore::Rng;
use iared::harness::checkpoint::{load_checkpoint, save_checkpoint};
use iared::harness::synthetic::{gen_synthetic, SyntheticSpec};
use iared::model::{Model, ModelConfig};
use iared::policy::TrainState;

fn main() -> iared::Result<()> {
    let model = Model::init(ModelConfig::toy(), &mut Rng::seed_from_u64(3))?;
    let dir = tempfile::tempdir()?;
    let path = dir.path().join("model.ckpt");
    save_checkpoint(&path, &model, Some(&TrainState::new(3)))?;
    println!("{} bytes written", std::fs::metadata(&path)?.len());

    let back = load_checkpoint(&path)?;
    let spec = SyntheticSpec {
        train: 0,
        test: 10,
        ..SyntheticSpec::default()
    };
    let mut identical = true;
    for s in gen_synthetic(&spec)?.test {
        identical &= model.infer(&s.image)?.logits == back.model.infer(&s.image)?.logits;
    }
    println!("logits identical after reload: {identical}");
    println!("curriculum cursor: {:?}", back.train.map(|t| t.cursor));
    Ok(())
}
