//! Wall-clock time of dense and reduced inference next to the FLOPs estimate.
//!
//! Usage: `inference_timing [model.ckpt]`.

use iared::accountant::{dataset_flops, time_median, CostConfig};
use iared::harness::eval::{evaluate, evaluate_dense};

mod support;

fn main() -> iared::Result<()> {
    let (model, data) = support::model_and_data()?;
    let batch = &data.test[..20];
    let dense = time_median(7, 1, || {
        evaluate_dense(&model, batch).unwrap();
    })?;
    let reduced = time_median(7, 1, || {
        evaluate(&model, batch).unwrap();
    })?;
    let (_, traces) = evaluate(&model, batch)?;
    let live: Vec<Vec<usize>> = traces.into_iter().map(|t| t.block_live).collect();
    let cost = dataset_flops(&CostConfig::from_model(&model.cfg), &live)?;
    println!(
        "dense   {:>8.2} ms per image",
        dense.as_secs_f64() * 1e3 / 20.0
    );
    println!(
        "reduced {:>8.2} ms per image",
        reduced.as_secs_f64() * 1e3 / 20.0
    );
    println!(
        "measured speed-up {:.2}x, FLOPs speed-up {:.2}x",
        dense.as_secs_f64() / reduced.as_secs_f64(),
        cost.speedup()
    );
    Ok(())
}
