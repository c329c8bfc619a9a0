//! Random, raw-attention and learned token dropping at the same input drop rate.
//!
//! Usage: `baseline_compare [model.ckpt] [ratio]`.

use iared::harness::compare::{baseline_compare, baseline_csv};

mod support;

fn main() -> iared::Result<()> {
    let ratio: f64 = std::env::args()
        .nth(2)
        .map_or(0.3, |r| r.parse().expect("ratio must be a number"));
    let (model, data) = support::model_and_data()?;
    print!(
        "{}",
        baseline_csv(&baseline_compare(&model, &data.test, ratio, 0)?)
    );
    Ok(())
}
