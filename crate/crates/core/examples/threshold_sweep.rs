//! Accuracy and FLOPs as the keep threshold moves around 0.5.
//!
//! Usage: `threshold_sweep [model.ckpt]`.

use iared::baselines::{threshold_csv, threshold_sweep};

mod support;

fn main() -> iared::Result<()> {
    let (model, data) = support::model_and_data()?;
    let thresholds = [0.3, 0.4, 0.48, 0.49, 0.5, 0.51, 0.52, 0.6, 0.7];
    print!(
        "{}",
        threshold_csv(&threshold_sweep(&model, &data.test, &thresholds)?)
    );
    Ok(())
}
