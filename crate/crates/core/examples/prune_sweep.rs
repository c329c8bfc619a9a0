//! Magnitude pruning, token dropping and both together, without fine-tuning.
//!
//! Usage: `prune_sweep [model.ckpt]`.

use iared::baselines::combined_sweep;

mod support;

fn main() -> iared::Result<()> {
    let (model, data) = support::model_and_data()?;
    let curves = combined_sweep(
        &model,
        &data.test,
        &[0.4, 0.5, 0.6, 0.7],
        &[0.1, 0.2, 0.3, 0.4, 0.5, 0.6],
    )?;
    print!("{}", curves.to_csv());
    Ok(())
}
