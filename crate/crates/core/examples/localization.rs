//! Scores interpreter heatmaps against the synthetic region masks, next to
//! random-drop and raw-attention heatmaps.
//!
//! Usage: `localization [model.ckpt]`; without a checkpoint a quick model is trained.

use iared::explain::Binarize;
use iared::harness::compare::{localization, localization_csv, HeatSource};

mod support;

fn main() -> iared::Result<()> {
    let (model, data) = support::model_and_data()?;
    let mut sources: Vec<HeatSource> = (0..model.cfg.groups.groups)
        .map(|group| HeatSource::Learned { group })
        .collect();
    sources.push(HeatSource::Random {
        ratio: 0.3,
        seed: 0,
    });
    sources.push(HeatSource::Attention);
    for binarize in [Binarize::Mean, Binarize::Fixed(0.5)] {
        println!("binarized at {binarize:?}");
        print!(
            "{}",
            localization_csv(&localization(&model, &data.test, &sources, binarize)?)
        );
    }
    Ok(())
}
