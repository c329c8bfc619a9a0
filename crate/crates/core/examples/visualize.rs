//! Writes per-group heatmaps, overlays and hierarchical reduction strips.
//!
//! Usage: `visualize [model.ckpt] [out_dir]` (default `visualization`).

use iared::harness::visualize::{annotations_csv, visualize};

mod support;

fn main() -> iared::Result<()> {
    let out = std::env::args()
        .nth(2)
        .unwrap_or_else(|| "visualization".into());
    let (model, data) = support::model_and_data()?;
    let images: Vec<_> = data.test.iter().take(6).map(|s| s.image.clone()).collect();
    let (files, rows) = visualize(&model, &images, &out)?;
    print!("{}", annotations_csv(&rows));
    println!("wrote {} files to {out}", files.len());
    Ok(())
}
