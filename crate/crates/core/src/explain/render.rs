use std::path::{Path, PathBuf};

use crate::error::{shape_err, Result};
use crate::image::Image;

use super::heatmap::Heatmap;
use super::pixmap::{quantize, Pixmap};

pub const OVERLAY_ALPHA: f64 = 0.5;

/// Heat colour of value `v`: pure red scaled by `v`.
pub fn heat_colour(v: f64) -> [f64; 3] {
    [v, 0.0, 0.0]
}

/// Grayscale rendering of the heatmap.
pub fn raw_pixmap(heatmap: &Heatmap) -> Pixmap {
    Pixmap {
        width: heatmap.width,
        height: heatmap.height,
        channels: 1,
        data: heatmap.data.iter().map(|&v| quantize(v)).collect(),
    }
}

/// `α·image + (1 − α)·heat colour`, colour images only (grayscale is replicated).
pub fn overlay(heatmap: &Heatmap, image: &Image) -> Result<Image> {
    if heatmap.height != image.height || heatmap.width != image.width {
        return Err(shape_err(format!(
            "{}x{} heatmap over a {}x{} image",
            heatmap.height, heatmap.width, image.height, image.width
        )));
    }
    let mut out = Image::zeros(image.height, image.width, 3);
    for y in 0..image.height {
        for x in 0..image.width {
            let heat = heat_colour(heatmap.at(y, x));
            for (c, h) in heat.iter().enumerate() {
                let base = image.at(y, x, if image.channels == 3 { c } else { 0 });
                out.set(y, x, c, OVERLAY_ALPHA * base + (1.0 - OVERLAY_ALPHA) * h);
            }
        }
    }
    Ok(out)
}

/// Writes `<prefix>_heat.pgm` and `<prefix>_overlay.ppm`; returns both paths.
pub fn render_heatmap(
    heatmap: &Heatmap,
    image: &Image,
    dir: impl AsRef<Path>,
    prefix: &str,
) -> Result<(PathBuf, PathBuf)> {
    let dir = dir.as_ref();
    let raw = dir.join(format!("{prefix}_heat.pgm"));
    let over = dir.join(format!("{prefix}_overlay.ppm"));
    let blended = overlay(heatmap, image)?;
    raw_pixmap(heatmap).write(&raw)?;
    Pixmap::from_image(&blended)?.write(&over)?;
    Ok((raw, over))
}
