//! Per-group heatmaps and the stage-by-stage reduction strip.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::Result;
use crate::explain::{assemble_scores, render_heatmap, upsample, Interpolation, Pixmap};
use crate::image::Image;
use crate::model::{ForwardTrace, Model};

/// Brightness multiplier for dropped patches in the strip.
pub const DROPPED_SHADE: f64 = 0.15;
/// Blank columns between strip panels.
pub const STRIP_GAP: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct StageAnnotation {
    pub sample: usize,
    /// 0 is the input, `g` the patches live inside group `g`.
    pub stage: usize,
    pub kept: usize,
    pub kept_ratio: f64,
}

/// The input followed by one panel per group in which dropped patches are
/// darkened, laid out left to right.
pub fn reduction_strip(image: &Image, trace: &ForwardTrace, patch_size: usize) -> Image {
    let (h, w, c) = (image.height, image.width, image.channels);
    let grid_w = w / patch_size;
    let panels = trace.groups.len() + 1;
    let total_w = panels * w + (panels - 1) * STRIP_GAP;
    let mut strip = Image::zeros(h, total_w, c);
    for p in 0..panels {
        let live = (p > 0).then(|| &trace.groups[p - 1].exit_live);
        let x0 = p * (w + STRIP_GAP);
        for y in 0..h {
            for x in 0..w {
                let patch = (y / patch_size) * grid_w + x / patch_size;
                let shade = match live {
                    Some(l) if !l[patch] => DROPPED_SHADE,
                    _ => 1.0,
                };
                for ch in 0..c {
                    strip.set(y, x0 + x, ch, image.at(y, x, ch) * shade);
                }
            }
        }
    }
    strip
}

pub fn annotations(sample: usize, trace: &ForwardTrace) -> Vec<StageAnnotation> {
    let n = trace.groups.first().map_or(0, |g| g.entry_live.len());
    std::iter::once(StageAnnotation {
        sample,
        stage: 0,
        kept: n,
        kept_ratio: 1.0,
    })
    .chain(trace.groups.iter().enumerate().map(|(g, t)| {
        let kept = t.exit_live.iter().filter(|&&l| l).count();
        StageAnnotation {
            sample,
            stage: g + 1,
            kept,
            kept_ratio: kept as f64 / n as f64,
        }
    }))
    .collect()
}

pub fn annotations_csv(rows: &[StageAnnotation]) -> String {
    let mut out = String::from("sample,stage,kept,kept_ratio\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{:.6}\n",
            r.sample, r.stage, r.kept, r.kept_ratio
        ));
    }
    out
}

/// Writes, for each image, its greedy per-group heatmaps
/// (`sample{i}_group{g}_heat.pgm`, `..._overlay.ppm`), the input
/// (`sample{i}_input.ppm`) and the strip (`sample{i}_strip.ppm`), plus
/// `stages.csv` with the kept ratio of every strip panel.
pub fn visualize(
    model: &Model,
    images: &[Image],
    dir: impl AsRef<Path>,
) -> Result<(Vec<PathBuf>, Vec<StageAnnotation>)> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let v = &model.cfg.vit;
    let grid = v.grid();
    let mut files = Vec::new();
    let mut rows = Vec::new();
    for (i, image) in images.iter().enumerate() {
        let trace = model.infer(image)?;
        let input = dir.join(format!("sample{i}_input.ppm"));
        Pixmap::from_image(image)?.write(&input)?;
        files.push(input);
        for g in 0..trace.groups.len() {
            let scores = assemble_scores(&trace.groups, g)?;
            let heat = upsample(
                &scores,
                grid,
                v.image_height,
                v.image_width,
                Interpolation::Bilinear,
            )?;
            let (a, b) = render_heatmap(&heat, image, dir, &format!("sample{i}_group{}", g + 1))?;
            files.extend([a, b]);
        }
        let strip = dir.join(format!("sample{i}_strip.ppm"));
        Pixmap::from_image(&reduction_strip(image, &trace, v.patch_size))?.write(&strip)?;
        files.push(strip);
        rows.extend(annotations(i, &trace));
    }
    let csv = dir.join("stages.csv");
    fs::write(&csv, annotations_csv(&rows))?;
    files.push(csv);
    Ok((files, rows))
}
