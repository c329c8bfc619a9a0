use crate::error::{contract_err, shape_err, Result};
use crate::model::GroupTrace;

/// Per-pixel map with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl Heatmap {
    pub fn at(&self, y: usize, x: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Interpolation {
    #[default]
    Bilinear,
    Nearest,
}

/// Group-`group` scores laid out over the patch grid: survivors of that
/// group carry their score, every dropped patch carries 0.
pub fn assemble_scores(history: &[GroupTrace], group: usize) -> Result<Vec<f64>> {
    let trace = history.get(group).ok_or_else(|| {
        contract_err(format!(
            "history covers {} groups, asked for {}",
            history.len(),
            group + 1
        ))
    })?;
    Ok(trace
        .scores
        .iter()
        .zip(&trace.exit_live)
        .map(|(&s, &live)| if live { s } else { 0.0 })
        .collect())
}

/// Resizes a grid of scores to `height × width`. Bilinear sampling uses
/// pixel centres and clamps at the border.
pub fn upsample(
    scores: &[f64],
    grid: (usize, usize),
    height: usize,
    width: usize,
    mode: Interpolation,
) -> Result<Heatmap> {
    let (gh, gw) = grid;
    if scores.len() != gh * gw || gh == 0 || gw == 0 {
        return Err(shape_err(format!(
            "{} scores for a {gh}x{gw} grid",
            scores.len()
        )));
    }
    let axis = |out: usize, n_out: usize, n_in: usize| -> (usize, usize, f64) {
        let s =
            ((out as f64 + 0.5) * n_in as f64 / n_out as f64 - 0.5).clamp(0.0, (n_in - 1) as f64);
        let i0 = s.floor() as usize;
        let i1 = (i0 + 1).min(n_in - 1);
        (i0, i1, s - i0 as f64)
    };
    let mut data = Vec::with_capacity(height * width);
    for y in 0..height {
        let (y0, y1, wy) = axis(y, height, gh);
        for x in 0..width {
            let v = match mode {
                Interpolation::Nearest => {
                    let gy = (y * gh / height).min(gh - 1);
                    let gx = (x * gw / width).min(gw - 1);
                    scores[gy * gw + gx]
                }
                Interpolation::Bilinear => {
                    let (x0, x1, wx) = axis(x, width, gw);
                    let top = scores[y0 * gw + x0] * (1.0 - wx) + scores[y0 * gw + x1] * wx;
                    let bottom = scores[y1 * gw + x0] * (1.0 - wx) + scores[y1 * gw + x1] * wx;
                    top * (1.0 - wy) + bottom * wy
                }
            };
            data.push(v.clamp(0.0, 1.0));
        }
    }
    Ok(Heatmap {
        height,
        width,
        data,
    })
}

/// Divides by the maximum so the hottest value becomes 1; all-zero maps stay zero.
pub fn normalize_max(values: &[f64]) -> Vec<f64> {
    let m = values.iter().cloned().fold(0.0, f64::max);
    if m > 0.0 {
        values.iter().map(|v| v / m).collect()
    } else {
        values.to_vec()
    }
}
