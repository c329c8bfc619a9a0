//! Input-level token dropping strategies that emit plain keep masks.

use crate::error::{contract_err, Error, Result};
use crate::gradcore::{Rng, Session, Tensor};
use crate::image::Image;
use crate::model::Model;
use crate::vit::{block_forward, msa_forward_with_attention};

/// Number of tokens a strategy drops out of `n`: `floor(ratio · n)`.
///
/// A small slack absorbs products such as `0.29 · 100 = 28.999…`.
pub fn drop_count(n: usize, ratio: f64) -> Result<usize> {
    if !(0.0..1.0).contains(&ratio) {
        return Err(Error::Config(format!("drop ratio {ratio} outside [0, 1)")));
    }
    Ok(((ratio * n as f64) + 1e-9).floor() as usize)
}

/// Keeps the `n − k` highest scores. Equal scores rank the lower index
/// higher, so ties drop the highest indices first.
pub fn drop_lowest(scores: &[f64], k: usize) -> Vec<bool> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut keep = vec![false; scores.len()];
    for &i in &order[..scores.len() - k.min(scores.len())] {
        keep[i] = true;
    }
    keep
}

/// Drops `floor(ratio · n)` tokens chosen uniformly at random.
pub fn random_drop(n: usize, ratio: f64, seed: u64) -> Result<Vec<bool>> {
    let k = drop_count(n, ratio)?;
    let mut order: Vec<usize> = (0..n).collect();
    Rng::derive(seed, &[0xD0]).shuffle(&mut order);
    let mut keep = vec![true; n];
    for &i in &order[..k] {
        keep[i] = false;
    }
    Ok(keep)
}

/// Class-token attention to each patch in the second block, averaged over heads.
pub fn cls_attention(model: &Model, image: &Image) -> Result<Vec<f64>> {
    if model.vit.blocks.len() < 2 {
        return Err(Error::Config(
            "attention dropping needs at least two blocks".into(),
        ));
    }
    let mut sess = Session::frozen(&model.store);
    let seq = model.embed(&mut sess, image)?;
    let seq = block_forward(&mut sess, &seq, &model.vit.blocks[0], model.cfg.vit.heads)?;
    let (_, attn) =
        msa_forward_with_attention(&mut sess, &seq, &model.vit.blocks[1], model.cfg.vit.heads)?;
    let n = seq.num_patches();
    let mut out = vec![0.0; n];
    for a in &attn {
        let row = &sess.graph.value(*a)[..n + 1];
        for (o, v) in out.iter_mut().zip(&row[1..]) {
            *o += v / attn.len() as f64;
        }
    }
    Ok(out)
}

/// Drops the patches the class token attends to least in the second block.
pub fn attention_drop(model: &Model, image: &Image, ratio: f64) -> Result<Vec<bool>> {
    let scores = cls_attention(model, image)?;
    Ok(drop_lowest(&scores, drop_count(scores.len(), ratio)?))
}

/// Distance of each token to the same slot one frame earlier; the first
/// frame is compared against zeros. `frames[t]` is `[N × D]`.
pub fn temporal_difference_scores(frames: &[Tensor]) -> Result<Vec<Vec<f64>>> {
    let first = frames.first().ok_or_else(|| contract_err("no frames"))?;
    let (n, d) = first.dims2();
    let mut out = Vec::with_capacity(frames.len());
    for (t, f) in frames.iter().enumerate() {
        if f.dims2() != (n, d) {
            return Err(contract_err(format!(
                "frame {t} is {:?}, expected [{n}, {d}]",
                f.shape()
            )));
        }
        out.push(
            (0..n)
                .map(|i| {
                    let cur = f.row(i);
                    match t {
                        0 => cur.iter().map(|v| v * v).sum::<f64>().sqrt(),
                        _ => cur
                            .iter()
                            .zip(frames[t - 1].row(i))
                            .map(|(a, b)| (a - b) * (a - b))
                            .sum::<f64>()
                            .sqrt(),
                    }
                })
                .collect(),
        );
    }
    Ok(out)
}

/// Drops the `floor(ratio · N·T)` tokens that changed least across the clip.
pub fn temporal_difference_drop(frames: &[Tensor], ratio: f64) -> Result<Vec<Vec<bool>>> {
    let scores = temporal_difference_scores(frames)?;
    let n = scores[0].len();
    let flat: Vec<f64> = scores.concat();
    let keep = drop_lowest(&flat, drop_count(flat.len(), ratio)?);
    Ok(keep.chunks(n).map(|c| c.to_vec()).collect())
}

/// Drops the patches with the lowest first-group interpreter scores.
pub fn learned_drop(model: &Model, image: &Image, ratio: f64) -> Result<Vec<bool>> {
    let mut sess = Session::frozen(&model.store);
    let seq = model.embed(&mut sess, image)?;
    let s = model.scores(&mut sess, &seq, 0)?;
    let scores = s.full(seq.num_patches());
    Ok(drop_lowest(&scores, drop_count(scores.len(), ratio)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DropKind {
    Random,
    Attention,
    Learned,
}

impl DropKind {
    pub fn name(self) -> &'static str {
        match self {
            DropKind::Random => "random",
            DropKind::Attention => "attention",
            DropKind::Learned => "learned",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DropStrategy {
    pub kind: DropKind,
    pub ratio: f64,
    pub seed: u64,
}

impl DropStrategy {
    /// Keep mask for one image; `index` separates random draws between images.
    pub fn mask(&self, model: &Model, image: &Image, index: u64) -> Result<Vec<bool>> {
        match self.kind {
            DropKind::Random => random_drop(
                model.num_patches(),
                self.ratio,
                Rng::derive(self.seed, &[index]).next_u64(),
            ),
            DropKind::Attention => attention_drop(model, image, self.ratio),
            DropKind::Learned => learned_drop(model, image, self.ratio),
        }
    }
}
