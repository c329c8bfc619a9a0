//! Vision-transformer backbone: patch embedding, positional table, class
//! token, and pre-norm MSA/FFN blocks that honour a per-token live mask.
//!
//! Dropped tokens stay in the tensor but are masked out of attention keys and
//! values, and their rows receive no residual update. This is numerically the
//! same as gathering the live rows, running a dense block, and scattering back.

use crate::error::{contract_err, shape_err, Error, Result};
use crate::gradcore::{NodeId, ParamId, ParamStore, Rng, Session, Tensor};
use crate::image::Image;

/// Standard deviation of the truncated-normal weight initialization.
pub const INIT_STD: f64 = 0.02;
pub const LN_EPS: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct VitConfig {
    pub image_height: usize,
    pub image_width: usize,
    pub channels: usize,
    pub patch_size: usize,
    pub embed_dim: usize,
    pub depth: usize,
    pub heads: usize,
    pub classes: usize,
}

impl VitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.patch_size == 0
            || self.image_height % self.patch_size != 0
            || self.image_width % self.patch_size != 0
        {
            return Err(Error::Config(format!(
                "image {}x{} not divisible into {}-pixel patches",
                self.image_height, self.image_width, self.patch_size
            )));
        }
        if self.heads == 0 || self.embed_dim % self.heads != 0 {
            return Err(Error::Config(format!(
                "embedding width {} not divisible by {} heads",
                self.embed_dim, self.heads
            )));
        }
        if self.depth == 0 || self.classes < 2 || self.channels == 0 {
            return Err(Error::Config(
                "depth, channels must be positive and classes at least 2".into(),
            ));
        }
        Ok(())
    }

    pub fn grid(&self) -> (usize, usize) {
        (
            self.image_height / self.patch_size,
            self.image_width / self.patch_size,
        )
    }

    pub fn num_patches(&self) -> usize {
        let (gh, gw) = self.grid();
        gh * gw
    }

    pub fn patch_dim(&self) -> usize {
        self.patch_size * self.patch_size * self.channels
    }

    pub fn head_dim(&self) -> usize {
        self.embed_dim / self.heads
    }

    pub fn ffn_dim(&self) -> usize {
        4 * self.embed_dim
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockParams {
    pub ln1_g: ParamId,
    pub ln1_b: ParamId,
    pub q_w: ParamId,
    pub q_b: ParamId,
    pub k_w: ParamId,
    pub k_b: ParamId,
    pub v_w: ParamId,
    pub v_b: ParamId,
    pub proj_w: ParamId,
    pub proj_b: ParamId,
    pub ln2_g: ParamId,
    pub ln2_b: ParamId,
    pub fc1_w: ParamId,
    pub fc1_b: ParamId,
    pub fc2_w: ParamId,
    pub fc2_b: ParamId,
}

impl BlockParams {
    pub fn ids(&self) -> Vec<ParamId> {
        vec![
            self.ln1_g,
            self.ln1_b,
            self.q_w,
            self.q_b,
            self.k_w,
            self.k_b,
            self.v_w,
            self.v_b,
            self.proj_w,
            self.proj_b,
            self.ln2_g,
            self.ln2_b,
            self.fc1_w,
            self.fc1_b,
            self.fc2_w,
            self.fc2_b,
        ]
    }

    /// Weight matrices of the block's fully connected layers (no biases).
    pub fn linear_weights(&self) -> [ParamId; 6] {
        [
            self.q_w,
            self.k_w,
            self.v_w,
            self.proj_w,
            self.fc1_w,
            self.fc2_w,
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VitParams {
    pub cfg: VitConfig,
    pub patch_w: ParamId,
    pub patch_b: ParamId,
    pub pos: ParamId,
    pub cls: ParamId,
    pub blocks: Vec<BlockParams>,
    pub norm_g: ParamId,
    pub norm_b: ParamId,
    pub head_w: ParamId,
    pub head_b: ParamId,
}

fn trunc_normal(rng: &mut Rng, shape: Vec<usize>) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.truncated_normal(INIT_STD)).collect();
    Tensor::new(shape, data).expect("consistent shape")
}

impl VitParams {
    /// Truncated-normal (σ = 0.02) weights, zero biases, unit layer-norm gains.
    pub fn init(cfg: VitConfig, store: &mut ParamStore, rng: &mut Rng) -> Result<Self> {
        cfg.validate()?;
        let d = cfg.embed_dim;
        let f = cfg.ffn_dim();
        let n = cfg.num_patches();
        let patch_w = store.add("patch.w", trunc_normal(rng, vec![cfg.patch_dim(), d]));
        let patch_b = store.add("patch.b", Tensor::zeros(vec![d]));
        let pos = store.add("pos", trunc_normal(rng, vec![n + 1, d]));
        let cls = store.add("cls", trunc_normal(rng, vec![1, d]));
        let mut blocks = Vec::with_capacity(cfg.depth);
        for b in 0..cfg.depth {
            let mut lin = |store: &mut ParamStore, name: &str, i: usize, o: usize| {
                let w = store.add(format!("block{b}.{name}.w"), trunc_normal(rng, vec![i, o]));
                let bias = store.add(format!("block{b}.{name}.b"), Tensor::zeros(vec![o]));
                (w, bias)
            };
            let ln1_g = store.add(format!("block{b}.ln1.g"), Tensor::filled(vec![d], 1.0));
            let ln1_b = store.add(format!("block{b}.ln1.b"), Tensor::zeros(vec![d]));
            let (q_w, q_b) = lin(store, "q", d, d);
            let (k_w, k_b) = lin(store, "k", d, d);
            let (v_w, v_b) = lin(store, "v", d, d);
            let (proj_w, proj_b) = lin(store, "proj", d, d);
            let ln2_g = store.add(format!("block{b}.ln2.g"), Tensor::filled(vec![d], 1.0));
            let ln2_b = store.add(format!("block{b}.ln2.b"), Tensor::zeros(vec![d]));
            let (fc1_w, fc1_b) = lin(store, "fc1", d, f);
            let (fc2_w, fc2_b) = lin(store, "fc2", f, d);
            blocks.push(BlockParams {
                ln1_g,
                ln1_b,
                q_w,
                q_b,
                k_w,
                k_b,
                v_w,
                v_b,
                proj_w,
                proj_b,
                ln2_g,
                ln2_b,
                fc1_w,
                fc1_b,
                fc2_w,
                fc2_b,
            });
        }
        let norm_g = store.add("norm.g", Tensor::filled(vec![d], 1.0));
        let norm_b = store.add("norm.b", Tensor::zeros(vec![d]));
        let head_w = store.add("head.w", trunc_normal(rng, vec![d, cfg.classes]));
        let head_b = store.add("head.b", Tensor::zeros(vec![cfg.classes]));
        Ok(VitParams {
            cfg,
            patch_w,
            patch_b,
            pos,
            cls,
            blocks,
            norm_g,
            norm_b,
            head_w,
            head_b,
        })
    }

    /// Rebinds a layout onto an existing store by parameter name.
    pub fn locate(cfg: VitConfig, store: &ParamStore) -> Result<Self> {
        cfg.validate()?;
        let id = |name: String| {
            store
                .find(&name)
                .ok_or_else(|| Error::Config(format!("missing parameter {name}")))
        };
        let mut blocks = Vec::with_capacity(cfg.depth);
        for b in 0..cfg.depth {
            let p = |n: &str| id(format!("block{b}.{n}"));
            blocks.push(BlockParams {
                ln1_g: p("ln1.g")?,
                ln1_b: p("ln1.b")?,
                q_w: p("q.w")?,
                q_b: p("q.b")?,
                k_w: p("k.w")?,
                k_b: p("k.b")?,
                v_w: p("v.w")?,
                v_b: p("v.b")?,
                proj_w: p("proj.w")?,
                proj_b: p("proj.b")?,
                ln2_g: p("ln2.g")?,
                ln2_b: p("ln2.b")?,
                fc1_w: p("fc1.w")?,
                fc1_b: p("fc1.b")?,
                fc2_w: p("fc2.w")?,
                fc2_b: p("fc2.b")?,
            });
        }
        Ok(VitParams {
            patch_w: id("patch.w".into())?,
            patch_b: id("patch.b".into())?,
            pos: id("pos".into())?,
            cls: id("cls".into())?,
            blocks,
            norm_g: id("norm.g".into())?,
            norm_b: id("norm.b".into())?,
            head_w: id("head.w".into())?,
            head_b: id("head.b".into())?,
            cfg,
        })
    }

    /// Patch embedding, positional table and class token.
    pub fn stem_ids(&self) -> Vec<ParamId> {
        vec![self.patch_w, self.patch_b, self.pos, self.cls]
    }

    pub fn head_ids(&self) -> Vec<ParamId> {
        vec![self.norm_g, self.norm_b, self.head_w, self.head_b]
    }

    pub fn all_ids(&self) -> Vec<ParamId> {
        let mut ids = self.stem_ids();
        for b in &self.blocks {
            ids.extend(b.ids());
        }
        ids.extend(self.head_ids());
        ids
    }
}

/// Flattened pixel patches in row-major grid order.
#[derive(Debug, Clone, PartialEq)]
pub struct Patches {
    /// `[N × patch_size²·C]`
    pub data: Tensor,
    pub grid_index: Vec<(usize, usize)>,
    pub grid_dims: (usize, usize),
    pub patch_size: usize,
    pub channels: usize,
}

pub fn patchify(image: &Image, patch_size: usize) -> Result<Patches> {
    if patch_size == 0 || image.height % patch_size != 0 || image.width % patch_size != 0 {
        return Err(shape_err(format!(
            "{}x{} image is not divisible into {patch_size}-pixel patches",
            image.height, image.width
        )));
    }
    let (gh, gw) = (image.height / patch_size, image.width / patch_size);
    let c = image.channels;
    let pd = patch_size * patch_size * c;
    let mut data = Vec::with_capacity(gh * gw * pd);
    let mut grid_index = Vec::with_capacity(gh * gw);
    for r in 0..gh {
        for col in 0..gw {
            grid_index.push((r, col));
            for y in 0..patch_size {
                let row_start = ((r * patch_size + y) * image.width + col * patch_size) * c;
                data.extend_from_slice(&image.data[row_start..row_start + patch_size * c]);
            }
        }
    }
    Ok(Patches {
        data: Tensor::matrix(gh * gw, pd, data)?,
        grid_index,
        grid_dims: (gh, gw),
        patch_size,
        channels: c,
    })
}

/// Inverse of [`patchify`]; patches are placed by their grid index, not their order.
pub fn unpatchify(patches: &Patches) -> Image {
    let p = patches.patch_size;
    let c = patches.channels;
    let (gh, gw) = patches.grid_dims;
    let mut img = Image::zeros(gh * p, gw * p, c);
    for (i, &(r, col)) in patches.grid_index.iter().enumerate() {
        let src = patches.data.row(i);
        for y in 0..p {
            let dst = ((r * p + y) * img.width + col * p) * c;
            img.data[dst..dst + p * c].copy_from_slice(&src[y * p * c..(y + 1) * p * c]);
        }
    }
    img
}

/// Embedded tokens: row 0 is the class token, row `i + 1` is patch `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenSequence {
    pub tokens: NodeId,
    pub grid_index: Vec<(usize, usize)>,
    pub grid_dims: (usize, usize),
    /// One flag per row, class token first.
    pub live: Vec<bool>,
}

impl TokenSequence {
    pub fn num_patches(&self) -> usize {
        self.grid_index.len()
    }

    /// Live flags of the patch tokens only.
    pub fn patch_live(&self) -> Vec<bool> {
        self.live[1..].to_vec()
    }

    pub fn live_patches(&self) -> Vec<usize> {
        (0..self.num_patches())
            .filter(|&i| self.live[i + 1])
            .collect()
    }

    pub fn live_patch_count(&self) -> usize {
        self.live[1..].iter().filter(|&&l| l).count()
    }

    /// Drops every patch whose flag in `keep` is false. Dropped tokens never come back.
    pub fn restrict(&mut self, keep: &[bool]) -> Result<()> {
        if keep.len() != self.num_patches() {
            return Err(contract_err(format!(
                "keep mask of {} for {} patches",
                keep.len(),
                self.num_patches()
            )));
        }
        for (i, &k) in keep.iter().enumerate() {
            self.live[i + 1] &= k;
        }
        Ok(())
    }
}

pub fn embed(
    sess: &mut Session<'_>,
    patches: &Patches,
    params: &VitParams,
) -> Result<TokenSequence> {
    let cfg = &params.cfg;
    if patches.grid_dims != cfg.grid() || patches.data.dims2().1 != cfg.patch_dim() {
        return Err(shape_err(format!(
            "patches {:?} x {} do not match model grid {:?} x {}",
            patches.grid_dims,
            patches.data.dims2().1,
            cfg.grid(),
            cfg.patch_dim()
        )));
    }
    let gw = patches.grid_dims.1;
    let x = sess.graph.constant(patches.data.clone());
    let w = sess.param(params.patch_w);
    let b = sess.param(params.patch_b);
    let proj = sess.graph.matmul(x, w)?;
    let proj = sess.graph.add_row(proj, b)?;
    let cls = sess.param(params.cls);
    let seq = sess.graph.concat_rows(&[cls, proj])?;
    let mut slots = Vec::with_capacity(patches.grid_index.len() + 1);
    slots.push(0);
    slots.extend(patches.grid_index.iter().map(|&(r, c)| 1 + r * gw + c));
    let pos_table = sess.param(params.pos);
    let pos = sess.graph.gather_rows(pos_table, &slots)?;
    let tokens = sess.graph.add(seq, pos)?;
    Ok(TokenSequence {
        tokens,
        grid_index: patches.grid_index.clone(),
        grid_dims: patches.grid_dims,
        live: vec![true; patches.grid_index.len() + 1],
    })
}

fn linear(sess: &mut Session<'_>, x: NodeId, w: ParamId, b: ParamId) -> Result<NodeId> {
    let wn = sess.param(w);
    let bn = sess.param(b);
    let y = sess.graph.matmul(x, wn)?;
    sess.graph.add_row(y, bn)
}

/// Multi-head self-attention with residual; returns the per-head attention
/// weight nodes (`[n+1 × n+1]`, row-stochastic over live columns).
pub fn msa_forward_with_attention(
    sess: &mut Session<'_>,
    seq: &TokenSequence,
    block: &BlockParams,
    heads: usize,
) -> Result<(TokenSequence, Vec<NodeId>)> {
    if !seq.live.iter().any(|&l| l) {
        return Err(contract_err("attention over zero live tokens"));
    }
    let x = seq.tokens;
    let d = sess.graph.dims(x).1;
    let hd = d / heads;
    let g1 = sess.param(block.ln1_g);
    let b1 = sess.param(block.ln1_b);
    let h = sess.graph.layer_norm(x, g1, b1, LN_EPS)?;
    let q = linear(sess, h, block.q_w, block.q_b)?;
    let k = linear(sess, h, block.k_w, block.k_b)?;
    let v = linear(sess, h, block.v_w, block.v_b)?;
    let scale = 1.0 / (hd as f64).sqrt();
    let mut outs = Vec::with_capacity(heads);
    let mut attn = Vec::with_capacity(heads);
    for head in 0..heads {
        let qh = sess.graph.slice_cols(q, head * hd, hd)?;
        let kh = sess.graph.slice_cols(k, head * hd, hd)?;
        let vh = sess.graph.slice_cols(v, head * hd, hd)?;
        let kt = sess.graph.transpose(kh);
        let s = sess.graph.matmul(qh, kt)?;
        let s = sess.graph.scale(s, scale);
        let a = sess.graph.masked_softmax_rows(s, &seq.live)?;
        outs.push(sess.graph.matmul(a, vh)?);
        attn.push(a);
    }
    let o = sess.graph.concat_cols(&outs)?;
    let y = linear(sess, o, block.proj_w, block.proj_b)?;
    let y = sess.graph.mask_rows(y, &seq.live)?;
    let tokens = sess.graph.add(x, y)?;
    Ok((
        TokenSequence {
            tokens,
            ..seq.clone()
        },
        attn,
    ))
}

pub fn msa_forward(
    sess: &mut Session<'_>,
    seq: &TokenSequence,
    block: &BlockParams,
    heads: usize,
) -> Result<TokenSequence> {
    msa_forward_with_attention(sess, seq, block, heads).map(|(s, _)| s)
}

pub fn ffn_forward(
    sess: &mut Session<'_>,
    seq: &TokenSequence,
    block: &BlockParams,
) -> Result<TokenSequence> {
    let x = seq.tokens;
    let g2 = sess.param(block.ln2_g);
    let b2 = sess.param(block.ln2_b);
    let h = sess.graph.layer_norm(x, g2, b2, LN_EPS)?;
    let z = linear(sess, h, block.fc1_w, block.fc1_b)?;
    let z = sess.graph.gelu(z);
    let y = linear(sess, z, block.fc2_w, block.fc2_b)?;
    let y = sess.graph.mask_rows(y, &seq.live)?;
    let tokens = sess.graph.add(x, y)?;
    Ok(TokenSequence {
        tokens,
        ..seq.clone()
    })
}

pub fn block_forward(
    sess: &mut Session<'_>,
    seq: &TokenSequence,
    block: &BlockParams,
    heads: usize,
) -> Result<TokenSequence> {
    let s = msa_forward(sess, seq, block, heads)?;
    ffn_forward(sess, &s, block)
}

/// Final norm on the class token, then the linear classifier: `[1 × classes]`.
pub fn classify(sess: &mut Session<'_>, seq: &TokenSequence, params: &VitParams) -> Result<NodeId> {
    let cls = sess.graph.row(seq.tokens, 0)?;
    let g = sess.param(params.norm_g);
    let b = sess.param(params.norm_b);
    let h = sess.graph.layer_norm(cls, g, b, LN_EPS)?;
    linear(sess, h, params.head_w, params.head_b)
}

/// Plain backbone forward. `keep_masks`, when given, holds one patch keep
/// mask per group; the blocks divide evenly among the groups and each mask
/// is applied before its group's first block.
pub fn vit_forward(
    sess: &mut Session<'_>,
    image: &Image,
    params: &VitParams,
    keep_masks: Option<&[Vec<bool>]>,
) -> Result<NodeId> {
    let patches = patchify(image, params.cfg.patch_size)?;
    let mut seq = embed(sess, &patches, params)?;
    let depth = params.blocks.len();
    let per_group = match keep_masks {
        Some(m) if m.is_empty() || depth % m.len() != 0 => {
            return Err(contract_err(format!(
                "{} keep masks do not divide {depth} blocks",
                m.len()
            )))
        }
        Some(m) => depth / m.len(),
        None => depth,
    };
    for (b, block) in params.blocks.iter().enumerate() {
        if let Some(masks) = keep_masks {
            if b % per_group == 0 {
                seq.restrict(&masks[b / per_group])?;
            }
        }
        seq = block_forward(sess, &seq, block, params.cfg.heads)?;
    }
    classify(sess, &seq, params)
}

pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}
