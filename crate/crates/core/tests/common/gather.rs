//! Reference forward that physically removes dropped tokens instead of
//! masking them: gather the live rows, run every block dense, read the class row.

#![allow(dead_code)]

use iared::gradcore::{ParamStore, Rng, Session};
use iared::image::Image;
use iared::vit::{block_forward, classify, embed, patchify, TokenSequence, VitConfig, VitParams};

pub fn random_backbone(seed: u64) -> (ParamStore, VitParams) {
    let cfg = VitConfig {
        image_height: 16,
        image_width: 16,
        channels: 3,
        patch_size: 4,
        embed_dim: 16,
        depth: 6,
        heads: 4,
        classes: 5,
    };
    let mut store = ParamStore::new();
    let mut rng = Rng::seed_from_u64(seed);
    let params = VitParams::init(cfg, &mut store, &mut rng).unwrap();
    // larger weights than the init so every block visibly mixes tokens
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        for v in store.get_mut(id).data_mut() {
            *v += 0.3 * rng.normal();
        }
    }
    (store, params)
}

pub fn random_image(rng: &mut Rng) -> Image {
    Image::new(16, 16, 3, (0..16 * 16 * 3).map(|_| rng.uniform()).collect()).unwrap()
}

pub fn gather_forward(
    store: &ParamStore,
    params: &VitParams,
    image: &Image,
    masks: &[Vec<bool>],
) -> Vec<f64> {
    let mut sess = Session::frozen(store);
    let patches = patchify(image, params.cfg.patch_size).unwrap();
    let mut seq = embed(&mut sess, &patches, params).unwrap();
    // original patch index of each current non-class row
    let mut rows: Vec<usize> = (0..seq.num_patches()).collect();
    let per_group = params.blocks.len() / masks.len();
    for (b, block) in params.blocks.iter().enumerate() {
        if b % per_group == 0 {
            let mask = &masks[b / per_group];
            let keep: Vec<usize> = (0..rows.len()).filter(|&r| mask[rows[r]]).collect();
            let index: Vec<usize> = std::iter::once(0)
                .chain(keep.iter().map(|&r| r + 1))
                .collect();
            let tokens = sess.graph.gather_rows(seq.tokens, &index).unwrap();
            rows = keep.iter().map(|&r| rows[r]).collect();
            seq = TokenSequence {
                tokens,
                grid_index: keep.iter().map(|&r| seq.grid_index[r]).collect(),
                grid_dims: seq.grid_dims,
                live: vec![true; rows.len() + 1],
            };
        }
        seq = block_forward(&mut sess, &seq, block, params.cfg.heads).unwrap();
    }
    let logits = classify(&mut sess, &seq, params).unwrap();
    sess.graph.value(logits).to_vec()
}
