//! The six-token interpreter toy shared by the policy-gradient tests.
//!
//! Correct means patch 0 survives. Patch 0 is a strong, distinctive token;
//! the other five are small random vectors, so every parameter coordinate
//! carries a clearly non-zero expected-reward gradient.

#![allow(dead_code)]

use iared::gradcore::{GradBuffer, ParamStore, Rng, Session, Tensor, Trainable};
use iared::interpreter::{informative_scores, InterpreterParams};
use iared::policy::{self_critical_episode, RewardConfig};
use iared::vit::TokenSequence;

pub const N: usize = 6;
pub const D: usize = 4;
pub const HEADS: usize = 2;
/// Toy parameters and Monte Carlo stream used by the acceptance run.
pub const TOY_SEED: u64 = 3;
pub const EPISODE_SEED: u64 = 0;

pub struct Toy {
    pub store: ParamStore,
    pub ip: InterpreterParams,
    pub tokens: Tensor,
}

pub fn toy(seed: u64) -> Toy {
    let mut rng = Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    let ip = InterpreterParams::init(&mut store, "toy", D, HEADS, false, &mut rng).unwrap();
    let mut near_identity = |scale: f64| {
        (0..D * D)
            .map(|i| if i / D == i % D { scale } else { 0.0 } + 0.1 * rng.normal())
            .collect::<Vec<_>>()
    };
    let wq = near_identity(0.8);
    let wk = near_identity(0.8);
    store.get_mut(ip.q_w).data_mut().copy_from_slice(&wq);
    store.get_mut(ip.k_w).data_mut().copy_from_slice(&wk);
    store
        .get_mut(ip.policy_token)
        .data_mut()
        .copy_from_slice(&[0.6, -0.5, 0.7, 0.4]);
    let mut x = vec![0.0; (N + 1) * D];
    x[D..2 * D].copy_from_slice(&[1.0, -0.8, 0.9, -1.1]);
    for v in &mut x[2 * D..] {
        *v = 0.1 * rng.normal();
    }
    Toy {
        store,
        ip,
        tokens: Tensor::matrix(N + 1, D, x).unwrap(),
    }
}

pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Scores recomputed with plain loops from a flat parameter vector laid out
/// as policy token, then the query matrix, then the key matrix.
pub fn plain_scores(theta: &[f64], x: &Tensor) -> Vec<f64> {
    let (p, rest) = theta.split_at(D);
    let (wq, wk) = rest.split_at(D * D);
    let k: Vec<f64> = (0..D)
        .map(|j| (0..D).map(|i| p[i] * wk[i * D + j]).sum())
        .collect();
    let hd = D / HEADS;
    (1..=N)
        .map(|r| {
            let row = &x.data()[r * D..(r + 1) * D];
            let q: Vec<f64> = (0..D)
                .map(|j| (0..D).map(|i| row[i] * wq[i * D + j]).sum())
                .collect();
            (0..HEADS)
                .map(|h| sigmoid((h * hd..(h + 1) * hd).map(|c| q[c] * k[c]).sum()))
                .sum::<f64>()
                / HEADS as f64
        })
        .collect()
}

/// Expected reward over all 2^N keep configurations.
pub fn expected_reward(theta: &[f64], x: &Tensor, tau: f64) -> f64 {
    let s = plain_scores(theta, x);
    let mut j = 0.0;
    for bits in 0u32..1 << N {
        let mut keep: Vec<bool> = (0..N).map(|i| bits >> i & 1 == 1).collect();
        let prob: f64 = (0..N)
            .map(|i| if keep[i] { s[i] } else { 1.0 - s[i] })
            .product();
        if bits == 0 {
            let best = (0..N).fold(0, |b, i| if s[i] > s[b] { i } else { b });
            keep[best] = true;
        }
        let kept = keep.iter().filter(|&&k| k).count() as f64;
        let r = if keep[0] {
            1.0 - (kept / N as f64).powi(2)
        } else {
            -tau
        };
        j += prob * r;
    }
    j
}

pub fn flat(t: &Toy) -> Vec<f64> {
    [t.ip.policy_token, t.ip.q_w, t.ip.k_w]
        .iter()
        .flat_map(|&id| t.store.get(id).data().to_vec())
        .collect()
}

pub fn exact_gradient(t: &Toy, tau: f64) -> Vec<f64> {
    let theta = flat(t);
    let h = 1e-5;
    (0..theta.len())
        .map(|i| {
            let mut a = theta.clone();
            let mut b = theta.clone();
            a[i] += h;
            b[i] -= h;
            (expected_reward(&a, &t.tokens, tau) - expected_reward(&b, &t.tokens, tau)) / (2.0 * h)
        })
        .collect()
}

pub fn monte_carlo_gradient(t: &Toy, episodes: usize, seed: u64, cfg: &RewardConfig) -> Vec<f64> {
    let trainable = Trainable::all(&t.store);
    let mut buffer = GradBuffer::new(&t.store);
    let mut rng = Rng::seed_from_u64(seed);
    let seq_template = |sess: &mut Session<'_>| TokenSequence {
        tokens: sess.graph.constant(t.tokens.clone()),
        grid_index: (0..N).map(|i| (i / 3, i % 3)).collect(),
        grid_dims: (2, 3),
        live: vec![true; N + 1],
    };
    for _ in 0..episodes {
        let mut sess = Session::training(&t.store, &trainable);
        let seq = seq_template(&mut sess);
        let scores = informative_scores(&mut sess, &seq, &t.ip).unwrap();
        let (_, node) = self_critical_episode(&mut sess, &scores, 0, 0.5, cfg, &mut rng, |_, d| {
            Ok(d.keep_mask(N)[0])
        })
        .unwrap();
        if let Some(n) = node {
            sess.graph.backward(n).unwrap();
            buffer.accumulate(&sess.grads(), -1.0 / episodes as f64);
        }
    }
    [t.ip.policy_token, t.ip.q_w, t.ip.k_w]
        .iter()
        .flat_map(|&id| {
            buffer
                .get(id)
                .map_or(vec![0.0; t.store.get(id).len()], <[f64]>::to_vec)
        })
        .collect()
}
