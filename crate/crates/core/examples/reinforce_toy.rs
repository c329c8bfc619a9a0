//! Self-critical REINFORCE on a single interpreter over six tokens, where a
//! prediction counts as correct exactly when token 0 survives.

use iared::gradcore::{GradBuffer, ParamStore, Rng, Session, Tensor, Trainable};
use iared::interpreter::{informative_scores, InterpreterParams};
use iared::policy::{self_critical_episode, Adam, RewardConfig};
use iared::vit::TokenSequence;

const N: usize = 6;
const D: usize = 8;

fn sequence(sess: &mut Session<'_>, tokens: &Tensor) -> TokenSequence {
    TokenSequence {
        tokens: sess.graph.constant(tokens.clone()),
        grid_index: (0..N).map(|i| (i / 3, i % 3)).collect(),
        grid_dims: (2, 3),
        live: vec![true; N + 1],
    }
}

fn main() -> iared::Result<()> {
    let mut rng = Rng::seed_from_u64(1);
    let mut store = ParamStore::new();
    let ip = InterpreterParams::init(&mut store, "toy", D, 2, true, &mut rng)?;
    // class token, one distinctive token, then five noise tokens
    let mut x = vec![0.0; (N + 1) * D];
    for v in &mut x[D..2 * D] {
        *v = 1.0;
    }
    for v in &mut x[2 * D..] {
        *v = 0.3 * rng.normal();
    }
    let tokens = Tensor::matrix(N + 1, D, x)?;
    let trainable = Trainable::all(&store);
    let cfg = RewardConfig::default();
    let steps = 300;
    let mut adam = Adam::new(&store, 0.02, steps);
    for step in 0..steps {
        let mut grads = GradBuffer::new(&store);
        let mut reward = 0.0;
        for _ in 0..16 {
            let mut sess = Session::training(&store, &trainable);
            let seq = sequence(&mut sess, &tokens);
            let scores = informative_scores(&mut sess, &seq, &ip)?;
            let (record, node) =
                self_critical_episode(&mut sess, &scores, 0, 0.5, &cfg, &mut rng, |_, d| {
                    Ok(d.keep_mask(N)[0])
                })?;
            reward += record.reward / 16.0;
            if let Some(n) = node {
                sess.graph.backward(n)?;
                grads.accumulate(&sess.grads(), 1.0 / 16.0);
            }
        }
        adam.update(&mut store, &grads)?;
        if step % 50 == 0 || step == steps - 1 {
            let mut sess = Session::frozen(&store);
            let seq = sequence(&mut sess, &tokens);
            let s = informative_scores(&mut sess, &seq, &ip)?;
            let shown: Vec<String> = s.scores.iter().map(|(_, v)| format!("{v:.3}")).collect();
            println!(
                "step {step:>3}  mean reward {reward:+.3}  scores [{}]",
                shown.join(", ")
            );
        }
    }
    Ok(())
}
