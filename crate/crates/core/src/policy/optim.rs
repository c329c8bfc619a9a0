//! Adam with an optional linear warmup followed by a cosine-decayed step size.

use crate::error::{Error, Result};
use crate::gradcore::{GradBuffer, ParamStore};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    /// Number of updates over which the step size decays to zero.
    pub total_steps: u64,
    /// Leading updates over which the step size ramps up linearly.
    pub warmup_steps: u64,
    pub step: u64,
    /// First and second moments, indexed by parameter.
    pub moments: Vec<Option<(Vec<f64>, Vec<f64>)>>,
}

impl Adam {
    pub fn new(store: &ParamStore, lr: f64, total_steps: u64) -> Self {
        Adam {
            lr,
            total_steps: total_steps.max(1),
            warmup_steps: 0,
            step: 0,
            moments: vec![None; store.len()],
        }
    }

    /// Warmup is capped at half of the schedule.
    pub fn with_warmup(mut self, steps: u64) -> Self {
        self.warmup_steps = steps.min(self.total_steps / 2);
        self
    }

    pub fn current_lr(&self) -> f64 {
        if self.step < self.warmup_steps {
            return self.lr * (self.step + 1) as f64 / self.warmup_steps as f64;
        }
        let decay = (self.total_steps - self.warmup_steps) as f64;
        let t = ((self.step - self.warmup_steps) as f64 / decay).min(1.0);
        0.5 * self.lr * (1.0 + (std::f64::consts::PI * t).cos())
    }

    /// Descends along `grads`; parameters without a gradient are untouched.
    pub fn update(&mut self, store: &mut ParamStore, grads: &GradBuffer) -> Result<()> {
        if !grads.is_finite() {
            return Err(Error::NonFinite("gradient has non-finite entries".into()));
        }
        let lr = self.current_lr();
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - BETA1.powi(t);
        let c2 = 1.0 - BETA2.powi(t);
        for (id, g) in grads.iter() {
            let (m, v) = self.moments[id.index()]
                .get_or_insert_with(|| (vec![0.0; g.len()], vec![0.0; g.len()]));
            let w = store.get_mut(id).data_mut();
            for i in 0..g.len() {
                m[i] = BETA1 * m[i] + (1.0 - BETA1) * g[i];
                v[i] = BETA2 * v[i] + (1.0 - BETA2) * g[i] * g[i];
                w[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + ADAM_EPS);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcore::{ParamId, Tensor};

    #[test]
    fn first_step_moves_by_lr_against_sign() {
        let mut store = ParamStore::new();
        let id = store.add("w", Tensor::vector(vec![1.0, -2.0, 0.5]));
        let mut g = GradBuffer::new(&store);
        g.accumulate(&[(id, vec![3.0, -0.1, 0.0])], 1.0);
        let mut adam = Adam::new(&store, 0.01, 100);
        adam.update(&mut store, &g).unwrap();
        let w = store.get(id).data();
        assert!((w[0] - 0.99).abs() < 1e-9);
        assert!((w[1] + 1.99).abs() < 1e-9);
        assert_eq!(w[2], 0.5);
    }

    #[test]
    fn cosine_schedule_endpoints() {
        let store = ParamStore::new();
        let mut a = Adam::new(&store, 1e-3, 10);
        assert_eq!(a.current_lr(), 1e-3);
        a.step = 5;
        assert!((a.current_lr() - 5e-4).abs() < 1e-15);
        a.step = 10;
        assert!(a.current_lr().abs() < 1e-18);
    }

    #[test]
    fn warmup_ramps_then_decays() {
        let store = ParamStore::new();
        let mut a = Adam::new(&store, 1e-3, 12).with_warmup(4);
        let lrs: Vec<f64> = (0..12)
            .map(|t| {
                a.step = t;
                a.current_lr()
            })
            .collect();
        assert!((lrs[0] - 2.5e-4).abs() < 1e-15);
        assert_eq!(lrs[3], 1e-3);
        assert_eq!(lrs[4], 1e-3);
        // halfway through the eight decay steps
        assert!((lrs[8] - 5e-4).abs() < 1e-15);
        assert_eq!(Adam::new(&store, 1e-3, 6).with_warmup(100).warmup_steps, 3);
    }

    #[test]
    fn zero_lr_leaves_params_bitwise() {
        let mut store = ParamStore::new();
        let id: ParamId = store.add("w", Tensor::vector(vec![0.3, 0.7]));
        let before = store.clone();
        let mut g = GradBuffer::new(&store);
        g.accumulate(&[(id, vec![1.0, 1.0])], 1.0);
        Adam::new(&store, 0.0, 10).update(&mut store, &g).unwrap();
        assert_eq!(store, before);
    }

    #[test]
    fn non_finite_gradient_aborts() {
        let mut store = ParamStore::new();
        let id = store.add("w", Tensor::vector(vec![0.3]));
        let mut g = GradBuffer::new(&store);
        g.accumulate(&[(id, vec![f64::NAN])], 1.0);
        let r = Adam::new(&store, 0.1, 10).update(&mut store, &g);
        assert!(matches!(r, Err(Error::NonFinite(_))));
    }
}
