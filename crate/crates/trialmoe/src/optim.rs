//! AdamW with decoupled weight decay, plus the cosine learning-rate
//! schedule used by the trainer.
//!
//! The decay is applied to the pre-step value and is *not* folded into the
//! gradient moments: `theta -= lr * (m_hat / (sqrt(v_hat) + eps)) + lr * wd * theta_old`.
//! Parameters whose gradient is absent (never touched by the last backward
//! pass) are skipped entirely: no moment update, no decay, no step count.

use std::collections::HashMap;

use autograd::ParamStore;
use serde::{Deserialize, Serialize};

use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> AdamWConfig {
        AdamWConfig {
            beta1: 0.9,
            beta2: 0.99,
            eps: 1e-8,
            weight_decay: 1e-2,
        }
    }
}

impl AdamWConfig {
    pub fn validate(&self) -> Result<(), Error> {
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config(format!(
                "betas must lie in [0, 1), got ({}, {})",
                self.beta1, self.beta2
            )));
        }
        if !(self.eps > 0.0) {
            return Err(Error::Config(format!("eps must be positive, got {}", self.eps)));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::Config(format!(
                "weight decay must be non-negative, got {}",
                self.weight_decay
            )));
        }
        Ok(())
    }
}

struct Moments {
    m: Vec<f64>,
    v: Vec<f64>,
    /// Per-parameter step count; advances only when this parameter receives
    /// a gradient, keeping bias correction honest for rarely-used weights.
    step: u64,
}

pub struct AdamW {
    cfg: AdamWConfig,
    state: HashMap<String, Moments>,
}

impl AdamW {
    pub fn new(cfg: AdamWConfig) -> Result<AdamW, Error> {
        cfg.validate()?;
        Ok(AdamW {
            cfg,
            state: HashMap::new(),
        })
    }

    /// Apply one update at learning rate `lr` to every trainable parameter
    /// that holds a gradient. Returns how many parameters were updated.
    pub fn step(&mut self, store: &ParamStore, lr: f64) -> Result<usize, Error> {
        if !lr.is_finite() || lr < 0.0 {
            return Err(Error::Config(format!("learning rate must be finite and >= 0, got {lr}")));
        }
        let AdamWConfig {
            beta1,
            beta2,
            eps,
            weight_decay,
        } = self.cfg;
        let mut updated = 0usize;
        for p in store.iter_trainable() {
            let Some(grad) = p.tensor.grad() else {
                continue;
            };
            let n = p.tensor.len();
            let slot = self.state.entry(p.name.clone()).or_insert_with(|| Moments {
                m: vec![0.0; n],
                v: vec![0.0; n],
                step: 0,
            });
            if slot.m.len() != n {
                return Err(Error::Config(format!(
                    "optimizer state for {:?} has {} values, parameter has {n}",
                    p.name,
                    slot.m.len()
                )));
            }
            slot.step += 1;
            let bc1 = 1.0 - beta1.powi(slot.step as i32);
            let bc2 = 1.0 - beta2.powi(slot.step as i32);
            let mut next = p.tensor.values().to_vec();
            for i in 0..n {
                let g = grad[i];
                slot.m[i] = beta1 * slot.m[i] + (1.0 - beta1) * g;
                slot.v[i] = beta2 * slot.v[i] + (1.0 - beta2) * g * g;
                let m_hat = slot.m[i] / bc1;
                let v_hat = slot.v[i] / bc2;
                let theta_old = next[i];
                next[i] = theta_old - lr * (m_hat / (v_hat.sqrt() + eps)) - lr * weight_decay * theta_old;
            }
            p.tensor.set_values(&next)?;
            updated += 1;
        }
        Ok(updated)
    }

    /// Highest per-parameter step count seen so far.
    pub fn steps_taken(&self) -> u64 {
        self.state.values().map(|s| s.step).max().unwrap_or(0)
    }
}

/// Cosine decay from `base` at step 0 to exactly 0 at step `total - 1`.
/// A single-step schedule returns `base` for step 0.
pub fn cosine_lr(base: f64, step: usize, total_steps: usize) -> f64 {
    if total_steps <= 1 {
        return base;
    }
    let last = total_steps - 1;
    if step >= last {
        return 0.0;
    }
    let frac = step as f64 / last as f64;
    base * 0.5 * (1.0 + (std::f64::consts::PI * frac).cos())
}

#[cfg(test)]
mod tests {
    use super::*;
    use autograd::Tensor;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn store_with(name: &str, values: Vec<f64>) -> (ParamStore, Tensor) {
        let mut store = ParamStore::new();
        let n = values.len();
        let t = store
            .register(name, Tensor::from_vec(1, n, values).unwrap().into_trainable())
            .unwrap();
        (store, t)
    }

    /// Drive one backward pass that leaves `grad` on the parameter.
    fn put_grad(t: &Tensor, grad: &[f64]) {
        let g = Tensor::from_vec(1, grad.len(), grad.to_vec()).unwrap();
        let loss = t.mul(&g).unwrap().sum();
        loss.backward().unwrap();
    }

    #[test]
    fn first_step_moves_by_lr_in_sign_direction() {
        let (store, t) = store_with("w", vec![1.0, -2.0, 0.5]);
        let mut opt = AdamW::new(AdamWConfig {
            weight_decay: 0.0,
            ..AdamWConfig::default()
        })
        .unwrap();
        put_grad(&t, &[0.3, -0.7, 2.0]);
        let updated = opt.step(&store, 0.01).unwrap();
        assert_eq!(updated, 1);
        let v = t.values();
        // m_hat/(sqrt(v_hat)+eps) = g/(|g|+eps) ~ sign(g)
        assert!((v[0] - (1.0 - 0.01)).abs() < 1e-7);
        assert!((v[1] - (-2.0 + 0.01)).abs() < 1e-7);
        assert!((v[2] - (0.5 - 0.01)).abs() < 1e-7);
    }

    #[test]
    fn zero_gradient_with_decay_shrinks_weights_exactly() {
        let (store, t) = store_with("w", vec![2.0, -4.0]);
        let lr = 0.1;
        let wd = 0.01;
        let mut opt = AdamW::new(AdamWConfig {
            weight_decay: wd,
            ..AdamWConfig::default()
        })
        .unwrap();
        put_grad(&t, &[0.0, 0.0]);
        opt.step(&store, lr).unwrap();
        let v = t.values();
        // Moment update is exactly zero, so only the decoupled decay acts.
        assert_eq!(v[0].to_bits(), (2.0f64 - lr * wd * 2.0).to_bits());
        assert_eq!(v[1].to_bits(), (-4.0f64 - lr * wd * -4.0).to_bits());
    }

    #[test]
    fn parameters_without_gradients_are_untouched() {
        let mut store = ParamStore::new();
        let a = store
            .register("a", Tensor::from_vec(1, 2, vec![1.0, 2.0]).unwrap().into_trainable())
            .unwrap();
        let b = store
            .register("b", Tensor::from_vec(1, 2, vec![3.0, 4.0]).unwrap().into_trainable())
            .unwrap();
        put_grad(&a, &[1.0, 1.0]);
        let mut opt = AdamW::new(AdamWConfig::default()).unwrap();
        let updated = opt.step(&store, 0.01).unwrap();
        assert_eq!(updated, 1);
        assert_eq!(b.values().to_vec(), vec![3.0, 4.0]);
        assert_eq!(opt.steps_taken(), 1);
    }

    #[test]
    fn matches_scalar_reference_over_several_steps() {
        let (store, t) = store_with("w", vec![0.8]);
        let cfg = AdamWConfig::default();
        let mut opt = AdamW::new(cfg).unwrap();
        let lr = 0.05;
        let grads = [0.4, -0.2, 0.9, 0.0, -1.3];

        // Independent scalar reference, written from the update rule.
        let mut theta = 0.8;
        let (mut m, mut v) = (0.0, 0.0);
        for (k, &g) in grads.iter().enumerate() {
            m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
            v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g;
            let m_hat = m / (1.0 - cfg.beta1.powi(k as i32 + 1));
            let v_hat = v / (1.0 - cfg.beta2.powi(k as i32 + 1));
            theta = theta - lr * (m_hat / (v_hat.sqrt() + cfg.eps)) - lr * cfg.weight_decay * theta;
        }

        for &g in &grads {
            store.zero_grads();
            put_grad(&t, &[g]);
            opt.step(&store, lr).unwrap();
        }
        assert!((t.values()[0] - theta).abs() < 1e-14);
        assert_eq!(opt.steps_taken(), 5);
    }

    #[test]
    fn optimizes_a_quadratic_to_its_minimum() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let t = store
            .register("w", Tensor::randn(1, 1, 1.0, &mut rng).into_trainable())
            .unwrap();
        let mut opt = AdamW::new(AdamWConfig {
            weight_decay: 0.0,
            ..AdamWConfig::default()
        })
        .unwrap();
        let target = Tensor::from_vec(1, 1, vec![3.0]).unwrap();
        for _ in 0..400 {
            store.zero_grads();
            let diff = t.sub(&target).unwrap();
            let loss = diff.mul(&diff).unwrap().sum();
            loss.backward().unwrap();
            opt.step(&store, 0.05).unwrap();
        }
        assert!((t.values()[0] - 3.0).abs() < 1e-2, "got {}", t.values()[0]);
    }

    #[test]
    fn cosine_schedule_hits_base_midpoint_and_zero() {
        let base = 3e-4;
        let total = 101;
        assert_eq!(cosine_lr(base, 0, total), base);
        let mid = cosine_lr(base, 50, total);
        assert!((mid - base * 0.5).abs() < 1e-18);
        assert_eq!(cosine_lr(base, 100, total), 0.0);
        assert_eq!(cosine_lr(base, 500, total), 0.0); // past the end stays 0
        assert_eq!(cosine_lr(base, 0, 1), base); // degenerate schedule
        // Monotone non-increasing over the whole range.
        let mut prev = f64::INFINITY;
        for s in 0..total {
            let lr = cosine_lr(base, s, total);
            assert!(lr <= prev + 1e-18);
            prev = lr;
        }
    }

    #[test]
    fn rejects_bad_hyperparameters() {
        assert!(AdamW::new(AdamWConfig {
            beta1: 1.0,
            ..AdamWConfig::default()
        })
        .is_err());
        assert!(AdamW::new(AdamWConfig {
            eps: 0.0,
            ..AdamWConfig::default()
        })
        .is_err());
        assert!(AdamW::new(AdamWConfig {
            weight_decay: -0.1,
            ..AdamWConfig::default()
        })
        .is_err());
        let (store, _t) = store_with("w", vec![1.0]);
        let mut opt = AdamW::new(AdamWConfig::default()).unwrap();
        assert!(opt.step(&store, f64::NAN).is_err());
    }
}
