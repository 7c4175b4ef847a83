//! Multiplicative perturbation augmentation and the consistency loss.
//!
//! During training a second, perturbed forward pass runs alongside the clean
//! one: each post-embedding token element is, independently with probability
//! `prob`, multiplied by `exp(alpha)` with `alpha ~ U(-log_range, log_range)`.
//! The start-token row is not part of the perturbed rows (perturbation
//! applies to content embeddings before the start token and positions are
//! attached). The consistency loss is the mean squared L2 distance between
//! the clean and perturbed refined representations, averaged over every
//! (trial, modality) pair in the batch.

use autograd::{Tensor, TensorError};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    /// Per-element perturbation probability.
    pub prob: f64,
    /// Half-width of the uniform log-factor range (0 disables scaling:
    /// every factor becomes exp(0) = 1 exactly).
    pub log_range: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            prob: 0.3,
            log_range: 0.1,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<(), Error> {
        if !(0.0..=1.0).contains(&self.prob) {
            return Err(Error::Config(format!(
                "perturbation probability must be in [0, 1], got {}",
                self.prob
            )));
        }
        if self.log_range < 0.0 || !self.log_range.is_finite() {
            return Err(Error::Config(format!(
                "perturbation log range must be finite and non-negative, got {}",
                self.log_range
            )));
        }
        Ok(())
    }
}

/// Perturb content embeddings. Selection draws one uniform per element;
/// selected elements draw one more uniform for the log factor. The result
/// shares the graph with `content`, so gradients flow through both passes.
pub fn perturb(
    content: &Tensor,
    cfg: &AugmentConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Tensor, TensorError> {
    let (rows, cols) = content.shape();
    let factors: Vec<f64> = (0..rows * cols)
        .map(|_| {
            if rng.gen::<f64>() < cfg.prob {
                rng.gen_range(-cfg.log_range..=cfg.log_range).exp()
            } else {
                1.0
            }
        })
        .collect();
    if rows == 0 {
        return Ok(content.clone());
    }
    content.mul(&Tensor::from_vec(rows, cols, factors)?)
}

/// Mean squared L2 distance between paired representations:
/// `mean_i ||a_i - b_i||^2` over all pairs. Pairs must align in shape.
pub fn consistency_loss(clean: &[Tensor], perturbed: &[Tensor]) -> Result<Tensor, TensorError> {
    if clean.len() != perturbed.len() {
        return Err(TensorError::contract(
            "consistency_loss",
            format!("{} clean vs {} perturbed entries", clean.len(), perturbed.len()),
        ));
    }
    if clean.is_empty() {
        return Err(TensorError::contract(
            "consistency_loss",
            "no representation pairs",
        ));
    }
    let mut terms = Vec::with_capacity(clean.len());
    for (a, b) in clean.iter().zip(perturbed) {
        let diff = a.sub(b)?;
        terms.push(diff.mul(&diff)?.sum());
    }
    Ok(Tensor::add_n(&terms)?.scale(1.0 / clean.len() as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn zero_log_range_is_bitwise_identity() {
        let cfg = AugmentConfig {
            prob: 0.3,
            log_range: 0.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Tensor::uniform(7, 9, -3.0, 3.0, &mut ChaCha8Rng::seed_from_u64(2));
        let y = perturb(&x, &cfg, &mut rng).unwrap();
        // exp(0) = 1 exactly, and v * 1.0 is bitwise v.
        assert_eq!(x.to_vec(), y.to_vec());
    }

    #[test]
    fn zero_probability_is_bitwise_identity() {
        let cfg = AugmentConfig {
            prob: 0.0,
            log_range: 0.5,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Tensor::uniform(4, 5, -3.0, 3.0, &mut ChaCha8Rng::seed_from_u64(2));
        let y = perturb(&x, &cfg, &mut rng).unwrap();
        assert_eq!(x.to_vec(), y.to_vec());
    }

    #[test]
    fn selection_rate_and_factor_bounds_match_config() {
        let cfg = AugmentConfig {
            prob: 0.3,
            log_range: 0.1,
        };
        let n = 100_000;
        let x = Tensor::ones(100, 1000);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let y = perturb(&x, &cfg, &mut rng).unwrap().to_vec();
        let changed: Vec<f64> = y.iter().copied().filter(|&v| v != 1.0).collect();
        // Binomial(1e5, 0.3): 3 sigma ~ 435.
        let lo = (0.3 * n as f64 - 435.0) as usize;
        let hi = (0.3 * n as f64 + 435.0) as usize;
        assert!(
            (lo..=hi).contains(&changed.len()),
            "{} selections outside 3-sigma band",
            changed.len()
        );
        // Factors live in [exp(-0.1), exp(0.1)].
        let (lo_f, hi_f) = ((-0.1f64).exp(), 0.1f64.exp());
        assert!(changed.iter().all(|&f| (lo_f..=hi_f).contains(&f)));
        // |log factor| averages log_range / 2 for U(-r, r).
        let mean_abs_log: f64 =
            changed.iter().map(|f| f.ln().abs()).sum::<f64>() / changed.len() as f64;
        assert!((mean_abs_log - 0.05).abs() < 0.005, "{mean_abs_log}");
    }

    #[test]
    fn perturbation_is_seed_deterministic() {
        let cfg = AugmentConfig::default();
        let x = Tensor::uniform(5, 8, -1.0, 1.0, &mut ChaCha8Rng::seed_from_u64(0));
        let a = perturb(&x, &cfg, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = perturb(&x, &cfg, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let c = perturb(&x, &cfg, &mut ChaCha8Rng::seed_from_u64(10)).unwrap();
        assert_eq!(a.to_vec(), b.to_vec());
        assert_ne!(a.to_vec(), c.to_vec());
    }

    #[test]
    fn gradients_flow_through_perturbation() {
        let cfg = AugmentConfig {
            prob: 1.0,
            log_range: 0.1,
        };
        let x = Tensor::uniform(2, 3, 0.5, 1.5, &mut ChaCha8Rng::seed_from_u64(3))
            .into_trainable();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let y = perturb(&x, &cfg, &mut rng).unwrap();
        y.sum().backward().unwrap();
        let g = x.grad().unwrap();
        // d(x*f)/dx = f, all in [exp(-0.1), exp(0.1)] since prob = 1.
        assert!(g.iter().all(|&v| ((-0.1f64).exp()..=0.1f64.exp()).contains(&v)));
    }

    #[test]
    fn consistency_loss_matches_hand_computed_anchors() {
        // Pair 1: a=(1,2), b=(0,0) -> ||.||^2 = 5; pair 2: a=(1,1), b=(0,0) -> 2.
        // Mean = 3.5. Single pair (3,4) vs 0 -> 25 -> mean 25/1... anchor pair:
        // ((0,0),(1,1)) and ((2,0),(0,0)) -> (2 + 4)/2 = 3.
        let a1 = Tensor::from_vec(1, 2, vec![0.0, 0.0]).unwrap();
        let b1 = Tensor::from_vec(1, 2, vec![1.0, 1.0]).unwrap();
        let a2 = Tensor::from_vec(1, 2, vec![2.0, 0.0]).unwrap();
        let b2 = Tensor::from_vec(1, 2, vec![0.0, 0.0]).unwrap();
        let loss = consistency_loss(&[a1, a2], &[b1, b2]).unwrap();
        assert_eq!(loss.item().unwrap(), 3.0);

        let a = Tensor::from_vec(1, 2, vec![1.0, 2.0]).unwrap();
        let b = Tensor::from_vec(1, 2, vec![0.0, 0.0]).unwrap();
        let single = consistency_loss(&[a], &[b]).unwrap();
        assert_eq!(single.item().unwrap(), 5.0);
    }

    #[test]
    fn identical_representations_give_exactly_zero() {
        let x = Tensor::uniform(1, 6, -2.0, 2.0, &mut ChaCha8Rng::seed_from_u64(5));
        let loss = consistency_loss(&[x.clone()], &[x.clone()]).unwrap();
        assert_eq!(loss.item().unwrap(), 0.0);
    }

    #[test]
    fn mismatched_pair_counts_are_rejected() {
        let x = Tensor::ones(1, 2);
        assert!(consistency_loss(&[x.clone()], &[]).is_err());
        assert!(consistency_loss(&[], &[]).is_err());
    }

    #[test]
    fn invalid_configs_rejected() {
        assert!(AugmentConfig { prob: 1.5, log_range: 0.1 }.validate().is_err());
        assert!(AugmentConfig { prob: 0.3, log_range: -0.1 }.validate().is_err());
        assert!(AugmentConfig::default().validate().is_ok());
    }
}
