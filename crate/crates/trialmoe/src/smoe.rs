//! Sparse mixture of experts with noisy top-k gating.
//!
//! One pool of two-layer feed-forward experts is shared by every modality.
//! For an input `u`, gate logits are `u·Wg` plus — during training — an
//! exploration term `mu ⊙ softplus(u·Wn)` with `mu` a fresh standard-normal
//! draw; everything outside the top k logits is masked to `-inf` before the
//! softmax, so non-selected experts get an exactly-zero weight, are never
//! evaluated, and receive no gradient. Ties on the selection boundary break
//! toward the lower expert index.

use autograd::{topk_indices, ParamStore, Tensor, TensorError};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::nn::Linear;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SmoeConfig {
    /// Number of experts in the shared pool.
    pub n_experts: usize,
    /// Experts evaluated per input.
    pub top_k: usize,
    /// Hidden width of each expert.
    pub d_expert: usize,
}

impl Default for SmoeConfig {
    fn default() -> Self {
        SmoeConfig {
            n_experts: 16,
            top_k: 3,
            d_expert: 128,
        }
    }
}

impl SmoeConfig {
    pub fn validate(&self) -> Result<(), Error> {
        if self.n_experts == 0 || self.d_expert == 0 {
            return Err(Error::Config("expert pool dimensions must be positive".into()));
        }
        if self.top_k == 0 || self.top_k > self.n_experts {
            return Err(Error::Config(format!(
                "top_k must be in 1..={}, got {}",
                self.n_experts, self.top_k
            )));
        }
        Ok(())
    }
}

/// Noise source for one gating call.
pub enum GateNoise<'a> {
    /// Inference: clean logits.
    Off,
    /// Training: draw `n_experts` fresh standard normals.
    Draw(&'a mut ChaCha8Rng),
    /// Reuse a previous draw (keeps a perturbed pass on the same experts).
    Fixed(&'a [f64]),
}

/// Outcome of one gating decision.
pub struct GatingDecision {
    /// Selected expert indices, highest weight first (ties: lower index first).
    pub selected: Vec<usize>,
    /// Softmax weights aligned with `selected`; they sum to 1.
    pub weights: Vec<f64>,
    /// Clean (noise-free) gate logits for analysis.
    pub clean_logits: Vec<f64>,
    /// The standard-normal draw used, when noise was on.
    pub noise: Option<Vec<f64>>,
    /// Full `1 x n_experts` weight row in the graph; zero off-selection.
    pub weight_row: Tensor,
}

struct Expert {
    w1: Linear,
    w2: Linear,
}

pub struct SparseMoe {
    gate: Linear,
    gate_noise: Linear,
    experts: Vec<Expert>,
    top_k: usize,
}

impl SparseMoe {
    pub fn init(
        store: &mut ParamStore,
        d_model: usize,
        cfg: &SmoeConfig,
        rng: &mut ChaCha8Rng,
    ) -> Result<SparseMoe, Error> {
        cfg.validate()?;
        // Near-zero gate weights start routing almost uniformly (the noise
        // path dominates early selection) without the exact ties an all-zero
        // init would create.
        let gate = Linear::init_zero(store, "moe.gate", d_model, cfg.n_experts)?;
        let jitter: Vec<f64> = (0..d_model * cfg.n_experts)
            .map(|_| 0.01 * rng.gen_range(-1.0..1.0))
            .collect();
        gate.w.set_values(&jitter)?;
        let gate_noise = Linear::init_zero(store, "moe.gate_noise", d_model, cfg.n_experts)?;
        let mut experts = Vec::with_capacity(cfg.n_experts);
        for e in 0..cfg.n_experts {
            experts.push(Expert {
                w1: Linear::init(store, &format!("moe.expert{e}.w1"), d_model, cfg.d_expert, rng)?,
                w2: Linear::init(store, &format!("moe.expert{e}.w2"), cfg.d_expert, d_model, rng)?,
            });
        }
        Ok(SparseMoe {
            gate,
            gate_noise,
            experts,
            top_k: cfg.top_k,
        })
    }

    pub fn n_experts(&self) -> usize {
        self.experts.len()
    }

    pub fn top_k(&self) -> usize {
        self.top_k
    }

    /// Route one `1 x d` input.
    pub fn gate(&self, u: &Tensor, noise: GateNoise<'_>) -> Result<GatingDecision, TensorError> {
        if u.rows() != 1 {
            return Err(TensorError::contract(
                "gate",
                format!("expected a single row, got {} rows", u.rows()),
            ));
        }
        let clean = self.gate.forward(u)?;
        let clean_logits = clean.to_vec();
        let (logits, noise_vec) = match noise {
            GateNoise::Off => (clean, None),
            GateNoise::Draw(rng) => {
                let draw: Vec<f64> = (0..self.n_experts())
                    .map(|_| {
                        // Box-Muller on two uniform draws.
                        let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
                        let u2: f64 = rng.gen();
                        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
                    })
                    .collect();
                (self.noisy_logits(u, &clean, &draw)?, Some(draw))
            }
            GateNoise::Fixed(draw) => {
                if draw.len() != self.n_experts() {
                    return Err(TensorError::contract(
                        "gate",
                        format!(
                            "fixed noise has {} entries for {} experts",
                            draw.len(),
                            self.n_experts()
                        ),
                    ));
                }
                (self.noisy_logits(u, &clean, draw)?, Some(draw.to_vec()))
            }
        };
        let selected = topk_indices(&logits.values(), self.top_k);
        let weight_row = logits.topk_mask(self.top_k)?.softmax(1)?;
        let weights: Vec<f64> = {
            let row = weight_row.values();
            selected.iter().map(|&e| row[e]).collect()
        };
        Ok(GatingDecision {
            selected,
            weights,
            clean_logits,
            noise: noise_vec,
            weight_row,
        })
    }

    fn noisy_logits(
        &self,
        u: &Tensor,
        clean: &Tensor,
        draw: &[f64],
    ) -> Result<Tensor, TensorError> {
        let mu = Tensor::from_vec(1, draw.len(), draw.to_vec())?;
        let spread = self.gate_noise.forward(u)?.softplus();
        clean.add(&mu.mul(&spread)?)
    }

    /// Weighted sum of the selected experts only; experts outside the
    /// selection are never run.
    pub fn refine(&self, u: &Tensor, decision: &GatingDecision) -> Result<Tensor, TensorError> {
        let mut terms = Vec::with_capacity(decision.selected.len());
        for &e in &decision.selected {
            let expert = &self.experts[e];
            let out = expert.w2.forward(&expert.w1.forward(u)?.relu())?;
            let w = decision.weight_row.slice_cols(e, 1)?;
            terms.push(out.mul(&w)?);
        }
        Tensor::add_n(&terms)
    }
}

/// Aggregated routing behaviour, grouped by modality then expert.
#[derive(Debug, Default, Serialize)]
pub struct RoutingStats {
    per_modality: std::collections::BTreeMap<String, std::collections::BTreeMap<usize, ExpertUse>>,
}

#[derive(Debug, Default, Serialize)]
pub struct ExpertUse {
    pub count: u64,
    pub weight_sum: f64,
}

impl RoutingStats {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, modality: &str, decision: &GatingDecision) {
        let slot = self.per_modality.entry(modality.to_string()).or_default();
        for (&e, &w) in decision.selected.iter().zip(&decision.weights) {
            let used = slot.entry(e).or_default();
            used.count += 1;
            used.weight_sum += w;
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        let mut root = serde_json::Map::new();
        for (modality, experts) in &self.per_modality {
            let mut inner = serde_json::Map::new();
            for (expert, used) in experts {
                inner.insert(
                    expert.to_string(),
                    serde_json::json!({
                        "count": used.count,
                        "mean_weight": used.weight_sum / used.count.max(1) as f64,
                    }),
                );
            }
            root.insert(modality.clone(), serde_json::Value::Object(inner));
        }
        serde_json::Value::Object(root)
    }
}
