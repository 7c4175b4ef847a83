//! Disease-conditioned modality fusion.
//!
//! A scoring head looks at the *unrefined* representations of a chosen
//! subset J of modalities (by default just the diseases channel — the
//! intuition being that the targeted disease should decide which evidence
//! matters), produces one score per modality, scales each score by a
//! learnable temperature, and softmaxes into fusion weights. The fused
//! trial representation is the weighted sum of the *refined* per-modality
//! representations. The scorer starts at zero, so fusion begins uniform.

use autograd::{ParamStore, Tensor, TensorError};
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::nn::Linear;

/// Which modalities condition the fusion weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WeightingSet {
    /// Condition on the diseases channel only (default).
    #[default]
    Diseases,
    /// Condition on the concatenation of every active modality.
    All,
}

pub struct FusionParams {
    combine: Linear,
    /// `1 x M` per-modality score temperature, initialized to 1.
    pub gamma: Tensor,
    n_modalities: usize,
}

/// Fusion forward output.
pub struct FusedOutput {
    /// `1 x d` weighted sum of refined representations.
    pub fused: Tensor,
    /// `1 x M` fusion weights (graph tensor; sums to 1).
    pub weights: Tensor,
}

impl FusionParams {
    /// `j_size` is |J| (how many modalities condition the weights),
    /// `n_modalities` is M (how many are fused).
    pub fn init(
        store: &mut ParamStore,
        d_model: usize,
        j_size: usize,
        n_modalities: usize,
    ) -> Result<FusionParams, Error> {
        if j_size == 0 || n_modalities == 0 {
            return Err(Error::Config("fusion needs at least one modality".into()));
        }
        let combine = Linear::init_zero(store, "fusion.combine", j_size * d_model, n_modalities)?;
        let gamma = store.register(
            "fusion.gamma",
            Tensor::ones(1, n_modalities).into_trainable(),
        )?;
        Ok(FusionParams {
            combine,
            gamma,
            n_modalities,
        })
    }

    /// Fuse one trial. `raw[m]` and `refined[m]` are the clean and
    /// expert-refined `1 x d` representations of modality m; `j_idx` selects
    /// which raw representations condition the weights.
    pub fn fuse(
        &self,
        raw: &[Tensor],
        refined: &[Tensor],
        j_idx: &[usize],
    ) -> Result<FusedOutput, TensorError> {
        if raw.len() != self.n_modalities || refined.len() != self.n_modalities {
            return Err(TensorError::contract(
                "fuse",
                format!(
                    "expected {} modalities, got {} raw / {} refined",
                    self.n_modalities,
                    raw.len(),
                    refined.len()
                ),
            ));
        }
        if j_idx.is_empty() {
            return Err(TensorError::contract("fuse", "conditioning set is empty"));
        }
        let mut gathered = Vec::with_capacity(j_idx.len());
        for &j in j_idx {
            let u = raw.get(j).ok_or_else(|| {
                TensorError::contract("fuse", format!("conditioning index {j} out of range"))
            })?;
            gathered.push(u.clone());
        }
        let context = if gathered.len() == 1 {
            gathered.pop().expect("one element")
        } else {
            Tensor::concat_cols(&gathered)?
        };
        let scores = self.combine.forward(&context)?;
        let weights = scores.mul(&self.gamma)?.softmax(1)?;
        let mut terms = Vec::with_capacity(self.n_modalities);
        for (m, rep) in refined.iter().enumerate() {
            terms.push(rep.mul(&weights.slice_cols(m, 1)?)?);
        }
        Ok(FusedOutput {
            fused: Tensor::add_n(&terms)?,
            weights,
        })
    }
}
