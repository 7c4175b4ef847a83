//! Synthetic trial generator with a plantable label signal.
//!
//! Generated records look like real trials (diseases, drugs, protocol text,
//! SMILES, criteria) but carry a controlled signal: one marker token placed
//! in a chosen modality correlates with the label at a configurable
//! reliability. With reliability 1.0 the marker determines the label exactly,
//! giving a learnable benchmark; at 0.5 the marker is pure noise. Labels
//! alternate 1, 0, 1, 0, ... so every prefix and split is near-balanced.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::record::{ModalityKind, Phase, TrialRecord};
use crate::error::Error;
use crate::rng;

/// Which modality carries the marker, what the markers are, and how reliably
/// they track the label.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SignalSpec {
    pub modality: ModalityKind,
    pub success_token: String,
    pub failure_token: String,
    /// Probability that the planted marker agrees with the label.
    pub reliability: f64,
}

impl Default for SignalSpec {
    fn default() -> Self {
        SignalSpec {
            modality: ModalityKind::Diseases,
            success_token: "localized".into(),
            failure_token: "refractory".into(),
            reliability: 1.0,
        }
    }
}

impl SignalSpec {
    pub fn validate(&self) -> Result<(), Error> {
        if self.modality == ModalityKind::Summarization {
            return Err(Error::Config(
                "signal modality must be a source field, not the derived summary".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.reliability) {
            return Err(Error::Config(format!(
                "signal reliability must be in [0, 1], got {}",
                self.reliability
            )));
        }
        if self.success_token.trim().is_empty() || self.failure_token.trim().is_empty() {
            return Err(Error::Config("signal tokens must be non-empty".into()));
        }
        if self.success_token == self.failure_token {
            return Err(Error::Config("success and failure tokens must differ".into()));
        }
        Ok(())
    }
}

const DISEASES: &[&str] = &[
    "hypertension",
    "melanoma",
    "asthma",
    "lymphoma",
    "diabetes",
    "psoriasis",
    "glioblastoma",
    "arthritis",
    "leukemia",
    "migraine",
    "epilepsy",
    "anemia",
];

const DRUGS: &[&str] = &[
    "metformin",
    "dabrafenib",
    "budesonide",
    "rituximab",
    "insulin",
    "adalimumab",
    "temozolomide",
    "methotrexate",
    "imatinib",
    "sumatriptan",
    "levetiracetam",
    "epoetin",
];

const SMILES_POOL: &[&str] = &[
    "CCO",
    "CC(=O)Oc1ccccc1C(=O)O",
    "CN1CCC[C@H]1c1cccnc1",
    "CC(C)Cc1ccc(cc1)C(C)C(=O)O",
    "c1ccc2c(c1)cccn2",
    "CN(C)C(=N)NC(=N)N",
    "OC(=O)c1ccccc1O",
    "ClCCNC(=O)N(CCCl)N=O",
    "Cn1cnc2c1c(=O)n(C)c(=O)n2C",
    "NC(=O)c1ncn([C@@H]2O[C@H](CO)[C@@H](O)[C@H]2O)n1",
];

const EXCLUSIONS: &[&str] = &[
    "pregnancy or breastfeeding",
    "prior organ transplant",
    "uncontrolled cardiac disease",
    "active secondary infection",
];

/// Generate `n` records with the given master seed and signal plan.
pub fn generate(n: usize, seed: u64, spec: &SignalSpec) -> Result<Vec<TrialRecord>, Error> {
    if n == 0 {
        return Err(Error::EmptyDataset("requested 0 synthetic records".into()));
    }
    spec.validate()?;
    let mut rng = rng::stream(seed, "synthetic");
    let mut records = Vec::with_capacity(n);
    for i in 0..n {
        let label = (1 - i % 2) as u8; // 1, 0, 1, 0, ...
        let consistent = rng.gen::<f64>() < spec.reliability;
        let marker = if (label == 1) == consistent {
            spec.success_token.as_str()
        } else {
            spec.failure_token.as_str()
        };

        let phase = *[Phase::One, Phase::Two, Phase::Three]
            .choose(&mut rng)
            .expect("non-empty");
        let n_diseases = rng.gen_range(1..=2);
        let mut diseases: Vec<String> = DISEASES
            .choose_multiple(&mut rng, n_diseases)
            .map(|s| s.to_string())
            .collect();
        let n_drugs = rng.gen_range(1..=2);
        let mut drugs: Vec<String> = DRUGS
            .choose_multiple(&mut rng, n_drugs)
            .map(|s| s.to_string())
            .collect();
        let n_smiles = rng.gen_range(1..=2);
        let mut smiles: Vec<String> = SMILES_POOL
            .choose_multiple(&mut rng, n_smiles)
            .map(|s| s.to_string())
            .collect();
        let mut description = format!(
            "A randomized {} study of {} in participants with {}.",
            phase.render(),
            drugs[0],
            diseases[0]
        );
        let lo = rng.gen_range(18..40);
        let hi = lo + rng.gen_range(10..40);
        let mut criteria = format!(
            "Inclusion: adults aged {lo} to {hi} with {}. Exclusion: {}.",
            diseases[0],
            EXCLUSIONS.choose(&mut rng).expect("non-empty")
        );

        match spec.modality {
            ModalityKind::Diseases => diseases.push(marker.to_string()),
            ModalityKind::Drugs => drugs.push(marker.to_string()),
            ModalityKind::Smiles => smiles.push(marker.to_string()),
            ModalityKind::Description => {
                description.push_str(&format!(" The disease stage is {marker}."))
            }
            ModalityKind::Criteria => {
                criteria.push_str(&format!(" Stratum: {marker} disease."))
            }
            ModalityKind::Summarization => unreachable!("rejected by validate"),
        }

        records.push(TrialRecord {
            id: format!("synth-{i:05}"),
            phase,
            diseases,
            drugs,
            description,
            smiles,
            criteria,
            label,
        });
    }
    Ok(records)
}
