//! The frozen summarization prompt.
//!
//! The prompt text below is part of the pipeline's external contract: cached
//! summaries and replay cassettes are keyed by a hash of the rendered prompt,
//! so any byte change invalidates them. Golden tests pin the exact bytes.
//! Only the schema definition is meant to be swapped (per dataset); the rest
//! of the template must not change.

use sha2::{Digest, Sha256};

/// System message sent with every summarization request.
pub const SYSTEM_MESSAGE: &str = "You are a helpful assistant.";

/// Text inserted before the schema definition.
pub const PROMPT_HEAD: &str = "Here is the schema definition of the table:\n\n";

/// Text between the schema definition and the linearized sample.
pub const PROMPT_SAMPLE_INTRO: &str = "\n\nThis is a sample from the table:\n\n";

/// Instructions and one-shot example appended after the sample.
pub const PROMPT_TAIL: &str = "\n\nPlease briefly summarize the sample with its value in one sentence. \
You should describe the important values, like drugs and diseases, instead of just the names of \
columns in the table.\n\nA brief summarization of another sample may look like:\n\n\
This study will test the ability of extended-release nifedipine (Procardia XL), a blood pressure \
medication, to permit a decrease in the dose of glucocorticoid medication children take to treat \
congenital adrenal hyperplasia (CAH).\n\nNote that the example is not the summarization of the \
sample you have to summarize.";

/// Default schema definition describing the trial table. Replaceable via
/// `--schema` without touching the surrounding template.
pub const DEFAULT_SCHEMA: &str = "\
phase: the phase of the clinical trial (phase 1, phase 2, or phase 3).
diseases: the list of disease conditions the trial targets.
drugs: the list of drug names tested in the trial.
description: a free-text summary of the study protocol.
smiles: the list of SMILES strings of the tested drug molecules.
criteria: the eligibility criteria text, inclusion and exclusion.";

/// A fully assembled request: system message plus user prompt, with the
/// linearized sample kept separately so offline clients can echo from it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptBundle {
    pub system: String,
    pub schema: String,
    pub linearization: String,
}

impl PromptBundle {
    pub fn new(linearization: &str) -> Self {
        Self::with_schema(linearization, DEFAULT_SCHEMA)
    }

    pub fn with_schema(linearization: &str, schema: &str) -> Self {
        PromptBundle {
            system: SYSTEM_MESSAGE.to_string(),
            schema: schema.to_string(),
            linearization: linearization.to_string(),
        }
    }

    /// The user-message text: head, schema, sample intro, sample, tail.
    pub fn user_text(&self) -> String {
        format!(
            "{PROMPT_HEAD}{}{PROMPT_SAMPLE_INTRO}{}{PROMPT_TAIL}",
            self.schema, self.linearization
        )
    }

    /// Hex SHA-256 over system + separator + user text; keys caches and
    /// cassettes.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.system.as_bytes());
        hasher.update([0x1e]);
        hasher.update(self.user_text().as_bytes());
        let digest = hasher.finalize();
        let mut hex = String::with_capacity(64);
        for byte in digest {
            use std::fmt::Write;
            write!(hex, "{byte:02x}").expect("writing to String cannot fail");
        }
        hex
    }
}
