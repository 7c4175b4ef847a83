//! Data layer: trial records, linearization, prompting, language-model
//! clients, description caching, and synthetic data.

pub mod cache;
pub mod describe;
pub mod linearize;
pub mod llm;
pub mod prompt;
pub mod record;
pub mod synthetic;
