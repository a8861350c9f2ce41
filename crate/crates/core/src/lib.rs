//! Evaluation and mitigation of LLM output homogenization, anchored on a
//! task taxonomy.
//!
//! The crate classifies prompts into eight task categories, samples several
//! responses per prompt under general or task-anchored strategies, scores
//! the resulting sets for functional, vocabulary and embedding diversity and
//! for checklist-based quality, and aggregates everything into per-category
//! tables.

pub mod datasets;
pub mod diversity;
pub mod error;
pub mod exec;
pub mod pipeline;
pub mod providers;
pub mod quality;
pub mod sampling;
pub mod stats;
pub mod taxonomy;
pub mod template;

pub use error::{Error, Result};
