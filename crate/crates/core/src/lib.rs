//! Hierarchy-aware verifiable rewards, DDx-informed reasoning-trajectory
//! synthesis, GRPO group mathematics with a categorical policy simulator,
//! and a multiple-choice evaluation harness.

pub mod corpus;
pub mod error;
pub mod eval;
pub mod fixtures;
pub mod grpo;
pub mod jsonl;
pub mod mcq;
pub mod prompts;
pub mod reward;
pub mod taxonomy;

pub use error::{Error, Result};
