//! Execution-grounded training data and rewards for code reasoning models.
//!
//! The crate covers the whole data path: loading and filtering a snippet
//! corpus, curating a structurally diverse subset, augmenting snippets with
//! controlled mutations, running them in a resource-limited sandbox, turning
//! the results into prediction tasks, and scoring model answers.

pub mod augment;
pub mod corpus;
pub mod curation;
pub mod jsonl;
pub mod par;
pub mod pipeline;
pub mod pylang;
pub mod reward;
pub mod sandbox;
pub mod seed;
pub mod taskgen;
