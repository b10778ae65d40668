//! Communicative medical coaching simulator.
//!
//! A learner talks to a simulated patient while a coach agent comments on
//! the learner's medical terminology. This crate holds the domain model,
//! the LLM provider layer, the coach prompting strategies (including the
//! generalized chain-of-thought prompt builder), the three role agents,
//! the synthetic data pipeline and the evaluation harness.

pub mod agents;
pub mod datagen;
pub mod eval;
pub mod model;
pub mod prompting;
pub mod provider;
pub mod stats;
pub mod text;
