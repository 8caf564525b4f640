//! Cost-aware routing over a dynamic pool of LLMs.
//!
//! Prompts are embedded vectors; LLMs are described by fixed-length feature
//! vectors built from a small set of labelled validation prompts. A router
//! estimates each candidate's expected loss on a prompt, adds a cost
//! penalty, and picks the argmin, so new LLMs join the pool by computing
//! their feature vector with no retraining.

// Negated comparisons double as NaN rejection in argument checks.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod clustering;
pub mod datamodel;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod fmt;
pub mod learned_map;
pub mod rng;
pub mod routing;
pub mod synth;

pub use error::{Error, Result};
