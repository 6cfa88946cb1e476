//! Question analytics on sparse student-answer matrices.
//!
//! A partial variational auto-encoder ([`pvae`]) is trained on the observed
//! entries of a binary answer matrix. Its amortized posterior over a latent
//! student embedding drives:
//!
//! - probabilistic imputation of unanswered questions ([`pvae::PVae::impute`]),
//! - question difficulty from the completed matrix ([`analytics::difficulty`]),
//! - question quality as the expected KL from prior to single-answer
//!   posterior ([`analytics::quality`]),
//! - greedy personalized question selection by expected information gain
//!   ([`selection`]).
//!
//! [`synth`] provides a 2PL item-response ground truth to check all of the
//! above against, and [`baselines`] provides Rasch, majority, and random
//! comparators.

pub mod analytics;
pub mod baselines;
pub mod data;
pub mod error;
pub mod eval;
pub mod math;
pub mod pvae;
pub mod rng;
pub mod selection;
pub mod synth;

pub use error::{Error, Result};
