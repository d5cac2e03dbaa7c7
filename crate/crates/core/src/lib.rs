//! Bayesian variable selection for generalized linear models with test-based
//! Bayes factors and the compound confluent hypergeometric family of
//! `g`-priors.

// `!(x > 0.0)` style guards are used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod evidence;
pub mod family;
pub mod glm;
pub mod linalg;
pub mod oracles;
pub mod priors;
pub mod search;
pub mod sim;
pub mod special;

pub use error::{Error, Result};
pub use family::{Family, FamilyKind};
pub use glm::{fit_glm, Dataset, GlmFit};
