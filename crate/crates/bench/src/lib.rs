//! Shared fixtures for the performance benchmarks.

use chic_core::sim::{Scenario, ScenarioKind};
use chic_core::{Dataset, Family};

/// One replicate of the sparse logistic scenario.
pub fn sparse_logistic(p: usize, n: usize) -> Dataset {
    Scenario::new(ScenarioKind::Sparse, p, n, 0.5, Family::logistic(), 31)
        .and_then(|s| s.simulate(0))
        .expect("fixture parameters are valid")
}
