//! Shared fixtures for the kernel benchmarks.

use lr_ergo_core::algebra::pauli_z;
use lr_ergo_core::model::DEFAULT_LAMBDA;
use lr_ergo_core::{EvolutionEngine, LocalOperator, ModelPreset, Site, State, Torus};

/// Periodic tilted-field Ising chain of `l` sites.
pub fn tilted_chain(l: usize) -> EvolutionEngine {
    let phi = ModelPreset::tilted_ising(1.0, 1.05, 0.5)
        .expand(&Torus::periodic([l]), 2, DEFAULT_LAMBDA)
        .expect("valid preset");
    EvolutionEngine::from_interaction(&phi).expect("diagonalizable")
}

pub fn z(site: i64) -> LocalOperator {
    LocalOperator::single_site(Site::from(site), pauli_z()).expect("pauli is 2x2")
}

pub fn infinite_temperature(eng: &EvolutionEngine) -> State {
    State::tracial(eng.volume().clone(), eng.site_dim())
}
