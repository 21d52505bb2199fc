//! Shared fixtures for the benchmarks.

use optofcs::lindblad::{assemble_liouvillian, Liouvillian};
use optofcs::operators::build_hamiltonian;
use optofcs::presets;
use optofcs::{HamiltonianKind, HilbertDims, SystemParams};

/// Blockade parameters at cutoffs small enough for repeated timing.
pub fn blockade(dims: (usize, usize)) -> (SystemParams, HilbertDims) {
    (presets::fig2a().params, HilbertDims::new(dims.0, dims.1).unwrap())
}

/// Two-photon cascade parameters at α_L = 0.15.
pub fn cascade(dims: (usize, usize)) -> (SystemParams, HilbertDims) {
    (presets::fig5(0.15).params, HilbertDims::new(dims.0, dims.1).unwrap())
}

pub fn liouvillian(p: &SystemParams, dims: HilbertDims) -> Liouvillian {
    let h = build_hamiltonian(p, dims, HamiltonianKind::Optomechanical).unwrap();
    assemble_liouvillian(p, &h).unwrap()
}
