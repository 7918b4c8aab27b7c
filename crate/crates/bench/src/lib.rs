//! Benchmark fixtures.

use vortex_core::{LatticeSpec, Model};

/// The 4×4 half-filled hard-core lattice (dimension 12 870).
pub fn reference_model() -> Model {
    Model::new(LatticeSpec::default()).expect("default spec is valid")
}

/// A 4×3 lattice with six particles, small enough for dense checks.
pub fn small_model() -> Model {
    let spec = LatticeSpec { nx: 4, ny: 3, n_particles: 6, pin_sites: [0, 10], ..LatticeSpec::default() };
    Model::new(spec).expect("small spec is valid")
}
