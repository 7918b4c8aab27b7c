//! Exact diagonalization of the gauged two-dimensional Bose-Hubbard model
//! with a pair of pinned vortices.

pub mod classical;
pub mod eig;
pub mod error;
pub mod fock;
pub mod hamiltonian;
pub mod lattice;
pub mod model;
pub mod observables;
pub mod perturb;
pub mod report;
pub mod spinfit;
pub mod sweep;
pub mod tasks;

pub type C64 = num_complex::Complex64;

pub use eig::{lowest, EigenSolution, EigensolverConfig, LinearOperator};
pub use error::{Error, Result};
pub use fock::FockBasis;
pub use hamiltonian::{Hamiltonian, SparseHermitian};
pub use lattice::{Lattice, LatticeSpec, OnSite};
pub use model::Model;
