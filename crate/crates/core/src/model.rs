//! A lattice together with its Fock basis, and the ground-state solve.

use crate::eig::{self, EigenSolution, EigensolverConfig};
use crate::error::Result;
use crate::fock::FockBasis;
use crate::hamiltonian::{self, Hamiltonian, DEFAULT_MATRIX_BUDGET};
use crate::lattice::{Lattice, LatticeSpec};
use crate::C64;

#[derive(Clone, Debug)]
pub struct Model {
    pub lattice: Lattice,
    pub basis: FockBasis,
}

impl Model {
    pub fn new(spec: LatticeSpec) -> Result<Self> {
        let lattice = Lattice::new(spec)?;
        let s = &lattice.spec;
        let basis = FockBasis::enumerate(s.n_sites(), s.n_particles, s.n_max)?;
        Ok(Model { lattice, basis })
    }

    /// Same geometry and basis, different couplings.
    pub fn with_spec(&self, spec: LatticeSpec) -> Result<Self> {
        let same_basis = spec.n_sites() == self.basis.n_sites()
            && spec.n_particles == self.basis.n_particles()
            && spec.n_max == self.basis.n_max();
        if same_basis {
            Ok(Model { lattice: Lattice::new(spec)?, basis: self.basis.clone() })
        } else {
            Model::new(spec)
        }
    }

    pub fn spec(&self) -> &LatticeSpec {
        &self.lattice.spec
    }

    pub fn hamiltonian(&self) -> Result<Hamiltonian<'_>> {
        Ok(Hamiltonian::new(hamiltonian::terms(&self.lattice, &self.basis)?, DEFAULT_MATRIX_BUDGET))
    }

    pub fn solve(&self, cfg: &EigensolverConfig) -> Result<EigenSolution> {
        let h = self.hamiltonian()?;
        eig::lowest(&h, cfg)
    }

    /// Like [`solve`](Self::solve), with the Krylov sequence started from
    /// `start` (a vector in this model's basis).
    pub fn solve_from(&self, cfg: &EigensolverConfig, start: &[C64]) -> Result<EigenSolution> {
        let h = self.hamiltonian()?;
        eig::lowest_from(&h, cfg, Some(start))
    }

    /// `v`, given in `other`, re-indexed into this model's basis. States of
    /// `other` that are not members here are dropped.
    pub fn embed_from(&self, other: &FockBasis, v: &[C64]) -> Vec<C64> {
        let mut out = vec![C64::new(0.0, 0.0); self.basis.dim()];
        for (&st, &a) in other.states().iter().zip(v) {
            if let Some(i) = self.basis.rank(self.basis.pack(&other.occupations(st))) {
                out[i] = a;
            }
        }
        out
    }
}
