//! Sparse Hermitian matrix of the gauged Bose-Hubbard Hamiltonian
//!
//! `H = -Σ_b t_b (e^{iA_b} a†_to a_from + h.c.) + U Σ n(n-1) + V Σ_b n n' - μ Σ n`
//!
//! on a fixed-particle-number [`FockBasis`]. Rows are generated
//! independently, so assembly and the matrix-free product share one code
//! path and both parallelize over rows with a fixed per-row summation order.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::eig::LinearOperator;
use crate::error::{Error, Result};
use crate::fock::FockBasis;
use crate::lattice::{Bond, Lattice};
use crate::C64;

/// Default explicit-storage budget before falling back to matrix-free products.
pub const DEFAULT_MATRIX_BUDGET: usize = 2 << 30;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiagonalTerms {
    pub u: f64,
    pub v: f64,
    pub mu: f64,
}

impl DiagonalTerms {
    pub fn none() -> Self {
        DiagonalTerms { u: 0.0, v: 0.0, mu: 0.0 }
    }

    fn from_lattice(lattice: &Lattice) -> Self {
        DiagonalTerms {
            // n(n-1) vanishes identically on a hard-core basis.
            u: lattice.spec.u.value().unwrap_or(0.0),
            v: lattice.spec.v,
            mu: lattice.spec.mu,
        }
    }
}

/// Row generator for a set of hopping links plus density terms.
#[derive(Clone, Debug)]
pub struct Terms<'a> {
    basis: &'a FockBasis,
    hops: Vec<(usize, usize, C64)>,
    pairs: Vec<(usize, usize)>,
    diag: DiagonalTerms,
}

impl<'a> Terms<'a> {
    pub fn new(basis: &'a FockBasis, bonds: &[Bond], diag: DiagonalTerms) -> Self {
        let hops = bonds
            .iter()
            .filter(|b| b.strength != 0.0)
            .map(|b| (b.from, b.to, C64::from_polar(-b.strength, b.phase)))
            .collect();
        let pairs = bonds.iter().map(|b| (b.from, b.to)).collect();
        Terms { basis, hops, pairs, diag }
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    fn diagonal(&self, state: u64) -> f64 {
        let b = self.basis;
        let mut e = 0.0;
        if self.diag.v != 0.0 {
            let nn: usize = self
                .pairs
                .iter()
                .map(|&(p, q)| b.occupation(state, p) * b.occupation(state, q))
                .sum();
            e += self.diag.v * nn as f64;
        }
        if self.diag.u != 0.0 && !b.is_hard_core() {
            let onsite: usize = (0..b.n_sites())
                .map(|i| {
                    let n = b.occupation(state, i);
                    n * n.saturating_sub(1)
                })
                .sum();
            e += self.diag.u * onsite as f64;
        }
        e - self.diag.mu * b.n_particles() as f64
    }

    /// Appends the nonzero entries of row `row`, sorted by column with duplicates merged.
    pub fn row(&self, row: usize, out: &mut Vec<(u32, C64)>) {
        out.clear();
        let b = self.basis;
        let state = b.unrank(row);
        let d = self.diagonal(state);
        if d != 0.0 {
            out.push((row as u32, C64::new(d, 0.0)));
        }
        for &(from, to, coeff) in &self.hops {
            // <row| a†_to a_from |col> is nonzero for col = a†_from a_to |row>.
            if let Some((col, amp)) = b.apply_hop(state, from, to) {
                out.push((self.rank(col), coeff * amp));
            }
            if let Some((col, amp)) = b.apply_hop(state, to, from) {
                out.push((self.rank(col), coeff.conj() * amp));
            }
        }
        out.sort_by_key(|e| e.0);
        let mut w = 0;
        for r in 0..out.len() {
            if w > 0 && out[w - 1].0 == out[r].0 {
                let add = out[r].1;
                out[w - 1].1 += add;
            } else {
                out[w] = out[r];
                w += 1;
            }
        }
        out.truncate(w);
    }

    #[inline]
    fn rank(&self, state: u64) -> u32 {
        self.basis.rank(state).expect("hop leaves the particle-number sector") as u32
    }

    /// Upper bound on nonzeros per row, used for the storage estimate.
    pub fn max_row_len(&self) -> usize {
        2 * self.hops.len() + 1
    }
}

/// Row-compressed complex Hermitian matrix storing both triangles.
#[derive(Clone, Debug)]
pub struct SparseHermitian {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<C64>,
    norm_inf: f64,
}

impl SparseHermitian {
    pub fn from_terms(terms: &Terms<'_>) -> Self {
        let dim = terms.dim();
        let rows: Vec<Vec<(u32, C64)>> = (0..dim)
            .into_par_iter()
            .map_init(Vec::new, |buf, r| {
                terms.row(r, buf);
                buf.clone()
            })
            .collect();
        let nnz = rows.iter().map(Vec::len).sum();
        let mut row_ptr = Vec::with_capacity(dim + 1);
        let mut cols = Vec::with_capacity(nnz);
        let mut vals = Vec::with_capacity(nnz);
        row_ptr.push(0);
        let mut norm_inf = 0.0f64;
        for row in rows {
            norm_inf = norm_inf.max(row.iter().map(|e| e.1.norm()).sum());
            for (c, v) in row {
                cols.push(c);
                vals.push(v);
            }
            row_ptr.push(cols.len());
        }
        SparseHermitian { dim, row_ptr, cols, vals, norm_inf }
    }

    /// Builds from explicit triplets; entries with equal coordinates are summed.
    pub fn from_triplets(dim: usize, triplets: &[(usize, usize, C64)]) -> Self {
        let mut rows = vec![Vec::new(); dim];
        for &(r, c, v) in triplets {
            rows[r].push((c as u32, v));
        }
        let mut row_ptr = vec![0];
        let mut cols = Vec::new();
        let mut vals: Vec<C64> = Vec::new();
        let mut norm_inf = 0.0f64;
        for mut row in rows {
            row.sort_by_key(|e| e.0);
            let start = cols.len();
            for (c, v) in row {
                if cols.len() > start && *cols.last().unwrap() == c {
                    *vals.last_mut().unwrap() += v;
                } else {
                    cols.push(c);
                    vals.push(v);
                }
            }
            norm_inf = norm_inf.max(vals[start..].iter().map(|v| v.norm()).sum());
            row_ptr.push(cols.len());
        }
        SparseHermitian { dim, row_ptr, cols, vals, norm_inf }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn norm_inf(&self) -> f64 {
        self.norm_inf
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, C64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.cols[span.clone()].iter().zip(&self.vals[span]).map(|(&c, &v)| (c as usize, v))
    }

    pub fn get(&self, r: usize, c: usize) -> C64 {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        match self.cols[span.clone()].binary_search(&(c as u32)) {
            Ok(k) => self.vals[span.start + k],
            Err(_) => C64::new(0.0, 0.0),
        }
    }

    pub fn matvec(&self, x: &[C64]) -> Vec<C64> {
        let mut y = vec![C64::new(0.0, 0.0); self.dim];
        self.matvec_into(x, &mut y);
        y
    }

    /// `y = H x`; each row accumulates in column order regardless of thread count.
    pub fn matvec_into(&self, x: &[C64], y: &mut [C64]) {
        assert_eq!(x.len(), self.dim);
        assert_eq!(y.len(), self.dim);
        y.par_iter_mut().with_min_len(256).enumerate().for_each(|(r, out)| {
            let span = self.row_ptr[r]..self.row_ptr[r + 1];
            let mut acc = C64::new(0.0, 0.0);
            for (&c, &v) in self.cols[span.clone()].iter().zip(&self.vals[span]) {
                acc += v * x[c as usize];
            }
            *out = acc;
        });
    }

    /// Largest violation of `H[r][c] = conj(H[c][r])`, relative to the largest entry.
    pub fn hermiticity_defect(&self) -> f64 {
        let scale = self.vals.iter().map(|v| v.norm()).fold(0.0, f64::max).max(1e-300);
        let mut worst = 0.0f64;
        for r in 0..self.dim {
            for (c, v) in self.row(r) {
                worst = worst.max((v - self.get(c, r).conj()).norm());
            }
        }
        worst / scale
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for r in 0..self.dim {
            for (c, v) in self.row(r) {
                m[(r, c)] = v;
            }
        }
        m
    }

    /// Upper triangle (diagonal included); the lower half is implied by conjugation.
    pub fn upper(&self) -> UpperHermitian {
        let mut entries = Vec::new();
        for r in 0..self.dim {
            for (c, v) in self.row(r) {
                if c >= r {
                    entries.push((r, c, v));
                }
            }
        }
        UpperHermitian { dim: self.dim, entries }
    }
}

/// Half storage: `(row, col, value)` with `col >= row`.
#[derive(Clone, Debug)]
pub struct UpperHermitian {
    dim: usize,
    entries: Vec<(usize, usize, C64)>,
}

impl UpperHermitian {
    pub fn matvec(&self, x: &[C64]) -> Vec<C64> {
        let mut y = vec![C64::new(0.0, 0.0); self.dim];
        for &(r, c, v) in &self.entries {
            y[r] += v * x[c];
            if r != c {
                y[c] += v.conj() * x[r];
            }
        }
        y
    }
}

impl LinearOperator for SparseHermitian {
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply(&self, x: &[C64], y: &mut [C64]) {
        self.matvec_into(x, y);
    }

    fn norm_bound(&self) -> f64 {
        self.norm_inf
    }
}

/// Products computed on the fly from the row generator.
#[derive(Clone, Debug)]
pub struct MatrixFree<'a> {
    terms: Terms<'a>,
    norm_bound: f64,
}

impl<'a> MatrixFree<'a> {
    pub fn new(terms: Terms<'a>) -> Self {
        // |H|_inf <= Σ_b 2 t_b n_max (n_max + 1) + |diag| bound
        let b = terms.basis;
        let n = b.n_particles() as f64;
        let hop: f64 = terms.hops.iter().map(|h| h.2.norm()).sum::<f64>()
            * 2.0
            * (b.n_max() * (b.n_max() + 1)) as f64;
        let diag = terms.diag.u.abs() * n * n + terms.diag.v.abs() * n * n + terms.diag.mu.abs() * n;
        MatrixFree { terms, norm_bound: hop + diag }
    }
}

impl LinearOperator for MatrixFree<'_> {
    fn dim(&self) -> usize {
        self.terms.dim()
    }

    fn apply(&self, x: &[C64], y: &mut [C64]) {
        y.par_iter_mut().with_min_len(256).enumerate().for_each_init(Vec::new, |buf, (r, out)| {
            self.terms.row(r, buf);
            *out = buf.iter().map(|&(c, v)| v * x[c as usize]).sum();
        });
    }

    fn norm_bound(&self) -> f64 {
        self.norm_bound
    }
}

/// Explicit storage when it fits the budget, otherwise matrix-free.
pub enum Hamiltonian<'a> {
    Explicit(SparseHermitian),
    MatrixFree(MatrixFree<'a>),
}

impl<'a> Hamiltonian<'a> {
    pub fn new(terms: Terms<'a>, budget_bytes: usize) -> Self {
        let bytes_per_entry = std::mem::size_of::<C64>() + std::mem::size_of::<u32>();
        // Typical fill is well under the per-row maximum; half is a conservative estimate.
        let estimate = terms.dim() * (terms.max_row_len() / 2 + 1) * bytes_per_entry;
        if estimate <= budget_bytes {
            Hamiltonian::Explicit(SparseHermitian::from_terms(&terms))
        } else {
            log::info!("matrix estimate {estimate} B exceeds budget; using matrix-free products");
            Hamiltonian::MatrixFree(MatrixFree::new(terms))
        }
    }
}

impl LinearOperator for Hamiltonian<'_> {
    fn dim(&self) -> usize {
        match self {
            Hamiltonian::Explicit(h) => h.dim(),
            Hamiltonian::MatrixFree(h) => h.dim(),
        }
    }

    fn apply(&self, x: &[C64], y: &mut [C64]) {
        match self {
            Hamiltonian::Explicit(h) => h.apply(x, y),
            Hamiltonian::MatrixFree(h) => h.apply(x, y),
        }
    }

    fn norm_bound(&self) -> f64 {
        match self {
            Hamiltonian::Explicit(h) => h.norm_bound(),
            Hamiltonian::MatrixFree(h) => h.norm_bound(),
        }
    }
}

fn check_basis(lattice: &Lattice, basis: &FockBasis) -> Result<()> {
    let spec = &lattice.spec;
    if basis.n_sites() != spec.n_sites() {
        return Err(Error::DimensionMismatch { expected: spec.n_sites(), got: basis.n_sites() });
    }
    if basis.n_max() != spec.n_max || basis.n_particles() != spec.n_particles {
        return Err(Error::InvalidSpec(format!(
            "basis (N = {}, n_max = {}) does not match spec (N = {}, n_max = {})",
            basis.n_particles(),
            basis.n_max(),
            spec.n_particles,
            spec.n_max
        )));
    }
    Ok(())
}

/// Row generator for the full Hamiltonian of `lattice`.
pub fn terms<'a>(lattice: &Lattice, basis: &'a FockBasis) -> Result<Terms<'a>> {
    check_basis(lattice, basis)?;
    Ok(Terms::new(basis, &lattice.bonds, DiagonalTerms::from_lattice(lattice)))
}

pub fn build(lattice: &Lattice, basis: &FockBasis) -> Result<SparseHermitian> {
    Ok(SparseHermitian::from_terms(&terms(lattice, basis)?))
}

/// Bonds of `lattice` with every pin-incident hopping set to zero.
pub fn unpinned_bonds(lattice: &Lattice) -> Vec<Bond> {
    let spec = &lattice.spec;
    lattice
        .bonds
        .iter()
        .map(|b| {
            if spec.is_pin(b.from) || spec.is_pin(b.to) {
                Bond { strength: 0.0, ..*b }
            } else {
                *b
            }
        })
        .collect()
}

/// `H₀`: the Hamiltonian at `J_pin = 0`.
pub fn build_unpinned(lattice: &Lattice, basis: &FockBasis) -> Result<SparseHermitian> {
    check_basis(lattice, basis)?;
    let terms = Terms::new(basis, &unpinned_bonds(lattice), DiagonalTerms::from_lattice(lattice));
    Ok(SparseHermitian::from_terms(&terms))
}

/// The pin-bond hopping alone, `H - H₀`.
pub fn build_pin_coupling(lattice: &Lattice, basis: &FockBasis) -> Result<SparseHermitian> {
    check_basis(lattice, basis)?;
    let spec = &lattice.spec;
    let bonds: Vec<Bond> = lattice
        .bonds
        .iter()
        .map(|b| {
            let pinned = spec.is_pin(b.from) || spec.is_pin(b.to);
            Bond { strength: if pinned { b.strength } else { 0.0 }, ..*b }
        })
        .collect();
    Ok(SparseHermitian::from_terms(&Terms::new(basis, &bonds, DiagonalTerms::none())))
}
