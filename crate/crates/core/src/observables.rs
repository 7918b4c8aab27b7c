//! Measurements on eigenstates: currents, vorticity, pin-site correlations,
//! the two-site reduced density matrix and its entanglement, and the
//! readout-protocol algebra.
//!
//! Every state argument is a slice of orthonormal vectors; a degenerate
//! manifold is measured as the equal-weight average over it, which does not
//! depend on the basis chosen inside the manifold.

use std::f64::consts::PI;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector, Matrix4, SMatrix};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::FockBasis;
use crate::lattice::{Bond, Lattice, SiteIndex};
use crate::C64;

const ZERO: C64 = C64::new(0.0, 0.0);

/// `<a†_i a_j>`, averaged over `states`.
pub fn one_body(basis: &FockBasis, states: &[&[C64]], i: SiteIndex, j: SiteIndex) -> C64 {
    let mut acc = ZERO;
    for psi in states {
        if i == j {
            for (c, &st) in basis.states().iter().enumerate() {
                acc += psi[c].norm_sqr() * basis.occupation(st, i) as f64;
            }
            continue;
        }
        for (c, &st) in basis.states().iter().enumerate() {
            if psi[c] == ZERO {
                continue;
            }
            if let Some((target, amp)) = basis.apply_hop(st, i, j) {
                let r = basis.rank(target).expect("hop leaves the basis");
                acc += psi[r].conj() * psi[c] * amp;
            }
        }
    }
    acc / states.len() as f64
}

pub fn density(basis: &FockBasis, states: &[&[C64]], site: SiteIndex) -> f64 {
    one_body(basis, states, site, site).re
}

/// `<a†_{s1} a_{s2}>`.
pub fn correlation(basis: &FockBasis, states: &[&[C64]], s1: SiteIndex, s2: SiteIndex) -> C64 {
    one_body(basis, states, s1, s2)
}

/// Particle current along `bond`, from `from` to `to`: `-∂H/∂A` evaluated
/// as `-2 t Im(e^{iA} <a†_to a_from>)`.
pub fn bond_current(basis: &FockBasis, states: &[&[C64]], bond: &Bond) -> f64 {
    if bond.strength == 0.0 {
        return 0.0;
    }
    let x = C64::from_polar(1.0, bond.phase) * one_body(basis, states, bond.to, bond.from);
    -2.0 * bond.strength * x.im
}

pub fn bond_currents(lattice: &Lattice, basis: &FockBasis, states: &[&[C64]]) -> Vec<f64> {
    lattice.bonds.iter().map(|b| bond_current(basis, states, b)).collect()
}

/// Net current out of each site.
pub fn divergence(lattice: &Lattice, currents: &[f64]) -> Vec<f64> {
    let mut div = vec![0.0; lattice.spec.n_sites()];
    for (b, &j) in lattice.bonds.iter().zip(currents) {
        div[b.from] += j;
        div[b.to] -= j;
    }
    div
}

/// Plaquette curl of the bond currents, indexed by lower-left corner site.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VorticityMap {
    pub nx: usize,
    pub ny: usize,
    pub values: Vec<f64>,
    /// Value subtracted from every plaquette; zero for a raw map.
    pub background: f64,
    pub subtracted: bool,
}

impl VorticityMap {
    pub fn from_currents(lattice: &Lattice, currents: &[f64]) -> Self {
        let values = lattice
            .plaquettes
            .iter()
            .map(|p| p.bonds.iter().map(|&(b, s)| f64::from(s) * currents[b]).sum())
            .collect();
        VorticityMap {
            nx: lattice.spec.nx,
            ny: lattice.spec.ny,
            values,
            background: 0.0,
            subtracted: false,
        }
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[x + self.nx * y]
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn subtract(&self, background: f64) -> Self {
        VorticityMap {
            values: self.values.iter().map(|v| v - background).collect(),
            background: self.background + background,
            subtracted: true,
            ..self.clone()
        }
    }

    /// Largest minus smallest plaquette value.
    pub fn spread(&self) -> f64 {
        let max = self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = self.values.iter().copied().fold(f64::INFINITY, f64::min);
        max - min
    }

    /// Plaquettes (corner indices) attaining the maximum within `tol`.
    pub fn argmax(&self, tol: f64) -> Vec<usize> {
        let max = self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (0..self.values.len()).filter(|&i| self.values[i] >= max - tol).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,y,vorticity\n");
        for (i, v) in self.values.iter().enumerate() {
            let _ = writeln!(out, "{},{},{:.12e}", i % self.nx, i / self.nx, v);
        }
        out
    }
}

pub fn vorticity_map(lattice: &Lattice, basis: &FockBasis, states: &[&[C64]]) -> VorticityMap {
    VorticityMap::from_currents(lattice, &bond_currents(lattice, basis, states))
}

/// Mean raw vorticity over plaquettes with no pin site at a corner.
pub fn background_vorticity(map: &VorticityMap, lattice: &Lattice) -> f64 {
    let [p, q] = lattice.spec.pin_sites;
    let far: Vec<f64> = lattice
        .plaquettes
        .iter()
        .zip(&map.values)
        .filter(|(pl, _)| !pl.touches(&lattice.bonds, p) && !pl.touches(&lattice.bonds, q))
        .map(|(_, &v)| v)
        .collect();
    far.iter().sum::<f64>() / far.len() as f64
}

/// Order-of-magnitude estimate `-2π p n N_Φ` of the background vorticity,
/// with `p` the per-plaquette probability and `n` the density.
pub fn analytic_background(p: f64, n: f64, n_phi: f64) -> f64 {
    -2.0 * PI * p * n * n_phi
}

/// Distance of `Arg corr` from the nearest `π N_Φ / 2 + m π`.
pub fn phase_law_residual(corr: C64, n_phi: f64) -> Result<f64> {
    if corr.norm() < 1e-6 {
        return Err(Error::Undefined(format!("|<a†1 a2>| = {:.2e} too small for a phase", corr.norm())));
    }
    let d = (corr.arg() - PI * n_phi / 2.0).rem_euclid(PI);
    Ok(d.min(PI - d))
}

/// Parity of `m` in `Arg corr = π N_Φ / 2 + m π`; `m` itself is only defined
/// modulo 2 since the argument is. `None` when the correlation is too small.
pub fn phase_law_parity(corr: C64, n_phi: f64) -> Option<u8> {
    if corr.norm() < 1e-6 {
        return None;
    }
    let projected = (corr * C64::from_polar(1.0, -PI * n_phi / 2.0)).re;
    Some(u8::from(projected < 0.0))
}

/// Reduced density matrix of two hard-core sites in the basis
/// `|n1 n2>` with index `2 n1 + n2`: `|00>, |01>, |10>, |11>`.
#[derive(Clone, Debug, PartialEq)]
pub struct TwoSiteRdm(pub Matrix4<C64>);

impl TwoSiteRdm {
    /// Validates hermiticity, unit trace and positivity (all within 1e-10).
    pub fn new(m: Matrix4<C64>) -> Result<Self> {
        let herm = (m - m.adjoint()).norm();
        if herm > 1e-10 {
            return Err(Error::Undefined(format!("RDM not Hermitian (defect {herm:.2e})")));
        }
        let tr = m.trace();
        if (tr - C64::new(1.0, 0.0)).norm() > 1e-10 {
            return Err(Error::Undefined(format!("RDM trace {tr} != 1")));
        }
        let rdm = TwoSiteRdm(m);
        let min = rdm.eigenvalues()[0];
        if min < -1e-10 {
            return Err(Error::NotPositive(min));
        }
        Ok(rdm)
    }

    pub fn from_pure(psi: [C64; 4]) -> Result<Self> {
        let v = nalgebra::Vector4::from(psi);
        Self::new(v * v.adjoint())
    }

    /// Ascending eigenvalues.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = self.0.symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
        ev
    }

    pub fn get(&self, a: usize, b: usize) -> C64 {
        self.0[(a, b)]
    }

    /// Populations `(x00, x01, x10, x11)`.
    pub fn diagonal(&self) -> [f64; 4] {
        [0, 1, 2, 3].map(|i| self.0[(i, i)].re)
    }

    /// `<a†1 a2>`, the `<01|ρ|10>` coherence.
    pub fn coherence(&self) -> C64 {
        self.0[(1, 2)]
    }

    pub fn purity(&self) -> f64 {
        (self.0 * self.0).trace().re
    }
}

/// Partial trace onto sites `(s1, s2)`, averaged over `states`.
pub fn two_site_rdm(basis: &FockBasis, states: &[&[C64]], s1: SiteIndex, s2: SiteIndex) -> Result<TwoSiteRdm> {
    if !basis.is_hard_core() {
        return Err(Error::NotHardCore);
    }
    let bit = |s: SiteIndex| 1u64 << s;
    let (b1, b2) = (bit(s1), bit(s2));
    let mut m = Matrix4::<C64>::zeros();
    for psi in states {
        for (c, &st) in basis.states().iter().enumerate() {
            let w = psi[c].norm_sqr();
            let idx = 2 * usize::from(st & b1 != 0) + usize::from(st & b2 != 0);
            m[(idx, idx)] += C64::new(w, 0.0);
            // Only |01> and |10> couple at fixed particle number.
            if idx == 1 {
                let partner = st ^ b1 ^ b2;
                if let Some(r) = basis.rank(partner) {
                    // <01|ρ|10> = Σ_rest ψ(01, rest) ψ*(10, rest)
                    m[(1, 2)] += psi[c] * psi[r].conj();
                }
            }
        }
    }
    m /= C64::new(states.len() as f64, 0.0);
    m[(2, 1)] = m[(1, 2)].conj();
    TwoSiteRdm::new(m)
}

fn sigma_y_y() -> Matrix4<C64> {
    // σy ⊗ σy is real: anti-diagonal (-1, 1, 1, -1).
    let mut m = Matrix4::<C64>::zeros();
    for (i, s) in [-1.0, 1.0, 1.0, -1.0].into_iter().enumerate() {
        m[(i, 3 - i)] = C64::new(s, 0.0);
    }
    m
}

/// Wootters concurrence. X states (every RDM of a fixed-particle-number
/// state) use the closed form, which avoids square roots of round-off in the
/// vanishing eigenvalues of pure states.
pub fn concurrence(rdm: &TwoSiteRdm) -> f64 {
    let r = &rdm.0;
    let off_x = (0..4)
        .flat_map(|i| (0..4).map(move |j| (i, j)))
        .filter(|&(i, j)| i != j && i + j != 3)
        .map(|(i, j)| r[(i, j)].norm())
        .fold(0.0, f64::max);
    if off_x <= 1e-14 {
        let d = |i: usize| r[(i, i)].re.max(0.0);
        let a = r[(1, 2)].norm() - (d(0) * d(3)).sqrt();
        let b = r[(0, 3)].norm() - (d(1) * d(2)).sqrt();
        return (2.0 * a.max(b)).clamp(0.0, 1.0);
    }
    wootters(r)
}

fn wootters(rho: &Matrix4<C64>) -> f64 {
    let eig = rho.symmetric_eigen();
    let sqrt_d = Matrix4::from_diagonal(&eig.eigenvalues.map(|l| C64::new(l.max(0.0).sqrt(), 0.0)));
    let sqrt_rho = eig.eigenvectors * sqrt_d * eig.eigenvectors.adjoint();
    let yy = sigma_y_y();
    let tilde = yy * rho.conjugate() * yy;
    let m = sqrt_rho * tilde * sqrt_rho;
    let m = (m + m.adjoint()) * C64::new(0.5, 0.0);
    let mut lambda: Vec<f64> = m.symmetric_eigenvalues().iter().map(|&x| x.max(0.0).sqrt()).collect();
    lambda.sort_by(|a, b| b.partial_cmp(a).unwrap());
    (lambda[0] - lambda[1] - lambda[2] - lambda[3]).max(0.0)
}

fn binary_entropy(p: f64) -> f64 {
    let h = |x: f64| if x <= 0.0 { 0.0 } else { -x * x.log2() };
    h(p) + h(1.0 - p)
}

/// Entanglement of formation from the concurrence.
pub fn eof(rdm: &TwoSiteRdm) -> f64 {
    let c = concurrence(rdm).min(1.0);
    binary_entropy((1.0 + (1.0 - c * c).max(0.0).sqrt()) / 2.0)
}

/// `<Ψ|ρ|Ψ>` with `|Ψ> = (|10> + e^{iφ}|01>)/√2`.
pub fn fidelity(rdm: &TwoSiteRdm, phi: f64) -> f64 {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut psi = nalgebra::Vector4::<C64>::zeros();
    psi[2] = C64::new(s, 0.0);
    psi[1] = C64::from_polar(s, phi);
    (psi.adjoint() * rdm.0 * psi)[(0, 0)].re
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReadoutTrace {
    pub times: Vec<f64>,
    /// `<a†1 a1>` at each time.
    pub occupancy: Vec<f64>,
}

/// `<n1>(t)` under `H' = -(Ω a†1 a2 + h.c.)` acting on the two pin sites.
/// The on-site term is inert on hard-core states, so `_u` only documents the
/// model.
pub fn raman_trace(rdm: &TwoSiteRdm, omega: C64, _u: f64, times: &[f64]) -> ReadoutTrace {
    let w = omega.norm();
    let e = C64::from_polar(1.0, omega.arg());
    let occupancy = times
        .iter()
        .map(|&t| {
            let (s, c) = (w * t).sin_cos();
            // exp(-iH't) in the one-particle block {|01>, |10>}.
            let mut u = Matrix4::<C64>::identity();
            u[(1, 1)] = C64::new(c, 0.0);
            u[(2, 2)] = C64::new(c, 0.0);
            u[(2, 1)] = C64::i() * s * e;
            u[(1, 2)] = C64::i() * s * e.conj();
            let rho_t = u * rdm.0 * u.adjoint();
            (rho_t[(2, 2)] + rho_t[(3, 3)]).re
        })
        .collect();
    ReadoutTrace { times: times.to_vec(), occupancy }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RamanFit {
    pub r: f64,
    /// `None` when `r` is below the noise floor.
    pub phi_prime: Option<f64>,
    /// RMS deviation of the fitted model from the traces.
    pub residual: f64,
}

/// Recovers `r e^{iφ'} = <a†1 a2>` from traces taken at Raman couplings
/// with at least two distinct phases. Each trace is fitted to
/// `b + d cos 2|Ω|t - A sin 2|Ω|t`, and `A = r sin(φ' + arg Ω)` across
/// settings fixes `(r, φ')`.
pub fn raman_fit(traces: &[(&ReadoutTrace, C64)]) -> Result<RamanFit> {
    let mut amplitudes = Vec::new();
    let mut sq = 0.0;
    let mut count = 0usize;
    for (trace, omega) in traces {
        let w = omega.norm();
        let span = trace.times.iter().copied().fold(0.0, f64::max) - trace.times.iter().copied().fold(f64::INFINITY, f64::min);
        if !(w > 0.0) || 2.0 * w * span < 2.0 * PI || trace.times.len() < 4 {
            return Err(Error::Undefined("Raman trace shorter than one oscillation period".into()));
        }
        let n = trace.times.len();
        let a = DMatrix::from_fn(n, 3, |r, c| {
            let x = 2.0 * w * trace.times[r];
            [1.0, x.cos(), -x.sin()][c]
        });
        let b = DVector::from_column_slice(&trace.occupancy);
        let sol = a.clone().svd(true, true).solve(&b, 1e-14).map_err(|e| Error::Undefined(e.into()))?;
        sq += (a * &sol - b).norm_squared();
        count += n;
        amplitudes.push((sol[2], omega.arg()));
    }
    let residual = (sq / count.max(1) as f64).sqrt();
    // A_k = X cos θ_k + Y sin θ_k with X = r sin φ', Y = r cos φ'.
    let design = DMatrix::from_fn(amplitudes.len(), 2, |r, c| {
        let th = amplitudes[r].1;
        if c == 0 { th.cos() } else { th.sin() }
    });
    let rhs = DVector::from_iterator(amplitudes.len(), amplitudes.iter().map(|a| a.0));
    let svd = design.clone().svd(true, true);
    let floor = 1e-12;
    if amplitudes.iter().all(|a| a.0.abs() < floor) {
        return Ok(RamanFit { r: 0.0, phi_prime: None, residual });
    }
    if amplitudes.len() < 2 || svd.singular_values.iter().any(|&s| s < 1e-6) {
        return Err(Error::Undefined("need Raman couplings with two independent phases".into()));
    }
    let xy = svd.solve(&rhs, 1e-14).map_err(|e| Error::Undefined(e.into()))?;
    let r = xy[0].hypot(xy[1]);
    if r < floor {
        return Ok(RamanFit { r: 0.0, phi_prime: None, residual });
    }
    Ok(RamanFit { r, phi_prime: Some(xy[0].atan2(xy[1])), residual })
}

/// `|y|` from the populations and the purity. The coherence enters the
/// purity twice, `Tr ρ² = Σ x² + 2|y|²`. A radicand in `[-1e-10, 0)`
/// counts as zero.
pub fn tomography_offdiag(x: [f64; 4], purity: f64) -> Result<f64> {
    let total: f64 = x.iter().sum();
    if (total - 1.0).abs() > 1e-10 || x.iter().any(|&p| p < -1e-12) {
        return Err(Error::Undefined(format!("populations {x:?} are not a distribution")));
    }
    let radicand = purity - x.iter().map(|p| p * p).sum::<f64>();
    if radicand < -1e-10 || radicand > 2.0 * x[1] * x[2] + 1e-10 {
        return Err(Error::InconsistentTomography(radicand));
    }
    Ok((radicand.max(0.0) / 2.0).sqrt())
}

/// Four-site density matrix in the order `1 1' 2 2'` with index
/// `8 n1 + 4 n1' + 2 n2 + n2'`.
pub type FourSite = SMatrix<C64, 16, 16>;

#[derive(Clone, Debug)]
pub struct ParityOutcome {
    pub even: Option<FourSite>,
    pub odd: Option<FourSite>,
    pub p_even: f64,
    pub p_odd: f64,
}

/// Measures the parity of `n1 + n1'` on two copies `ρ_a ⊗ ρ_b`.
pub fn parity_projection(a: &TwoSiteRdm, b: &TwoSiteRdm) -> ParityOutcome {
    // Map the product index (2 n1 + n2) * 4 + (2 n1' + n2') to 1 1' 2 2'.
    let reorder = |i: usize, j: usize| {
        let (n1, n2, n1p, n2p) = (i >> 1, i & 1, j >> 1, j & 1);
        8 * n1 + 4 * n1p + 2 * n2 + n2p
    };
    let mut joint = FourSite::zeros();
    for i in 0..4 {
        for j in 0..4 {
            for k in 0..4 {
                for l in 0..4 {
                    joint[(reorder(i, j), reorder(k, l))] = a.0[(i, k)] * b.0[(j, l)];
                }
            }
        }
    }
    let parity = |idx: usize| ((idx >> 3) + ((idx >> 2) & 1)) & 1;
    let project = |want: usize| {
        let mut m = joint;
        for r in 0..16 {
            for c in 0..16 {
                if parity(r) != want || parity(c) != want {
                    m[(r, c)] = ZERO;
                }
            }
        }
        let p = m.trace().re;
        (p, (p > 1e-14).then(|| m / C64::new(p, 0.0)))
    };
    let (p_even, even) = project(0);
    let (p_odd, odd) = project(1);
    ParityOutcome { even, odd, p_even, p_odd }
}

/// The state vector of a rank-one density matrix, phase-fixed so that its
/// largest component is real and positive.
pub fn pure_state(rho: &FourSite) -> Option<[C64; 16]> {
    if ((rho * rho).trace().re - 1.0).abs() > 1e-10 {
        return None;
    }
    let eig = rho.symmetric_eigen();
    let (imax, _) = eig.eigenvalues.iter().enumerate().fold((0, f64::MIN), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
    let v = eig.eigenvectors.column(imax);
    let (kmax, _) = v.iter().enumerate().fold((0, 0.0), |acc, (i, z)| if z.norm() > acc.1 + 1e-12 { (i, z.norm()) } else { acc });
    let phase = C64::from_polar(1.0, -v[kmax].arg());
    let mut out = [ZERO; 16];
    for (o, z) in out.iter_mut().zip(v.iter()) {
        *o = z * phase;
    }
    Some(out)
}
