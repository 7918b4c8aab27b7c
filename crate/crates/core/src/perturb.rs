//! Second-order degenerate perturbation theory in the pin hopping.
//!
//! At `J_pin = 0` the two pin sites decouple and the spectrum factors into
//! rest-of-lattice eigenstates times pin occupations. The ground doublet is
//! `|Ψ_m>|10>, |Ψ_m>|01>` with `m = N - 1` bosons on the rest; the pin
//! hopping `V` connects it to the `m ± 1` sectors with `|00>` and `|11>`.

use serde::{Deserialize, Serialize};

use crate::eig::{self, dot, EigenSolution, EigensolverConfig};
use crate::error::{Error, Result};
use crate::fock::FockBasis;
use crate::hamiltonian::{self, DiagonalTerms, SparseHermitian, Terms};
use crate::lattice::{Bond, Lattice, LatticeSpec};
use crate::model::Model;
use crate::observables::two_site_rdm;
use crate::C64;

/// Pin occupations `(n1, n2)` of the hard-core pins.
pub type PinConfig = (usize, usize);

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Level {
    pub energy: f64,
    pub pins: PinConfig,
    /// Rest-subsystem particle count.
    pub m: usize,
    /// Index of the rest eigenstate within its sector.
    pub index: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Multiplet {
    pub energy: f64,
    pub levels: Vec<Level>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct H0Structure {
    /// Ascending; the first entry is the ground multiplet.
    pub multiplets: Vec<Multiplet>,
}

impl H0Structure {
    /// Spacings between consecutive multiplets.
    pub fn gaps(&self) -> Vec<f64> {
        self.multiplets.windows(2).map(|w| w[1].energy - w[0].energy).collect()
    }

    /// True when the ground multiplet is exactly the `|Ψ>|10>, |Ψ>|01>` doublet.
    pub fn has_pin_doublet(&self) -> bool {
        let g = &self.multiplets[0].levels;
        g.len() == 2 && g.iter().any(|l| l.pins == (1, 0)) && g.iter().any(|l| l.pins == (0, 1))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlochEffective {
    pub r0: f64,
    pub rx: f64,
    pub ry: f64,
    pub rz: f64,
    /// `None` when `|R|` vanishes.
    pub theta: Option<f64>,
    pub phi: Option<f64>,
    /// Unperturbed doublet energy `E_D`.
    pub e_doublet: f64,
    /// Largest imaginary part on the diagonal of `H_eff`; zero up to rounding.
    pub hermiticity_defect: f64,
}

impl BlochEffective {
    /// From the effective matrix in the basis `(|1̃>, |0̃>)`, written as
    /// `-(R0 + R·σ)`.
    pub fn from_matrix(h: [[C64; 2]; 2], e_doublet: f64) -> Self {
        let r0 = -(h[0][0].re + h[1][1].re) / 2.0;
        let rz = -(h[0][0].re - h[1][1].re) / 2.0;
        let rx = -h[0][1].re;
        let ry = h[0][1].im;
        let r1 = (rx * rx + ry * ry + rz * rz).sqrt();
        // Absolute floor well below any second-order coefficient at J_pin >= 1e-4.
        let floor = 1e-15f64.max(1e-9 * r0.abs());
        let defined = r1 > floor;
        let hermiticity_defect = h[0][0].im.abs().max(h[1][1].im.abs()).max((h[0][1] - h[1][0].conj()).norm());
        BlochEffective {
            r0,
            rx,
            ry,
            rz,
            theta: defined.then(|| (rz / r1).clamp(-1.0, 1.0).acos()),
            phi: (defined && rx.hypot(ry) > floor).then(|| ry.atan2(rx)),
            e_doublet,
            hermiticity_defect,
        }
    }

    pub fn r1(&self) -> f64 {
        (self.rx * self.rx + self.ry * self.ry + self.rz * self.rz).sqrt()
    }

    /// `E_D - R0 - |R|`.
    pub fn ground_energy(&self) -> f64 {
        self.e_doublet - self.r0 - self.r1()
    }
}

/// Rest-of-lattice problem at fixed particle number, with its low-lying
/// eigenvectors embedded into the full basis for each pin configuration.
struct Sector {
    m: usize,
    solution: EigenSolution,
    rest_basis: FockBasis,
}

struct Unpinned<'a> {
    lattice: &'a Lattice,
    full: &'a FockBasis,
    rest_sites: Vec<usize>,
    rest_bonds: Vec<Bond>,
    cfg: EigensolverConfig,
}

impl<'a> Unpinned<'a> {
    fn new(lattice: &'a Lattice, full: &'a FockBasis, cfg: &EigensolverConfig) -> Result<Self> {
        let spec = &lattice.spec;
        if !spec.is_hard_core() {
            return Err(Error::NotHardCore);
        }
        if spec.v != 0.0 {
            // With V the rest potential depends on which pin is filled and the
            // doublet basis loses its common |Ψ>.
            return Err(Error::InvalidSpec("perturbation theory requires V = 0".into()));
        }
        let rest_sites: Vec<usize> = (0..spec.n_sites()).filter(|&s| !spec.is_pin(s)).collect();
        let mut local = vec![usize::MAX; spec.n_sites()];
        for (i, &s) in rest_sites.iter().enumerate() {
            local[s] = i;
        }
        let rest_bonds = lattice
            .bonds
            .iter()
            .filter(|b| !spec.is_pin(b.from) && !spec.is_pin(b.to))
            .map(|b| Bond { from: local[b.from], to: local[b.to], ..*b })
            .collect();
        Ok(Unpinned { lattice, full, rest_sites, rest_bonds, cfg: cfg.clone() })
    }

    fn sector(&self, m: usize, k: usize) -> Result<Sector> {
        let rest_basis = FockBasis::enumerate(self.rest_sites.len(), m, 1)?;
        let diag = DiagonalTerms { u: 0.0, v: 0.0, mu: self.lattice.spec.mu };
        let h = SparseHermitian::from_terms(&Terms::new(&rest_basis, &self.rest_bonds, diag));
        let cfg = EigensolverConfig { k, ..self.cfg.clone() };
        let solution = eig::lowest(&h, &cfg)?;
        Ok(Sector { m, solution, rest_basis })
    }

    /// Full-basis vector of rest eigenstate `index` with pins set to `pins`.
    fn embed(&self, sector: &Sector, index: usize, pins: PinConfig) -> Vec<C64> {
        let [p1, p2] = self.lattice.spec.pin_sites;
        let pin_bits = ((pins.0 as u64) << p1) | ((pins.1 as u64) << p2);
        let mut out = vec![C64::new(0.0, 0.0); self.full.dim()];
        let v = &sector.solution.vectors[index];
        for (r, &st) in sector.rest_basis.states().iter().enumerate() {
            let mut full = pin_bits;
            for (i, &s) in self.rest_sites.iter().enumerate() {
                full |= ((st >> i) & 1) << s;
            }
            let idx = self.full.rank(full).expect("embedded state outside the full basis");
            out[idx] = v[r];
        }
        out
    }

    fn pin_energy(&self, pins: PinConfig) -> f64 {
        -self.lattice.spec.mu * (pins.0 + pins.1) as f64
    }
}

fn pin_configs(n: usize) -> Vec<(PinConfig, usize)> {
    [(0, 0), (1, 0), (0, 1), (1, 1)]
        .into_iter()
        .filter(|&(a, b)| a + b <= n)
        .map(|(a, b)| ((a, b), n - a - b))
        .collect()
}

/// Levels of all sectors, grouped into multiplets, with enough states per
/// sector that the lowest `wanted` multiplets are complete.
fn structure(u: &Unpinned<'_>, wanted: usize) -> Result<(H0Structure, Vec<Sector>)> {
    let spec = &u.lattice.spec;
    let thr = u.cfg.degeneracy_threshold;
    let configs = pin_configs(spec.n_particles);
    let mut ms: Vec<usize> = configs.iter().map(|c| c.1).collect();
    ms.sort_unstable();
    ms.dedup();
    let mut k = 4 * wanted.max(1);
    loop {
        let sectors: Vec<Sector> = ms
            .iter()
            .map(|&m| u.sector(m, k))
            .collect::<Result<_>>()?;
        // Every level below `cutoff` is known in every sector.
        let mut cutoff = f64::INFINITY;
        let mut levels = Vec::new();
        for &(pins, m) in &configs {
            let s = sectors.iter().find(|s| s.m == m).unwrap();
            let sol = &s.solution;
            if sol.energies.len() < s.rest_basis.dim() {
                cutoff = cutoff.min(sol.energies.last().unwrap() + u.pin_energy(pins));
            }
            // The top group of a truncated solve may be incomplete; keep it out.
            let keep = if sol.energies.len() < s.rest_basis.dim() {
                sol.degeneracy_groups[..sol.degeneracy_groups.len() - 1].iter().flatten().count()
            } else {
                sol.energies.len()
            };
            for index in 0..keep {
                levels.push(Level { energy: sol.energies[index] + u.pin_energy(pins), pins, m, index });
            }
        }
        levels.sort_by(|a, b| a.energy.partial_cmp(&b.energy).unwrap());
        let mut multiplets: Vec<Multiplet> = Vec::new();
        for l in levels {
            match multiplets.last_mut() {
                Some(mu) if l.energy - mu.levels.last().unwrap().energy < thr => mu.levels.push(l),
                _ => multiplets.push(Multiplet { energy: l.energy, levels: vec![l] }),
            }
        }
        for mu in &mut multiplets {
            mu.energy = mu.levels.iter().map(|l| l.energy).sum::<f64>() / mu.levels.len() as f64;
        }
        let complete = multiplets.len() > wanted && multiplets[wanted].energy + thr < cutoff;
        let exhaustive = sectors.iter().all(|s| s.solution.energies.len() == s.rest_basis.dim());
        if complete || exhaustive {
            multiplets.truncate(wanted + 1);
            return Ok((H0Structure { multiplets }, sectors));
        }
        k *= 2;
    }
}

/// Ground multiplet and the next `n_levels` multiplets of the unpinned Hamiltonian.
pub fn h0_structure(spec: &LatticeSpec, n_levels: usize, cfg: &EigensolverConfig) -> Result<H0Structure> {
    let model = Model::new(spec.clone())?;
    let u = Unpinned::new(&model.lattice, &model.basis, cfg)?;
    Ok(structure(&u, n_levels)?.0)
}

/// Second-order effective Hamiltonian on the pin doublet, summing over the
/// first `n_intermediate` excited multiplets of the unpinned problem.
pub fn effective_hamiltonian(spec: &LatticeSpec, n_intermediate: usize, cfg: &EigensolverConfig) -> Result<BlochEffective> {
    if n_intermediate == 0 {
        return Err(Error::InvalidSpec("need at least one intermediate multiplet".into()));
    }
    let model = Model::new(spec.clone())?;
    let u = Unpinned::new(&model.lattice, &model.basis, cfg)?;
    let (h0, sectors) = structure(&u, n_intermediate)?;
    if !h0.has_pin_doublet() {
        return Err(Error::Undefined("unpinned ground multiplet is not the pin doublet".into()));
    }
    let ground = &h0.multiplets[0];
    let e_d = ground.energy;
    let sector_of = |m: usize| sectors.iter().find(|s| s.m == m).unwrap();
    // Basis order: |1̃> = |Ψ>|10>, |0̃> = |Ψ>|01>.
    let doublet: Vec<Vec<C64>> = [(1, 0), (0, 1)]
        .iter()
        .map(|&pins| {
            let l = ground.levels.iter().find(|l| l.pins == pins).unwrap();
            u.embed(sector_of(l.m), l.index, pins)
        })
        .collect();
    let v_op = hamiltonian::build_pin_coupling(&model.lattice, &model.basis)?;
    let v_doublet: Vec<Vec<C64>> = doublet.iter().map(|d| v_op.matvec(d)).collect();

    let mut h = [[C64::new(0.0, 0.0); 2]; 2];
    for a in 0..2 {
        for b in 0..2 {
            h[a][b] = dot(&doublet[a], &v_doublet[b]);
        }
    }
    for mu in &h0.multiplets[1..=n_intermediate] {
        for l in &mu.levels {
            let k = u.embed(sector_of(l.m), l.index, l.pins);
            let vk = [dot(&k, &v_doublet[0]), dot(&k, &v_doublet[1])];
            let denom = l.energy - e_d;
            for a in 0..2 {
                for b in 0..2 {
                    h[a][b] -= vk[a].conj() * vk[b] / denom;
                }
            }
        }
    }
    Ok(BlochEffective::from_matrix(h, e_d))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub theta_exact: f64,
    pub phi_exact: f64,
    pub theta_pert: Option<f64>,
    pub phi_pert: Option<f64>,
    pub e_exact: f64,
    pub e_pert: f64,
}

/// Bloch angles of the pin pair in the one-particle block `{|10>, |01>}`
/// of the exact ground state, against the first-multiplet prediction.
pub fn compare_with_exact(spec: &LatticeSpec, cfg: &EigensolverConfig) -> Result<Comparison> {
    let model = Model::new(spec.clone())?;
    let sol = model.solve(cfg)?;
    let [s1, s2] = spec.pin_sites;
    let rdm = two_site_rdm(&model.basis, &sol.ground_manifold(), s1, s2)?;
    let (theta_exact, phi_exact) = exact_angles(rdm.get(2, 2).re, rdm.get(1, 1).re, rdm.coherence());
    let pert = effective_hamiltonian(spec, 1, cfg)?;
    Ok(Comparison {
        theta_exact,
        phi_exact,
        theta_pert: pert.theta,
        phi_pert: pert.phi,
        e_exact: sol.ground_energy(),
        e_pert: pert.ground_energy(),
    })
}

/// Bloch angles from the `{|10>, |01>}` block of a pin RDM: populations of
/// `|10>` and `|01>` and the coherence `<01|ρ|10>`.
pub fn exact_angles(p10: f64, p01: f64, coherence: C64) -> (f64, f64) {
    let z = p10 - p01;
    let xy = 2.0 * coherence.norm();
    (xy.atan2(z), coherence.arg())
}
