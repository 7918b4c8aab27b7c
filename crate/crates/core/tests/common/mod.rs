#![allow(dead_code)]

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vortex_core::eig::{dense_lowest, lowest};
use vortex_core::hamiltonian;
use vortex_core::lattice::gauge_transform;
use vortex_core::observables::{bond_currents, density, divergence, two_site_rdm, VorticityMap};
use vortex_core::{EigensolverConfig, Lattice, LatticeSpec, Model, OnSite, C64};

pub fn spec(nx: usize, ny: usize, n: usize, n_phi: f64, j_pin: f64, u: Option<f64>, n_max: usize) -> LatticeSpec {
    let n_sites = nx * ny;
    LatticeSpec {
        nx,
        ny,
        n_particles: n,
        n_phi,
        j_pin,
        u: u.map_or(OnSite::HardCore, OnSite::Finite),
        n_max: if u.is_some() { n_max } else { 1 },
        pin_sites: [0, n_sites / 2 + nx / 2],
        ..LatticeSpec::default()
    }
}

/// Instances for the checks that need a full dense spectrum.
pub fn small_instances() -> Vec<LatticeSpec> {
    vec![
        spec(3, 3, 4, 1.3, 0.7, None, 1),
        spec(4, 2, 4, 2.0, 0.6, None, 1),
        spec(4, 3, 3, 0.5, 0.01, None, 1),
        spec(3, 2, 3, 0.8, 1.5, Some(2.5), 3),
        spec(2, 2, 3, 1.0, 0.9, Some(0.7), 3),
    ]
}

/// Instances for the Lanczos oracle, all with dimension at most 4000.
pub fn oracle_instances() -> Vec<LatticeSpec> {
    let mut v = small_instances();
    v.extend([
        spec(4, 3, 6, 2.0, 0.6, None, 1),
        spec(4, 4, 3, 3.0, 0.01, None, 1),
        spec(3, 3, 4, 1.0, 0.4, Some(4.0), 2),
        spec(4, 3, 4, 1.7, 1.2, Some(6.0), 2),
    ]);
    v
}

fn dense(model: &Model) -> (Vec<f64>, Vec<Vec<C64>>) {
    let h = hamiltonian::build(&model.lattice, &model.basis).unwrap();
    let sol = dense_lowest(&h.to_dense(), model.basis.dim(), 1e-8);
    (sol.energies, sol.vectors)
}

/// Largest |E_lanczos - E_dense| over the levels Lanczos returns.
pub fn lanczos_vs_dense(spec: &LatticeSpec, k: usize) -> f64 {
    let model = Model::new(spec.clone()).unwrap();
    let h = hamiltonian::build(&model.lattice, &model.basis).unwrap();
    let oracle = dense_lowest(&h.to_dense(), k + 4, 1e-8);
    let sol = lowest(&h, &EigensolverConfig { k, ..Default::default() }).unwrap();
    sol.energies.iter().zip(&oracle.energies).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

pub fn hermiticity_defect(spec: &LatticeSpec) -> f64 {
    let model = Model::new(spec.clone()).unwrap();
    hamiltonian::build(&model.lattice, &model.basis).unwrap().hermiticity_defect()
}

/// Every hop maps a basis state to a basis state with the same particle
/// number, and eigenstates carry exactly N particles. Returns the largest
/// deviation of the eigenstate particle number; `None` if a hop leaves the
/// sector.
pub fn number_conservation(spec: &LatticeSpec) -> Option<f64> {
    let model = Model::new(spec.clone()).unwrap();
    let b = &model.basis;
    for &s in b.states() {
        for bond in &model.lattice.bonds {
            if let Some((t, _)) = b.apply_hop(s, bond.to, bond.from) {
                if b.rank(t).is_none() || b.occupations(t).iter().sum::<usize>() != spec.n_particles {
                    return None;
                }
            }
        }
    }
    let (_, vecs) = dense(&model);
    let n = spec.n_particles as f64;
    let worst = vecs
        .iter()
        .take(6)
        .map(|v| ((0..spec.n_sites()).map(|i| density(b, &[v], i)).sum::<f64>() - n).abs())
        .fold(0.0, f64::max);
    Some(worst)
}

/// Largest spectral shift under a random gauge transformation.
pub fn gauge_defect(spec: &LatticeSpec, seed: u64) -> f64 {
    let model = Model::new(spec.clone()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chi: Vec<f64> = (0..spec.n_sites()).map(|_| rng.gen_range(-10.0..10.0)).collect();
    let moved = Lattice::with_bonds(spec.clone(), gauge_transform(&model.lattice.bonds, &chi)).unwrap();
    let other = Model { lattice: moved, basis: model.basis.clone() };
    let (a, _) = dense(&model);
    let (b, _) = dense(&other);
    a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// `(max |div j|, max |Σ vorticity|)` over the lowest eigenstates.
pub fn current_checks(spec: &LatticeSpec) -> (f64, f64) {
    let model = Model::new(spec.clone()).unwrap();
    let (_, vecs) = dense(&model);
    let mut div: f64 = 0.0;
    let mut total: f64 = 0.0;
    for v in vecs.iter().take(6) {
        let currents = bond_currents(&model.lattice, &model.basis, &[v]);
        div = divergence(&model.lattice, &currents).iter().fold(div, |m, d| m.max(d.abs()));
        total = total.max(VorticityMap::from_currents(&model.lattice, &currents).total().abs());
    }
    (div, total)
}

/// `(max |Tr ρ - 1|, min eigenvalue)` of pin-pair RDMs for eigenstates, a
/// degenerate-style mixture and random superpositions. `None` if an RDM is
/// rejected.
pub fn rdm_checks(spec: &LatticeSpec, seed: u64) -> Option<(f64, f64)> {
    let model = Model::new(spec.clone()).unwrap();
    let (_, vecs) = dense(&model);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = model.basis.dim();
    let random: Vec<Vec<C64>> = (0..3)
        .map(|_| {
            let v = DVector::from_fn(dim, |_, _| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
            v.normalize().iter().copied().collect()
        })
        .collect();
    let mut sets: Vec<Vec<&[C64]>> = vecs.iter().take(4).map(|v| vec![v.as_slice()]).collect();
    sets.push(vec![&vecs[0], &vecs[1]]);
    sets.extend(random.iter().map(|v| vec![v.as_slice()]));
    let [s1, s2] = spec.pin_sites;
    let mut trace_dev: f64 = 0.0;
    let mut min_eig = f64::INFINITY;
    for set in &sets {
        let rdm = two_site_rdm(&model.basis, set, s1, s2).ok()?;
        trace_dev = trace_dev.max((rdm.0.trace().re - 1.0).abs());
        min_eig = min_eig.min(rdm.eigenvalues()[0]);
    }
    Some((trace_dev, min_eig))
}
