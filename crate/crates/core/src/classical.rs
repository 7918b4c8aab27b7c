//! Coherent-state energy of vortex configurations, `β_r = √ρ_r e^{iφ_r}`
//! with `φ_r = Σ_k n_k θ(r - r_k)`. Used to show that a weakened pin bond
//! attracts a vortex and a strengthened one repels it.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{build_bonds, LatticeSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VortexAnsatz {
    /// Vortex centers in lattice units; must not sit on a site.
    pub centers: Vec<(f64, f64)>,
    pub charges: Vec<i32>,
    /// Per-site density, indexed like the lattice sites.
    pub density: Vec<f64>,
}

impl VortexAnsatz {
    pub fn new(spec: &LatticeSpec, centers: Vec<(f64, f64)>, charges: Vec<i32>, density: Vec<f64>) -> Result<Self> {
        if centers.len() != charges.len() {
            return Err(Error::InvalidSpec("one charge per vortex center".into()));
        }
        if charges.contains(&0) {
            return Err(Error::InvalidSpec("vortex charges must be nonzero".into()));
        }
        if density.len() != spec.n_sites() || density.iter().any(|&r| !(r >= 0.0)) {
            return Err(Error::InvalidSpec("densities must be non-negative, one per site".into()));
        }
        for &(cx, cy) in &centers {
            let on_site = |c: f64| (c - c.round()).abs() < 1e-12;
            if on_site(cx) && on_site(cy) {
                return Err(Error::InvalidSpec(format!("vortex center ({cx}, {cy}) sits on a site")));
            }
        }
        Ok(VortexAnsatz { centers, charges, density })
    }

    /// Uniform density `1/2`.
    pub fn uniform(spec: &LatticeSpec, centers: Vec<(f64, f64)>, charges: Vec<i32>) -> Result<Self> {
        Self::new(spec, centers, charges, vec![0.5; spec.n_sites()])
    }

    /// Phase at each site from minimal-image angles to every center.
    pub fn phases(&self, spec: &LatticeSpec) -> Vec<f64> {
        (0..spec.n_sites())
            .map(|s| {
                let (x, y) = spec.coords(s);
                self.centers
                    .iter()
                    .zip(&self.charges)
                    .map(|(&(cx, cy), &n)| {
                        let dx = minimal_image(x as f64 - cx, spec.nx as f64);
                        let dy = minimal_image(y as f64 - cy, spec.ny as f64);
                        f64::from(n) * dy.atan2(dx)
                    })
                    .sum()
            })
            .collect()
    }
}

fn minimal_image(d: f64, period: f64) -> f64 {
    d - period * (d / period).round()
}

/// `-2 t √(ρρ') cos(φ_to - φ_from - A)` for one bond.
fn bond_energy(strength: f64, rho: (f64, f64), phase: (f64, f64), a: f64) -> f64 {
    -2.0 * strength * (rho.0 * rho.1).sqrt() * (phase.1 - phase.0 - a).cos()
}

/// Full classical energy, including `U Σ ρ²` (finite U only), `V Σ ρρ'` and `-μ Σ ρ`.
pub fn classical_energy(spec: &LatticeSpec, ansatz: &VortexAnsatz) -> f64 {
    let phases = ansatz.phases(spec);
    let rho = &ansatz.density;
    let mut e = 0.0;
    for b in build_bonds(spec) {
        e += bond_energy(b.strength, (rho[b.from], rho[b.to]), (phases[b.from], phases[b.to]), b.phase);
        e += spec.v * rho[b.from] * rho[b.to];
    }
    let u = spec.u.value().unwrap_or(0.0);
    e + rho.iter().map(|r| u * r * r - spec.mu * r).sum::<f64>()
}

/// Energy change from setting the bonds of the first pin site to `J_pin`:
/// the bond sum around it with strength `J_δ = J_pin - J`.
pub fn pinning_energy(spec: &LatticeSpec, ansatz: &VortexAnsatz) -> f64 {
    let pin = spec.pin_sites[0];
    let j_delta = spec.j_pin - spec.j;
    let phases = ansatz.phases(spec);
    let rho = &ansatz.density;
    build_bonds(spec)
        .iter()
        .filter(|b| b.touches(pin))
        .map(|b| bond_energy(j_delta, (rho[b.from], rho[b.to]), (phases[b.from], phases[b.to]), b.phase))
        .sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfilePoint {
    pub x: f64,
    pub y: f64,
    /// Distance to the first pin site (minimal image).
    pub distance: f64,
    pub h_delta: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Trend {
    /// Energy falls as the vortex approaches: attraction.
    Decreasing,
    /// Energy rises on approach: repulsion.
    Increasing,
    Flat,
    Mixed,
}

/// `H_δ` for a single unit vortex placed at each point of `path`.
pub fn pinning_energy_profile(spec: &LatticeSpec, path: &[(f64, f64)]) -> Result<Vec<ProfilePoint>> {
    let (px, py) = spec.coords(spec.pin_sites[0]);
    path.iter()
        .map(|&(x, y)| {
            let ansatz = VortexAnsatz::uniform(spec, vec![(x, y)], vec![1])?;
            let dx = minimal_image(x - px as f64, spec.nx as f64);
            let dy = minimal_image(y - py as f64, spec.ny as f64);
            Ok(ProfilePoint { x, y, distance: dx.hypot(dy), h_delta: pinning_energy(spec, &ansatz) })
        })
        .collect()
}

/// Bond midpoints on the pin's row, from a few sites out to the midpoint of
/// its +x bond. The start stays clear of the minimal-image seam half a
/// period away, where a lone vortex's phase winds discontinuously.
pub fn default_path(spec: &LatticeSpec) -> Vec<(f64, f64)> {
    let (px, py) = spec.coords(spec.pin_sites[0]);
    let far = (spec.nx / 2).saturating_sub(2).max(1);
    (0..=far).rev().map(|j| (px as f64 + 0.5 + j as f64, py as f64)).collect()
}

/// Direction of `H_δ` as the distance to the pin shrinks.
pub fn trend(profile: &[ProfilePoint], tol: f64) -> Trend {
    let mut sorted = profile.to_vec();
    sorted.sort_by(|a, b| b.distance.partial_cmp(&a.distance).unwrap());
    let steps: Vec<f64> = sorted.windows(2).map(|w| w[1].h_delta - w[0].h_delta).collect();
    if steps.iter().all(|d| d.abs() <= tol) {
        Trend::Flat
    } else if steps.iter().all(|&d| d <= tol) {
        Trend::Decreasing
    } else if steps.iter().all(|&d| d >= -tol) {
        Trend::Increasing
    } else {
        Trend::Mixed
    }
}

pub fn profile_csv(profile: &[ProfilePoint]) -> String {
    let mut out = String::from("x,y,distance,h_delta\n");
    for p in profile {
        let _ = writeln!(out, "{},{},{},{:.12e}", p.x, p.y, p.distance, p.h_delta);
    }
    out
}
