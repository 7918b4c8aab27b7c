//! Square torus geometry and Landau-gauge Peierls phases.
//!
//! Sites are indexed row-major, `index = x + nx * y`. Every site owns two
//! bonds: the x-bond to `(x + 1, y)` at position `2 * index` and the y-bond
//! to `(x, y + 1)` at position `2 * index + 1` of the bond list. The phase
//! on a bond is the one multiplying `a†_to a_from` in the hopping term.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub type SiteIndex = usize;

/// On-site interaction: either a finite `U` (units of J) or the hard-core limit.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OnSite {
    HardCore,
    Finite(f64),
}

impl OnSite {
    pub fn value(self) -> Option<f64> {
        match self {
            OnSite::HardCore => None,
            OnSite::Finite(u) => Some(u),
        }
    }
}

impl fmt::Display for OnSite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OnSite::HardCore => f.write_str("hard_core"),
            OnSite::Finite(u) => write!(f, "{u}"),
        }
    }
}

impl Serialize for OnSite {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            OnSite::HardCore => serializer.serialize_str("hard_core"),
            OnSite::Finite(u) => serializer.serialize_f64(*u),
        }
    }
}

impl<'de> Deserialize<'de> for OnSite {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Number(f64),
            Flag(String),
        }
        match Repr::deserialize(deserializer)? {
            Repr::Number(u) => Ok(OnSite::Finite(u)),
            Repr::Flag(s) if s == "hard_core" || s == "hardcore" => Ok(OnSite::HardCore),
            Repr::Flag(s) => Err(serde::de::Error::custom(format!(
                "expected a number or \"hard_core\", got {s:?}"
            ))),
        }
    }
}

/// Full physical parameter set. Energies are in units of J, with ħ = a = e = 1.
/// Fields missing from a config file take their [`Default`] values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LatticeSpec {
    pub nx: usize,
    pub ny: usize,
    /// Total flux quanta through the torus; need not be an integer.
    pub n_phi: f64,
    pub j: f64,
    pub j_pin: f64,
    pub u: OnSite,
    pub v: f64,
    pub mu: f64,
    pub n_particles: usize,
    pub n_max: usize,
    pub pin_sites: [SiteIndex; 2],
}

impl Default for LatticeSpec {
    /// 4×4 torus, 8 hard-core bosons, two flux quanta, J_pin/J = 0.6.
    fn default() -> Self {
        LatticeSpec {
            nx: 4,
            ny: 4,
            n_phi: 2.0,
            j: 1.0,
            j_pin: 0.6,
            u: OnSite::HardCore,
            v: 0.0,
            mu: 0.0,
            n_particles: 8,
            n_max: 1,
            pin_sites: [5, 15],
        }
    }
}

impl LatticeSpec {
    pub fn n_sites(&self) -> usize {
        self.nx * self.ny
    }

    pub fn site(&self, x: usize, y: usize) -> SiteIndex {
        (x % self.nx) + self.nx * (y % self.ny)
    }

    pub fn coords(&self, site: SiteIndex) -> (usize, usize) {
        (site % self.nx, site / self.nx)
    }

    pub fn is_hard_core(&self) -> bool {
        self.n_max == 1
    }

    pub fn is_pin(&self, site: SiteIndex) -> bool {
        self.pin_sites.contains(&site)
    }

    /// Default antipodal pin placement for an arbitrary even-sized torus:
    /// `(nx/4, ny/4)` and its antipode.
    pub fn antipodal_pins(nx: usize, ny: usize) -> [SiteIndex; 2] {
        let (x0, y0) = (nx / 4, ny / 4);
        [x0 + nx * y0, (x0 + nx / 2) % nx + nx * ((y0 + ny / 2) % ny)]
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidSpec(msg));
        if self.nx < 2 || self.ny < 2 {
            return bad(format!("lattice must be at least 2x2, got {}x{}", self.nx, self.ny));
        }
        if self.n_max == 0 {
            return bad("n_max must be at least 1".into());
        }
        if self.u == OnSite::HardCore && self.n_max != 1 {
            return bad("hard-core interaction requires n_max = 1".into());
        }
        if self.n_particles > self.n_max * self.n_sites() {
            return bad(format!(
                "{} particles do not fit on {} sites with n_max = {}",
                self.n_particles,
                self.n_sites(),
                self.n_max
            ));
        }
        if !(self.j > 0.0) {
            return bad(format!("j must be positive, got {}", self.j));
        }
        if !(self.j_pin >= 0.0) {
            return bad(format!("j_pin must be non-negative, got {}", self.j_pin));
        }
        let [p, q] = self.pin_sites;
        if p == q {
            return bad(format!("pin sites must be distinct, got {p} twice"));
        }
        if p >= self.n_sites() || q >= self.n_sites() {
            return bad(format!("pin sites {:?} out of range", self.pin_sites));
        }
        for x in [self.n_phi, self.j, self.j_pin, self.v, self.mu] {
            if !x.is_finite() {
                return bad("non-finite parameter".into());
            }
        }
        if let OnSite::Finite(u) = self.u {
            if !u.is_finite() {
                return bad("non-finite u".into());
            }
        }
        Ok(())
    }

    /// True when the pins are separated by `(nx/2, ny/2)` on the torus.
    pub fn pins_antipodal(&self) -> bool {
        let (x1, y1) = self.coords(self.pin_sites[0]);
        let (x2, y2) = self.coords(self.pin_sites[1]);
        let dx = (x2 + self.nx - x1) % self.nx;
        let dy = (y2 + self.ny - y1) % self.ny;
        self.nx.is_multiple_of(2) && self.ny.is_multiple_of(2) && dx == self.nx / 2 && dy == self.ny / 2
    }

    pub fn neighbors(&self, site: SiteIndex) -> [SiteIndex; 4] {
        let (x, y) = self.coords(site);
        [
            self.site(x + 1, y),
            self.site(x + self.nx - 1, y),
            self.site(x, y + 1),
            self.site(x, y + self.ny - 1),
        ]
    }
}

/// Directed hopping link; `phase` multiplies `a†_to a_from`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bond {
    pub from: SiteIndex,
    pub to: SiteIndex,
    pub phase: f64,
    pub strength: f64,
}

impl Bond {
    pub fn touches(&self, site: SiteIndex) -> bool {
        self.from == site || self.to == site
    }
}

/// Counterclockwise elementary loop. Each entry is `(bond index, ±1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Plaquette {
    pub corner: SiteIndex,
    pub bonds: [(usize, i8); 4],
}

impl Plaquette {
    pub fn sites(&self, bonds: &[Bond]) -> [SiteIndex; 4] {
        let [b0, b1, _, b3] = self.bonds;
        [bonds[b0.0].from, bonds[b0.0].to, bonds[b1.0].to, bonds[b3.0].to]
    }

    pub fn touches(&self, bonds: &[Bond], site: SiteIndex) -> bool {
        self.sites(bonds).contains(&site)
    }
}

/// Landau-gauge bonds: `A_y = x B`, `A_x = -y B nx` on the wrap column.
pub fn build_bonds(spec: &LatticeSpec) -> Vec<Bond> {
    let (nx, ny) = (spec.nx, spec.ny);
    let flux_per_plaquette = 2.0 * PI * spec.n_phi / (nx * ny) as f64;
    let strength = |a: SiteIndex, b: SiteIndex| {
        if spec.is_pin(a) || spec.is_pin(b) {
            spec.j_pin
        } else {
            spec.j
        }
    };
    let mut bonds = Vec::with_capacity(2 * nx * ny);
    for y in 0..ny {
        for x in 0..nx {
            let from = spec.site(x, y);
            let to = spec.site(x + 1, y);
            let phase = if x + 1 < nx { 0.0 } else { -flux_per_plaquette * (nx * y) as f64 };
            bonds.push(Bond { from, to, phase, strength: strength(from, to) });

            let to = spec.site(x, y + 1);
            let phase = flux_per_plaquette * x as f64;
            bonds.push(Bond { from, to, phase, strength: strength(from, to) });
        }
    }
    bonds
}

/// Plaquettes indexed by their lower-left corner site.
pub fn plaquettes(spec: &LatticeSpec) -> Vec<Plaquette> {
    let x_bond = |x: usize, y: usize| 2 * spec.site(x, y);
    let y_bond = |x: usize, y: usize| 2 * spec.site(x, y) + 1;
    (0..spec.n_sites())
        .map(|corner| {
            let (x, y) = spec.coords(corner);
            Plaquette {
                corner,
                bonds: [
                    (x_bond(x, y), 1),
                    (y_bond(x + 1, y), 1),
                    (x_bond(x, y + 1), -1),
                    (y_bond(x, y), -1),
                ],
            }
        })
        .collect()
}

/// Oriented phase sum around `p`; equals 2π times the enclosed flux in units of Φ₀.
pub fn plaquette_flux(bonds: &[Bond], p: &Plaquette) -> f64 {
    p.bonds.iter().map(|&(b, s)| f64::from(s) * bonds[b].phase).sum()
}

/// Applies `A_b -> A_b + chi(to) - chi(from)`; plaquette fluxes are unchanged.
pub fn gauge_transform(bonds: &[Bond], chi: &[f64]) -> Vec<Bond> {
    bonds
        .iter()
        .map(|b| Bond { phase: b.phase + chi[b.to] - chi[b.from], ..*b })
        .collect()
}

/// Geometry with its bonds and plaquettes built once.
#[derive(Clone, Debug)]
pub struct Lattice {
    pub spec: LatticeSpec,
    pub bonds: Vec<Bond>,
    pub plaquettes: Vec<Plaquette>,
}

impl Lattice {
    pub fn new(spec: LatticeSpec) -> Result<Self> {
        spec.validate()?;
        let bonds = build_bonds(&spec);
        let plaquettes = plaquettes(&spec);
        Ok(Lattice { spec, bonds, plaquettes })
    }

    pub fn with_bonds(spec: LatticeSpec, bonds: Vec<Bond>) -> Result<Self> {
        spec.validate()?;
        if bonds.len() != 2 * spec.n_sites() {
            return Err(Error::InvalidSpec(format!(
                "expected {} bonds, got {}",
                2 * spec.n_sites(),
                bonds.len()
            )));
        }
        let plaquettes = plaquettes(&spec);
        Ok(Lattice { spec, bonds, plaquettes })
    }

    pub fn fluxes(&self) -> Vec<f64> {
        self.plaquettes.iter().map(|p| plaquette_flux(&self.bonds, p)).collect()
    }

    /// Indices of the bonds incident on either pin site.
    pub fn pin_bonds(&self) -> Vec<usize> {
        let [p, q] = self.spec.pin_sites;
        (0..self.bonds.len())
            .filter(|&i| self.bonds[i].touches(p) || self.bonds[i].touches(q))
            .collect()
    }
}
