//! Single-point runs behind the `spinfit`, `perturb` and `classical` commands.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::classical::{default_path, pinning_energy_profile, trend, ProfilePoint, Trend};
use crate::eig::EigensolverConfig;
use crate::error::{Error, Result};
use crate::lattice::LatticeSpec;
use crate::model::Model;
use crate::observables::correlation;
use crate::perturb::{compare_with_exact, effective_hamiltonian, h0_structure, BlochEffective, Comparison, H0Structure};
use crate::spinfit::{fit, ground_is_symmetric, SpinFit};
use crate::sweep::config_hash;

fn validated(spec: &LatticeSpec) -> Result<()> {
    spec.validate().map_err(|e| Error::Config(e.to_string()))
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SpinfitConfig {
    #[serde(default)]
    pub spec: LatticeSpec,
    #[serde(default)]
    pub eigensolver: EigensolverConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpinfitRun {
    pub config_hash: String,
    pub config: SpinfitConfig,
    pub levels: Vec<f64>,
    pub fit: SpinFit,
    pub wall_time_s: f64,
}

pub fn run_spinfit(config: &SpinfitConfig) -> Result<SpinfitRun> {
    validated(&config.spec)?;
    let start = Instant::now();
    let model = Model::new(config.spec.clone())?;
    let cfg = EigensolverConfig { k: config.eigensolver.k.max(4), ..config.eigensolver.clone() };
    let sol = model.solve(&cfg)?;
    let levels: Vec<f64> = sol.energies.iter().copied().take(4).collect();
    let mut fit = fit(&levels)?;
    if sol.ground_degeneracy() == 1 {
        let [s1, s2] = config.spec.pin_sites;
        let c = correlation(&model.basis, &sol.ground_manifold(), s1, s2);
        fit.ground_is_symmetric = ground_is_symmetric(c, config.spec.n_phi);
    }
    Ok(SpinfitRun {
        config_hash: config_hash(config)?,
        config: config.clone(),
        levels,
        fit,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

fn default_intermediate() -> usize {
    1
}

fn default_h0_levels() -> usize {
    2
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbConfig {
    #[serde(default)]
    pub spec: LatticeSpec,
    /// Excited multiplets of the unpinned problem kept as intermediate states.
    #[serde(default = "default_intermediate")]
    pub n_intermediate: usize,
    /// Multiplets above the ground one reported in the H₀ structure.
    #[serde(default = "default_h0_levels")]
    pub h0_levels: usize,
    #[serde(default = "yes")]
    pub compare_exact: bool,
    #[serde(default)]
    pub eigensolver: EigensolverConfig,
}

impl Default for PerturbConfig {
    fn default() -> Self {
        PerturbConfig {
            spec: LatticeSpec::default(),
            n_intermediate: 1,
            h0_levels: 2,
            compare_exact: true,
            eigensolver: EigensolverConfig::default(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PerturbRun {
    pub config_hash: String,
    pub config: PerturbConfig,
    pub h0: H0Structure,
    pub gaps: Vec<f64>,
    /// Absent when the unpinned ground multiplet is not the pin doublet.
    pub effective: Option<BlochEffective>,
    pub comparison: Option<Comparison>,
    /// Why `effective` or `comparison` is missing.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
    pub wall_time_s: f64,
}

pub fn run_perturb(config: &PerturbConfig) -> Result<PerturbRun> {
    validated(&config.spec)?;
    if config.n_intermediate == 0 || config.h0_levels == 0 {
        return Err(Error::Config("n_intermediate and h0_levels must be positive".into()));
    }
    let start = Instant::now();
    let cfg = &config.eigensolver;
    let h0 = h0_structure(&config.spec, config.h0_levels.max(config.n_intermediate), cfg)?;
    let gaps: Vec<f64> = h0.gaps().into_iter().take(config.h0_levels).collect();
    let mut notes = Vec::new();
    let effective = if h0.has_pin_doublet() {
        Some(effective_hamiltonian(&config.spec, config.n_intermediate, cfg)?)
    } else {
        notes.push(format!(
            "unpinned ground multiplet has {} states; no pin doublet to project on",
            h0.multiplets[0].levels.len()
        ));
        None
    };
    let comparison = match (config.compare_exact, &effective) {
        (true, Some(_)) => Some(compare_with_exact(&config.spec, cfg)?),
        _ => None,
    };
    Ok(PerturbRun {
        config_hash: config_hash(config)?,
        config: config.clone(),
        h0,
        gaps,
        effective,
        comparison,
        notes,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

fn default_trend_tol() -> f64 {
    1e-12
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassicalConfig {
    #[serde(default)]
    pub spec: LatticeSpec,
    /// Vortex positions to evaluate; defaults to bond midpoints approaching the first pin.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<Vec<(f64, f64)>>,
    #[serde(default = "default_trend_tol")]
    pub trend_tol: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassicalRun {
    pub config_hash: String,
    pub config: ClassicalConfig,
    pub profile: Vec<ProfilePoint>,
    pub trend: Trend,
}

pub fn run_classical(config: &ClassicalConfig) -> Result<ClassicalRun> {
    validated(&config.spec)?;
    let path = config.path.clone().unwrap_or_else(|| default_path(&config.spec));
    if path.is_empty() {
        return Err(Error::Config("empty vortex path".into()));
    }
    let profile = pinning_energy_profile(&config.spec, &path).map_err(|e| Error::Config(e.to_string()))?;
    Ok(ClassicalRun {
        config_hash: config_hash(config)?,
        config: config.clone(),
        trend: trend(&profile, config.trend_tol),
        profile,
    })
}
