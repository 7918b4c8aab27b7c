//! Parameter sweeps and vorticity runs.
//!
//! Points are independent: each one builds and owns its matrix and solver
//! state, so the rayon schedule cannot change any record. Overlaps between
//! neighbouring ground states are computed afterwards in parameter order.

use std::fmt::Write as _;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::eig::{dot, EigenSolution, EigensolverConfig};
use crate::error::{Error, Result};
use crate::lattice::{LatticeSpec, OnSite};
use crate::model::Model;
use crate::observables::{
    background_vorticity, correlation, eof, fidelity, phase_law_parity, phase_law_residual, two_site_rdm,
    vorticity_map, VorticityMap,
};
use crate::C64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    NPhi,
    JPin,
    U,
    V,
}

impl SweepVariable {
    pub fn apply(self, base: &LatticeSpec, value: f64) -> LatticeSpec {
        let mut s = base.clone();
        match self {
            SweepVariable::NPhi => s.n_phi = value,
            SweepVariable::JPin => s.j_pin = value,
            SweepVariable::U => s.u = OnSite::Finite(value),
            SweepVariable::V => s.v = value,
        }
        s
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Observable {
    Energy,
    Gap,
    Correlation,
    Fidelity,
    Eof,
    Vorticity,
    Overlap,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
    Json,
    #[default]
    Both,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputSpec {
    pub path: std::path::PathBuf,
    #[serde(default)]
    pub format: OutputFormat,
}

/// Raise `n_max` from `start` until the ground energy moves by less than `tol`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NmaxConvergence {
    pub start: usize,
    pub max: usize,
    pub tol: f64,
}

impl Default for NmaxConvergence {
    fn default() -> Self {
        NmaxConvergence { start: 4, max: 8, tol: 1e-8 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub base: LatticeSpec,
    pub sweep_variable: SweepVariable,
    pub values: Vec<f64>,
    pub observables: Vec<Observable>,
    #[serde(default)]
    pub eigensolver: EigensolverConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputSpec>,
    /// Soft-core only; `None` keeps `base.n_max`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_max_convergence: Option<NmaxConvergence>,
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::Config("sweep values are empty".into()));
        }
        if let Some(v) = self.values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Config(format!("non-finite sweep value {v}")));
        }
        if self.observables.is_empty() {
            return Err(Error::Config("no observables requested".into()));
        }
        if self.eigensolver.k == 0 || !(self.eigensolver.tol > 0.0) {
            return Err(Error::Config("eigensolver needs k >= 1 and tol > 0".into()));
        }
        for &v in &self.values {
            self.sweep_variable.apply(&self.base, v).validate().map_err(|e| Error::Config(e.to_string()))?;
        }
        Ok(())
    }

    pub fn wants(&self, o: Observable) -> bool {
        self.observables.contains(&o)
    }

    /// Points in ascending parameter order.
    pub fn sorted_values(&self) -> Vec<f64> {
        let mut v = self.values.clone();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v
    }
}

/// SHA-256 of the canonical JSON form (object keys sorted).
pub fn config_hash<T: Serialize>(config: &T) -> Result<String> {
    let value = serde_json::to_value(config)?;
    let canonical = serde_json::to_string(&value)?;
    let digest = Sha256::digest(canonical.as_bytes());
    Ok(digest.iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    }))
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PointRecord {
    pub parameter: f64,
    pub n_phi: f64,
    pub e0: Option<f64>,
    pub gap: Option<f64>,
    pub corr_abs: Option<f64>,
    pub corr_arg: Option<f64>,
    pub phase_law_residual: Option<f64>,
    pub fidelity: Option<f64>,
    pub eof: Option<f64>,
    pub degenerate: bool,
    pub ground_degeneracy: usize,
    /// Largest singular value of the overlap between this ground manifold and the previous point's.
    pub overlap_prev: Option<f64>,
    pub n_max: usize,
    pub max_residual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vorticity: Option<VorticityMap>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl PointRecord {
    pub fn corr(&self) -> Option<C64> {
        Some(C64::from_polar(self.corr_abs?, self.corr_arg?))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub config_hash: String,
    pub config: SweepConfig,
    pub records: Vec<PointRecord>,
    pub wall_time_s: f64,
}

impl SweepResult {
    pub fn failures(&self) -> usize {
        self.records.iter().filter(|r| r.error.is_some()).count()
    }

    /// Fixed column order: parameter, E0, gap, corr_abs, corr_arg, fidelity, eof, degenerate_flag.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("parameter,E0,gap,corr_abs,corr_arg,fidelity,eof,degenerate_flag\n");
        let f = |x: Option<f64>| x.map(|v| format!("{v:.12e}")).unwrap_or_default();
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.parameter,
                f(r.e0),
                f(r.gap),
                f(r.corr_abs),
                f(r.corr_arg),
                f(r.fidelity),
                f(r.eof),
                u8::from(r.degenerate)
            );
        }
        out
    }

    /// Same records with wall time zeroed, for reproducibility comparisons.
    pub fn without_timing(&self) -> Self {
        SweepResult { wall_time_s: 0.0, ..self.clone() }
    }
}

/// Ground-state solve with optional `n_max` convergence for soft-core specs.
pub fn solve_converged(
    spec: &LatticeSpec,
    cfg: &EigensolverConfig,
    conv: Option<&NmaxConvergence>,
) -> Result<(Model, EigenSolution)> {
    let Some(conv) = conv.filter(|_| !spec.is_hard_core()) else {
        let model = Model::new(spec.clone())?;
        let sol = model.solve(cfg)?;
        return Ok((model, sol));
    };
    let mut prev: Option<(Model, EigenSolution)> = None;
    let cap = conv.max.min(spec.n_particles).max(conv.start);
    for n_max in conv.start..=cap {
        let model = Model::new(LatticeSpec { n_max, ..spec.clone() })?;
        let sol = match &prev {
            // The previous ground state is an excellent start: occupations above
            // the old cap carry little weight.
            Some((pm, ps)) => model.solve_from(cfg, &model.embed_from(&pm.basis, &ps.vectors[0]))?,
            None => model.solve(cfg)?,
        };
        if let Some((_, p)) = &prev {
            if (p.ground_energy() - sol.ground_energy()).abs() < conv.tol {
                return Ok((model, sol));
            }
        }
        // n_max = N is the unrestricted space; nothing further to add.
        if n_max >= spec.n_particles {
            return Ok((model, sol));
        }
        prev = Some((model, sol));
    }
    log::warn!("n_max did not converge to {} by n_max = {cap}", conv.tol);
    Ok(prev.expect("at least one n_max solved"))
}

struct PointOutcome {
    record: PointRecord,
    ground: Vec<Vec<C64>>,
}

fn measure(config: &SweepConfig, value: f64) -> PointOutcome {
    let spec = config.sweep_variable.apply(&config.base, value);
    let mut record = PointRecord { parameter: value, n_phi: spec.n_phi, n_max: spec.n_max, ..Default::default() };
    match measure_inner(config, &spec, &mut record) {
        Ok(ground) => PointOutcome { record, ground },
        Err(e) => {
            record.error = Some(e.to_string());
            PointOutcome { record, ground: Vec::new() }
        }
    }
}

fn measure_inner(config: &SweepConfig, spec: &LatticeSpec, record: &mut PointRecord) -> Result<Vec<Vec<C64>>> {
    let (model, sol) = solve_converged(spec, &config.eigensolver, config.n_max_convergence.as_ref())?;
    let ground = sol.ground_manifold();
    let [s1, s2] = spec.pin_sites;
    record.n_max = model.spec().n_max;
    record.e0 = Some(sol.ground_energy());
    record.gap = sol.gap();
    record.ground_degeneracy = sol.ground_degeneracy();
    record.degenerate = sol.ground_degeneracy() > 1;
    record.max_residual = sol.residuals.iter().copied().reduce(f64::max);
    let wants_corr = config.wants(Observable::Correlation) || config.wants(Observable::Fidelity);
    if wants_corr {
        let c = correlation(&model.basis, &ground, s1, s2);
        record.corr_abs = Some(c.norm());
        record.corr_arg = Some(c.arg());
        record.phase_law_residual = phase_law_residual(c, spec.n_phi).ok();
    }
    if model.basis.is_hard_core() && (config.wants(Observable::Fidelity) || config.wants(Observable::Eof)) {
        let rdm = two_site_rdm(&model.basis, &ground, s1, s2)?;
        if config.wants(Observable::Fidelity) {
            record.fidelity = Some(fidelity(&rdm, rdm.coherence().arg()));
        }
        if config.wants(Observable::Eof) {
            record.eof = Some(eof(&rdm));
        }
    }
    if config.wants(Observable::Vorticity) {
        record.vorticity = Some(vorticity_map(&model.lattice, &model.basis, &ground));
    }
    if !config.wants(Observable::Energy) {
        record.e0 = None;
    }
    if !config.wants(Observable::Gap) {
        record.gap = None;
    }
    Ok(ground.iter().map(|v| v.to_vec()).collect())
}

/// Largest singular value of `<a_i|b_j>`; the phase-aligned overlap for
/// nondegenerate states.
pub fn manifold_overlap(a: &[Vec<C64>], b: &[Vec<C64>]) -> Option<f64> {
    if a.is_empty() || b.is_empty() || a[0].len() != b[0].len() {
        return None;
    }
    let m = nalgebra::DMatrix::from_fn(a.len(), b.len(), |i, j| dot(&a[i], &b[j]));
    m.singular_values().iter().copied().reduce(f64::max)
}

pub fn run_sweep(config: &SweepConfig) -> Result<SweepResult> {
    config.validate()?;
    let start = Instant::now();
    let values = config.sorted_values();
    let outcomes: Vec<PointOutcome> = values.par_iter().map(|&v| measure(config, v)).collect();
    let mut records: Vec<PointRecord> = Vec::with_capacity(outcomes.len());
    for (i, o) in outcomes.iter().enumerate() {
        let mut r = o.record.clone();
        if config.wants(Observable::Overlap) && i > 0 {
            r.overlap_prev = manifold_overlap(&outcomes[i - 1].ground, &o.ground);
        }
        records.push(r);
    }
    Ok(SweepResult {
        config_hash: config_hash(config)?,
        config: config.clone(),
        records,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

/// A change of the phase-law integer `m` between neighbouring samples.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Jump {
    pub location: f64,
    pub lo: f64,
    pub hi: f64,
    pub overlap: Option<f64>,
    /// Smaller of the two gaps at the bracketing samples.
    pub gap: Option<f64>,
}

/// Jumps in `m` along ordered records, located at the midpoint of the bracketing samples.
pub fn detect_jumps(records: &[PointRecord]) -> Vec<Jump> {
    let parity = |r: &PointRecord| r.corr().and_then(|c| phase_law_parity(c, r.n_phi));
    let usable: Vec<(&PointRecord, u8)> = records.iter().filter_map(|r| parity(r).map(|p| (r, p))).collect();
    usable
        .windows(2)
        .filter(|w| w[0].1 != w[1].1)
        .map(|w| {
            let (a, b) = (w[0].0, w[1].0);
            let gap = match (a.gap, b.gap) {
                (Some(x), Some(y)) => Some(x.min(y)),
                (x, y) => x.or(y),
            };
            Jump { location: 0.5 * (a.parameter + b.parameter), lo: a.parameter, hi: b.parameter, overlap: b.overlap_prev, gap }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VorticityConfig {
    pub specs: Vec<LatticeSpec>,
    /// Pinning strength of the reference run whose far-from-pin mean is subtracted.
    #[serde(default = "default_background_j_pin")]
    pub background_j_pin: f64,
    #[serde(default)]
    pub eigensolver: EigensolverConfig,
}

fn default_background_j_pin() -> f64 {
    0.1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VorticityResult {
    pub spec: LatticeSpec,
    pub ground_degeneracy: usize,
    pub raw: VorticityMap,
    pub background: f64,
    pub subtracted: VorticityMap,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VorticityRun {
    pub config_hash: String,
    pub config: VorticityConfig,
    pub results: Vec<std::result::Result<VorticityResult, String>>,
    pub wall_time_s: f64,
}

fn raw_map(spec: &LatticeSpec, cfg: &EigensolverConfig) -> Result<(VorticityMap, usize, Model)> {
    let model = Model::new(spec.clone())?;
    let sol = model.solve(cfg)?;
    let map = vorticity_map(&model.lattice, &model.basis, &sol.ground_manifold());
    Ok((map, sol.ground_degeneracy(), model))
}

/// Background from the strongly pinned reference at the same flux.
pub fn background_for(spec: &LatticeSpec, background_j_pin: f64, cfg: &EigensolverConfig) -> Result<f64> {
    let reference = LatticeSpec { j_pin: background_j_pin, ..spec.clone() };
    let (map, _, model) = raw_map(&reference, cfg)?;
    Ok(background_vorticity(&map, &model.lattice))
}

pub fn vorticity_for(spec: &LatticeSpec, background: f64, cfg: &EigensolverConfig) -> Result<VorticityResult> {
    let (raw, deg, _) = raw_map(spec, cfg)?;
    let subtracted = raw.subtract(background);
    Ok(VorticityResult { spec: spec.clone(), ground_degeneracy: deg, raw, background, subtracted })
}

pub fn run_vorticity(config: &VorticityConfig) -> Result<VorticityRun> {
    if config.specs.is_empty() {
        return Err(Error::Config("no specs given".into()));
    }
    for s in &config.specs {
        s.validate().map_err(|e| Error::Config(e.to_string()))?;
    }
    let start = Instant::now();
    let results = config
        .specs
        .par_iter()
        .map(|s| {
            background_for(s, config.background_j_pin, &config.eigensolver)
                .and_then(|bg| vorticity_for(s, bg, &config.eigensolver))
                .map_err(|e| e.to_string())
        })
        .collect();
    Ok(VorticityRun {
        config_hash: config_hash(config)?,
        config: config.clone(),
        results,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_base() -> LatticeSpec {
        LatticeSpec { nx: 4, ny: 2, n_particles: 4, pin_sites: [0, 6], ..LatticeSpec::default() }
    }

    fn config(values: Vec<f64>) -> SweepConfig {
        SweepConfig {
            base: small_base(),
            sweep_variable: SweepVariable::NPhi,
            values,
            observables: vec![
                Observable::Energy,
                Observable::Gap,
                Observable::Correlation,
                Observable::Fidelity,
                Observable::Eof,
                Observable::Overlap,
            ],
            eigensolver: EigensolverConfig::default(),
            output: None,
            n_max_convergence: None,
        }
    }

    #[test]
    fn records_are_ordered_and_reproducible() {
        let cfg = config(vec![0.6, 0.2, 0.4]);
        let a = run_sweep(&cfg).unwrap();
        let params: Vec<f64> = a.records.iter().map(|r| r.parameter).collect();
        assert_eq!(params, vec![0.2, 0.4, 0.6]);
        assert!(a.records[0].overlap_prev.is_none());
        assert!(a.records[1].overlap_prev.unwrap() > 0.5);
        let b = run_sweep(&cfg).unwrap();
        let ser = |r: &SweepResult| serde_json::to_string(&r.without_timing()).unwrap();
        assert_eq!(ser(&a), ser(&b));
        let serial = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(|| run_sweep(&cfg).unwrap());
        assert_eq!(ser(&a), ser(&serial));
    }

    #[test]
    fn csv_columns() {
        let r = run_sweep(&config(vec![0.3])).unwrap();
        let csv = r.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "parameter,E0,gap,corr_abs,corr_arg,fidelity,eof,degenerate_flag");
        assert_eq!(lines.next().unwrap().split(',').count(), 8);
    }

    #[test]
    fn validation_and_hash() {
        assert!(config(vec![]).validate().is_err());
        assert!(config(vec![f64::NAN]).validate().is_err());
        let mut bad = config(vec![0.1]);
        bad.base.pin_sites = [0, 0];
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
        let h1 = config_hash(&config(vec![0.1])).unwrap();
        let h2 = config_hash(&config(vec![0.1])).unwrap();
        let h3 = config_hash(&config(vec![0.2])).unwrap();
        assert_eq!(h1, h2);
        assert_ne!(h1, h3);
        assert_eq!(h1.len(), 64);
    }

    #[test]
    fn per_point_errors_are_recorded() {
        // A basis over the dimension limit fails that point only.
        let mut cfg = config(vec![0.5]);
        cfg.base = LatticeSpec { n_particles: 16, u: OnSite::Finite(1.0), n_max: 15, ..LatticeSpec::default() };
        let r = run_sweep(&cfg).unwrap();
        assert_eq!(r.failures(), 1);
        assert!(r.records[0].e0.is_none());
    }

    #[test]
    fn jump_detection() {
        let rec = |p: f64, c: C64| PointRecord {
            parameter: p,
            n_phi: p,
            corr_abs: Some(c.norm()),
            corr_arg: Some(c.arg()),
            gap: Some(0.1),
            ..Default::default()
        };
        let law = |p: f64, m: f64| C64::from_polar(0.25, std::f64::consts::PI * (p / 2.0 + m));
        let records = vec![rec(0.70, law(0.70, 0.0)), rec(0.71, law(0.71, 0.0)), rec(0.72, law(0.72, 1.0)), rec(0.73, law(0.73, 1.0))];
        let jumps = detect_jumps(&records);
        assert_eq!(jumps.len(), 1);
        assert!((jumps[0].location - 0.715).abs() < 1e-12);
        // A vanishing correlation carries no phase and is skipped.
        let records = vec![rec(0.1, law(0.1, 0.0)), rec(0.2, C64::new(0.0, 0.0)), rec(0.3, law(0.3, 0.0))];
        assert!(detect_jumps(&records).is_empty());
    }

    #[test]
    fn soft_core_convergence_stops_at_particle_number() {
        let spec = LatticeSpec { nx: 2, ny: 2, n_particles: 2, u: OnSite::Finite(2.0), n_max: 2, pin_sites: [0, 3], ..LatticeSpec::default() };
        let conv = NmaxConvergence { start: 1, max: 8, tol: 1e-12 };
        let (model, _) = solve_converged(&spec, &EigensolverConfig::default(), Some(&conv)).unwrap();
        assert!(model.spec().n_max <= 2);
    }
}
