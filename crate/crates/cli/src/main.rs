use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use vortex_core::report::{self, Artifact, ReportConfig};
use vortex_core::sweep::{run_sweep, run_vorticity, OutputFormat, SweepConfig, VorticityConfig};
use vortex_core::tasks::{
    run_classical, run_perturb, run_spinfit, ClassicalConfig, PerturbConfig, SpinfitConfig,
};
use vortex_core::{classical, Error};

#[derive(Parser)]
#[command(name = "vortex", version, about = "Exact diagonalization of pinned vortex pairs in the gauged Bose-Hubbard model")]
struct Cli {
    /// Worker threads; defaults to one per core.
    #[arg(long, global = true, env = "VORTEX_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sweep one parameter and record ground-state observables per point.
    Sweep(RunArgs),
    /// Raw and background-subtracted vorticity maps for a list of specs.
    Vorticity(RunArgs),
    /// Fit the two-vortex spin model to the four lowest levels.
    Spinfit(RunArgs),
    /// Second-order effective Hamiltonian on the pin doublet.
    Perturb(RunArgs),
    /// Classical pinning energy of a single vortex along a path.
    Classical(RunArgs),
    /// Check saved outputs against the reference values.
    Report(ReportArgs),
}

#[derive(Args)]
struct RunArgs {
    /// JSON configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// JSON file with an `inputs` list.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Output files or directories of them, in addition to the config's.
    inputs: Vec<PathBuf>,
}

/// Exit status 2: the run never started.
#[derive(Debug)]
struct ConfigError(anyhow::Error);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:#}", self.0)
    }
}

impl std::error::Error for ConfigError {}

fn config_err(e: impl Into<anyhow::Error>) -> anyhow::Error {
    ConfigError(e.into()).into()
}

fn core_err(e: Error) -> anyhow::Error {
    match e {
        Error::Config(_) | Error::InvalidSpec(_) => config_err(e),
        other => other.into(),
    }
}

fn load<T: DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(config_err)?;
    serde_json::from_str(&text)
        .with_context(|| format!("parsing {}", path.display()))
        .map_err(config_err)
}

fn out_dir(out: Option<&Path>, fallback: Option<&Path>) -> anyhow::Result<PathBuf> {
    let dir = out.or(fallback).map_or_else(|| PathBuf::from("."), Path::to_path_buf);
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn write(path: PathBuf, text: &str) -> anyhow::Result<()> {
    std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    log::info!("wrote {}", path.display());
    Ok(())
}

fn save(artifact: &Artifact, dir: &Path) -> anyhow::Result<()> {
    let path = dir.join(format!("{}.json", artifact.kind()));
    artifact.save(&path).with_context(|| format!("writing {}", path.display()))?;
    log::info!("wrote {}", path.display());
    Ok(())
}

/// Number of failed points.
fn sweep(args: &RunArgs) -> anyhow::Result<usize> {
    let config: SweepConfig = load(&args.config)?;
    config.validate().map_err(core_err)?;
    let format = config.output.as_ref().map(|o| o.format).unwrap_or_default();
    let dir = out_dir(args.out.as_deref(), config.output.as_ref().map(|o| o.path.as_path()))?;
    let result = run_sweep(&config).map_err(core_err)?;
    let failures = result.failures();
    for r in result.records.iter().filter(|r| r.error.is_some()) {
        log::error!("point {}: {}", r.parameter, r.error.as_deref().unwrap_or_default());
    }
    log::info!("{} points, {failures} failed, {:.1} s", result.records.len(), result.wall_time_s);
    if format != OutputFormat::Json {
        write(dir.join("sweep.csv"), &result.to_csv())?;
    }
    if format != OutputFormat::Csv {
        save(&Artifact::Sweep(result), &dir)?;
    }
    Ok(failures)
}

fn vorticity(args: &RunArgs) -> anyhow::Result<usize> {
    let config: VorticityConfig = load(&args.config)?;
    let dir = out_dir(args.out.as_deref(), None)?;
    let run = run_vorticity(&config).map_err(core_err)?;
    let mut failures = 0;
    for (i, res) in run.results.iter().enumerate() {
        match res {
            Ok(v) => {
                write(dir.join(format!("vorticity_{i}_raw.csv")), &v.raw.to_csv())?;
                write(dir.join(format!("vorticity_{i}_subtracted.csv")), &v.subtracted.to_csv())?;
            }
            Err(e) => {
                failures += 1;
                log::error!("spec {i}: {e}");
            }
        }
    }
    save(&Artifact::Vorticity(run), &dir)?;
    Ok(failures)
}

fn spinfit(args: &RunArgs) -> anyhow::Result<usize> {
    let config: SpinfitConfig = load(&args.config)?;
    let dir = out_dir(args.out.as_deref(), None)?;
    let run = run_spinfit(&config).map_err(core_err)?;
    let f = &run.fit;
    println!("|f_xx| = {:.6}  f_zz = {:.6}  c = {:.6}  residual = {:.2e}", f.f_xx_abs, f.f_zz, f.c, f.residual);
    if !f.structure_ok {
        log::warn!("levels do not show the expected pair/doublet structure");
    }
    save(&Artifact::Spinfit(run), &dir)?;
    Ok(0)
}

fn perturb(args: &RunArgs) -> anyhow::Result<usize> {
    let config: PerturbConfig = load(&args.config)?;
    let dir = out_dir(args.out.as_deref(), None)?;
    let run = run_perturb(&config).map_err(core_err)?;
    println!("H0 gaps: {:?}", run.gaps);
    if let Some(e) = &run.effective {
        println!("R = ({:.4e}, {:.4e}, {:.4e}, {:.4e})  theta = {:?}  phi = {:?}", e.r0, e.rx, e.ry, e.rz, e.theta, e.phi);
    }
    if let Some(c) = &run.comparison {
        println!("exact: theta = {:.4}  phi = {:.4}", c.theta_exact, c.phi_exact);
    }
    for n in &run.notes {
        log::warn!("{n}");
    }
    save(&Artifact::Perturb(run), &dir)?;
    Ok(0)
}

fn classical_cmd(args: &RunArgs) -> anyhow::Result<usize> {
    let config: ClassicalConfig = load(&args.config)?;
    let dir = out_dir(args.out.as_deref(), None)?;
    let run = run_classical(&config).map_err(core_err)?;
    println!("trend on approach: {:?}", run.trend);
    write(dir.join("classical.csv"), &classical::profile_csv(&run.profile))?;
    save(&Artifact::Classical(run), &dir)?;
    Ok(0)
}

fn report_cmd(args: &ReportArgs) -> anyhow::Result<usize> {
    let mut inputs = match &args.config {
        Some(p) => load::<ReportConfig>(p)?.inputs,
        None => Vec::new(),
    };
    inputs.extend(args.inputs.iter().cloned());
    let dir = out_dir(args.out.as_deref(), None)?;
    let rep = report::run_report(&inputs);
    let md = rep.to_markdown();
    print!("{md}");
    write(dir.join("report.md"), &md)?;
    write(dir.join("report.json"), &serde_json::to_string_pretty(&rep)?)?;
    for w in &rep.warnings {
        log::warn!("{w}");
    }
    Ok(rep.failed() + rep.file_errors.len())
}

fn run(cli: &Cli) -> anyhow::Result<usize> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(config_err(anyhow!("--threads must be positive")));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match &cli.command {
        Command::Sweep(a) => sweep(a),
        Command::Vorticity(a) => vorticity(a),
        Command::Spinfit(a) => spinfit(a),
        Command::Perturb(a) => perturb(a),
        Command::Classical(a) => classical_cmd(a),
        Command::Report(a) => report_cmd(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(0) => ExitCode::SUCCESS,
        Ok(_) => ExitCode::from(1),
        Err(e) if e.is::<ConfigError>() => {
            log::error!("{e:#}");
            ExitCode::from(2)
        }
        Err(e) => {
            log::error!("{e:#}");
            ExitCode::from(1)
        }
    }
}
