use anyhow::{anyhow, Result};
use clap::{Args, Parser, Subcommand};
use levyfront::pipeline::{regrade as regrade_run, run_stages, ExperimentConfig, RunManifest, Stage};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "levyfront",
    version,
    about = "Front propagation for nonlocal KPP equations with heavy-tailed kernels"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the problem's structural assumptions.
    Validate(Common),
    /// Principal periodic eigenpair.
    Eigen(Common),
    /// Positive periodic steady state.
    Steady(Common),
    /// Cauchy problem on the truncated line.
    Evolve(Common),
    /// Level-set radii, rate fits and rescaled profiles.
    Front(Common),
    /// Decay constant, barrier sandwich and residual checks.
    Bounds(Common),
    /// Every stage followed by the report.
    Run(Common),
    /// Re-grade an existing run directory and rewrite its report.
    Report(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; defaults to the config's `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for the data-parallel kernels.
    #[arg(long)]
    threads: Option<usize>,
}

enum Outcome {
    Pass,
    AcceptanceFailure,
}

fn init_threads(threads: Option<usize>) -> Result<()> {
    let Some(n) = threads else { return Ok(()) };
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| anyhow!("building the thread pool: {e}"))?;
    #[cfg(not(feature = "parallel"))]
    log::warn!("--threads {n} ignored: built without the parallel feature");
    Ok(())
}

fn execute(cmd: Command) -> Result<Outcome> {
    let (stage, common) = match cmd {
        Command::Validate(c) => (Stage::Validate, c),
        Command::Eigen(c) => (Stage::Eigen, c),
        Command::Steady(c) => (Stage::Steady, c),
        Command::Evolve(c) => (Stage::Evolve, c),
        Command::Front(c) => (Stage::Fronts, c),
        Command::Bounds(c) => (Stage::Bounds, c),
        Command::Run(c) => (Stage::Report, c),
        Command::Report(c) => return regrade(c),
    };
    init_threads(common.threads)?;
    let (cfg, out) = setup(&common)?;
    let manifest = run_stages(&cfg, &out, stage)?;
    log::info!("manifest written to {}", out.join("manifest.json").display());
    Ok(outcome(&manifest))
}

fn setup(common: &Common) -> Result<(ExperimentConfig, PathBuf)> {
    let mut cfg = ExperimentConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    let out = common
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .ok_or_else(|| anyhow!("no output directory: pass --out or set output_dir"))?;
    Ok((cfg, out))
}

fn regrade(common: Common) -> Result<Outcome> {
    let (_, out) = setup(&common)?;
    Ok(outcome(&regrade_run(&out)?))
}

fn outcome(manifest: &RunManifest) -> Outcome {
    let Some(v) = &manifest.verdict else { return Outcome::Pass };
    for r in &v.rows {
        println!("{:<20} {:<8} {} ({})", r.id, format!("{:?}", r.status).to_uppercase(), r.value, r.threshold);
    }
    if v.passed {
        println!("verdict: PASS");
        Outcome::Pass
    } else {
        println!("verdict: FAIL");
        Outcome::AcceptanceFailure
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("LEVYFRONT_LOG", "info")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(Outcome::Pass) => ExitCode::SUCCESS,
        Ok(Outcome::AcceptanceFailure) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn command_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn out_falls_back_to_the_config() {
        let cli = Cli::try_parse_from(["levyfront", "run", "--config", "c.json", "--threads", "2"]).unwrap();
        let Command::Run(c) = cli.command else { panic!("expected run") };
        assert!(c.out.is_none());
        assert_eq!(c.threads, Some(2));
    }
}
