//! Argument parsing and the top-level run.

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use crate::checks::run_checks;
use crate::config::{Check, ConfigError, RunConfig};
use crate::exec::RayonExecutor;
use crate::report::{write_report, Format, Report, Timing};

pub const EXIT_OK: u8 = 0;
pub const EXIT_FAILED: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "stabsphere", version, about = "Stability checks for minimal submanifolds of conformally deformed spheres")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Run configuration (TOML).
    #[arg(long, short, global = true)]
    pub config: Option<PathBuf>,

    /// Output directory for the report.
    #[arg(long, short, global = true, default_value = "out")]
    pub out: PathBuf,

    #[arg(long, global = true, value_enum, default_value = "json")]
    pub format: Format,

    /// Worker threads; 0 means one per logical CPU.
    #[arg(long, global = true, env = "STABSPHERE_THREADS", default_value_t = 0)]
    pub threads: usize,

    /// Overrides the seed in the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Command {
    /// Randomized curvature and transformation identities.
    Identities,
    /// Round and conformal trace theorems at every quadrature node.
    Trace,
    /// Sampled sectional-curvature pinching of the conformal metric.
    Pinching,
    /// The full inequality chain of the nonexistence theorem.
    CheckTheorem,
    /// Finite-difference oracles: divergence identity, curvature, second variation.
    Oracle,
    /// Every check listed in the config (all of them if none are listed).
    All,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Identities => "identities",
            Command::Trace => "trace",
            Command::Pinching => "pinching",
            Command::CheckTheorem => "check-theorem",
            Command::Oracle => "oracle",
            Command::All => "all",
        }
    }

    pub fn checks(self, cfg: &RunConfig) -> Vec<Check> {
        match self {
            Command::Identities => vec![Check::Identities],
            Command::Trace => vec![Check::TraceRound, Check::TraceConformal],
            Command::Pinching => vec![Check::Pinching],
            Command::CheckTheorem => vec![Check::Pinching, Check::Theorem],
            Command::Oracle => vec![Check::Divergence, Check::CurvatureOracle, Check::SecondVariation],
            Command::All => cfg.effective_checks(),
        }
    }
}

/// Loads the config, runs the command and writes the report.
pub fn execute(cli: &Cli) -> Result<Report, ConfigError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| ConfigError::Io("no config file given (use --config)".into()))?;
    let mut cfg = RunConfig::load(path)?;
    if cli.seed.is_some() {
        cfg.seed = cli.seed;
    }
    let checks = cli.command.checks(&cfg);
    let exec = RayonExecutor::new(cli.threads).map_err(|e| ConfigError::Invalid {
        field: "threads",
        message: e.to_string(),
    })?;
    let start = Instant::now();
    let out = run_checks(&exec, &cfg, &checks, cli.command.name())?;
    let timing = Timing {
        threads: exec.threads(),
        total_seconds: start.elapsed().as_secs_f64(),
        checks: out.timings,
    };
    Ok(Report::new(out.body, timing))
}

pub fn main_with<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK });
        }
    };
    let report = match execute(&cli) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    for c in &report.body.checks {
        let detail = c
            .reason
            .clone()
            .or_else(|| {
                let m = if c.name == Check::Theorem.name() {
                    c.metrics.first()
                } else {
                    c.metrics.iter().find(|m| m.tolerance.is_some())
                }?;
                Some(match m.tolerance {
                    Some(t) => format!("{} = {:.3e} (tol {:.1e})", m.name, m.value, t),
                    None => format!("{} = {:.6e}", m.name, m.value),
                })
            })
            .unwrap_or_default();
        println!("{:<18} {:<8} {}", c.name, c.status.as_str(), detail);
    }
    if let Some(v) = &report.body.verdict {
        println!("verdict: {}", v.status);
    }
    println!("fingerprint: {}", report.fingerprint);
    match write_report(&report, &cli.out, cli.format) {
        Ok(files) => {
            for f in files {
                println!("wrote {}", f.display());
            }
        }
        Err(e) => {
            eprintln!("error: cannot write report to {}: {e}", cli.out.display());
            return ExitCode::from(EXIT_FAILED);
        }
    }
    ExitCode::from(if report.passed() { EXIT_OK } else { EXIT_FAILED })
}
