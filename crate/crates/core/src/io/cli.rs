//! Command-line entry point.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::error::{Error, Result};
use crate::io::log::{write_plot_data, write_run_log};
use crate::io::scenario::{parse_scenario_with_defaults, Scenario};
use crate::planner::SolveStatus;
use crate::sim::{self, RunLog};

#[derive(Debug, Parser)]
#[command(name = "dztrack", version, about = "Risk-aware multi-robot target tracking simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a scenario and write its logs.
    Run {
        scenario: PathBuf,
        /// Output directory; variants get one subdirectory each.
        #[arg(long)]
        out: PathBuf,
        /// Overrides the scenario's master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the number of steps.
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Parse and validate a scenario.
    Validate { scenario: PathBuf },
    /// Re-run a scenario with many MC samples per step and compare the
    /// worst step against the risk bounds.
    RiskCheck {
        scenario: PathBuf,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
    },
    /// Derive per-figure series from a run directory.
    Plotdata { logdir: PathBuf },
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_IO: i32 = 2;

/// Exit code for an error: 2 for I/O failures, 1 for everything else.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Io { .. } => EXIT_IO,
        _ => EXIT_INVALID,
    }
}

/// Runs the CLI on `args` (including the program name) and returns the
/// process exit code.
pub fn cli_main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn load(path: &Path) -> Result<(Scenario, Vec<String>)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_scenario_with_defaults(&text)
}

fn dispatch(command: Command) -> Result<i32> {
    match command {
        Command::Validate { scenario } => {
            let (s, applied) = load(&scenario)?;
            let variants = s.expand_variants()?;
            println!("{}: ok ({} variant(s), digest {})", scenario.display(), variants.len(), s.digest());
            for a in applied {
                println!("  default {a}");
            }
            Ok(EXIT_OK)
        }
        Command::Run {
            scenario,
            out,
            seed,
            steps,
        } => {
            let (mut s, mut applied) = load(&scenario)?;
            if let Some(seed) = seed {
                s.master_seed = seed;
                applied.retain(|a| !a.starts_with("master_seed"));
            }
            if let Some(steps) = steps {
                s.steps = steps;
                applied.retain(|a| !a.starts_with("dynamics.steps"));
            }
            s.validate()?;
            let many = !s.variants.is_empty();
            for v in s.expand_variants()? {
                let dir = if many {
                    out.join(v.name.rsplit('/').next().unwrap_or(&v.name))
                } else {
                    out.clone()
                };
                let log = sim::run(&v)?;
                write_run_log(&log, &dir, &v.to_toml(), &applied)?;
                println!("{}: {} steps -> {}", v.name, log.records.len(), dir.display());
            }
            Ok(EXIT_OK)
        }
        Command::RiskCheck { scenario, samples } => {
            if samples == 0 {
                return Err(Error::validation("--samples", "must be at least 1"));
            }
            let (mut s, _) = load(&scenario)?;
            s.mc_samples = samples;
            let mut sound = true;
            for v in s.expand_variants()? {
                let log = sim::run(&v)?;
                sound &= report_risk(&v, &log, samples);
            }
            Ok(if sound { EXIT_OK } else { EXIT_INVALID })
        }
        Command::Plotdata { logdir } => {
            for path in write_plot_data(&logdir)? {
                println!("{}", path.display());
            }
            Ok(EXIT_OK)
        }
    }
}

/// `eps` plus three binomial standard errors at `n` samples.
pub fn risk_bound(eps: f64, n: usize) -> f64 {
    eps + 3.0 * (eps * (1.0 - eps) / n as f64).sqrt()
}

fn report_risk(s: &Scenario, log: &RunLog, n: usize) -> bool {
    let audited: Vec<_> = log
        .records
        .iter()
        .filter(|r| r.solver_status == SolveStatus::Converged)
        .collect();
    let mut ok = true;
    let mut line = format!("{}: {} of {} steps converged", s.name, audited.len(), log.records.len());
    if !s.sensing_zones.is_empty() {
        let worst = audited.iter().map(|r| r.sensing_risk).fold(0.0, f64::max);
        let bound = risk_bound(s.risk.eps1, n);
        ok &= worst <= bound;
        line += &format!("; max sensing risk {worst} (bound {bound})");
    }
    if !s.comm_zones.is_empty() {
        let worst = audited.iter().map(|r| r.jamming_risk).fold(0.0, f64::max);
        let bound = risk_bound(s.risk.eps2, n);
        ok &= worst <= bound;
        line += &format!("; max jamming risk {worst} (bound {bound})");
    }
    println!("{line}; {}", if ok { "PASS" } else { "FAIL" });
    ok
}
