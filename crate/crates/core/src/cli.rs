//! Command-line interface.
//!
//! Exit status is 0 when every requested output was produced and every check
//! passed, 1 when a check failed (such as the oracle gate), and 2 on errors.

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::{ExperimentConfig, PolicyMode};
use crate::error::{Error, Result};
use crate::harness::{self, oracle_gap};
use crate::population::Scenario;

pub const THREADS_ENV: &str = "NUDGECAST_THREADS";
pub const ORACLE_RUNS: usize = 20_000;
pub const ORACLE_TOLERANCE: f64 = 0.02;

#[derive(Debug, Parser)]
#[command(
    name = "nudgecast",
    version,
    about = "Innovation diffusion with fairness-aware nudging"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the Monte Carlo experiment and write result files.
    Simulate(Overrides),
    /// Compare Monte Carlo adoption with the exact chain on a small graph.
    Oracle {
        #[command(flatten)]
        overrides: Overrides,
        /// Largest allowed gap at any step.
        #[arg(long, default_value_t = ORACLE_TOLERANCE)]
        tolerance: f64,
    },
    /// Tabulate several scenario/policy combinations on paired seeds.
    Compare(CompareArgs),
    /// Check a config and its inputs without running or writing anything.
    Validate(Overrides),
}

/// Values that take precedence over the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// Experiment config (TOML); built-in defaults when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub runs: Option<usize>,
    #[arg(long)]
    pub scenario: Option<Scenario>,
    #[arg(long)]
    pub policy: Option<PolicyMode>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl Overrides {
    pub fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        self.apply(&mut cfg);
        Ok(cfg)
    }

    pub fn apply(&self, cfg: &mut ExperimentConfig) {
        if let Some(seed) = self.seed {
            cfg.base_seed = seed;
        }
        if let Some(runs) = self.runs {
            cfg.runs = runs;
        }
        if let Some(scenario) = self.scenario {
            cfg.scenario = scenario;
        }
        if let Some(policy) = self.policy {
            cfg.policy = policy;
        }
        if let Some(out) = &self.out {
            cfg.output = out.clone();
        }
    }
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Config files to compare; repeat the flag for each.
    #[arg(long = "config")]
    pub configs: Vec<PathBuf>,
    /// Scenarios to sweep over each config.
    #[arg(long = "scenario")]
    pub scenarios: Vec<Scenario>,
    /// Policy modes to sweep over each config.
    #[arg(long = "policy")]
    pub policies: Vec<PolicyMode>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub runs: Option<usize>,
    /// Also write the table as JSON here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl CompareArgs {
    /// Every config crossed with the requested scenarios and policies.
    pub fn expand(&self) -> Result<Vec<ExperimentConfig>> {
        let mut base = Vec::new();
        if self.configs.is_empty() {
            base.push(ExperimentConfig::default());
        }
        for path in &self.configs {
            base.push(ExperimentConfig::load(path)?);
        }
        let mut out = Vec::new();
        for cfg in base {
            let scenarios = if self.scenarios.is_empty() {
                vec![cfg.scenario]
            } else {
                self.scenarios.clone()
            };
            let policies = if self.policies.is_empty() {
                vec![cfg.policy]
            } else {
                self.policies.clone()
            };
            for &scenario in &scenarios {
                for &policy in &policies {
                    let mut c = ExperimentConfig {
                        scenario,
                        policy,
                        ..cfg.clone()
                    };
                    if let Some(seed) = self.seed {
                        c.base_seed = seed;
                    }
                    if let Some(runs) = self.runs {
                        c.runs = runs;
                    }
                    out.push(c);
                }
            }
        }
        Ok(out)
    }
}

/// Run-level thread cap from the environment.
pub fn threads_from_env() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Some(n)),
            _ => Err(Error::Config(format!(
                "{THREADS_ENV} must be a positive integer, got `{v}`"
            ))),
        },
        Err(_) => Ok(None),
    }
}

/// Executes a parsed command, writing reports to `out`. Returns the exit status.
pub fn execute(cli: &Cli, out: &mut dyn Write) -> Result<i32> {
    let threads = threads_from_env()?;
    let io = |e| Error::io("writing report", e);
    match &cli.command {
        Command::Simulate(ov) => {
            let cfg = ov.load()?;
            let result = harness::run_experiment(&cfg, threads)?;
            harness::write_results(&result, &cfg.output)?;
            let warnings: usize = result.runs.iter().map(|r| r.solver_warnings).sum();
            writeln!(
                out,
                "{}: {} runs, gamma(T) = {:.4} +/- {:.4}, results in {}",
                cfg.label(),
                cfg.runs,
                result.final_gamma_mean(),
                result.final_gamma_std(),
                cfg.output.display()
            )
            .map_err(io)?;
            if warnings > 0 {
                writeln!(out, "warning: {warnings} controller steps did not certify").map_err(io)?;
            }
            Ok(0)
        }
        Command::Oracle { overrides, tolerance } => {
            let mut cfg = overrides.load()?;
            if overrides.runs.is_none() {
                cfg.runs = ORACLE_RUNS;
            }
            if cfg.policy != PolicyMode::None {
                return Err(Error::Config(format!(
                    "the oracle compares zero-policy runs; set policy = \"none\" (got {})",
                    cfg.policy
                )));
            }
            let (net, params) = harness::prepare(&cfg)?;
            let report = oracle_gap(&net, &params, cfg.horizon, cfg.eps, cfg.runs, cfg.base_seed, *tolerance)?;
            writeln!(out, "{:>4} {:>12} {:>12} {:>10}", "t", "exact", "monte carlo", "gap").map_err(io)?;
            for t in 0..report.exact.len() {
                writeln!(
                    out,
                    "{:>4} {:>12.6} {:>12.6} {:>10.6}",
                    t, report.exact[t], report.monte_carlo[t], report.gaps[t]
                )
                .map_err(io)?;
            }
            let verdict = if report.passed() { "PASS" } else { "FAIL" };
            writeln!(
                out,
                "{verdict}: max gap {:.6} over {} runs (tolerance {})",
                report.max_gap(),
                report.runs,
                tolerance
            )
            .map_err(io)?;
            Ok(if report.passed() { 0 } else { 1 })
        }
        Command::Compare(args) => {
            let configs = args.expand()?;
            let rows = harness::compare_experiments(&configs, threads)?;
            write!(out, "{}", harness::format_comparison(&rows)).map_err(io)?;
            if let Some(path) = &args.out {
                let json = serde_json::to_string_pretty(&rows)?;
                std::fs::write(path, json).map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
            }
            Ok(0)
        }
        Command::Validate(ov) => {
            let cfg = ov.load()?;
            let (net, params) = harness::prepare(&cfg)?;
            let seeds = params.iter().filter(|p| p.is_seed).count();
            writeln!(
                out,
                "ok: {}, {} agents ({} seeds), {} edges, T = {}, {} runs",
                cfg.label(),
                net.n_agents(),
                seeds,
                net.n_edges(),
                cfg.horizon,
                cfg.runs
            )
            .map_err(io)?;
            Ok(0)
        }
    }
}

/// Parses `args`, runs the command and maps errors to exit status 2.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = write!(err, "{}", e.render());
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            2
        }
    }
}
