//! Monte Carlo experiments: closed-loop runs, aggregation, and outputs.
//!
//! Each step of a run computes the policy, lowers the non-adopters'
//! reluctances, then runs one cascade step with fresh thresholds. Run seeds
//! derive from the base seed and the run index, and model parameters come from
//! a separate stream of the base seed, so every run of an experiment (and every
//! experiment sharing a base seed) sees the same population.

mod oracle;
mod output;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::control::{MpcConfig, MpcController, SolveStatus};
use crate::diffusion::{cascade_step, update_reluctance};
use crate::error::{Error, Result};
use crate::graph::SocialNetwork;
use crate::population::{build_population, init_state, AgentParams};
use crate::seeds;

pub use oracle::{exact_markov_oracle, oracle_gap, OracleReport, MAX_ORACLE_AGENTS};
pub use output::{
    read_summary, summary_to_json, write_results, Summary, ADOPTION_FILE, HEATMAP_FILE, POLICY_FILE, SUMMARY_FILE,
};

/// Policy source for a run.
#[derive(Debug, Clone, PartialEq)]
pub enum Policy {
    /// No intervention.
    None,
    /// Receding-horizon controller.
    Mpc(MpcConfig),
    /// Fixed schedule `u[t][v]`; adopters are skipped.
    OpenLoop(Vec<Vec<f64>>),
}

/// Trajectory of one Monte Carlo run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub seed: u64,
    /// Adoption rate for `t = 0..=T`.
    pub gamma: Vec<f64>,
    /// `policy_matrix[t][v]` for `t = 0..T`.
    pub policy_matrix: Vec<Vec<f64>>,
    /// `rho_matrix[t][v]` for `t = 0..=T`.
    pub rho_matrix: Vec<Vec<f64>>,
    /// `adopted[t][v]` for `t = 0..=T`.
    pub adopted: Vec<Vec<bool>>,
    /// Steps whose QP did not certify within the iteration cap.
    pub solver_warnings: usize,
}

impl RunResult {
    pub fn horizon(&self) -> usize {
        self.policy_matrix.len()
    }

    pub fn final_gamma(&self) -> f64 {
        *self.gamma.last().expect("gamma has T + 1 entries")
    }

    /// Cross-agent standard deviation of the policy at step `t`.
    pub fn policy_dispersion(&self, t: usize) -> f64 {
        population_std(&self.policy_matrix[t])
    }

    /// Variance of reluctance across non-adopters at step `t`, if any remain.
    pub fn rho_dispersion(&self, t: usize) -> Option<f64> {
        let values: Vec<f64> = self.rho_matrix[t]
            .iter()
            .zip(&self.adopted[t])
            .filter(|(_, &a)| !a)
            .map(|(r, _)| *r)
            .collect();
        (!values.is_empty()).then(|| population_variance(&values))
    }
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn population_variance(values: &[f64]) -> f64 {
    let m = mean(values);
    values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / values.len() as f64
}

fn population_std(values: &[f64]) -> f64 {
    population_variance(values).sqrt()
}

/// Simulates one closed-loop run of `horizon` steps.
pub fn run_simulation(
    net: &SocialNetwork,
    params: &[AgentParams],
    policy: &Policy,
    horizon: usize,
    eps: f64,
    run_seed: u64,
) -> Result<RunResult> {
    if params.len() != net.n_agents() {
        return Err(Error::Config(format!(
            "{} agent records for a network of {} agents",
            params.len(),
            net.n_agents()
        )));
    }
    if let Policy::OpenLoop(schedule) = policy {
        if schedule.len() < horizon || schedule.iter().any(|row| row.len() != params.len()) {
            return Err(Error::Config(
                "open-loop schedule must cover every step and agent".into(),
            ));
        }
    }
    let n = params.len();
    let gammas: Vec<f64> = params.iter().map(|p| p.gamma).collect();
    let mut controller = match policy {
        Policy::Mpc(cfg) => Some(MpcController::new(cfg.clone())?),
        _ => None,
    };
    let mut state = init_state(params)?;
    let mut result = RunResult {
        seed: run_seed,
        gamma: vec![state.adoption_rate()],
        policy_matrix: Vec::with_capacity(horizon),
        rho_matrix: vec![state.rho.clone()],
        adopted: vec![state.x.clone()],
        solver_warnings: 0,
    };
    for t in 0..horizon {
        let u = match (policy, controller.as_mut()) {
            (Policy::Mpc(_), Some(ctrl)) => {
                let step = ctrl.step(&state, params)?;
                if step.status != SolveStatus::Optimal {
                    result.solver_warnings += 1;
                }
                step.u
            }
            (Policy::OpenLoop(schedule), _) => (0..n).map(|v| if state.x[v] { 0.0 } else { schedule[t][v] }).collect(),
            _ => vec![0.0; n],
        };
        for v in 0..n {
            if !state.x[v] {
                state.rho[v] = update_reluctance(state.rho[v], params[v].b, u[v]);
            }
        }
        state = cascade_step(
            net,
            &state,
            &gammas,
            eps,
            seeds::derive(run_seed, seeds::TAG_STEP, t as u64),
        )?;
        result.gamma.push(state.adoption_rate());
        result.policy_matrix.push(u);
        result.rho_matrix.push(state.rho.clone());
        result.adopted.push(state.x.clone());
    }
    Ok(result)
}

/// Aggregated Monte Carlo experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub parameter_seed: u64,
    pub params: Vec<AgentParams>,
    pub runs: Vec<RunResult>,
    pub gamma_mean: Vec<f64>,
    pub gamma_std: Vec<f64>,
    /// Policy averaged over agents and runs, `t = 0..T`.
    pub u_bar: Vec<f64>,
    /// Mean over runs of the cross-agent policy standard deviation.
    pub policy_dispersion: Vec<f64>,
    /// Mean over runs (with non-adopters left) of the cross-non-adopter
    /// reluctance variance, `t = 0..=T`.
    pub rho_dispersion: Vec<Option<f64>>,
    /// Run shown in the heatmap: median final adoption rate.
    pub heatmap_run: usize,
}

impl ExperimentResult {
    pub fn from_runs(
        config: ExperimentConfig,
        parameter_seed: u64,
        params: Vec<AgentParams>,
        runs: Vec<RunResult>,
    ) -> Self {
        let horizon = config.horizon;
        let n_runs = runs.len() as f64;
        let column = |t: usize| -> Vec<f64> { runs.iter().map(|r| r.gamma[t]).collect() };
        let gamma_mean = (0..=horizon).map(|t| mean(&column(t))).collect();
        let gamma_std = (0..=horizon).map(|t| population_std(&column(t))).collect();
        let u_bar = (0..horizon)
            .map(|t| runs.iter().map(|r| mean(&r.policy_matrix[t])).sum::<f64>() / n_runs)
            .collect();
        let policy_dispersion = (0..horizon)
            .map(|t| runs.iter().map(|r| r.policy_dispersion(t)).sum::<f64>() / n_runs)
            .collect();
        let rho_dispersion = (0..=horizon)
            .map(|t| {
                let values: Vec<f64> = runs.iter().filter_map(|r| r.rho_dispersion(t)).collect();
                (!values.is_empty()).then(|| mean(&values))
            })
            .collect();
        let mut order: Vec<usize> = (0..runs.len()).collect();
        order.sort_by(|&a, &b| runs[a].final_gamma().total_cmp(&runs[b].final_gamma()).then(a.cmp(&b)));
        let heatmap_run = order[(order.len() - 1) / 2];
        Self {
            config,
            parameter_seed,
            params,
            runs,
            gamma_mean,
            gamma_std,
            u_bar,
            policy_dispersion,
            rho_dispersion,
            heatmap_run,
        }
    }

    pub fn final_gamma_mean(&self) -> f64 {
        *self.gamma_mean.last().expect("nonempty")
    }

    pub fn final_gamma_std(&self) -> f64 {
        *self.gamma_std.last().expect("nonempty")
    }

    /// Time average of [`Self::policy_dispersion`].
    pub fn mean_policy_dispersion(&self) -> f64 {
        mean(&self.policy_dispersion)
    }

    pub fn terminal_rho_dispersion(&self) -> Option<f64> {
        *self.rho_dispersion.last().expect("nonempty")
    }
}

pub fn parameter_seed(base_seed: u64) -> u64 {
    seeds::derive(base_seed, seeds::TAG_PARAMETERS, 0)
}

pub fn run_seed(base_seed: u64, run: usize) -> u64 {
    seeds::derive(base_seed, seeds::TAG_RUN, run as u64)
}

/// Network and agent parameters an experiment runs on.
pub fn prepare(cfg: &ExperimentConfig) -> Result<(SocialNetwork, Vec<AgentParams>)> {
    cfg.validate()?;
    let net = cfg.network.load()?;
    let records = cfg.agents.load()?;
    if records.len() != net.n_agents() {
        return Err(Error::Config(format!(
            "{} agent records for a network of {} agents",
            records.len(),
            net.n_agents()
        )));
    }
    let params = build_population(&records, cfg.scenario, parameter_seed(cfg.base_seed))?;
    Ok((net, params))
}

/// Runs every Monte Carlo repetition of `cfg`. `threads` caps run-level
/// parallelism; results do not depend on it.
pub fn run_experiment(cfg: &ExperimentConfig, threads: Option<usize>) -> Result<ExperimentResult> {
    let (net, params) = prepare(cfg)?;
    let policy = match cfg.controller() {
        Some(mpc) => Policy::Mpc(mpc),
        None => Policy::None,
    };
    let run_one = |i: usize| run_simulation(&net, &params, &policy, cfg.horizon, cfg.eps, run_seed(cfg.base_seed, i));
    let runs: Vec<RunResult> = match threads {
        Some(1) => (0..cfg.runs).map(run_one).collect::<Result<_>>()?,
        _ => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads.unwrap_or(0))
                .build()
                .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
            pool.install(|| (0..cfg.runs).into_par_iter().map(run_one).collect::<Result<_>>())?
        }
    };
    Ok(ExperimentResult::from_runs(
        cfg.clone(),
        parameter_seed(cfg.base_seed),
        params,
        runs,
    ))
}

/// One row of a scenario comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub label: String,
    pub final_gamma_mean: f64,
    pub final_gamma_std: f64,
    pub mean_u_bar: f64,
    pub mean_policy_dispersion: f64,
    pub terminal_rho_dispersion: Option<f64>,
}

impl ComparisonRow {
    pub fn from_result(result: &ExperimentResult) -> Self {
        Self {
            label: result.config.label(),
            final_gamma_mean: result.final_gamma_mean(),
            final_gamma_std: result.final_gamma_std(),
            mean_u_bar: mean(&result.u_bar),
            mean_policy_dispersion: result.mean_policy_dispersion(),
            terminal_rho_dispersion: result.terminal_rho_dispersion(),
        }
    }
}

/// Runs each config on a common network and seed and tabulates the outcomes.
pub fn compare_experiments(configs: &[ExperimentConfig], threads: Option<usize>) -> Result<Vec<ComparisonRow>> {
    let first = configs
        .first()
        .ok_or_else(|| Error::Config("nothing to compare".into()))?;
    let reference = first.network.load()?;
    for cfg in &configs[1..] {
        if cfg.network.load()? != reference {
            return Err(Error::Config(format!(
                "{} uses a different network than {}",
                cfg.label(),
                first.label()
            )));
        }
        if cfg.base_seed != first.base_seed || cfg.runs != first.runs || cfg.horizon != first.horizon {
            return Err(Error::Config(format!(
                "{} is not paired with {}: base seed, runs and horizon must match",
                cfg.label(),
                first.label()
            )));
        }
    }
    configs
        .iter()
        .map(|cfg| run_experiment(cfg, threads).map(|r| ComparisonRow::from_result(&r)))
        .collect()
}

pub fn format_comparison(rows: &[ComparisonRow]) -> String {
    let mut out = format!(
        "{:<18} {:>12} {:>12} {:>12} {:>14} {:>14}\n",
        "config", "gamma(T)", "std", "mean U", "policy sd", "rho var(T)"
    );
    for r in rows {
        let rho = r.terminal_rho_dispersion.map_or("-".to_string(), |v| format!("{v:.6}"));
        out.push_str(&format!(
            "{:<18} {:>12.6} {:>12.6} {:>12.6} {:>14.6} {:>14}\n",
            r.label, r.final_gamma_mean, r.final_gamma_std, r.mean_u_bar, r.mean_policy_dispersion, rho
        ));
    }
    out
}
