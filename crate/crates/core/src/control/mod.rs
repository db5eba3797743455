//! Fairness-aware receding-horizon nudging.
//!
//! At every step the controller builds the condensed QP over the current
//! non-adopters, solves it, and applies only the first-step policy. Adopters
//! receive nothing and drop out of the decision vector, so the problem
//! shrinks as the innovation spreads.

pub mod kkt;
pub mod qp;
pub mod riccati;
pub mod solver;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::population::{AgentParams, PopulationState};

pub use kkt::{certify, KktReport};
pub use qp::{assemble_qp, BudgetRow, CondensedHessian, Hessian, QpProblem};
pub use riccati::{dare_residual, solve_scalar_dare, RECEPTIVITY_FLOOR};
pub use solver::{solve_qp, solve_qp_from, QpSolution, SolveStatus};

#[derive(Debug, Error, PartialEq)]
pub enum ControlError {
    #[error("invalid controller configuration: {0}")]
    InvalidConfig(String),
    #[error("no non-adopters left to allocate policy to")]
    EmptyDecisionSet,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

/// Controller settings. Defaults reproduce the reference case study
/// (`L = 10`, `B = 50`, `Q = R = I`, `delta = 2`) with fairness weights
/// `M = N = 10 I`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MpcConfig {
    /// Prediction horizon `L`.
    pub horizon: usize,
    /// Per-step budget `B`.
    pub budget: f64,
    pub q: f64,
    pub r: f64,
    /// Terminal scaling, at least 1.
    pub delta: f64,
    /// Equity weight `m` (reluctance spread).
    pub equity: f64,
    /// Equality weight `n` (policy spread).
    pub equality: f64,
    pub solver_tol: f64,
    pub max_iter: usize,
}

impl Default for MpcConfig {
    fn default() -> Self {
        Self {
            horizon: 10,
            budget: 50.0,
            q: 1.0,
            r: 1.0,
            delta: 2.0,
            equity: 10.0,
            equality: 10.0,
            solver_tol: 1e-9,
            max_iter: 20_000,
        }
    }
}

impl MpcConfig {
    pub fn validate(&self) -> Result<(), ControlError> {
        let fail = |msg: String| Err(ControlError::InvalidConfig(msg));
        if self.horizon < 1 {
            return fail("horizon must be at least 1".into());
        }
        if !(self.budget > 0.0) {
            return fail(format!("budget must be positive, got {}", self.budget));
        }
        if !(self.q > 0.0) || !(self.r > 0.0) {
            return fail(format!("q and r must be positive, got q={}, r={}", self.q, self.r));
        }
        if !(self.delta >= 1.0) {
            return fail(format!("delta must be at least 1, got {}", self.delta));
        }
        if !(self.equity >= 0.0) || !(self.equality >= 0.0) {
            return fail("fairness weights must be nonnegative".into());
        }
        if !(self.solver_tol > 0.0) || self.max_iter == 0 {
            return fail("solver tolerance and iteration cap must be positive".into());
        }
        Ok(())
    }

    /// Copy with the given fairness weights.
    pub fn with_fairness(&self, equity: f64, equality: f64) -> Self {
        Self {
            equity,
            equality,
            ..self.clone()
        }
    }
}

/// Policy applied at one step.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyStep {
    /// Policy for every agent; zero for adopters.
    pub u: Vec<f64>,
    pub status: SolveStatus,
    pub iterations: usize,
    pub n_free: usize,
    pub kkt: KktReport,
}

impl PolicyStep {
    fn idle(n_agents: usize) -> Self {
        Self {
            u: vec![0.0; n_agents],
            status: SolveStatus::Optimal,
            iterations: 0,
            n_free: 0,
            kkt: KktReport::default(),
        }
    }
}

/// Receding-horizon controller that warm-starts each solve from the previous
/// step's plan shifted by one step.
#[derive(Debug, Clone)]
pub struct MpcController {
    cfg: MpcConfig,
    previous: Option<(Vec<usize>, Vec<f64>)>,
}

impl MpcController {
    pub fn new(cfg: MpcConfig) -> Result<Self, ControlError> {
        cfg.validate()?;
        Ok(Self { cfg, previous: None })
    }

    pub fn config(&self) -> &MpcConfig {
        &self.cfg
    }

    pub fn step(&mut self, state: &PopulationState, params: &[AgentParams]) -> Result<PolicyStep, ControlError> {
        if params.len() != state.n_agents() {
            return Err(ControlError::DimensionMismatch(format!(
                "{} agent parameters for {} agents",
                params.len(),
                state.n_agents()
            )));
        }
        let free = state.non_adopters();
        if free.is_empty() {
            self.previous = None;
            return Ok(PolicyStep::idle(state.n_agents()));
        }
        let cfg = &self.cfg;
        let rho: Vec<f64> = free.iter().map(|&v| state.rho[v]).collect();
        let b: Vec<f64> = free.iter().map(|&v| params[v].b).collect();
        let p = b
            .iter()
            .map(|&b| solve_scalar_dare(cfg.q, cfg.r, b))
            .collect::<Result<Vec<_>, _>>()?;
        let problem = assemble_qp(&rho, &b, cfg, &p)?;

        let warm = self
            .previous
            .as_ref()
            .map(|(agents, plan)| shift_plan(agents, plan, &free, cfg.horizon));
        let solution = solve_qp_from(&problem, cfg.solver_tol, cfg.max_iter, warm.as_deref());
        if solution.status != SolveStatus::Optimal {
            log::warn!(
                "step {}: QP over {} agents ended with {:?} after {} iterations (KKT residual {:.3e})",
                state.t,
                free.len(),
                solution.status,
                solution.iterations,
                solution.kkt.max_residual()
            );
        }
        let mut u = vec![0.0; state.n_agents()];
        for (slot, &v) in free.iter().enumerate() {
            u[v] = solution.u_star[slot];
        }
        let step = PolicyStep {
            u,
            status: solution.status,
            iterations: solution.iterations,
            n_free: free.len(),
            kkt: solution.kkt,
        };
        self.previous = Some((free, solution.u_star));
        Ok(step)
    }
}

/// Previous plan advanced one step (last step repeated), restricted to the
/// agents that are still free.
fn shift_plan(agents: &[usize], plan: &[f64], free: &[usize], horizon: usize) -> Vec<f64> {
    let n_prev = agents.len();
    let n = free.len();
    let mut out = vec![0.0; n * horizon];
    let mut slot = 0;
    for (j, &v) in free.iter().enumerate() {
        while slot < n_prev && agents[slot] < v {
            slot += 1;
        }
        if slot == n_prev || agents[slot] != v {
            continue;
        }
        for k in 0..horizon {
            let src = (k + 1).min(horizon - 1);
            out[k * n + j] = plan[src * n_prev + slot];
        }
    }
    out
}

/// First-step policy for the current state, solved from a cold start.
pub fn mpc_step(state: &PopulationState, params: &[AgentParams], cfg: &MpcConfig) -> Result<PolicyStep, ControlError> {
    MpcController::new(cfg.clone())?.step(state, params)
}
