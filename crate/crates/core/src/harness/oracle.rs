//! Exact expected adoption on small graphs.
//!
//! The distribution over all `2^n` adopter sets is propagated step by step:
//! from a set `S`, each non-adopter adopts independently with the threshold
//! CDF at its current influence. Reluctances follow the fixed schedule, so
//! they are the same in every state.

use serde::{Deserialize, Serialize};

use super::{run_seed, run_simulation, Policy};
use crate::diffusion::{adoption_probability, update_reluctance, validate_eps};
use crate::error::{Error, Result};
use crate::graph::SocialNetwork;
use crate::population::AgentParams;

pub const MAX_ORACLE_AGENTS: usize = 12;

/// Exact `E[Gamma(t)]` for `t = 0..=horizon` under no policy or a fixed
/// open-loop schedule `u[t][v]`.
pub fn exact_markov_oracle(
    net: &SocialNetwork,
    params: &[AgentParams],
    horizon: usize,
    eps: f64,
    schedule: Option<&[Vec<f64>]>,
) -> Result<Vec<f64>> {
    let n = net.n_agents();
    if n > MAX_ORACLE_AGENTS {
        return Err(Error::Oracle(format!(
            "{n} agents exceed the limit of {MAX_ORACLE_AGENTS}"
        )));
    }
    if params.len() != n {
        return Err(Error::Oracle(format!("{} agent records for {n} agents", params.len())));
    }
    if let Some(s) = schedule {
        if s.len() < horizon || s.iter().any(|row| row.len() != n) {
            return Err(Error::Oracle("schedule must cover every step and agent".into()));
        }
    }
    validate_eps(eps)?;

    let n_states = 1usize << n;
    let seeded: usize = params
        .iter()
        .enumerate()
        .filter(|(_, p)| p.is_seed)
        .map(|(v, _)| 1 << v)
        .sum();
    let mut dist = vec![0.0; n_states];
    dist[seeded] = 1.0;
    let mut rho: Vec<f64> = params.iter().map(|p| p.rho0).collect();
    let expected = |dist: &[f64]| -> f64 {
        dist.iter()
            .enumerate()
            .map(|(s, p)| p * s.count_ones() as f64)
            .sum::<f64>()
            / n as f64
    };
    let mut gamma = vec![expected(&dist)];

    for t in 0..horizon {
        if let Some(s) = schedule {
            for v in 0..n {
                rho[v] = update_reluctance(rho[v], params[v].b, s[t][v]);
            }
        }
        let mut next = vec![0.0; n_states];
        for (state, &mass) in dist.iter().enumerate() {
            if mass == 0.0 {
                continue;
            }
            let mut candidates = Vec::new();
            for v in 0..n {
                if state & (1 << v) != 0 {
                    continue;
                }
                let neighbors = net.neighbors_of(v);
                let theta = neighbors
                    .iter()
                    .filter(|&&w| state & (1 << w) != 0)
                    .map(|&w| params[w].gamma)
                    .sum::<f64>()
                    / neighbors.len() as f64;
                candidates.push((v, adoption_probability(theta, rho[v], eps)?));
            }
            // enumerate every subset of the candidates that adopts
            for pick in 0..(1usize << candidates.len()) {
                let mut p = mass;
                let mut target = state;
                for (i, &(v, q)) in candidates.iter().enumerate() {
                    if pick & (1 << i) != 0 {
                        p *= q;
                        target |= 1 << v;
                    } else {
                        p *= 1.0 - q;
                    }
                }
                next[target] += p;
            }
        }
        dist = next;
        gamma.push(expected(&dist));
    }
    Ok(gamma)
}

/// Monte Carlo estimate set against the exact chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub runs: usize,
    pub exact: Vec<f64>,
    pub monte_carlo: Vec<f64>,
    pub gaps: Vec<f64>,
    pub tolerance: f64,
}

impl OracleReport {
    pub fn max_gap(&self) -> f64 {
        self.gaps.iter().copied().fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.max_gap() <= self.tolerance
    }
}

/// Runs `runs` zero-policy simulations and compares the mean adoption rate
/// with the exact chain at every step.
pub fn oracle_gap(
    net: &SocialNetwork,
    params: &[AgentParams],
    horizon: usize,
    eps: f64,
    runs: usize,
    base_seed: u64,
    tolerance: f64,
) -> Result<OracleReport> {
    let exact = exact_markov_oracle(net, params, horizon, eps, None)?;
    let mut sums = vec![0.0; horizon + 1];
    for i in 0..runs {
        let run = run_simulation(net, params, &Policy::None, horizon, eps, run_seed(base_seed, i))?;
        for (s, g) in sums.iter_mut().zip(&run.gamma) {
            *s += g;
        }
    }
    let monte_carlo: Vec<f64> = sums.iter().map(|s| s / runs as f64).collect();
    let gaps = monte_carlo.iter().zip(&exact).map(|(a, b)| (a - b).abs()).collect();
    Ok(OracleReport {
        runs,
        exact,
        monte_carlo,
        gaps,
        tolerance,
    })
}
