//! Stochastic cascade dynamics.
//!
//! An agent's adoption threshold is Beta distributed with shapes
//! `alpha = 1/(1-rho)` and `beta = 1/rho`, so its mean equals the agent's
//! current reluctance. Influence is the credibility-weighted share of
//! adopting neighbors. Adoption is irreversible and all agents update
//! synchronously from the previous step's adopter set.

use rand::Rng;
use rand_distr::{Beta, Distribution};
use statrs::function::beta::beta_reg;
use thiserror::Error;

use crate::graph::SocialNetwork;
use crate::population::PopulationState;
use crate::seeds;

/// Default clamp margin keeping the Beta shapes finite.
pub const DEFAULT_EPS: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum DiffusionError {
    #[error("clamp margin {0} outside (0, 1/2)")]
    InvalidEps(f64),
}

/// Shapes of the threshold distribution for one agent at one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdParams {
    pub alpha: f64,
    pub beta: f64,
    /// Reluctance after clamping to `[eps, 1 - eps]`.
    pub rho: f64,
}

impl ThresholdParams {
    pub fn mean(&self) -> f64 {
        self.alpha / (self.alpha + self.beta)
    }

    /// Agents with `alpha > beta` lean conservative.
    pub fn is_conservative(&self) -> bool {
        self.alpha > self.beta
    }
}

pub fn validate_eps(eps: f64) -> Result<(), DiffusionError> {
    if eps > 0.0 && eps < 0.5 {
        Ok(())
    } else {
        Err(DiffusionError::InvalidEps(eps))
    }
}

pub fn beta_params(rho: f64, eps: f64) -> Result<ThresholdParams, DiffusionError> {
    validate_eps(eps)?;
    Ok(shapes(rho, eps))
}

fn shapes(rho: f64, eps: f64) -> ThresholdParams {
    let rho = rho.clamp(eps, 1.0 - eps);
    ThresholdParams {
        alpha: 1.0 / (1.0 - rho),
        beta: 1.0 / rho,
        rho,
    }
}

/// One threshold draw for an agent with reluctance `rho`.
pub fn sample_threshold<R: Rng + ?Sized>(rho: f64, eps: f64, rng: &mut R) -> Result<f64, DiffusionError> {
    validate_eps(eps)?;
    Ok(draw(shapes(rho, eps), rng))
}

fn draw<R: Rng + ?Sized>(p: ThresholdParams, rng: &mut R) -> f64 {
    // shapes are finite and positive after clamping
    let dist = Beta::new(p.alpha, p.beta).expect("finite positive Beta shapes");
    dist.sample(rng).clamp(0.0, 1.0)
}

/// Probability that a fresh threshold does not exceed `theta`: the
/// regularized incomplete beta function `I_theta(alpha, beta)`.
pub fn adoption_probability(theta: f64, rho: f64, eps: f64) -> Result<f64, DiffusionError> {
    validate_eps(eps)?;
    Ok(threshold_cdf(theta, rho, eps))
}

pub(crate) fn threshold_cdf(theta: f64, rho: f64, eps: f64) -> f64 {
    if theta <= 0.0 {
        return 0.0;
    }
    if theta >= 1.0 {
        return 1.0;
    }
    let p = shapes(rho, eps);
    beta_reg(p.alpha, p.beta, theta)
}

/// Credibility-weighted fraction of adopting neighbors of `v`.
pub fn epistemic_influence(net: &SocialNetwork, adopted: &[bool], gammas: &[f64], v: usize) -> f64 {
    let neighbors = net.neighbors_of(v);
    let weight: f64 = neighbors.iter().filter(|&&w| adopted[w]).map(|&w| gammas[w]).sum();
    weight / neighbors.len() as f64
}

/// One synchronous cascade step.
///
/// Every non-adopter draws a fresh threshold from its own substream of
/// `step_seed` and adopts when its influence, computed on the incoming
/// adopter set, reaches the threshold. Reluctances are left untouched.
pub fn cascade_step(
    net: &SocialNetwork,
    state: &PopulationState,
    gammas: &[f64],
    eps: f64,
    step_seed: u64,
) -> Result<PopulationState, DiffusionError> {
    validate_eps(eps)?;
    let x = (0..state.n_agents())
        .map(|v| {
            if state.x[v] {
                return true;
            }
            let theta = epistemic_influence(net, &state.x, gammas, v);
            let mut rng = seeds::stream(step_seed, seeds::TAG_AGENT, v as u64);
            theta >= draw(shapes(state.rho[v], eps), &mut rng)
        })
        .collect();
    Ok(PopulationState {
        x,
        rho: state.rho.clone(),
        t: state.t + 1,
    })
}

/// Reluctance after applying policy `u` to an agent with receptivity `b`,
/// clamped to `[0, 1]`.
pub fn update_reluctance(rho: f64, b: f64, u: f64) -> f64 {
    (rho + b * u).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ring(n: usize) -> SocialNetwork {
        SocialNetwork::watts_strogatz(n, 2, 0.0, 0).unwrap()
    }

    #[test]
    fn beta_shape_examples() {
        let p = beta_params(0.5, DEFAULT_EPS).unwrap();
        assert_eq!((p.alpha, p.beta), (2.0, 2.0));
        assert_eq!(p.mean(), 0.5);
        let p = beta_params(0.8, DEFAULT_EPS).unwrap();
        assert!((p.alpha - 5.0).abs() < 1e-12 && (p.beta - 1.25).abs() < 1e-12);
        assert!(p.is_conservative());
        let p = beta_params(0.0, 1e-6).unwrap();
        assert_eq!(p.rho, 1e-6);
        assert!((p.mean() - 1e-6).abs() < 1e-15);
        assert_eq!(beta_params(0.5, 0.0), Err(DiffusionError::InvalidEps(0.0)));
        assert_eq!(beta_params(0.5, 0.5), Err(DiffusionError::InvalidEps(0.5)));
    }

    #[test]
    fn threshold_symmetry_at_half() {
        let mut rng = seeds::stream(11, 0, 0);
        let n = 100_000;
        let below = (0..n)
            .filter(|_| sample_threshold(0.5, DEFAULT_EPS, &mut rng).unwrap() <= 0.5)
            .count();
        assert!((below as f64 / n as f64 - 0.5).abs() < 0.01);
    }

    #[test]
    fn extreme_reluctance_draws_stay_in_support() {
        let mut rng = seeds::stream(12, 0, 0);
        for rho in [0.0, 1e-9, 0.999_999, 1.0] {
            for _ in 0..2000 {
                let phi = sample_threshold(rho, DEFAULT_EPS, &mut rng).unwrap();
                assert!((0.0..=1.0).contains(&phi));
            }
        }
    }

    #[test]
    fn adoption_probability_endpoints() {
        for rho in [0.0, 0.2, 0.5, 0.9, 1.0] {
            assert_eq!(adoption_probability(0.0, rho, DEFAULT_EPS).unwrap(), 0.0);
            assert_eq!(adoption_probability(1.0, rho, DEFAULT_EPS).unwrap(), 1.0);
        }
        assert!((adoption_probability(0.5, 0.5, DEFAULT_EPS).unwrap() - 0.5).abs() < 1e-14);
    }

    #[test]
    fn influence_examples() {
        // agent 0 in a star with four leaves
        let net = SocialNetwork::from_edges(5, &[(0, 1), (0, 2), (0, 3), (0, 4)]).unwrap();
        let gammas = [1.0, 0.5, 0.3, 0.9, 0.9];
        let adopted = [false, true, true, false, false];
        assert!((epistemic_influence(&net, &adopted, &gammas, 0) - 0.2).abs() < 1e-15);
        assert_eq!(epistemic_influence(&net, &[false; 5], &gammas, 0), 0.0);
        assert_eq!(
            epistemic_influence(&net, &[false, true, true, true, true], &[1.0; 5], 0),
            1.0
        );
    }

    #[test]
    fn saturated_state_only_advances_time() {
        let net = ring(6);
        let state = PopulationState {
            x: vec![true; 6],
            rho: vec![0.7; 6],
            t: 3,
        };
        let next = cascade_step(&net, &state, &[1.0; 6], DEFAULT_EPS, 99).unwrap();
        assert_eq!(next.x, state.x);
        assert_eq!(next.rho, state.rho);
        assert_eq!(next.t, 4);
    }

    #[test]
    fn zero_influence_never_adopts() {
        let net = ring(6);
        let mut x = vec![false; 6];
        x[0] = true;
        let state = PopulationState {
            x,
            rho: vec![0.4; 6],
            t: 0,
        };
        // agent 3 is two hops away, so its influence is zero
        for seed in 0..2000 {
            let next = cascade_step(&net, &state, &[1.0; 6], DEFAULT_EPS, seed).unwrap();
            assert!(!next.x[3]);
        }
    }

    #[test]
    fn synchronous_update_uses_previous_set() {
        // path 0-1-2 with zero reluctance: 1 adopts at the first step, 2 only at the second
        let net = SocialNetwork::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        let state = PopulationState {
            x: vec![true, false, false],
            rho: vec![0.0; 3],
            t: 0,
        };
        let s1 = cascade_step(&net, &state, &[1.0; 3], DEFAULT_EPS, 5).unwrap();
        assert_eq!(s1.x, vec![true, true, false]);
        let s2 = cascade_step(&net, &s1, &[1.0; 3], DEFAULT_EPS, 6).unwrap();
        assert_eq!(s2.x, vec![true; 3]);
    }

    #[test]
    fn reluctance_update_examples() {
        assert!((update_reluctance(0.6, -1.0, 0.2) - 0.4).abs() < 1e-15);
        assert_eq!(update_reluctance(0.1, -1.0, 0.5), 0.0);
        assert_eq!(update_reluctance(0.37, 0.0, 0.9), 0.37);
    }

    proptest! {
        #[test]
        fn adoption_probability_monotone(theta in 0.0f64..1.0, dtheta in 0.0f64..0.5, rho in 0.0f64..1.0, drho in 0.0f64..0.5) {
            let base = adoption_probability(theta, rho, DEFAULT_EPS).unwrap();
            let more_influence = adoption_probability((theta + dtheta).min(1.0), rho, DEFAULT_EPS).unwrap();
            let more_reluctant = adoption_probability(theta, (rho + drho).min(1.0), DEFAULT_EPS).unwrap();
            prop_assert!(more_influence >= base - 1e-12);
            prop_assert!(more_reluctant <= base + 1e-12);
            prop_assert!((0.0..=1.0).contains(&base));
        }

        #[test]
        fn shape_mean_identity(rho in 0.0f64..=1.0) {
            let p = beta_params(rho, DEFAULT_EPS).unwrap();
            prop_assert!((p.mean() - p.rho).abs() < 1e-12);
            prop_assert_eq!(p.is_conservative(), p.rho > 0.5);
        }

        #[test]
        fn influence_monotone(adopted in proptest::collection::vec(any::<bool>(), 8),
                              gammas in proptest::collection::vec(0.0f64..=1.0, 8),
                              extra in 0usize..8, bump in 0.0f64..0.5) {
            let net = SocialNetwork::watts_strogatz(8, 4, 0.0, 0).unwrap();
            for v in 0..8 {
                let base = epistemic_influence(&net, &adopted, &gammas, v);
                prop_assert!((0.0..=1.0).contains(&base));
                let mut more = adopted.clone();
                more[extra] = true;
                prop_assert!(epistemic_influence(&net, &more, &gammas, v) >= base);
                let mut louder = gammas.clone();
                louder[extra] = (louder[extra] + bump).min(1.0);
                prop_assert!(epistemic_influence(&net, &adopted, &louder, v) >= base);
                // halved credibilities never raise influence
                let halved: Vec<f64> = gammas.iter().map(|g| g * 0.5).collect();
                prop_assert!(epistemic_influence(&net, &adopted, &halved, v) <= base);
            }
        }

        #[test]
        fn cascade_is_irreversible(seed in any::<u64>(), rho in proptest::collection::vec(0.0f64..=1.0, 10)) {
            let net = SocialNetwork::watts_strogatz(10, 4, 0.2, 1).unwrap();
            let mut x = vec![false; 10];
            x[(seed % 10) as usize] = true;
            let mut state = PopulationState { x, rho, t: 0 };
            for step in 0..5 {
                let next = cascade_step(&net, &state, &[0.8; 10], DEFAULT_EPS, seed ^ step).unwrap();
                prop_assert!(state.x.iter().zip(&next.x).all(|(a, b)| !a || *b));
                state = next;
            }
        }
    }
}
