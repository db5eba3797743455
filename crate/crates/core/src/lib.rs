//! Stochastic innovation diffusion on social networks with credibility and
//! receptivity deficits, plus a fairness-aware receding-horizon controller
//! that allocates a per-step nudging budget.
//!
//! ```
//! use nudgecast::config::{ExperimentConfig, PolicyMode};
//! use nudgecast::population::Scenario;
//!
//! let mut cfg = ExperimentConfig::default();
//! cfg.scenario = Scenario::Crd;
//! cfg.policy = PolicyMode::Fair;
//! cfg.runs = 1;
//! cfg.horizon = 2;
//! let result = nudgecast::harness::run_experiment(&cfg, Some(1)).unwrap();
//! assert_eq!(result.gamma_mean.len(), 3);
//! ```

pub mod cli;
pub mod config;
pub mod control;
pub mod diffusion;
pub mod error;
pub mod graph;
pub mod harness;
pub mod population;
pub mod seeds;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/network.md")]
    mod network {}
    #[doc = include_str!("../../../book/src/population.md")]
    mod population {}
    #[doc = include_str!("../../../book/src/diffusion.md")]
    mod diffusion {}
    #[doc = include_str!("../../../book/src/controller.md")]
    mod controller {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
