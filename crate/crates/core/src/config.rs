//! Experiment configuration (TOML).
//!
//! ```toml
//! scenario = "crd"
//! policy = "fair"
//! horizon = 11
//! runs = 10
//! base_seed = 2024
//!
//! [network]
//! kind = "watts_strogatz"
//! n = 112
//! k = 4
//! p_rewire = 0.1
//! seed = 7
//!
//! [agents]
//! kind = "synthetic"
//! n = 112
//! seeds = 3
//!
//! [mpc]
//! horizon = 10
//! budget = 50.0
//! ```
//!
//! Relative paths are resolved against the directory of the config file.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::control::MpcConfig;
use crate::diffusion::{validate_eps, DEFAULT_EPS};
use crate::error::{Error, Result};
use crate::graph::SocialNetwork;
use crate::population::{load_records, AgentRecord, Scenario, SyntheticPopulation};

/// Which cost terms the controller uses, or no controller at all.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyMode {
    None,
    OneSided,
    EquityOnly,
    EqualityOnly,
    Fair,
}

impl PolicyMode {
    pub const ALL: [PolicyMode; 5] = [
        PolicyMode::None,
        PolicyMode::OneSided,
        PolicyMode::EquityOnly,
        PolicyMode::EqualityOnly,
        PolicyMode::Fair,
    ];

    /// Controller settings for this mode, or `None` when no policy is applied.
    pub fn controller(self, mpc: &MpcConfig) -> Option<MpcConfig> {
        let (m, n) = (mpc.equity, mpc.equality);
        match self {
            PolicyMode::None => None,
            PolicyMode::OneSided => Some(mpc.with_fairness(0.0, 0.0)),
            PolicyMode::EquityOnly => Some(mpc.with_fairness(m, 0.0)),
            PolicyMode::EqualityOnly => Some(mpc.with_fairness(0.0, n)),
            PolicyMode::Fair => Some(mpc.with_fairness(m, n)),
        }
    }
}

impl fmt::Display for PolicyMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PolicyMode::None => "none",
            PolicyMode::OneSided => "one-sided",
            PolicyMode::EquityOnly => "equity",
            PolicyMode::EqualityOnly => "equality",
            PolicyMode::Fair => "fair",
        })
    }
}

impl FromStr for PolicyMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "none" => Ok(PolicyMode::None),
            "one-sided" => Ok(PolicyMode::OneSided),
            "equity" | "equity-only" => Ok(PolicyMode::EquityOnly),
            "equality" | "equality-only" => Ok(PolicyMode::EqualityOnly),
            "fair" => Ok(PolicyMode::Fair),
            other => Err(format!(
                "unknown policy mode `{other}` (expected none, one-sided, equity, equality or fair)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NetworkSource {
    File {
        path: PathBuf,
    },
    WattsStrogatz {
        n: usize,
        k: usize,
        p_rewire: f64,
        seed: u64,
    },
}

impl NetworkSource {
    pub fn load(&self) -> Result<SocialNetwork> {
        Ok(match self {
            NetworkSource::File { path } => SocialNetwork::load_edge_list(path)?,
            NetworkSource::WattsStrogatz { n, k, p_rewire, seed } => {
                SocialNetwork::watts_strogatz(*n, *k, *p_rewire, *seed)?
            }
        })
    }
}

impl Default for NetworkSource {
    fn default() -> Self {
        NetworkSource::WattsStrogatz {
            n: 112,
            k: 4,
            p_rewire: 0.1,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AgentSource {
    File { path: PathBuf },
    Synthetic(SyntheticPopulation),
}

impl AgentSource {
    pub fn load(&self) -> Result<Vec<AgentRecord>> {
        Ok(match self {
            AgentSource::File { path } => load_records(path)?,
            AgentSource::Synthetic(spec) => spec.generate()?,
        })
    }
}

impl Default for AgentSource {
    fn default() -> Self {
        AgentSource::Synthetic(SyntheticPopulation::new(112, 3, 11))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub policy: PolicyMode,
    /// Intervention horizon `T` in steps.
    pub horizon: usize,
    /// Monte Carlo runs.
    pub runs: usize,
    pub base_seed: u64,
    /// Clamp margin for the threshold shapes.
    pub eps: f64,
    pub output: PathBuf,
    pub network: NetworkSource,
    pub agents: AgentSource,
    pub mpc: MpcConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scenario: Scenario::Nd,
            policy: PolicyMode::OneSided,
            horizon: 11,
            runs: 10,
            base_seed: 2024,
            eps: DEFAULT_EPS,
            output: PathBuf::from("results"),
            network: NetworkSource::default(),
            agents: AgentSource::default(),
            mpc: MpcConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    /// Reads a config file, resolving relative paths against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let NetworkSource::File { path } = &mut self.network {
            fix(path);
        }
        if let AgentSource::File { path } = &mut self.agents {
            fix(path);
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon < 1 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        if self.runs < 1 {
            return Err(Error::Config("runs must be at least 1".into()));
        }
        validate_eps(self.eps)?;
        self.mpc.validate()?;
        Ok(())
    }

    /// Controller settings after applying the policy mode.
    pub fn controller(&self) -> Option<MpcConfig> {
        self.policy.controller(&self.mpc)
    }

    pub fn label(&self) -> String {
        format!("{}/{}", self.scenario, self.policy)
    }
}
