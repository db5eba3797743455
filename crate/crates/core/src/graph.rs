//! Undirected social influence network.
//!
//! A [`SocialNetwork`] is immutable once built. Every constructor goes through
//! [`SocialNetwork::from_edges`], which enforces the structural assumptions the
//! diffusion model relies on: no self-loops, symmetric adjacency, no isolated
//! agents, and a single connected component.

use std::collections::VecDeque;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::seeds;

/// Retry bound for regenerating a disconnected small-world instance.
pub const MAX_GENERATOR_RETRIES: u32 = 64;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GraphError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("self-loop on agent {0}")]
    SelfLoop(usize),
    #[error("agent {0} has no neighbors")]
    IsolatedAgent(usize),
    #[error("network is disconnected ({components} components)")]
    Disconnected { components: usize },
    #[error("agent index {index} out of range for {n_agents} agents")]
    IndexOutOfRange { index: usize, n_agents: usize },
    #[error("invalid generator parameters: {0}")]
    InvalidParameters(String),
    #[error("no connected instance after {0} attempts")]
    ConnectivityNotReached(u32),
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SocialNetwork {
    adjacency: Vec<Vec<usize>>,
}

impl SocialNetwork {
    /// Builds a network from an undirected edge list, deduplicating repeats.
    pub fn from_edges(n_agents: usize, edges: &[(usize, usize)]) -> Result<Self, GraphError> {
        if n_agents == 0 {
            return Err(GraphError::InvalidParameters("network needs at least one agent".into()));
        }
        let mut adjacency = vec![Vec::new(); n_agents];
        for &(v, w) in edges {
            for index in [v, w] {
                if index >= n_agents {
                    return Err(GraphError::IndexOutOfRange { index, n_agents });
                }
            }
            if v == w {
                return Err(GraphError::SelfLoop(v));
            }
            adjacency[v].push(w);
            adjacency[w].push(v);
        }
        for list in &mut adjacency {
            list.sort_unstable();
            list.dedup();
        }
        if let Some(v) = adjacency.iter().position(Vec::is_empty) {
            return Err(GraphError::IsolatedAgent(v));
        }
        let net = Self { adjacency };
        let components = net.component_count();
        if components > 1 {
            return Err(GraphError::Disconnected { components });
        }
        Ok(net)
    }

    /// Parses the edge-list text format: a `n <N>` header, then `v w` pairs.
    /// Blank lines and lines starting with `#` are skipped.
    pub fn parse_edge_list(text: &str) -> Result<Self, GraphError> {
        let mut n_agents = None;
        let mut edges = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parse_err = |message: String| GraphError::Parse { line: line_no, message };
            let fields: Vec<&str> = line.split_whitespace().collect();
            match n_agents {
                None => {
                    if fields.len() != 2 || fields[0] != "n" {
                        return Err(parse_err(format!("expected header `n <N>`, found `{line}`")));
                    }
                    let n = fields[1]
                        .parse::<usize>()
                        .map_err(|e| parse_err(format!("bad agent count: {e}")))?;
                    n_agents = Some(n);
                }
                Some(_) => {
                    if fields.len() != 2 {
                        return Err(parse_err(format!("expected `v w`, found `{line}`")));
                    }
                    let v = fields[0]
                        .parse::<usize>()
                        .map_err(|e| parse_err(format!("bad index `{}`: {e}", fields[0])))?;
                    let w = fields[1]
                        .parse::<usize>()
                        .map_err(|e| parse_err(format!("bad index `{}`: {e}", fields[1])))?;
                    edges.push((v, w));
                }
            }
        }
        let n = n_agents.ok_or_else(|| GraphError::Parse {
            line: 0,
            message: "missing `n <N>` header".into(),
        })?;
        Self::from_edges(n, &edges)
    }

    pub fn load_edge_list(path: impl AsRef<Path>) -> Result<Self, GraphError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| GraphError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::parse_edge_list(&text)
    }

    /// Serializes to the edge-list text format (each edge once, `v < w`).
    pub fn to_edge_list(&self) -> String {
        let mut out = format!("n {}\n", self.n_agents());
        for (v, w) in self.edges() {
            out.push_str(&format!("{v} {w}\n"));
        }
        out
    }

    /// Watts–Strogatz small world: a ring where each agent links to its `k/2`
    /// nearest neighbors on each side, then each lattice edge is rewired with
    /// probability `p_rewire`. Disconnected draws are regenerated from a
    /// derived seed, up to [`MAX_GENERATOR_RETRIES`] times.
    pub fn watts_strogatz(n: usize, k: usize, p_rewire: f64, seed: u64) -> Result<Self, GraphError> {
        if k < 2 || !k.is_multiple_of(2) {
            return Err(GraphError::InvalidParameters(format!(
                "k must be even and >= 2, got {k}"
            )));
        }
        if n <= k {
            return Err(GraphError::InvalidParameters(format!("need n > k, got n={n}, k={k}")));
        }
        if !(0.0..=1.0).contains(&p_rewire) {
            return Err(GraphError::InvalidParameters(format!(
                "rewiring probability {p_rewire} outside [0, 1]"
            )));
        }
        for attempt in 0..MAX_GENERATOR_RETRIES {
            let mut rng = ChaCha8Rng::seed_from_u64(seeds::derive(seed, seeds::TAG_NETWORK, attempt as u64));
            let edges = watts_strogatz_edges(n, k, p_rewire, &mut rng);
            match Self::from_edges(n, &edges) {
                Ok(net) => return Ok(net),
                Err(GraphError::Disconnected { .. } | GraphError::IsolatedAgent(_)) => continue,
                Err(e) => return Err(e),
            }
        }
        Err(GraphError::ConnectivityNotReached(MAX_GENERATOR_RETRIES))
    }

    pub fn n_agents(&self) -> usize {
        self.adjacency.len()
    }

    /// Sorted, nonempty neighbor list of agent `v`.
    pub fn neighbors(&self, v: usize) -> Result<&[usize], GraphError> {
        self.adjacency
            .get(v)
            .map(Vec::as_slice)
            .ok_or(GraphError::IndexOutOfRange {
                index: v,
                n_agents: self.n_agents(),
            })
    }

    /// Unchecked variant for hot loops where `v` is known to be in range.
    pub(crate) fn neighbors_of(&self, v: usize) -> &[usize] {
        &self.adjacency[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adjacency[v].len()
    }

    pub fn n_edges(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.adjacency
            .iter()
            .enumerate()
            .flat_map(|(v, list)| list.iter().filter(move |&&w| w > v).map(move |&w| (v, w)))
    }

    fn component_count(&self) -> usize {
        let n = self.n_agents();
        let mut seen = vec![false; n];
        let mut components = 0;
        let mut queue = VecDeque::new();
        for start in 0..n {
            if seen[start] {
                continue;
            }
            components += 1;
            seen[start] = true;
            queue.push_back(start);
            while let Some(v) = queue.pop_front() {
                for &w in &self.adjacency[v] {
                    if !seen[w] {
                        seen[w] = true;
                        queue.push_back(w);
                    }
                }
            }
        }
        components
    }
}

fn watts_strogatz_edges(n: usize, k: usize, p_rewire: f64, rng: &mut ChaCha8Rng) -> Vec<(usize, usize)> {
    let mut adjacent = vec![vec![false; n]; n];
    let mut edges = Vec::with_capacity(n * k / 2);
    for v in 0..n {
        for j in 1..=k / 2 {
            let w = (v + j) % n;
            adjacent[v][w] = true;
            adjacent[w][v] = true;
            edges.push((v, w));
        }
    }
    for edge in edges.iter_mut() {
        let (v, w) = *edge;
        if rng.random::<f64>() >= p_rewire {
            continue;
        }
        // a saturated agent keeps its lattice edge
        if adjacent[v].iter().filter(|&&a| a).count() >= n - 1 {
            continue;
        }
        let target = loop {
            let candidate = rng.random_range(0..n);
            if candidate != v && !adjacent[v][candidate] {
                break candidate;
            }
        };
        adjacent[v][w] = false;
        adjacent[w][v] = false;
        adjacent[v][target] = true;
        adjacent[target][v] = true;
        *edge = (v, target);
    }
    edges
}
