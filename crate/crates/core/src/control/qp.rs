//! Condensed quadratic program over non-adopter policies.
//!
//! With reluctances eliminated through `rho(k) = rho(0) + b * sum_{j<k} u(j)`,
//! the receding-horizon cost becomes a quadratic in the stacked inputs,
//!
//! ```text
//! J(u) = u' H u + c' u + const,
//! ```
//!
//! subject to `0 <= u <= 1` and one budget row per prediction step. Inputs
//! are stacked step-major: index `k * n_free + v` holds agent `v` at step `k`.
//!
//! Every term of `H` is a Kronecker product of an `L x L` time-coupling
//! matrix with an `n_free x n_free` agent matrix, so [`CondensedHessian`]
//! applies `H` in `O(L^2 n)` without forming it.

use std::ops::Range;

use nalgebra::DMatrix;

use super::{ControlError, MpcConfig};

/// Quadratic form `u' H u` of the condensed receding-horizon cost.
#[derive(Debug, Clone, PartialEq)]
pub struct CondensedHessian {
    pub n_free: usize,
    pub horizon: usize,
    pub q: f64,
    pub r: f64,
    pub delta: f64,
    pub equity: f64,
    pub equality: f64,
    /// Receptivities of the non-adopters.
    pub b: Vec<f64>,
    /// Terminal weights of the non-adopters.
    pub p: Vec<f64>,
}

/// Centers `x` in place: `x <- (I - 11'/n) x`.
fn center(x: &mut [f64]) {
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    x.iter_mut().for_each(|v| *v -= mean);
}

impl CondensedHessian {
    pub fn dim(&self) -> usize {
        self.n_free * self.horizon
    }

    /// `out = H u`.
    pub fn apply(&self, u: &[f64], out: &mut [f64]) {
        let n = self.n_free;
        let len = self.horizon;
        debug_assert_eq!(u.len(), n * len);
        let mut stage = vec![0.0; n * len];
        let mut equity = vec![0.0; n * len];
        let mut total = vec![0.0; n];
        let mut tail = vec![0.0; len + 1];
        // stage[i, v] = sum_j (L-1-max(i,j)) u[j, v]
        //             = (L-1-i) sum_{j<=i} u[j, v] + sum_{j>i} (L-1-j) u[j, v]
        // and the equity coupling uses L - max(i, j), i.e. stage + total.
        for v in 0..n {
            for j in (0..len).rev() {
                tail[j] = tail[j + 1] + (len - 1 - j) as f64 * u[j * n + v];
            }
            let mut prefix = 0.0;
            for i in 0..len {
                prefix += u[i * n + v];
                stage[i * n + v] = (len - 1 - i) as f64 * prefix + tail[i + 1];
            }
            total[v] = prefix;
            for i in 0..len {
                equity[i * n + v] = stage[i * n + v] + total[v];
            }
        }
        for i in 0..len {
            let block = i * n..(i + 1) * n;
            let mut coupled = vec![0.0; n];
            if self.equity != 0.0 {
                for v in 0..n {
                    coupled[v] = self.b[v] * equity[i * n + v];
                }
                center(&mut coupled);
            }
            let mut spread = u[block.clone()].to_vec();
            if self.equality != 0.0 {
                center(&mut spread);
            }
            for v in 0..n {
                let b = self.b[v];
                let idx = i * n + v;
                let mut value =
                    self.r * u[idx] + self.q * b * b * stage[idx] + self.delta * self.p[v] * b * b * total[v];
                if self.equity != 0.0 {
                    value += self.equity * b * coupled[v];
                }
                if self.equality != 0.0 {
                    value += self.equality * spread[v];
                }
                out[idx] = value;
            }
        }
    }

    /// Upper bound on the largest eigenvalue of `H` (triangle inequality over
    /// the Kronecker terms, Gershgorin on the time-coupling factors).
    pub fn eigenvalue_bound(&self) -> f64 {
        let len = self.horizon as f64;
        let b2_max = self.b.iter().map(|b| b * b).fold(0.0, f64::max);
        let pb2_max = self.b.iter().zip(&self.p).map(|(b, p)| p * b * b).fold(0.0, f64::max);
        self.r
            + self.q * b2_max * len * (len - 1.0) / 2.0
            + self.delta * pb2_max * len
            + self.equity * b2_max * len * (len + 1.0) / 2.0
            + self.equality
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let dim = self.dim();
        let mut dense = DMatrix::zeros(dim, dim);
        let mut e = vec![0.0; dim];
        let mut col = vec![0.0; dim];
        for j in 0..dim {
            e[j] = 1.0;
            self.apply(&e, &mut col);
            dense.column_mut(j).copy_from_slice(&col);
            e[j] = 0.0;
        }
        dense
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Hessian {
    Condensed(CondensedHessian),
    Dense(DMatrix<f64>),
}

impl Hessian {
    pub fn dim(&self) -> usize {
        match self {
            Hessian::Condensed(h) => h.dim(),
            Hessian::Dense(m) => m.nrows(),
        }
    }

    pub fn apply(&self, u: &[f64], out: &mut [f64]) {
        match self {
            Hessian::Condensed(h) => h.apply(u, out),
            Hessian::Dense(m) => {
                for (i, o) in out.iter_mut().enumerate() {
                    *o = m.row(i).iter().zip(u).map(|(a, b)| a * b).sum();
                }
            }
        }
    }

    pub fn eigenvalue_bound(&self) -> f64 {
        match self {
            Hessian::Condensed(h) => h.eigenvalue_bound(),
            Hessian::Dense(m) => m
                .row_iter()
                .map(|row| row.iter().map(|a| a.abs()).sum::<f64>())
                .fold(0.0, f64::max),
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            Hessian::Condensed(h) => h.to_dense(),
            Hessian::Dense(m) => m.clone(),
        }
    }
}

/// `sum_{i in indices} u_i <= bound` over a contiguous index range.
#[derive(Debug, Clone, PartialEq)]
pub struct BudgetRow {
    pub indices: Range<usize>,
    pub bound: f64,
}

/// `minimize u' H u + linear' u + constant` subject to
/// `lower <= u <= upper` and the budget rows (disjoint ranges).
#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    pub hessian: Hessian,
    pub linear: Vec<f64>,
    pub constant: f64,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub budget_rows: Vec<BudgetRow>,
}

impl QpProblem {
    pub fn dim(&self) -> usize {
        self.linear.len()
    }

    pub fn objective(&self, u: &[f64]) -> f64 {
        let mut hu = vec![0.0; u.len()];
        self.hessian.apply(u, &mut hu);
        dot(u, &hu) + dot(&self.linear, u) + self.constant
    }

    /// `2 H u + linear`.
    pub fn gradient(&self, u: &[f64], out: &mut [f64]) {
        self.hessian.apply(u, out);
        for (g, c) in out.iter_mut().zip(&self.linear) {
            *g = 2.0 * *g + c;
        }
    }

    /// Largest violation of the box and budget constraints.
    pub fn primal_violation(&self, u: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..u.len() {
            worst = worst.max(self.lower[i] - u[i]).max(u[i] - self.upper[i]);
        }
        for row in &self.budget_rows {
            let total: f64 = u[row.indices.clone()].iter().sum();
            worst = worst.max(total - row.bound);
        }
        worst
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Builds the condensed QP for the non-adopters' current reluctances.
///
/// Cost (with `C` the centering operator over non-adopters):
///
/// ```text
/// sum_{k=0}^{L-1} [ q |rho(k)|^2 + r |u(k)|^2 ] + delta |rho(L)|^2_P
///   + m sum_{k=1}^{L} |C rho(k)|^2 + n sum_{k=0}^{L-1} |C u(k)|^2
/// ```
pub fn assemble_qp(
    rho_now: &[f64],
    b_free: &[f64],
    cfg: &MpcConfig,
    p_diag: &[f64],
) -> Result<QpProblem, ControlError> {
    let n = rho_now.len();
    if n == 0 {
        return Err(ControlError::EmptyDecisionSet);
    }
    if b_free.len() != n || p_diag.len() != n {
        return Err(ControlError::DimensionMismatch(format!(
            "{} reluctances, {} receptivities, {} terminal weights",
            n,
            b_free.len(),
            p_diag.len()
        )));
    }
    let len = cfg.horizon;
    let mut centered = rho_now.to_vec();
    center(&mut centered);

    let mut linear = vec![0.0; n * len];
    for j in 0..len {
        for v in 0..n {
            let b = b_free[v];
            linear[j * n + v] = 2.0 * cfg.q * rho_now[v] * b * (len - 1 - j) as f64
                + 2.0 * cfg.delta * p_diag[v] * rho_now[v] * b
                + 2.0 * cfg.equity * centered[v] * b * (len - j) as f64;
        }
    }
    let sq = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>();
    let constant = cfg.q * len as f64 * sq(rho_now)
        + cfg.delta * rho_now.iter().zip(p_diag).map(|(r, p)| p * r * r).sum::<f64>()
        + cfg.equity * len as f64 * sq(&centered);

    let hessian = CondensedHessian {
        n_free: n,
        horizon: len,
        q: cfg.q,
        r: cfg.r,
        delta: cfg.delta,
        equity: cfg.equity,
        equality: cfg.equality,
        b: b_free.to_vec(),
        p: p_diag.to_vec(),
    };
    Ok(QpProblem {
        hessian: Hessian::Condensed(hessian),
        linear,
        constant,
        lower: vec![0.0; n * len],
        upper: vec![1.0; n * len],
        budget_rows: (0..len)
            .map(|k| BudgetRow {
                indices: k * n..(k + 1) * n,
                bound: cfg.budget,
            })
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::riccati::solve_scalar_dare;
    use proptest::prelude::*;

    /// Cost evaluated by rolling the reluctance dynamics forward.
    fn rollout_cost(rho0: &[f64], b: &[f64], p: &[f64], cfg: &MpcConfig, u: &[f64]) -> f64 {
        let n = rho0.len();
        let spread = |x: &[f64]| {
            let mean = x.iter().sum::<f64>() / x.len() as f64;
            x.iter().map(|v| (v - mean).powi(2)).sum::<f64>()
        };
        let mut rho = rho0.to_vec();
        let mut cost = 0.0;
        for k in 0..cfg.horizon {
            let uk = &u[k * n..(k + 1) * n];
            cost += cfg.q * rho.iter().map(|r| r * r).sum::<f64>();
            cost += cfg.r * uk.iter().map(|x| x * x).sum::<f64>();
            cost += cfg.equality * spread(uk);
            for v in 0..n {
                rho[v] += b[v] * uk[v];
            }
            cost += cfg.equity * spread(&rho);
        }
        cost + cfg.delta * rho.iter().zip(p).map(|(r, p)| p * r * r).sum::<f64>()
    }

    fn cfg(horizon: usize, equity: f64, equality: f64) -> MpcConfig {
        MpcConfig {
            horizon,
            budget: 2.0,
            equity,
            equality,
            ..MpcConfig::default()
        }
    }

    #[test]
    fn single_step_hessian_is_diagonal() {
        let c = cfg(1, 0.0, 0.0);
        let b = [-1.0, -0.4];
        let p: Vec<f64> = b.iter().map(|&b| solve_scalar_dare(c.q, c.r, b).unwrap()).collect();
        let qp = assemble_qp(&[0.5, 0.7], &b, &c, &p).unwrap();
        let h = qp.hessian.to_dense();
        for v in 0..2 {
            assert!((h[(v, v)] - (c.r + c.delta * p[v] * b[v] * b[v])).abs() < 1e-14);
        }
        assert_eq!(h[(0, 1)], 0.0);
    }

    #[test]
    fn single_agent_has_no_fairness_terms() {
        let fair = assemble_qp(&[0.6], &[-0.7], &cfg(4, 10.0, 10.0), &[2.0]).unwrap();
        let plain = assemble_qp(&[0.6], &[-0.7], &cfg(4, 0.0, 0.0), &[2.0]).unwrap();
        let (hf, hp) = (fair.hessian.to_dense(), plain.hessian.to_dense());
        assert!((hf - hp).abs().max() < 1e-12);
        assert!(fair
            .linear
            .iter()
            .zip(&plain.linear)
            .all(|(a, b)| (a - b).abs() < 1e-12));
        assert!((fair.constant - plain.constant).abs() < 1e-12);
    }

    #[test]
    fn empty_and_mismatched_inputs() {
        assert!(matches!(
            assemble_qp(&[], &[], &cfg(2, 0.0, 0.0), &[]),
            Err(ControlError::EmptyDecisionSet)
        ));
        assert!(matches!(
            assemble_qp(&[0.5], &[-1.0, -1.0], &cfg(2, 0.0, 0.0), &[1.0]),
            Err(ControlError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn budget_rows_cover_each_step() {
        let qp = assemble_qp(&[0.5, 0.6, 0.7], &[-1.0; 3], &cfg(4, 0.0, 0.0), &[1.6; 3]).unwrap();
        assert_eq!(qp.budget_rows.len(), 4);
        for (k, row) in qp.budget_rows.iter().enumerate() {
            assert_eq!(row.indices, 3 * k..3 * k + 3);
        }
    }

    proptest! {
        #[test]
        fn condensed_form_matches_rollout(
            n in 1usize..6, horizon in 1usize..6,
            seed in any::<u64>(), equity in 0.0f64..10.0, equality in 0.0f64..10.0,
        ) {
            use rand::Rng;
            let mut rng = crate::seeds::stream(seed, 0, 0);
            let rho0: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            let b: Vec<f64> = (0..n).map(|_| -rng.random::<f64>()).collect();
            let c = MpcConfig { horizon, equity, equality, ..MpcConfig::default() };
            let p: Vec<f64> = b.iter().map(|&b| solve_scalar_dare(c.q, c.r, b).unwrap()).collect();
            let qp = assemble_qp(&rho0, &b, &c, &p).unwrap();
            let zero = vec![0.0; n * horizon];
            prop_assert!((qp.objective(&zero) - rollout_cost(&rho0, &b, &p, &c, &zero)).abs() < 1e-9);
            for _ in 0..3 {
                let u: Vec<f64> = (0..n * horizon).map(|_| rng.random::<f64>()).collect();
                let direct = rollout_cost(&rho0, &b, &p, &c, &u);
                prop_assert!((qp.objective(&u) - direct).abs() < 1e-9 * direct.abs().max(1.0));
            }
            let h = qp.hessian.to_dense();
            prop_assert!((&h - h.transpose()).abs().max() < 1e-12);
            let eig = h.clone().symmetric_eigenvalues();
            prop_assert!(eig.min() >= c.r - 1e-9);
            prop_assert!(eig.max() <= qp.hessian.eigenvalue_bound() + 1e-9);
        }
    }
}
