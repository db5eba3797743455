//! Independent reference models shared by the integration tests.
#![allow(dead_code)]

use nalgebra::DMatrix;
use nudgecast::control::MpcConfig;

/// Reference cost from forward simulation of the reluctance dynamics.
pub fn rollout_cost(rho0: &[f64], b: &[f64], p: &[f64], cfg: &MpcConfig, u: &[f64]) -> f64 {
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

/// Dense QP recovered from the rollout cost by exact finite differences
/// (the cost is quadratic, so second differences are exact up to rounding).
pub fn dense_from_rollout(rho0: &[f64], b: &[f64], p: &[f64], cfg: &MpcConfig) -> (DMatrix<f64>, Vec<f64>, f64) {
    let dim = rho0.len() * cfg.horizon;
    let f = |u: &[f64]| rollout_cost(rho0, b, p, cfg, u);
    let zero = vec![0.0; dim];
    let f0 = f(&zero);
    let unit = |i: usize| {
        let mut e = vec![0.0; dim];
        e[i] = 1.0;
        e
    };
    let diag: Vec<f64> = (0..dim).map(|i| f(&unit(i))).collect();
    let minus: Vec<f64> = (0..dim)
        .map(|i| {
            let mut e = vec![0.0; dim];
            e[i] = -1.0;
            f(&e)
        })
        .collect();
    let mut h = DMatrix::zeros(dim, dim);
    let mut c = vec![0.0; dim];
    for i in 0..dim {
        h[(i, i)] = (diag[i] + minus[i] - 2.0 * f0) / 2.0;
        c[i] = (diag[i] - minus[i]) / 2.0;
    }
    for i in 0..dim {
        for j in (i + 1)..dim {
            let mut e = vec![0.0; dim];
            e[i] = 1.0;
            e[j] = 1.0;
            let hij = (f(&e) - diag[i] - diag[j] + f0) / 2.0;
            h[(i, j)] = hij;
            h[(j, i)] = hij;
        }
    }
    (h, c, f0)
}

/// Full KKT re-check with a dense Hessian: multipliers from a nonnegative
/// least-squares fit on each budget row, computed by brute-force scan.
pub fn dense_kkt(h: &DMatrix<f64>, c: &[f64], u: &[f64], n: usize, horizon: usize, budget: f64) -> f64 {
    let ux = nalgebra::DVector::from_column_slice(u);
    let g: Vec<f64> = (h * &ux * 2.0).iter().zip(c).map(|(a, b)| a + b).collect();
    let mut worst: f64 = 0.0;
    for k in 0..horizon {
        let idx: Vec<usize> = (k * n..(k + 1) * n).collect();
        let total: f64 = idx.iter().map(|&i| u[i]).sum();
        worst = worst.max(total - budget);
        let residual = |mu: f64| -> f64 {
            let mut r = mu * (budget - total).abs();
            for &i in &idx {
                let w = g[i] + mu;
                worst_coord(&mut r, w, u[i]);
            }
            r
        };
        // interior coordinates pin mu; otherwise scan candidates
        let mut candidates = vec![0.0];
        candidates.extend(idx.iter().map(|&i| (-g[i]).max(0.0)));
        let best = candidates.into_iter().map(residual).fold(f64::INFINITY, f64::min);
        worst = worst.max(best);
    }
    worst
}

fn worst_coord(r: &mut f64, w: f64, u: f64) {
    let at_lower = u <= 1e-12;
    let at_upper = u >= 1.0 - 1e-12;
    let e = if at_lower {
        (-w).max(0.0)
    } else if at_upper {
        w.max(0.0)
    } else {
        w.abs()
    };
    *r = r.max(e).max((-u).max(u - 1.0));
}

/// Random controller instance: reluctances, receptivities, terminal weights, config.
pub fn random_instance<R: rand::Rng>(
    rng: &mut R,
    max_n: usize,
    max_horizon: usize,
) -> (Vec<f64>, Vec<f64>, Vec<f64>, MpcConfig) {
    let n = rng.random_range(1..=max_n);
    let cfg = MpcConfig {
        horizon: rng.random_range(1..=max_horizon),
        budget: rng.random_range(0.2..(n as f64).max(0.5)),
        q: rng.random_range(0.5..2.0),
        r: rng.random_range(0.5..2.0),
        delta: rng.random_range(1.0..3.0),
        equity: if rng.random_bool(0.5) {
            rng.random_range(0.0..10.0)
        } else {
            0.0
        },
        equality: if rng.random_bool(0.5) {
            rng.random_range(0.0..10.0)
        } else {
            0.0
        },
        ..MpcConfig::default()
    };
    let rho: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let b: Vec<f64> = (0..n).map(|_| -rng.random::<f64>()).collect();
    let p = b
        .iter()
        .map(|&b| nudgecast::control::solve_scalar_dare(cfg.q, cfg.r, b).unwrap())
        .collect();
    (rho, b, p, cfg)
}

/// Checks the closed-loop invariants of one run.
pub fn run_invariants(run: &nudgecast::harness::RunResult, budget: f64) -> Result<(), String> {
    if run.gamma.windows(2).any(|w| w[1] < w[0]) {
        return Err(format!("run {}: adoption rate decreased", run.seed));
    }
    for (t, u) in run.policy_matrix.iter().enumerate() {
        let total: f64 = u.iter().sum();
        if total > budget + 1e-8 {
            return Err(format!("run {}: step {t} spends {total}", run.seed));
        }
        for (v, &uv) in u.iter().enumerate() {
            if run.adopted[t][v] && uv != 0.0 {
                return Err(format!("run {}: adopter {v} nudged at step {t}", run.seed));
            }
            if !(0.0..=1.0).contains(&uv) {
                return Err(format!("run {}: u[{t}][{v}] = {uv} outside [0, 1]", run.seed));
            }
            if run.rho_matrix[t + 1][v] > run.rho_matrix[t][v] {
                return Err(format!("run {}: reluctance of {v} rose at step {t}", run.seed));
            }
        }
    }
    Ok(())
}

pub fn repo_path(relative: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../..")
        .join(relative)
}
