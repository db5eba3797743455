//! Box- and budget-constrained convex QP solver.
//!
//! The globalization is an accelerated projected gradient method (FISTA with
//! gradient-based adaptive restart). Projection onto each budget row's
//! feasible set `{lo <= x <= hi, sum x <= B}` is exact. Once the iterates'
//! active set stops changing, a polishing phase solves the equality-
//! constrained subproblem on the free variables with projected conjugate
//! gradients and repairs the active set until the multipliers have the right
//! signs. A solution is reported optimal only when [`certify`] accepts it.

use serde::{Deserialize, Serialize};

use super::kkt::{certify, KktReport};
use super::qp::{dot, QpProblem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    MaxIter,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub u_star: Vec<f64>,
    pub objective: f64,
    pub kkt: KktReport,
    pub iterations: usize,
    pub status: SolveStatus,
}

/// Iterations between optimality checks.
const CHECK_INTERVAL: usize = 10;
const POLISH_ROUNDS: usize = 30;

pub fn solve_qp(problem: &QpProblem, tol: f64, max_iter: usize) -> QpSolution {
    solve_qp_from(problem, tol, max_iter, None)
}

/// Solves `problem`, starting from `warm` (projected onto the feasible set)
/// when given.
pub fn solve_qp_from(problem: &QpProblem, tol: f64, max_iter: usize, warm: Option<&[f64]>) -> QpSolution {
    let dim = problem.dim();
    if !structurally_feasible(problem) {
        return QpSolution {
            u_star: vec![0.0; dim],
            objective: f64::NAN,
            kkt: KktReport {
                primal: f64::INFINITY,
                ..KktReport::default()
            },
            iterations: 0,
            status: SolveStatus::Infeasible,
        };
    }
    let mut x = match warm {
        Some(w) if w.len() == dim => w.to_vec(),
        _ => vec![0.0; dim],
    };
    project(problem, &mut x);

    let finish = |u: Vec<f64>, kkt: KktReport, iterations: usize, status: SolveStatus| QpSolution {
        objective: problem.objective(&u),
        u_star: u,
        kkt,
        iterations,
        status,
    };

    let report = certify(problem, &x);
    if report.within(tol) {
        return finish(x, report, 0, SolveStatus::Optimal);
    }
    let mut best = (report.max_residual(), x.clone());

    let step = 1.0 / (2.0 * problem.hessian.eigenvalue_bound());
    let mut y = x.clone();
    let mut x_next = vec![0.0; dim];
    let mut grad = vec![0.0; dim];
    let mut momentum = 1.0f64;
    let mut last_active: Option<ActiveSet> = None;

    for iter in 1..=max_iter {
        problem.gradient(&y, &mut grad);
        for i in 0..dim {
            x_next[i] = y[i] - step * grad[i];
        }
        project(problem, &mut x_next);

        // restart when the step and the momentum direction disagree
        let mut agreement = 0.0;
        for i in 0..dim {
            agreement += (y[i] - x_next[i]) * (x_next[i] - x[i]);
        }
        let next_momentum = if agreement > 0.0 {
            1.0
        } else {
            0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt())
        };
        let beta = if agreement > 0.0 {
            0.0
        } else {
            (momentum - 1.0) / next_momentum
        };
        for i in 0..dim {
            y[i] = x_next[i] + beta * (x_next[i] - x[i]);
        }
        momentum = next_momentum;
        std::mem::swap(&mut x, &mut x_next);

        if iter % CHECK_INTERVAL != 0 && iter != max_iter {
            continue;
        }
        let report = certify(problem, &x);
        if report.within(tol) {
            return finish(x, report, iter, SolveStatus::Optimal);
        }
        if report.max_residual() < best.0 {
            best = (report.max_residual(), x.clone());
        }
        let active = ActiveSet::classify(problem, &x);
        if last_active.as_ref() == Some(&active) {
            if let Some(polished) = polish(problem, &x, active.clone()) {
                let report = certify(problem, &polished);
                if report.within(tol) {
                    return finish(polished, report, iter, SolveStatus::Optimal);
                }
                if report.max_residual() < best.0 {
                    best = (report.max_residual(), polished);
                }
            }
        }
        last_active = Some(active);
    }
    let report = certify(problem, &best.1);
    finish(best.1, report, max_iter, SolveStatus::MaxIter)
}

fn structurally_feasible(problem: &QpProblem) -> bool {
    let boxes_ok = problem.lower.iter().zip(&problem.upper).all(|(lo, hi)| lo <= hi);
    let rows_ok = problem
        .budget_rows
        .iter()
        .all(|row| problem.lower[row.indices.clone()].iter().sum::<f64>() <= row.bound);
    boxes_ok && rows_ok
}

/// Euclidean projection onto the feasible set (rows are disjoint).
pub(crate) fn project(problem: &QpProblem, x: &mut [f64]) {
    for i in 0..x.len() {
        x[i] = x[i].clamp(problem.lower[i], problem.upper[i]);
    }
    for row in &problem.budget_rows {
        let r = row.indices.clone();
        project_row(
            &mut x[r.clone()],
            &problem.lower[r.clone()],
            &problem.upper[r],
            row.bound,
        );
    }
}

/// Projects a box-feasible `x` onto `{lo <= x <= hi, sum x <= bound}` by
/// finding the shift `tau >= 0` with `sum clamp(x - tau, lo, hi) = bound`.
fn project_row(x: &mut [f64], lo: &[f64], hi: &[f64], bound: f64) {
    if x.iter().sum::<f64>() <= bound {
        return;
    }
    let shifted = |tau: f64| -> f64 {
        x.iter()
            .zip(lo)
            .zip(hi)
            .map(|((v, l), h)| (v - tau).clamp(*l, *h))
            .sum()
    };
    let mut breakpoints: Vec<f64> = x
        .iter()
        .zip(lo)
        .zip(hi)
        .flat_map(|((v, l), h)| [v - h, v - l])
        .filter(|t| *t > 0.0)
        .collect();
    breakpoints.push(0.0);
    breakpoints.sort_by(f64::total_cmp);
    breakpoints.dedup();
    // first breakpoint where the shifted sum drops to the bound
    let (mut a, mut b) = (0, breakpoints.len() - 1);
    while b - a > 1 {
        let mid = (a + b) / 2;
        if shifted(breakpoints[mid]) > bound {
            a = mid;
        } else {
            b = mid;
        }
    }
    let (t1, t2) = (breakpoints[a], breakpoints[b]);
    let (h1, h2) = (shifted(t1), shifted(t2));
    let tau = if h1 - h2 > 0.0 {
        t1 + (h1 - bound) * (t2 - t1) / (h1 - h2)
    } else {
        t2
    };
    for i in 0..x.len() {
        x[i] = (x[i] - tau).clamp(lo[i], hi[i]);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Bound {
    Free,
    Lower,
    Upper,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct ActiveSet {
    bounds: Vec<Bound>,
    rows: Vec<bool>,
}

impl ActiveSet {
    fn classify(problem: &QpProblem, x: &[f64]) -> Self {
        let bounds = (0..x.len())
            .map(|i| {
                if x[i] <= problem.lower[i] + 1e-12 {
                    Bound::Lower
                } else if x[i] >= problem.upper[i] - 1e-12 {
                    Bound::Upper
                } else {
                    Bound::Free
                }
            })
            .collect();
        let rows = problem
            .budget_rows
            .iter()
            .map(|row| x[row.indices.clone()].iter().sum::<f64>() >= row.bound - 1e-10)
            .collect();
        Self { bounds, rows }
    }
}

/// Active-set repair around `x`. Returns a box-feasible candidate whose
/// active set is self-consistent, or `None` if the repair did not settle.
fn polish(problem: &QpProblem, x: &[f64], mut active: ActiveSet) -> Option<Vec<f64>> {
    let dim = problem.dim();
    let scale = 1.0 + problem.linear.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let eps = 1e-11 * scale;
    let mut row_of = vec![None; dim];
    for (k, row) in problem.budget_rows.iter().enumerate() {
        for i in row.indices.clone() {
            row_of[i] = Some(k);
        }
    }
    let mut z = x.to_vec();
    let mut grad = vec![0.0; dim];
    for _ in 0..POLISH_ROUNDS {
        solve_equality(problem, &active, &mut z);
        problem.gradient(&z, &mut grad);

        let multipliers: Vec<f64> = problem
            .budget_rows
            .iter()
            .enumerate()
            .map(|(k, row)| {
                if !active.rows[k] {
                    return 0.0;
                }
                let free: Vec<usize> = row
                    .indices
                    .clone()
                    .filter(|&i| active.bounds[i] == Bound::Free)
                    .collect();
                if free.is_empty() {
                    row.indices
                        .clone()
                        .filter(|&i| active.bounds[i] == Bound::Lower)
                        .map(|i| -grad[i])
                        .fold(0.0, f64::max)
                } else {
                    -free.iter().map(|&i| grad[i]).sum::<f64>() / free.len() as f64
                }
            })
            .collect();
        let mu = |i: usize| row_of[i].map_or(0.0, |k| multipliers[k]);

        let mut changed = false;
        for i in 0..dim {
            let next = match active.bounds[i] {
                Bound::Free if z[i] < problem.lower[i] - eps => Bound::Lower,
                Bound::Free if z[i] > problem.upper[i] + eps => Bound::Upper,
                Bound::Lower if grad[i] + mu(i) < -eps => Bound::Free,
                Bound::Upper if grad[i] + mu(i) > eps => Bound::Free,
                current => current,
            };
            if next != active.bounds[i] {
                active.bounds[i] = next;
                changed = true;
            }
        }
        for (k, row) in problem.budget_rows.iter().enumerate() {
            let total: f64 = z[row.indices.clone()].iter().sum();
            if active.rows[k] && multipliers[k] < -eps {
                active.rows[k] = false;
                changed = true;
            } else if !active.rows[k] && total > row.bound + eps {
                active.rows[k] = true;
                changed = true;
            }
        }
        if !changed {
            for i in 0..dim {
                z[i] = z[i].clamp(problem.lower[i], problem.upper[i]);
            }
            return Some(z);
        }
    }
    None
}

/// Minimizes the objective over the free variables of `active`, with bound
/// variables pinned and active budget rows holding with equality. `z` is the
/// starting point on entry and the minimizer on exit.
fn solve_equality(problem: &QpProblem, active: &ActiveSet, z: &mut [f64]) {
    let dim = problem.dim();
    let free: Vec<bool> = active.bounds.iter().map(|b| *b == Bound::Free).collect();
    for i in 0..dim {
        match active.bounds[i] {
            Bound::Lower => z[i] = problem.lower[i],
            Bound::Upper => z[i] = problem.upper[i],
            Bound::Free => {}
        }
    }
    // equality rows that still have free variables, as (range, free count)
    let rows: Vec<_> = problem
        .budget_rows
        .iter()
        .zip(&active.rows)
        .filter(|(_, on)| **on)
        .filter_map(|(row, _)| {
            let count = row.indices.clone().filter(|&i| free[i]).count();
            (count > 0).then(|| (row.indices.clone(), count, row.bound))
        })
        .collect();
    for (range, count, bound) in &rows {
        let shift = (bound - z[range.clone()].iter().sum::<f64>()) / *count as f64;
        range.clone().filter(|&i| free[i]).for_each(|i| z[i] += shift);
    }
    // orthogonal projector onto the tangent space of the equality set
    let tangent = |v: &mut [f64]| {
        for i in 0..dim {
            if !free[i] {
                v[i] = 0.0;
            }
        }
        for (range, count, _) in &rows {
            let mean = range.clone().filter(|&i| free[i]).map(|i| v[i]).sum::<f64>() / *count as f64;
            range.clone().filter(|&i| free[i]).for_each(|i| v[i] -= mean);
        }
    };

    let mut residual = vec![0.0; dim];
    problem.gradient(z, &mut residual);
    residual.iter_mut().for_each(|v| *v = -*v);
    tangent(&mut residual);
    let mut direction = residual.clone();
    let mut curvature = vec![0.0; dim];
    let mut rr = dot(&residual, &residual);
    let stop = (1e-15 * (1.0 + dot(&problem.linear, &problem.linear).sqrt())).powi(2);
    for _ in 0..(2 * dim).max(50) {
        if rr <= stop {
            break;
        }
        problem.hessian.apply(&direction, &mut curvature);
        curvature.iter_mut().for_each(|v| *v *= 2.0);
        let denom = dot(&direction, &curvature);
        if denom <= 0.0 {
            break;
        }
        let alpha = rr / denom;
        for i in 0..dim {
            z[i] += alpha * direction[i];
        }
        tangent(&mut curvature);
        for i in 0..dim {
            residual[i] -= alpha * curvature[i];
        }
        let rr_next = dot(&residual, &residual);
        let beta = rr_next / rr;
        for i in 0..dim {
            direction[i] = residual[i] + beta * direction[i];
        }
        rr = rr_next;
    }
}
