//! KKT certification of a candidate QP solution.
//!
//! The certificate is computed from the problem data and the candidate point
//! alone. Bound multipliers follow from the gradient once the budget
//! multiplier of each row is fixed, and each budget multiplier is chosen by a
//! one-dimensional convex minimization of the worst residual in its row.

use super::qp::QpProblem;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct KktReport {
    /// Worst stationarity residual after the best nonnegative multipliers.
    pub stationarity: f64,
    /// Worst bound or budget violation.
    pub primal: f64,
    /// Worst product of a multiplier with its constraint slack.
    pub complementarity: f64,
}

impl KktReport {
    pub fn max_residual(&self) -> f64 {
        self.stationarity.max(self.primal).max(self.complementarity)
    }

    pub fn within(&self, tol: f64) -> bool {
        self.max_residual() <= tol
    }
}

/// Residuals of one coordinate for a shifted gradient `w = g_i + mu`.
/// Returns `(stationarity, complementarity)`.
fn coordinate_residual(w: f64, u: f64, lower: f64, upper: f64) -> (f64, f64) {
    if u - lower <= upper - u {
        // lower-bound multiplier absorbs a positive shifted gradient
        ((-w).max(0.0), w.max(0.0) * (u - lower).abs())
    } else {
        (w.max(0.0), (-w).max(0.0) * (upper - u).abs())
    }
}

fn row_residual(mu: f64, slack: f64, grad: &[f64], u: &[f64], lower: &[f64], upper: &[f64]) -> (f64, f64) {
    let mut stationarity: f64 = 0.0;
    let mut complementarity = mu * slack.abs();
    for i in 0..grad.len() {
        let (s, c) = coordinate_residual(grad[i] + mu, u[i], lower[i], upper[i]);
        stationarity = stationarity.max(s);
        complementarity = complementarity.max(c);
    }
    (stationarity, complementarity)
}

/// Certifies `u` against the first-order optimality conditions of `problem`.
pub fn certify(problem: &QpProblem, u: &[f64]) -> KktReport {
    let dim = problem.dim();
    let mut grad = vec![0.0; dim];
    problem.gradient(u, &mut grad);
    let mut report = KktReport {
        primal: problem.primal_violation(u).max(0.0),
        ..KktReport::default()
    };

    let mut in_row = vec![false; dim];
    for row in &problem.budget_rows {
        let range = row.indices.clone();
        in_row[range.clone()].iter_mut().for_each(|f| *f = true);
        let slack = row.bound - u[range.clone()].iter().sum::<f64>();
        let (g, x, lo, hi) = (
            &grad[range.clone()],
            &u[range.clone()],
            &problem.lower[range.clone()],
            &problem.upper[range],
        );
        let worst = |mu: f64| {
            let (s, c) = row_residual(mu, slack, g, x, lo, hi);
            s.max(c)
        };
        // beyond this every shifted gradient is positive and the error only grows
        let mu_max = g.iter().map(|v| -v).fold(0.0, f64::max) + 1.0;
        let mu = golden_section(worst, 0.0, mu_max);
        let mu = if worst(0.0) <= worst(mu) { 0.0 } else { mu };
        let (s, c) = row_residual(mu, slack, g, x, lo, hi);
        report.stationarity = report.stationarity.max(s);
        report.complementarity = report.complementarity.max(c);
    }
    for i in (0..dim).filter(|&i| !in_row[i]) {
        let (s, c) = coordinate_residual(grad[i], u[i], problem.lower[i], problem.upper[i]);
        report.stationarity = report.stationarity.max(s);
        report.complementarity = report.complementarity.max(c);
    }
    report
}

fn golden_section(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if b - a <= 1e-15 * b.abs().max(1.0) {
            break;
        }
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}
