//! Terminal weights from the scalar discrete algebraic Riccati equation.
//!
//! Each non-adopter's reluctance evolves as `rho(k+1) = rho(k) + b u(k)`, a
//! scalar system with `A = 1`, so the Riccati equation decouples per agent:
//!
//! ```text
//! p = q + p - p^2 b^2 / (r + b^2 p)   <=>   b^2 p^2 - q b^2 p - q r = 0
//! ```

use super::ControlError;

/// Receptivities closer to zero than this are treated as `-RECEPTIVITY_FLOOR`.
pub const RECEPTIVITY_FLOOR: f64 = 1e-3;

/// Positive root of the scalar DARE for `A = 1`, `B = b`.
///
/// For `b` in `(-RECEPTIVITY_FLOOR, 0]` the system is (nearly) uncontrollable
/// and the equation has no finite stabilizing solution; the value at
/// `b = -RECEPTIVITY_FLOOR` is returned instead.
pub fn solve_scalar_dare(q: f64, r: f64, b: f64) -> Result<f64, ControlError> {
    if !(q > 0.0) || !(r > 0.0) {
        return Err(ControlError::InvalidConfig(format!(
            "Riccati weights must be positive, got q={q}, r={r}"
        )));
    }
    let b = if b.abs() < RECEPTIVITY_FLOOR {
        -RECEPTIVITY_FLOOR
    } else {
        b
    };
    let b2 = b * b;
    Ok((q * b2 + (q * q * b2 * b2 + 4.0 * q * r * b2).sqrt()) / (2.0 * b2))
}

/// `|p - q - p + p^2 b^2 / (r + b^2 p)|`, the DARE residual at `p`.
pub fn dare_residual(p: f64, q: f64, r: f64, b: f64) -> f64 {
    let b2 = b * b;
    (p - q - p + p * p * b2 / (r + b2 * p)).abs()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_ratio_at_unit_receptivity() {
        let p = solve_scalar_dare(1.0, 1.0, -1.0).unwrap();
        assert!((p - (1.0 + 5f64.sqrt()) / 2.0).abs() < 1e-12);
        assert!(dare_residual(p, 1.0, 1.0, -1.0) < 1e-12);
    }

    #[test]
    fn half_receptivity() {
        // root of 0.25 p^2 - 0.25 p - 1 = 0
        let p = solve_scalar_dare(1.0, 1.0, -0.5).unwrap();
        assert!((p - (1.0 + 17f64.sqrt()) / 2.0).abs() < 1e-12);
        assert!((p - 2.5615528128).abs() < 1e-9);
        assert!(dare_residual(p, 1.0, 1.0, -0.5) < 1e-12);
    }

    #[test]
    fn uncontrollable_agent_is_capped() {
        let capped = solve_scalar_dare(1.0, 1.0, -RECEPTIVITY_FLOOR).unwrap();
        assert_eq!(solve_scalar_dare(1.0, 1.0, 0.0).unwrap(), capped);
        assert_eq!(solve_scalar_dare(1.0, 1.0, -1e-5).unwrap(), capped);
        assert!(capped.is_finite() && capped > 0.0);
    }

    #[test]
    fn rejects_nonpositive_weights() {
        assert!(solve_scalar_dare(0.0, 1.0, -1.0).is_err());
        assert!(solve_scalar_dare(1.0, -1.0, -1.0).is_err());
        assert!(solve_scalar_dare(f64::NAN, 1.0, -1.0).is_err());
    }

    #[test]
    fn residual_on_grid() {
        for i in 0..100 {
            let b = -1.0 + i as f64 * (1.0 - RECEPTIVITY_FLOOR) / 99.0;
            for (q, r) in [(1.0, 1.0), (2.0, 0.5), (0.1, 10.0)] {
                let p = solve_scalar_dare(q, r, b).unwrap();
                assert!(dare_residual(p, q, r, b) <= 1e-10 * q.max(1.0), "b={b} q={q} r={r}");
            }
        }
    }
}
