//! Quadrature helpers built on the double-exponential rule of the
//! `quadrature` crate. The rule caps the number of evaluations per call, so
//! long or oscillatory ranges are split into panels by the caller.

use crate::error::{Error, Result};

/// Integrates `f` over `[a, b]` and fails if the error estimate exceeds `tol`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let out = quadrature::double_exponential::integrate(f, a, b, tol);
    if !out.integral.is_finite() || out.error_estimate > tol {
        return Err(Error::Quadrature {
            lower: a,
            upper: b,
            estimate: out.error_estimate,
        });
    }
    Ok(out.integral)
}

/// Integrates over consecutive panels `[p_0, p_1], [p_1, p_2], ...`.
pub fn integrate_panels<F: Fn(f64) -> f64>(f: F, panels: &[f64], tol: f64) -> Result<f64> {
    let per_panel = tol / panels.len().max(1) as f64;
    panels
        .windows(2)
        .map(|w| integrate(&f, w[0], w[1], per_panel))
        .sum()
}
