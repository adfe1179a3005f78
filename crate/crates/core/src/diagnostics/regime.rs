use serde::Serialize;

use super::thresholds::REGIME_TOLERANCE;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegimeVerdict {
    pub beta: f64,
    pub alpha: f64,
    pub condition_t1: bool,
    /// Exponents `γ` with `K_n ≍ n^γ` admissible for the full chain.
    pub gamma_window: (f64, f64),
    pub feasible: bool,
}

/// `(2β+1)(α+1) + 4αβ(4β+1) < 4β²` and the window
/// `((1+α)/(2β), (2β − 2α(4β+1))/(2β+1))` for `d_n ≍ n^α`.
pub fn regime_check(beta: f64, alpha: f64) -> Result<RegimeVerdict> {
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::Parameter(format!("beta must lie in (0, 1], got {beta}")));
    }
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::Parameter(format!("alpha must be >= 0, got {alpha}")));
    }
    let lhs = (2.0 * beta + 1.0) * (alpha + 1.0) + 4.0 * alpha * beta * (4.0 * beta + 1.0);
    let condition_t1 = lhs < 4.0 * beta * beta - REGIME_TOLERANCE;
    let lo = (1.0 + alpha) / (2.0 * beta);
    let hi = (2.0 * beta - 2.0 * alpha * (4.0 * beta + 1.0)) / (2.0 * beta + 1.0);
    let feasible = condition_t1 && lo < hi - REGIME_TOLERANCE;
    Ok(RegimeVerdict { beta, alpha, condition_t1, gamma_window: (lo, hi), feasible })
}
