//! Bound evaluations and Monte-Carlo verification suites.

pub mod energy;
pub mod regime;
pub mod risk;
pub mod stats;
pub mod thresholds;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::basis::{approximation_bound, sup_sum_squares_bound};
use crate::chain::{run_chain, ChainSetup, SpliceMode};
use crate::error::{Error, Result};
use crate::seed::SeedNode;
use stats::{mean_se, MeanSe};
use thresholds::{BOUND_SE_MULTIPLIER, CLOSED_FORM_TOLERANCE, MIN_LOCALIZATION_REPS};

pub use energy::{two_sample_energy, EnergyTest};
pub use regime::{regime_check, RegimeVerdict};
pub use risk::{risk_rate_suite, PilotId, RiskEstimate, RiskFit, RiskPoint};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub name: String,
    pub lhs: f64,
    /// Standard error of `lhs - rhs`; zero for closed forms.
    pub se: f64,
    pub rhs: f64,
    pub satisfied: bool,
    /// Scenario hash.
    pub scenario: String,
}

impl BoundReport {
    pub fn new(name: &str, lhs: f64, se: f64, rhs: f64, scenario: &str) -> Self {
        Self {
            name: name.into(),
            lhs,
            se,
            rhs,
            satisfied: lhs <= rhs + BOUND_SE_MULTIPLIER * se,
            scenario: scenario.into(),
        }
    }
}

/// `2{1 − exp(−(n/8σ²)·err_sq)}`
pub fn hellinger_rhs(err_sq: f64, n: usize, sigma: f64) -> f64 {
    2.0 * (1.0 - (-(n as f64) * err_sq / (8.0 * sigma * sigma)).exp())
}

/// Same bound with `err_sq` replaced by `ρ^{-1} d C² K^{-2β}`.
pub fn hellinger_crude(holder_c: f64, beta: f64, d: usize, bins: usize, n: usize, sigma: f64, rho: f64) -> f64 {
    let err = d as f64 * holder_c * holder_c * (bins as f64).powf(-2.0 * beta) / rho;
    hellinger_rhs(err, n, sigma)
}

/// Hellinger bound from the exact approximation error (lhs) against the
/// version using the Hölder-class error bound (rhs).
pub fn hellinger_bound(setup: &ChainSetup, n: usize, scenario: &str) -> BoundReport {
    let lhs = hellinger_rhs(setup.approx_err_sq, n, setup.sigma);
    let rhs = hellinger_crude(
        setup.g.holder_c,
        setup.g.holder_beta,
        setup.model.d(),
        setup.basis.bins(),
        n,
        setup.sigma,
        setup.model.rho(),
    );
    BoundReport::new("hellinger", lhs, 0.0, rhs, scenario)
}

/// `err_sq ≤ ρ^{-1} d C² K^{-2β}`
pub fn approximation_report(setup: &ChainSetup, scenario: &str) -> BoundReport {
    let rhs = approximation_bound(&setup.g, setup.basis.bins(), setup.model.rho());
    BoundReport::new("approximation", setup.approx_err_sq, 0.0, rhs, scenario)
}

/// `sup Σψ² ≤ ρ^{-1}{1 + Kd(1 + π²/6)}`
pub fn basis_sup_report(setup: &ChainSetup, scenario: &str) -> BoundReport {
    let sup = setup.basis.sup_sum_squares();
    let rhs = sup_sum_squares_bound(setup.model.rho(), setup.basis.bins(), setup.model.d());
    BoundReport::new("basis_sup_sum_squares", sup.value, 0.0, rhs, scenario)
}

#[derive(Debug, Clone, Serialize)]
pub struct KlTv {
    /// `(n/2σ²)·err_sq`
    pub kl: f64,
    /// `√(1 − e^{−kl})`
    pub tv_bound: f64,
    /// KL between the two score laws by the general Gaussian formula.
    pub kl_scores: f64,
    pub report: BoundReport,
}

/// `KL(N(μ0, Σ0) ‖ N(μ1, Σ1))`.
pub fn gaussian_kl(mu0: &DVector<f64>, cov0: &DMatrix<f64>, mu1: &DVector<f64>, cov1: &DMatrix<f64>) -> Result<f64> {
    let k = mu0.len();
    let chol1 = cov1.clone().cholesky().ok_or_else(|| Error::Parameter("covariance is not positive definite".into()))?;
    let chol0 = cov0.clone().cholesky().ok_or_else(|| Error::Parameter("covariance is not positive definite".into()))?;
    let trace = chol1.solve(cov0).trace();
    let diff = mu1 - mu0;
    let maha = diff.dot(&chol1.solve(&diff));
    let logdet = |c: &nalgebra::Cholesky<f64, nalgebra::Dyn>| 2.0 * c.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    Ok(0.5 * (trace + maha - k as f64 + logdet(&chol1) - logdet(&chol0)))
}

pub fn kl_and_tv(setup: &ChainSetup, n: usize, scenario: &str) -> Result<KlTv> {
    let kl = n as f64 / (2.0 * setup.sigma * setup.sigma) * setup.approx_err_sq;
    let tv_bound = (1.0 - (-kl).exp()).sqrt();
    // scores of the two sheets: basis scores plus the residual direction
    let k = setup.target.len();
    let mut mean_k = DVector::zeros(k + 1);
    mean_k.rows_mut(0, k).copy_from(&setup.target);
    let mut mean_j = mean_k.clone();
    mean_k[k] = setup.approx_err_sq.max(0.0).sqrt();
    mean_j[k] = 0.0;
    let cov = DMatrix::identity(k + 1, k + 1) * (setup.sigma * setup.sigma / n as f64);
    let kl_scores = gaussian_kl(&mean_k, &cov, &mean_j, &cov)?;
    let report = BoundReport::new("kl_score_crosscheck", (kl - kl_scores).abs(), 0.0, CLOSED_FORM_TOLERANCE, scenario);
    Ok(KlTv { kl, tv_bound, kl_scores, report })
}

#[derive(Debug, Clone, Serialize)]
pub struct LocalizationDefect {
    /// `(n−m)·E‖(M̂₂ − I)(G − Ĝ₁)‖²`
    pub lhs: MeanSe,
    /// `E‖g − ĝ₁‖²`
    pub risk: MeanSe,
    /// `ρ^{-1}{1 + Kd(1 + π²/6)}`
    pub factor: f64,
    /// `K*·E‖g − ĝ₁‖²`
    pub k_star_risk: f64,
    pub report: BoundReport,
}

pub fn localization_factor(rho: f64, bins: usize, d: usize) -> f64 {
    sup_sum_squares_bound(rho, bins, d)
}

pub fn localization_defect(
    setup: &ChainSetup,
    n: usize,
    reps: usize,
    node: SeedNode,
    scenario: &str,
) -> Result<LocalizationDefect> {
    if reps < MIN_LOCALIZATION_REPS {
        return Err(Error::Parameter(format!("localization needs reps >= {MIN_LOCALIZATION_REPS}, got {reps}")));
    }
    let pairs: Vec<(f64, f64)> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let rec = run_chain(setup, n, SpliceMode::Oracle, node.index(r as u64))?;
            let k = rec.mhat2.nrows();
            let gap = &setup.target - &rec.pilot1.lifted;
            let defect = (&rec.mhat2 - DMatrix::<f64>::identity(k, k)) * gap;
            Ok(((n - rec.m) as f64 * defect.norm_squared(), setup.pilot_loss(&rec.pilot1)))
        })
        .collect::<Result<_>>()?;
    let lhs = mean_se(&pairs.iter().map(|p| p.0).collect::<Vec<_>>());
    let risk = mean_se(&pairs.iter().map(|p| p.1).collect::<Vec<_>>());
    let factor = localization_factor(setup.model.rho(), setup.basis.bins(), setup.model.d());
    let se = (lhs.se.powi(2) + (factor * risk.se).powi(2)).sqrt();
    let report = BoundReport::new("localization_defect", lhs.mean, se, factor * risk.mean, scenario);
    Ok(LocalizationDefect {
        lhs,
        risk,
        factor,
        k_star_risk: setup.basis.count() as f64 * risk.mean,
        report,
    })
}
