use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::stats::{least_squares, mean_se, quantile, MeanSe};
use super::thresholds::{BOOTSTRAP_RESAMPLES, MIN_SCHEDULE_POINTS, MIN_SCHEDULE_SPAN};
use crate::chain::{run_chain, ChainSetup, SpliceMode};
use crate::error::{Error, Result};
use crate::seed::SeedNode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PilotId {
    /// Built from the first half through the whitened score vector.
    G1,
    /// Built from the spliced second-half vector.
    G2,
}

impl PilotId {
    pub fn label(&self) -> &'static str {
        match self {
            PilotId::G1 => "g1",
            PilotId::G2 => "g2",
        }
    }
}

#[derive(Debug, Clone)]
pub struct RiskPoint {
    pub n: usize,
    pub setup: ChainSetup,
}

#[derive(Debug, Clone, Serialize)]
pub struct RiskEstimate {
    pub n: usize,
    pub bins: usize,
    pub coarse_bins: usize,
    pub risk: MeanSe,
    /// `K*·risk`
    pub k_star_risk: f64,
    #[serde(skip)]
    pub samples: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RiskFit {
    pub estimator: PilotId,
    pub points: Vec<RiskEstimate>,
    /// Least-squares slope of log risk against log n.
    pub slope: f64,
    pub intercept: f64,
    /// 2.5% and 97.5% replicate-bootstrap quantiles of the slope.
    pub slope_ci: (f64, f64),
}

/// Per-replicate losses `‖ĝ − g‖²_{p_X}`.
pub fn pilot_losses(setup: &ChainSetup, n: usize, estimator: PilotId, reps: usize, node: SeedNode) -> Result<Vec<f64>> {
    (0..reps)
        .into_par_iter()
        .map(|r| {
            let rec = run_chain(setup, n, SpliceMode::Oracle, node.index(r as u64))?;
            Ok(setup.pilot_loss(match estimator {
                PilotId::G1 => &rec.pilot1,
                PilotId::G2 => &rec.pilot2,
            }))
        })
        .collect()
}

pub fn check_schedule(ns: &[usize]) -> Result<()> {
    if ns.len() < MIN_SCHEDULE_POINTS {
        return Err(Error::Parameter(format!(
            "risk schedule needs at least {MIN_SCHEDULE_POINTS} sample sizes, got {}",
            ns.len()
        )));
    }
    let lo = *ns.iter().min().unwrap() as f64;
    let hi = *ns.iter().max().unwrap() as f64;
    if hi / lo < MIN_SCHEDULE_SPAN {
        return Err(Error::Parameter(format!(
            "risk schedule must span a factor of at least {MIN_SCHEDULE_SPAN}, got {}",
            hi / lo
        )));
    }
    Ok(())
}

fn log_slope(ns: &[usize], risks: &[f64]) -> (f64, f64) {
    let x: Vec<f64> = ns.iter().map(|&n| (n as f64).ln()).collect();
    let y: Vec<f64> = risks.iter().map(|r| r.ln()).collect();
    least_squares(&x, &y)
}

/// Monte-Carlo pilot risk per sample size, the fitted log-log slope and a
/// bootstrap interval that resamples replicates within each sample size.
pub fn risk_rate_suite(estimator: PilotId, schedule: &[RiskPoint], reps: usize, node: SeedNode) -> Result<RiskFit> {
    let ns: Vec<usize> = schedule.iter().map(|p| p.n).collect();
    check_schedule(&ns)?;
    if reps < 2 {
        return Err(Error::Parameter(format!("risk suite needs reps >= 2, got {reps}")));
    }
    let mut points = Vec::with_capacity(schedule.len());
    for (i, p) in schedule.iter().enumerate() {
        let samples = pilot_losses(&p.setup, p.n, estimator, reps, node.index(i as u64))?;
        let risk = mean_se(&samples);
        points.push(RiskEstimate {
            n: p.n,
            bins: p.setup.basis.bins(),
            coarse_bins: p.setup.coarse.bins(),
            risk,
            k_star_risk: p.setup.basis.count() as f64 * risk.mean,
            samples,
        });
    }
    let means: Vec<f64> = points.iter().map(|p| p.risk.mean).collect();
    let (slope, intercept) = log_slope(&ns, &means);
    let mut rng = node.child("bootstrap").rng();
    let mut slopes = Vec::with_capacity(BOOTSTRAP_RESAMPLES);
    for _ in 0..BOOTSTRAP_RESAMPLES {
        let boot: Vec<f64> = points
            .iter()
            .map(|p| (0..reps).map(|_| p.samples[rng.random_range(0..reps)]).sum::<f64>() / reps as f64)
            .collect();
        slopes.push(log_slope(&ns, &boot).0);
    }
    Ok(RiskFit {
        estimator,
        points,
        slope,
        intercept,
        slope_ci: (quantile(&slopes, 0.025), quantile(&slopes, 0.975)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{approximation_error, OrthonormalBasis};
    use crate::design::DesignModel;
    use crate::function::panel_function;

    #[test]
    fn short_schedules_are_rejected() {
        assert!(check_schedule(&[100, 200, 400]).is_err());
        assert!(check_schedule(&[100, 200, 400, 800]).is_err());
        assert!(check_schedule(&[100, 200, 800, 1600]).is_ok());
    }

    #[test]
    fn noiseless_second_pilot_is_the_coarse_projection() {
        let g = panel_function("sine", 1).unwrap();
        let model = DesignModel::product(vec![crate::design::PiecewiseDensity::tilted(8, 0.3).unwrap()], 0.5).unwrap();
        let setup = ChainSetup::new(g.clone(), model.clone(), 16, 4, 0.0).unwrap();
        let losses = pilot_losses(&setup, 256, PilotId::G2, 3, SeedNode::master(1)).unwrap();
        let coarse = OrthonormalBasis::build(4, &model).unwrap();
        let bias = approximation_error(&g, &coarse, &model).unwrap().err_sq;
        for l in losses {
            assert!((l - bias).abs() < 1e-12, "{l} vs {bias}");
        }
    }

    #[test]
    fn fixed_coarse_level_plateaus() {
        let g = panel_function("sine", 1).unwrap();
        let model = DesignModel::uniform(1).unwrap();
        let schedule: Vec<RiskPoint> = [1usize << 12, 1 << 14, 1 << 16, 1 << 18]
            .iter()
            .map(|&n| RiskPoint { n, setup: ChainSetup::new(g.clone(), model.clone(), 16, 4, 1.0).unwrap() })
            .collect();
        let fit = risk_rate_suite(PilotId::G2, &schedule, 40, SeedNode::master(2)).unwrap();
        // the last two risks sit on the bias floor
        let floor = approximation_error(&g, &OrthonormalBasis::build(4, &model).unwrap(), &model).unwrap().err_sq;
        let last = fit.points.last().unwrap().risk.mean;
        assert!((last - floor) / floor < 0.01);
        assert!(fit.slope > -0.2);
    }
}
