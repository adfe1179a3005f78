//! Suite orchestration and artifact export.

use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::chain::{run_chain, ChainSetup, SpliceMode};
use crate::design::DesignModel;
use crate::diagnostics::energy::two_sample_energy;
use crate::diagnostics::risk::{risk_rate_suite, PilotId, RiskFit, RiskPoint};
use crate::diagnostics::stats::mean_se;
use crate::diagnostics::thresholds::{EQUIVALENCE_LEVEL, EQUIVALENCE_MIN_PASS_RATE, EQUIVALENCE_RUNS, SLOPE_TOLERANCE};
use crate::diagnostics::{
    approximation_report, basis_sup_report, hellinger_bound, kl_and_tv, localization_defect, BoundReport,
};
use crate::error::{Error, Result};
use crate::gamma::{
    assemble_gamma, empirical_gamma_l, fourier_sup_sum_sq, gamma_l, gamma_sqrt, mse_bound, split_gamma, XiBasis,
    GAMMA_CLAMP,
};
use crate::linalg::{frobenius, sorted_eigen};
use crate::scenario::{Scenario, Suite};
use crate::seed::SeedNode;
use crate::white_noise::{h_system, sheet_scores, SheetStage};

/// One emitted artifact.
#[derive(Debug, Clone)]
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

#[derive(Debug, Clone, Default)]
pub struct SuiteOutput {
    pub artifacts: Vec<Artifact>,
    pub reports: Vec<BoundReport>,
}

impl SuiteOutput {
    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.artifacts.push(Artifact { name: name.into(), bytes });
        Ok(())
    }

    fn csv(&mut self, name: &str, header: &[&str], rows: Vec<Vec<String>>) -> Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header)?;
        for r in rows {
            w.write_record(&r)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Config(format!("csv buffer: {e}")))?;
        self.artifacts.push(Artifact { name: name.into(), bytes });
        Ok(())
    }

    fn extend(&mut self, other: SuiteOutput) {
        self.artifacts.extend(other.artifacts);
        self.reports.extend(other.reports);
    }
}

fn setup_for(scenario: &Scenario, g: crate::function::AdditiveFunction, model: &DesignModel, n: usize) -> Result<ChainSetup> {
    ChainSetup::new(g, model.clone(), scenario.k, scenario.coarse_bins(n)?, scenario.sigma)
}

fn node_for(scenario: &Scenario, suite: Suite) -> SeedNode {
    SeedNode::master(scenario.seed).child(suite.label())
}

pub fn run_suite(scenario: &Scenario, suite: Suite) -> Result<SuiteOutput> {
    match suite {
        Suite::Regime => regime_suite(scenario),
        Suite::Simulate => simulate_suite(scenario),
        Suite::Risk => risk_suite(scenario),
        Suite::Equivalence => equivalence_suite(scenario),
        Suite::Operator => operator_suite(scenario),
    }
}

fn regime_suite(scenario: &Scenario) -> Result<SuiteOutput> {
    let mut out = SuiteOutput::default();
    out.json("regime.json", &scenario.regime()?)?;
    Ok(out)
}

/// Regime verdict alone, from `beta` and `alpha`.
pub fn regime_only(beta: f64, alpha: f64) -> Result<SuiteOutput> {
    let mut out = SuiteOutput::default();
    out.json("regime.json", &crate::diagnostics::regime_check(beta, alpha)?)?;
    Ok(out)
}

fn simulate_suite(scenario: &Scenario) -> Result<SuiteOutput> {
    let mut out = SuiteOutput::default();
    let model = scenario.model()?;
    let hash = scenario.hash();
    let node = node_for(scenario, Suite::Simulate);
    let mut rows = Vec::new();
    for (f, (id, g)) in scenario.panel_functions()?.into_iter().enumerate() {
        let setup = setup_for(scenario, g, &model, scenario.n)?;
        let fnode = node.index(f as u64);
        let records: Vec<Vec<f64>> = (0..scenario.reps)
            .into_par_iter()
            .map(|r| {
                let rec = run_chain(&setup, scenario.n, SpliceMode::EndToEnd, fnode.index(r as u64))?;
                Ok(rec.stages().iter().map(|(_, v)| (*v - &setup.target).norm_squared()).collect())
            })
            .collect::<Result<_>>()?;
        let labels = ["D1", "D2", "E", "F", "G", "H", "I"];
        for (s, label) in labels.iter().enumerate() {
            let errs: Vec<f64> = records.iter().map(|r| r[s]).collect();
            let ms = mean_se(&errs);
            rows.push(vec![id.clone(), label.to_string(), ms.mean.to_string(), ms.se.to_string()]);
        }
        let tag = |name: &str| format!("{name}[{id}]");
        for mut rep in [
            approximation_report(&setup, &hash),
            basis_sup_report(&setup, &hash),
            hellinger_bound(&setup, scenario.n, &hash),
            kl_and_tv(&setup, scenario.n, &hash)?.report,
        ] {
            rep.name = tag(&rep.name);
            out.reports.push(rep);
        }
        if scenario.reps >= crate::diagnostics::thresholds::MIN_LOCALIZATION_REPS {
            let mut loc = localization_defect(&setup, scenario.n, scenario.reps, fnode.child("localization"), &hash)?;
            loc.report.name = tag(&loc.report.name);
            out.reports.push(loc.report);
        }
    }
    out.csv("stages.csv", &["function", "stage", "mean_sq_error", "se"], rows)?;
    Ok(out)
}

#[derive(Serialize)]
struct RiskFitRecord<'a> {
    function: &'a str,
    predicted_slope: f64,
    within_tolerance: bool,
    fit: &'a RiskFit,
}

fn risk_suite(scenario: &Scenario) -> Result<SuiteOutput> {
    let mut out = SuiteOutput::default();
    let model = scenario.model()?;
    let node = node_for(scenario, Suite::Risk);
    let (id, g) = scenario.panel_functions()?.remove(0);
    let schedule: Vec<RiskPoint> = scenario
        .risk_schedule()
        .into_iter()
        .map(|n| Ok(RiskPoint { n, setup: setup_for(scenario, g.clone(), &model, n)? }))
        .collect::<Result<_>>()?;
    let predicted = -2.0 * scenario.beta / (2.0 * scenario.beta + 1.0);
    let mut rows = Vec::new();
    let mut fits = Vec::new();
    for est in [PilotId::G1, PilotId::G2] {
        let fit = risk_rate_suite(est, &schedule, scenario.reps, node.child(est.label()))?;
        for p in &fit.points {
            rows.push(vec![
                est.label().to_string(),
                p.n.to_string(),
                p.bins.to_string(),
                p.coarse_bins.to_string(),
                p.risk.mean.to_string(),
                p.risk.se.to_string(),
                p.k_star_risk.to_string(),
            ]);
        }
        fits.push(fit);
    }
    out.csv("risk.csv", &["estimator", "n", "K", "J", "risk", "se", "k_star_risk"], rows)?;
    let records: Vec<RiskFitRecord> = fits
        .iter()
        .map(|fit| RiskFitRecord {
            function: &id,
            predicted_slope: predicted,
            within_tolerance: (fit.slope - predicted).abs() <= SLOPE_TOLERANCE,
            fit,
        })
        .collect();
    out.json("risk_fit.json", &records)?;
    Ok(out)
}

/// Energy tests of stage-I vectors against sheet scores, one row per run.
pub fn equivalence_runs(setup: &ChainSetup, n: usize, reps: usize, runs: usize, permutations: usize, splice: SpliceMode, node: SeedNode) -> Result<Vec<(f64, f64)>> {
    let k = setup.target.len();
    (0..runs)
        .map(|run| {
            let rnode = node.index(run as u64);
            let stage_i: Vec<DVector<f64>> = (0..reps)
                .into_par_iter()
                .map(|r| Ok(run_chain(setup, n, splice, rnode.child("chain").index(r as u64))?.stage_i.values))
                .collect::<Result<_>>()?;
            let mut srng = rnode.child("sheet").rng();
            let sheet: Vec<DVector<f64>> = (0..reps)
                .map(|_| Ok(sheet_scores(SheetStage::J, setup, n, &mut srng)?.scores.values))
                .collect::<Result<_>>()?;
            let a = DMatrix::from_fn(reps, k, |i, j| stage_i[i][j]);
            let b = DMatrix::from_fn(reps, k, |i, j| sheet[i][j]);
            let t = two_sample_energy(&a, &b, permutations, &mut rnode.child("permute").rng())?;
            Ok((t.statistic, t.p_value))
        })
        .collect()
}

fn equivalence_suite(scenario: &Scenario) -> Result<SuiteOutput> {
    let mut out = SuiteOutput::default();
    let model = scenario.model()?;
    let hash = scenario.hash();
    let node = node_for(scenario, Suite::Equivalence);
    let mut rows = Vec::new();
    for (f, (id, g)) in scenario.panel_functions()?.into_iter().enumerate() {
        let setup = setup_for(scenario, g, &model, scenario.n)?;
        let results = equivalence_runs(
            &setup,
            scenario.n,
            scenario.reps,
            EQUIVALENCE_RUNS,
            scenario.permutations,
            scenario.splice,
            node.index(f as u64),
        )?;
        let rejections = results.iter().filter(|r| r.1 < EQUIVALENCE_LEVEL).count();
        for (run, (stat, p)) in results.iter().enumerate() {
            rows.push(vec![id.clone(), run.to_string(), stat.to_string(), p.to_string()]);
        }
        out.reports.push(BoundReport::new(
            &format!("equivalence_rejection_rate[{id}]"),
            rejections as f64 / results.len() as f64,
            0.0,
            1.0 - EQUIVALENCE_MIN_PASS_RATE,
            &hash,
        ));
        let mut kl = kl_and_tv(&setup, scenario.n, &hash)?.report;
        kl.name = format!("{}[{id}]", kl.name);
        out.reports.push(kl);
    }
    out.csv("equivalence.csv", &["function", "run", "statistic", "p_value"], rows)?;
    Ok(out)
}

fn operator_suite(scenario: &Scenario) -> Result<SuiteOutput> {
    let mut out = SuiteOutput::default();
    let model = scenario.model()?;
    let hash = scenario.hash();
    let points = scenario.g;
    let op = assemble_gamma(&model, points)?;
    let root = gamma_sqrt(&op, GAMMA_CLAMP)?;
    let split = split_gamma(&model, points)?;
    let dim = op.dim();
    let asym = op.max_asymmetry();
    let eig = op.eigenvalues();
    let sqrt_residual = frobenius(&(&root.matrix * &root.matrix - &op.matrix));
    let m_eig = sorted_eigen(&split.gamma_m.matrix).0;
    let h = h_system(&root, 1)?;
    let h1_norm_sq = h[0].norm_squared() / points as f64;

    let mut rows = Vec::with_capacity(dim * dim);
    for i in 0..dim {
        for j in 0..dim {
            rows.push(vec![i.to_string(), j.to_string(), op.matrix[(i, j)].to_string()]);
        }
    }
    out.csv("gamma.csv", &["row", "col", "value"], rows)?;
    out.json(
        "gamma.json",
        &json!({
            "points": points,
            "d": model.d(),
            "max_asymmetry": asym,
            "min_eigenvalue": eig[0],
            "max_eigenvalue": eig[dim - 1],
            "sqrt_residual_frobenius": sqrt_residual,
            "h1_norm_sq": h1_norm_sq,
            "gamma_m_min_eigenvalue": m_eig[0],
        }),
    )?;
    out.json(
        "gamma_split.json",
        &json!({
            "hs_norm_sq": split.hs_norm_sq,
            "hs_norm_sq_grid": split.hs_norm_sq_grid,
            "gamma_m_min_eigenvalue": m_eig[0],
        }),
    )?;

    let gl = gamma_l(&model, &XiBasis::Fourier, &scenario.gamma_indices)?;
    let size = gl.indices.len();
    let mut rows = Vec::new();
    for a in 0..size {
        for b in 0..size {
            rows.push(vec![
                gl.indices[a].to_string(),
                gl.indices[b].to_string(),
                gl.gamma[(a, b)].to_string(),
                gl.gamma_m[(a, b)].to_string(),
            ]);
        }
    }
    out.csv("gamma_l.csv", &["l", "l_prime", "gamma", "gamma_m"], rows)?;

    let node = node_for(scenario, Suite::Operator);
    let errs: Vec<(f64, DMatrix<f64>)> = (0..scenario.reps)
        .into_par_iter()
        .map(|r| {
            let x = model.sample(scenario.n, &mut node.index(r as u64).rng());
            let e = empirical_gamma_l(&x, &XiBasis::Fourier, &scenario.gamma_indices, model.rho())?;
            let diff = &e.gamma_hat - &gl.gamma;
            Ok((diff.norm_squared(), diff))
        })
        .collect::<Result<_>>()?;
    let mse = mean_se(&errs.iter().map(|e| e.0).collect::<Vec<_>>());
    let bound = mse_bound(
        scenario.n,
        size,
        model.d(),
        model.rho(),
        fourier_sup_sum_sq(&scenario.gamma_indices, model.d())?,
    );
    let (bias_sq, bias_se_sq) = unbiasedness(&errs.iter().map(|e| e.1.clone()).collect::<Vec<_>>());
    out.json(
        "empirical_gamma.json",
        &json!({
            "n": scenario.n,
            "reps": scenario.reps,
            "indices": scenario.gamma_indices,
            "frob_dist": gl.frob_dist,
            "hs_bound": gl.hs_bound,
            "mse": mse.mean,
            "mse_se": mse.se,
            "mse_bound": bound,
            "mean_deviation_frobenius_sq": bias_sq,
            "mean_deviation_se_sq": bias_se_sq,
        }),
    )?;

    let tol = 1e-8 * dim as f64;
    out.reports.extend([
        BoundReport::new("gamma_symmetry", asym, 0.0, 1e-12, &hash),
        BoundReport::new("gamma_psd", -eig[0], 0.0, GAMMA_CLAMP, &hash),
        BoundReport::new("gamma_sqrt_residual", sqrt_residual, 0.0, tol, &hash),
        BoundReport::new("gamma_m_ellipticity", model.rho(), 0.0, m_eig[0], &hash),
        BoundReport::new("h1_norm", (h1_norm_sq - 1.0).abs(), 0.0, 1e-10, &hash),
        BoundReport::new("gamma_l_frobenius", gl.frob_dist.powi(2), 0.0, gl.hs_bound + 1e-12, &hash),
        BoundReport::new("empirical_gamma_mse", mse.mean, mse.se, bound, &hash),
        BoundReport::new(
            "empirical_gamma_unbiased",
            bias_sq.sqrt(),
            0.0,
            crate::diagnostics::thresholds::UNBIASED_SE_MULTIPLIER * bias_se_sq.sqrt(),
            &hash,
        ),
    ]);
    Ok(out)
}

/// `‖mean deviation‖²_F` and `Σ se²` over entries, for the check
/// `‖mean‖_F ≤ 3·√(Σ se²)`.
pub fn unbiasedness(devs: &[DMatrix<f64>]) -> (f64, f64) {
    let (r, c) = devs[0].shape();
    let mut mean_sq = 0.0;
    let mut se_sq = 0.0;
    for i in 0..r {
        for j in 0..c {
            let vals: Vec<f64> = devs.iter().map(|m| m[(i, j)]).collect();
            let ms = mean_se(&vals);
            mean_sq += ms.mean * ms.mean;
            se_sq += ms.se * ms.se;
        }
    }
    (mean_sq, se_sq)
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub version: String,
    pub seed: u64,
    pub scenario_hash: String,
    pub scenario: serde_json::Value,
    pub suites: Vec<String>,
    pub regime: serde_json::Value,
    pub regime_infeasible: bool,
    pub wall_time_seconds: f64,
    pub files: Vec<String>,
    pub bound_violations: usize,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub reports: Vec<BoundReport>,
    pub files: Vec<PathBuf>,
}

impl RunOutcome {
    pub fn all_satisfied(&self) -> bool {
        self.reports.iter().all(|r| r.satisfied)
    }
}

fn summary_csv(reports: &[BoundReport]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["name", "lhs", "se", "rhs", "satisfied", "scenario"])?;
    for r in reports {
        w.write_record([
            r.name.clone(),
            r.lhs.to_string(),
            r.se.to_string(),
            r.rhs.to_string(),
            r.satisfied.to_string(),
            r.scenario.clone(),
        ])?;
    }
    w.into_inner().map_err(|e| Error::Config(format!("csv buffer: {e}")))
}

fn write_all(out_dir: &Path, output: &SuiteOutput) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir)?;
    let mut files = Vec::new();
    for a in &output.artifacts {
        let path = out_dir.join(&a.name);
        std::fs::write(&path, &a.bytes)?;
        files.push(path);
    }
    Ok(files)
}

/// Runs the suites in order and writes every artifact plus `reports.json`,
/// `summary.csv` and `manifest.json` into `out_dir`.
pub fn run_scenario(scenario: &Scenario, suites: &[Suite], out_dir: &Path) -> Result<RunOutcome> {
    let start = Instant::now();
    let mut all = SuiteOutput::default();
    for &s in suites {
        all.extend(run_suite(scenario, s)?);
    }
    all.json("reports.json", &all.reports.clone())?;
    let summary = summary_csv(&all.reports)?;
    all.artifacts.push(Artifact { name: "summary.csv".into(), bytes: summary });
    let mut files = write_all(out_dir, &all)?;
    let regime = scenario.regime()?;
    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION").into(),
        seed: scenario.seed,
        scenario_hash: scenario.hash(),
        scenario: serde_json::to_value(scenario)?,
        suites: suites.iter().map(|s| s.label().to_string()).collect(),
        regime: serde_json::to_value(regime)?,
        regime_infeasible: !regime.feasible,
        wall_time_seconds: start.elapsed().as_secs_f64(),
        files: all.artifacts.iter().map(|a| a.name.clone()).collect(),
        bound_violations: all.reports.iter().filter(|r| !r.satisfied).count(),
    };
    let path = out_dir.join("manifest.json");
    let mut bytes = serde_json::to_vec_pretty(&manifest)?;
    bytes.push(b'\n');
    std::fs::write(&path, bytes)?;
    files.push(path);
    Ok(RunOutcome { reports: all.reports, files })
}

/// Regime-only run: `regime.json` and a manifest without a scenario.
pub fn run_regime(beta: f64, alpha: f64, out_dir: &Path) -> Result<RunOutcome> {
    let start = Instant::now();
    let output = regime_only(beta, alpha)?;
    let mut files = write_all(out_dir, &output)?;
    let verdict = crate::diagnostics::regime_check(beta, alpha)?;
    let manifest = json!({
        "version": env!("CARGO_PKG_VERSION"),
        "suites": ["regime"],
        "regime": verdict,
        "regime_infeasible": !verdict.feasible,
        "wall_time_seconds": start.elapsed().as_secs_f64(),
        "files": ["regime.json"],
    });
    let path = out_dir.join("manifest.json");
    let mut bytes = serde_json::to_vec_pretty(&manifest)?;
    bytes.push(b'\n');
    std::fs::write(&path, bytes)?;
    files.push(path);
    Ok(RunOutcome { reports: Vec::new(), files })
}
