//! Gaussian-process experiments on `[0,1]`: the process driven by `Γ^{1/2}g̃`,
//! the independent-design processes with a separate shift observation, the
//! per-component processes driven by `p_k^{1/2} g_k`, and score extraction.
//! The Brownian-sheet experiments are realized through their sufficient
//! scores only.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::chain::{standard_normal_vector, ChainSetup, Stage};
use crate::design::DesignModel;
use crate::error::{Error, Result};
use crate::function::{CenteredDecomposition, ComponentFunction};
use crate::gamma::{fourier_xi, midpoints, OperatorGrid, OperatorKind};

pub const DEFAULT_STEPS: usize = 1024;

#[derive(Debug, Clone)]
pub struct ProcessPath {
    /// `T + 1` uniform points `i/T`.
    pub times: Vec<f64>,
    /// `(T+1) × d`, first row zero.
    pub values: DMatrix<f64>,
    /// Deterministic part of `values`.
    pub drift: DMatrix<f64>,
    pub drift_spec: String,
    pub noise_scale: f64,
}

impl ProcessPath {
    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn d(&self) -> usize {
        self.values.ncols()
    }

    pub fn terminal(&self) -> DVector<f64> {
        self.values.row(self.steps()).transpose()
    }

    /// Increments with the drift removed, divided by `noise_scale·√Δt`.
    pub fn standardized_increments(&self) -> DMatrix<f64> {
        let steps = self.steps();
        let scale = self.noise_scale * (1.0 / steps as f64).sqrt();
        let noise = &self.values - &self.drift;
        DMatrix::from_fn(steps, self.d(), |i, j| (noise[(i + 1, j)] - noise[(i, j)]) / scale)
    }

    /// Rows `t, component, value`.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "component", "value"])?;
        for (i, t) in self.times.iter().enumerate() {
            for j in 0..self.d() {
                w.write_record([t.to_string(), j.to_string(), self.values[(i, j)].to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Euler scheme with drift rate `rate(j, i)` on step `[i/T, (i+1)/T)`.
fn euler_path<R, F>(d: usize, steps: usize, rate: F, noise_scale: f64, drift_spec: String, rng: &mut R) -> ProcessPath
where
    R: Rng + ?Sized,
    F: Fn(usize, usize) -> f64,
{
    let dt = 1.0 / steps as f64;
    let step_sd = noise_scale * dt.sqrt();
    let mut values = DMatrix::zeros(steps + 1, d);
    let mut drift = DMatrix::zeros(steps + 1, d);
    for i in 0..steps {
        for j in 0..d {
            let mu = rate(j, i) * dt;
            let z: f64 = rng.sample(StandardNormal);
            drift[(i + 1, j)] = drift[(i, j)] + mu;
            values[(i + 1, j)] = values[(i, j)] + mu + step_sd * z;
        }
    }
    ProcessPath {
        times: (0..=steps).map(|i| i as f64 * dt).collect(),
        values,
        drift,
        drift_spec,
        noise_scale,
    }
}

fn check_steps(steps: usize) -> Result<()> {
    if steps < 8 {
        return Err(Error::Parameter(format!("time grid needs T >= 8 steps, got {steps}")));
    }
    Ok(())
}

fn check_noise(n: usize, sigma: f64) -> Result<f64> {
    if n == 0 || !(sigma.is_finite() && sigma >= 0.0) {
        return Err(Error::Parameter(format!("need n >= 1 and sigma >= 0, got n={n}, sigma={sigma}")));
    }
    Ok(sigma / (n as f64).sqrt())
}

/// `g̃ = g* + g_0 e_1`: the shift rides on the first component.
pub fn tilde_components(decomp: &CenteredDecomposition) -> Vec<ComponentFunction> {
    let mut out = decomp.centered_components.clone();
    if let Some(first) = out.first_mut() {
        first.shift += decomp.shift_g0;
    }
    out
}

/// `dR = [Γ^{1/2}g̃](t) dt + (σ/√n) dW̃`, drift taken from the operator grid.
pub fn simulate_rn<R: Rng + ?Sized>(
    root: &OperatorGrid,
    g_tilde: &[ComponentFunction],
    n: usize,
    sigma: f64,
    steps: usize,
    rng: &mut R,
) -> Result<ProcessPath> {
    check_steps(steps)?;
    let scale = check_noise(n, sigma)?;
    if root.kind != OperatorKind::GammaSqrt {
        return Err(Error::Parameter(format!("expected a gamma_sqrt grid, got {:?}", root.kind)));
    }
    if g_tilde.len() != root.d {
        return Err(Error::Dimension { expected: root.d, found: g_tilde.len() });
    }
    let g = root.points;
    if steps % g != 0 {
        return Err(Error::Alignment(format!("time steps T={steps} must be a multiple of the operator grid G={g}")));
    }
    let integrand = root.apply(&root.sample_components(g_tilde)?);
    let per_cell = steps / g;
    Ok(euler_path(
        root.d,
        steps,
        |j, i| integrand[j * g + i / per_cell],
        scale,
        "gamma_sqrt * g_tilde".into(),
        rng,
    ))
}

/// Paths `k` with drift `p_k^{1/2} f_k` and independent noise.
fn density_weighted_paths<R: Rng + ?Sized>(
    components: &[ComponentFunction],
    model: &DesignModel,
    scale: f64,
    steps: usize,
    label: &str,
    rng: &mut R,
) -> Result<ProcessPath> {
    if components.len() != model.d() {
        return Err(Error::Dimension { expected: model.d(), found: components.len() });
    }
    let dt = 1.0 / steps as f64;
    let rates = DMatrix::from_fn(steps, model.d(), |i, k| {
        let t = i as f64 * dt;
        model.marginal(k).density(t).sqrt() * components[k].eval(t)
    });
    Ok(euler_path(model.d(), steps, |k, i| rates[(i, k)], scale, label.into(), rng))
}

#[derive(Debug, Clone)]
pub struct ShiftAndPaths {
    pub shift_obs: f64,
    pub paths: ProcessPath,
}

/// `N(g_0, σ²/n)` plus independent paths with drift `∫ p_k^{1/2} g_k*`.
pub fn simulate_q<R: Rng + ?Sized>(
    decomp: &CenteredDecomposition,
    model: &DesignModel,
    n: usize,
    sigma: f64,
    steps: usize,
    rng: &mut R,
) -> Result<ShiftAndPaths> {
    if !model.is_product() {
        return Err(Error::Assumption(
            "the shift-plus-independent-paths experiment needs independent design coordinates".into(),
        ));
    }
    check_steps(steps)?;
    let scale = check_noise(n, sigma)?;
    let z: f64 = rng.sample(StandardNormal);
    let shift_obs = decomp.shift_g0 + scale * z;
    let paths = density_weighted_paths(&decomp.centered_components, model, scale, steps, "p_k^(1/2) * g_k*", rng)?;
    Ok(ShiftAndPaths { shift_obs, paths })
}

/// Paths `j` with drift `∫ p_j^{1/2} g_j`, no independence needed.
pub fn simulate_s<R: Rng + ?Sized>(
    g_tilde: &[ComponentFunction],
    model: &DesignModel,
    n: usize,
    sigma: f64,
    steps: usize,
    rng: &mut R,
) -> Result<ProcessPath> {
    check_steps(steps)?;
    let scale = check_noise(n, sigma)?;
    density_weighted_paths(g_tilde, model, scale, steps, "p_j^(1/2) * g_j", rng)
}

/// A test function `f: [0,1] → ℝ^d`.
#[derive(Debug, Clone, PartialEq)]
pub enum TestFunction {
    Components(Vec<ComponentFunction>),
    /// Piecewise constant on a `points`-cell midpoint grid, component-major.
    Grid { values: DVector<f64>, points: usize },
}

impl TestFunction {
    fn eval_left(&self, j: usize, i: usize, steps: usize) -> f64 {
        match self {
            TestFunction::Components(c) => c[j].eval(i as f64 / steps as f64),
            TestFunction::Grid { values, points } => values[j * points + i * points / steps],
        }
    }

    fn d(&self) -> usize {
        match self {
            TestFunction::Components(c) => c.len(),
            TestFunction::Grid { values, points } => values.len() / points,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ScoreObservation {
    pub values: DVector<f64>,
    pub test_set: String,
}

/// `Σ_i f(t_i)ᵀ (R(t_{i+1}) - R(t_i))` for each test function.
pub fn extract_scores(path: &ProcessPath, tests: &[TestFunction], test_set: &str) -> Result<ScoreObservation> {
    let steps = path.steps();
    let d = path.d();
    let mut values = DVector::zeros(tests.len());
    for (c, f) in tests.iter().enumerate() {
        if f.d() != d {
            return Err(Error::Dimension { expected: d, found: f.d() });
        }
        if let TestFunction::Grid { points, .. } = f {
            if steps % points != 0 {
                return Err(Error::Alignment(format!("path steps {steps} not a multiple of test grid {points}")));
            }
        }
        let mut s = 0.0;
        for i in 0..steps {
            for j in 0..d {
                s += f.eval_left(j, i, steps) * (path.values[(i + 1, j)] - path.values[(i, j)]);
            }
        }
        values[c] = s;
    }
    Ok(ScoreObservation { values, test_set: test_set.into() })
}

/// `h_1 = Γ^{1/2}e_1` followed by a Gram–Schmidt completion over the
/// interleaved Fourier system, all as grid functions.
pub fn h_system(root: &OperatorGrid, count: usize) -> Result<Vec<DVector<f64>>> {
    if root.kind != OperatorKind::GammaSqrt {
        return Err(Error::Parameter(format!("expected a gamma_sqrt grid, got {:?}", root.kind)));
    }
    let g = root.points;
    let d = root.d;
    let w = 1.0 / g as f64;
    let mut e1 = DVector::zeros(d * g);
    e1.rows_mut(0, g).fill(1.0);
    let mut out = vec![root.apply(&e1)];
    let t = midpoints(g);
    let mut index = 1;
    // beyond frequency G/2 the sampled Fourier system aliases
    let limit = d * g;
    while out.len() < count {
        if index > limit {
            return Err(Error::Parameter(format!("cannot build {count} orthonormal grid functions on G={g}")));
        }
        let (k, mode) = fourier_xi(index, d)?;
        index += 1;
        let mut v = DVector::zeros(d * g);
        for (i, &ti) in t.iter().enumerate() {
            v[k * g + i] = mode.eval(ti);
        }
        for _ in 0..2 {
            for h in &out {
                let c = w * h.dot(&v) / (w * h.dot(h));
                v -= h * c;
            }
        }
        let norm = (w * v.dot(&v)).sqrt();
        if norm > 1e-8 {
            out.push(v / norm);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SheetStage {
    /// Sheet driven by the projection `g^[K*]`.
    J,
    /// Sheet driven by `g` itself.
    K,
}

impl SheetStage {
    pub fn stage(&self) -> Stage {
        match self {
            SheetStage::J => Stage::J,
            SheetStage::K => Stage::K,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SheetScores {
    /// Scores against `ψ_k p_X^{1/2}`, `k ≤ K*`.
    pub scores: ScoreObservation,
    /// Score against the unit residual direction `(g - g^[K*])/‖·‖`.
    pub residual_score: f64,
    pub residual_mean: f64,
    pub noise_scale: f64,
}

/// Draws the sheet's basis scores from their exact law `N(G, σ²I/n)`
/// and one more independent score along the approximation residual.
pub fn sheet_scores<R: Rng + ?Sized>(stage: SheetStage, setup: &ChainSetup, n: usize, rng: &mut R) -> Result<SheetScores> {
    let scale = check_noise(n, setup.sigma)?;
    let values = &setup.target + standard_normal_vector(setup.target.len(), rng) * scale;
    let residual_mean = match stage {
        SheetStage::J => 0.0,
        SheetStage::K => setup.approx_err_sq.max(0.0).sqrt(),
    };
    let z: f64 = rng.sample(StandardNormal);
    Ok(SheetScores {
        scores: ScoreObservation { values, test_set: format!("psi_1..psi_{}", setup.target.len()) },
        residual_score: residual_mean + scale * z,
        residual_mean,
        noise_scale: scale,
    })
}

/// Gaussian KL between the two score laws: equal covariances, so only
/// the mean gap counts.
pub fn sheet_kl(setup: &ChainSetup, n: usize) -> f64 {
    let j_mean = 0.0;
    let k_mean = setup.approx_err_sq.max(0.0).sqrt();
    let var = setup.sigma * setup.sigma / n as f64;
    (k_mean - j_mean).powi(2) / (2.0 * var)
}
