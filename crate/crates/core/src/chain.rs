//! The experiment chain from regression data to a single Gaussian score
//! vector, with the explicit kernels that connect consecutive stages.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::basis::{approximation_error, cross_gram, project, OrthonormalBasis};
use crate::design::{Covariates, DesignModel};
use crate::error::{Error, Result};
use crate::function::{AdditiveFunction, CenteredDecomposition};
use crate::linalg::{sorted_eigen, sqrt_psd};
use crate::seed::SeedNode;

/// Eigenvalues of `M̂` in `[-PSD_CLAMP, PSD_CLAMP]` count as zero.
pub const PSD_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
pub enum Stage {
    A,
    B,
    C,
    D,
    E,
    F,
    G,
    H,
    I,
    J,
    K,
}

impl Stage {
    pub fn label(&self) -> &'static str {
        match self {
            Stage::A => "A",
            Stage::B => "B",
            Stage::C => "C",
            Stage::D => "D",
            Stage::E => "E",
            Stage::F => "F",
            Stage::G => "G",
            Stage::H => "H",
            Stage::I => "I",
            Stage::J => "J",
            Stage::K => "K",
        }
    }
}

pub fn standard_normal_vector<R: Rng + ?Sized>(len: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_iterator(len, (0..len).map(|_| rng.sample::<f64, _>(StandardNormal)))
}

#[derive(Debug, Clone)]
pub struct RegressionSample {
    pub x: Covariates,
    pub y: Vec<f64>,
    pub sigma: f64,
    pub stage: Stage,
}

impl RegressionSample {
    pub fn n(&self) -> usize {
        self.x.n()
    }

    /// Rows `range` as a new sample.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Self {
        Self {
            x: self.x.slice(range.clone()),
            y: self.y[range].to_vec(),
            sigma: self.sigma,
            stage: self.stage,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector {
    pub values: DVector<f64>,
    /// Standard deviation of each coordinate's noise, `σ/√n_eff`.
    pub noise_scale: f64,
    pub stage: Stage,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PilotEstimate {
    pub coarse_bins: usize,
    /// Coefficients over the coarse orthonormal basis.
    pub g_hat_coeffs: DVector<f64>,
    /// `{⟨ĝ, ψ_k⟩}_k` over the fine basis.
    pub lifted: DVector<f64>,
}

fn check_sigma(sigma: f64) -> Result<()> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::Parameter(format!("sigma = {sigma} must be finite and >= 0")));
    }
    Ok(())
}

/// `Y_j = g(X_j) + σ ε_j` with `X_j ~ p_X`.
pub fn simulate_a<R: Rng + ?Sized>(
    g: &AdditiveFunction,
    model: &DesignModel,
    n: usize,
    sigma: f64,
    rng: &mut R,
) -> Result<RegressionSample> {
    if n == 0 {
        return Err(Error::Parameter("n must be at least 1".into()));
    }
    check_sigma(sigma)?;
    if g.dim() != model.d() {
        return Err(Error::Dimension { expected: model.d(), found: g.dim() });
    }
    let x = model.sample(n, rng);
    let y = (0..n)
        .map(|i| g.eval_unchecked(x.row(i)) + sigma * rng.sample::<f64, _>(StandardNormal))
        .collect();
    Ok(RegressionSample { x, y, sigma, stage: Stage::A })
}

/// Like [`simulate_a`] with `g` replaced by its projection `Σ G_k ψ_k`.
pub fn simulate_b<R: Rng + ?Sized>(
    coeffs: &DVector<f64>,
    basis: &OrthonormalBasis,
    model: &DesignModel,
    n: usize,
    sigma: f64,
    rng: &mut R,
) -> Result<RegressionSample> {
    check_sigma(sigma)?;
    let x = model.sample(n, rng);
    let y = (0..n)
        .map(|i| basis.reconstruct(coeffs, x.row(i)) + sigma * rng.sample::<f64, _>(StandardNormal))
        .collect();
    Ok(RegressionSample { x, y, sigma, stage: Stage::B })
}

/// `Z_n = (1/n Σ Y_j ψ_k(X_j))_k`
pub fn sufficient_statistic(sample: &RegressionSample, basis: &OrthonormalBasis) -> Result<ScoreVector> {
    let values = basis.score_average(&sample.x, &sample.y)?;
    Ok(ScoreVector {
        values,
        noise_scale: sample.sigma / (sample.n() as f64).sqrt(),
        stage: Stage::C,
    })
}

pub fn empirical_gram(x: &Covariates, basis: &OrthonormalBasis) -> Result<DMatrix<f64>> {
    basis.empirical_gram(x)
}

/// Maps `Z ~ N(M̂G, σ²M̂/n)` to `N(M̂^{1/2}G, σ²I/n)`: rotate into the
/// eigenbasis of `M̂`, divide by `√λ`, refill null directions with fresh
/// noise, rotate back.
pub fn whiten<R: Rng + ?Sized>(
    z: &ScoreVector,
    mhat: &DMatrix<f64>,
    sigma: f64,
    n: usize,
    rng: &mut R,
) -> Result<ScoreVector> {
    let k = z.values.len();
    if mhat.nrows() != k || mhat.ncols() != k {
        return Err(Error::Dimension { expected: k, found: mhat.nrows() });
    }
    let (values, vectors) = sorted_eigen(mhat);
    if values[0] < -PSD_CLAMP {
        return Err(Error::NotPsd { eigenvalue: values[0], tolerance: PSD_CLAMP });
    }
    let scale = sigma / (n as f64).sqrt();
    let mut rotated = vectors.transpose() * &z.values;
    for i in 0..k {
        if values[i] <= PSD_CLAMP {
            rotated[i] = scale * rng.sample::<f64, _>(StandardNormal);
        } else {
            rotated[i] /= values[i].sqrt();
        }
    }
    Ok(ScoreVector { values: vectors * rotated, noise_scale: scale, stage: Stage::D })
}

/// `J = max{j | K : 2 <= j <= c (n/d²)^{1/(2β+1)}}`
pub fn optimal_j(n: usize, d: usize, beta: f64, bins: usize, constant: f64) -> Result<usize> {
    if d == 0 || n == 0 {
        return Err(Error::Parameter("n and d must be positive".into()));
    }
    let target = optimal_j_target(n, d, beta, constant);
    (2..=bins)
        .rev()
        .find(|j| bins % j == 0 && (*j as f64) <= target)
        .ok_or_else(|| {
            Error::Parameter(format!(
                "no divisor of K = {bins} in [2, {target:.3}]; enlarge K or n"
            ))
        })
}

pub fn optimal_j_target(n: usize, d: usize, beta: f64, constant: f64) -> f64 {
    constant * (n as f64 / (d * d) as f64).powf(1.0 / (2.0 * beta + 1.0))
}

/// Cross inner products between a coarse basis and the fine basis.
pub fn pilot_cross(coarse: &OrthonormalBasis, fine: &OrthonormalBasis, model: &DesignModel) -> Result<DMatrix<f64>> {
    cross_gram(coarse, fine, model)
}

fn pilot_from_vector(v: &DVector<f64>, cross: &DMatrix<f64>, coarse_bins: usize) -> Result<PilotEstimate> {
    if cross.ncols() != v.len() {
        return Err(Error::Dimension { expected: cross.ncols(), found: v.len() });
    }
    let g_hat_coeffs = cross * v;
    let lifted = cross.transpose() * &g_hat_coeffs;
    Ok(PilotEstimate { coarse_bins, g_hat_coeffs, lifted })
}

/// `ĝ_1 = Σ_l ψ*_l Σ_k ⟨ψ*_l, ψ_k⟩ (M̂_1^{1/2} Z_1)_k`
pub fn pilot_estimator_1(
    z1: &ScoreVector,
    mhat1: &DMatrix<f64>,
    cross: &DMatrix<f64>,
    coarse_bins: usize,
) -> Result<PilotEstimate> {
    let root = sqrt_psd(mhat1, PSD_CLAMP)?;
    pilot_from_vector(&(root * &z1.values), cross, coarse_bins)
}

/// `ĝ_2 = Σ_l ψ*_l Σ_k ⟨ψ*_l, ψ_k⟩ (ζ_2)_k`
pub fn pilot_estimator_2(zeta2: &ScoreVector, cross: &DMatrix<f64>, coarse_bins: usize) -> Result<PilotEstimate> {
    pilot_from_vector(&zeta2.values, cross, coarse_bins)
}

/// `z - M̂^{1/2} Ĝ + Ĝ`
pub fn recenter(z: &DVector<f64>, root: &DMatrix<f64>, pilot: &DVector<f64>) -> DVector<f64> {
    z - root * pilot + pilot
}

/// Inverse of [`recenter`] for the same `M̂^{1/2}` and `Ĝ`.
pub fn uncenter(z_star: &DVector<f64>, root: &DMatrix<f64>, pilot: &DVector<f64>) -> DVector<f64> {
    z_star + root * pilot - pilot
}

/// `ζ ~ N(G, σ²I/n)`
pub fn simulate_i<R: Rng + ?Sized>(target: &DVector<f64>, sigma: f64, n: usize, rng: &mut R) -> ScoreVector {
    let scale = sigma / (n as f64).sqrt();
    let values = target + standard_normal_vector(target.len(), rng) * scale;
    ScoreVector { values, noise_scale: scale, stage: Stage::I }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SpliceMode {
    /// Replace the second-half and first-half vectors by exact draws from
    /// their target laws before the pilots use them.
    #[default]
    Oracle,
    /// Feed the recentered vectors forward unchanged.
    EndToEnd,
}

/// Everything the chain needs about a scenario, computed once.
#[derive(Debug, Clone)]
pub struct ChainSetup {
    pub g: AdditiveFunction,
    pub model: DesignModel,
    pub basis: OrthonormalBasis,
    pub coarse: OrthonormalBasis,
    /// `⟨ψ*_l, ψ_k⟩`, `J* × K*`
    pub cross: DMatrix<f64>,
    /// `G_n`
    pub target: DVector<f64>,
    /// `‖g - g^[K*]‖²`
    pub approx_err_sq: f64,
    pub sigma: f64,
}

impl ChainSetup {
    pub fn new(g: AdditiveFunction, model: DesignModel, bins: usize, coarse_bins: usize, sigma: f64) -> Result<Self> {
        check_sigma(sigma)?;
        if coarse_bins < 2 || bins % coarse_bins != 0 {
            return Err(Error::Parameter(format!("J = {coarse_bins} must be >= 2 and divide K = {bins}")));
        }
        let basis = OrthonormalBasis::build(bins, &model)?;
        let coarse = OrthonormalBasis::build(coarse_bins, &model)?;
        let cross = pilot_cross(&coarse, &basis, &model)?;
        let target = project(&g, &basis, &model)?;
        let approx_err_sq = approximation_error(&g, &basis, &model)?.err_sq;
        Ok(Self { g, model, basis, coarse, cross, target, approx_err_sq, sigma })
    }

    /// `E‖ĝ - g‖²` for a pilot lying in the fine span.
    pub fn pilot_loss(&self, pilot: &PilotEstimate) -> f64 {
        self.approx_err_sq + (&self.target - &pilot.lifted).norm_squared()
    }
}

/// All intermediate vectors of one pass through the split chain.
#[derive(Debug, Clone)]
pub struct SplitRecord {
    pub m: usize,
    pub n: usize,
    pub mhat1: DMatrix<f64>,
    pub mhat2: DMatrix<f64>,
    pub z1: ScoreVector,
    pub z2: ScoreVector,
    pub pilot1: PilotEstimate,
    /// `Z*_{n,2}`
    pub stage_e: ScoreVector,
    /// `ζ_{n,2}`
    pub stage_f: ScoreVector,
    pub pilot2: PilotEstimate,
    /// `ζ*_{n,1}`
    pub stage_g: ScoreVector,
    /// `ζ_{n,1}`
    pub stage_h: ScoreVector,
    /// `ζ_n`
    pub stage_i: ScoreVector,
}

impl SplitRecord {
    pub fn stages(&self) -> [(&'static str, &DVector<f64>); 7] {
        [
            ("D1", &self.z1.values),
            ("D2", &self.z2.values),
            ("E", &self.stage_e.values),
            ("F", &self.stage_f.values),
            ("G", &self.stage_g.values),
            ("H", &self.stage_h.values),
            ("I", &self.stage_i.values),
        ]
    }
}

/// Runs halves `1..m` and `m+1..n`, `m = ⌊n/2⌋`, through whitening, both
/// pilots and both recenterings. Each stage draws from its own child of
/// `node`.
pub fn split_pipeline(
    sample: &RegressionSample,
    setup: &ChainSetup,
    mode: SpliceMode,
    node: SeedNode,
) -> Result<SplitRecord> {
    let n = sample.n();
    if n < 4 {
        return Err(Error::Parameter(format!("split pipeline needs n >= 4, got {n}")));
    }
    let m = n / 2;
    let sigma = sample.sigma;
    let j = setup.coarse.bins();
    let halves = [sample.slice(0..m), sample.slice(m..n)];
    let mut z = Vec::with_capacity(2);
    let mut grams = Vec::with_capacity(2);
    for (h, half) in halves.iter().enumerate() {
        let zc = sufficient_statistic(half, &setup.basis)?;
        let mhat = empirical_gram(&half.x, &setup.basis)?;
        let label = if h == 0 { "whiten-1" } else { "whiten-2" };
        z.push(whiten(&zc, &mhat, sigma, half.n(), &mut node.child(label).rng())?);
        grams.push(mhat);
    }
    let (z2, z1) = (z.pop().unwrap(), z.pop().unwrap());
    let (mhat2, mhat1) = (grams.pop().unwrap(), grams.pop().unwrap());
    let root1 = sqrt_psd(&mhat1, PSD_CLAMP)?;
    let root2 = sqrt_psd(&mhat2, PSD_CLAMP)?;

    let pilot1 = pilot_from_vector(&(&root1 * &z1.values), &setup.cross, j)?;
    let stage_e = ScoreVector {
        values: recenter(&z2.values, &root2, &pilot1.lifted),
        noise_scale: z2.noise_scale,
        stage: Stage::E,
    };
    let stage_f = match mode {
        SpliceMode::Oracle => {
            let mut v = simulate_i(&setup.target, sigma, n - m, &mut node.child("splice-F").rng());
            v.stage = Stage::F;
            v
        }
        SpliceMode::EndToEnd => ScoreVector { stage: Stage::F, ..stage_e.clone() },
    };
    let pilot2 = pilot_estimator_2(&stage_f, &setup.cross, j)?;
    let stage_g = ScoreVector {
        values: recenter(&z1.values, &root1, &pilot2.lifted),
        noise_scale: z1.noise_scale,
        stage: Stage::G,
    };
    let stage_h = match mode {
        SpliceMode::Oracle => {
            let mut v = simulate_i(&setup.target, sigma, m, &mut node.child("splice-H").rng());
            v.stage = Stage::H;
            v
        }
        SpliceMode::EndToEnd => ScoreVector { stage: Stage::H, ..stage_g.clone() },
    };
    let w = m as f64 / n as f64;
    let stage_i = ScoreVector {
        values: &stage_h.values * w + &stage_f.values * (1.0 - w),
        noise_scale: sigma / (n as f64).sqrt(),
        stage: Stage::I,
    };
    Ok(SplitRecord { m, n, mhat1, mhat2, z1, z2, pilot1, stage_e, stage_f, pilot2, stage_g, stage_h, stage_i })
}

/// One replicate: draw stage-A data from `node.child("A")`, then run the split chain.
pub fn run_chain(setup: &ChainSetup, n: usize, mode: SpliceMode, node: SeedNode) -> Result<SplitRecord> {
    let sample = simulate_a(&setup.g, &setup.model, n, setup.sigma, &mut node.child("A").rng())?;
    split_pipeline(&sample, setup, mode, node)
}

/// One univariate regression sample of the independent-case experiment.
#[derive(Debug, Clone)]
pub struct UnivariateSample {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct RExperiment {
    pub components: Vec<UnivariateSample>,
    /// One draw of `N(g_0, σ²/n)`.
    pub shift_obs: f64,
}

/// `d` independent univariate regressions `Y* = g_k*(X*) + σε` with
/// `X* ~ p_k`, plus an independent `N(g_0, σ²/n)` draw.
pub fn simulate_r_experiment<R: Rng + ?Sized>(
    decomp: &CenteredDecomposition,
    model: &DesignModel,
    n: usize,
    sigma: f64,
    rng: &mut R,
) -> Result<RExperiment> {
    if !model.is_product() {
        return Err(Error::Assumption("independent-case experiment needs a product design".into()));
    }
    if decomp.centered_components.len() != model.d() {
        return Err(Error::Dimension { expected: model.d(), found: decomp.centered_components.len() });
    }
    check_sigma(sigma)?;
    let mut components = Vec::with_capacity(model.d());
    for (k, comp) in decomp.centered_components.iter().enumerate() {
        let marg = model.marginal(k);
        let x: Vec<f64> = (0..n).map(|_| marg.quantile(rng.random::<f64>())).collect();
        let y = x
            .iter()
            .map(|&t| comp.eval(t) + sigma * rng.sample::<f64, _>(StandardNormal))
            .collect();
        components.push(UnivariateSample { x, y });
    }
    let shift_obs = decomp.shift_g0 + sigma / (n as f64).sqrt() * rng.sample::<f64, _>(StandardNormal);
    Ok(RExperiment { components, shift_obs })
}
