//! Design densities on [0, 1]^d: products of piecewise-constant marginals,
//! optionally tilted by pairwise FGM-type terms.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::function::Density1d;
use crate::quadrature::integrate;

/// Density on `levels.len()` equal bins of [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseDensity {
    levels: Vec<f64>,
}

impl PiecewiseDensity {
    pub fn new(levels: Vec<f64>) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::Validation("marginal needs at least one bin".into()));
        }
        if let Some(bad) = levels.iter().find(|l| !(**l >= 0.0) || !l.is_finite()) {
            return Err(Error::Validation(format!("negative or non-finite marginal level {bad}")));
        }
        let mass = levels.iter().sum::<f64>() / levels.len() as f64;
        if (mass - 1.0).abs() > 1e-10 {
            return Err(Error::Validation(format!("marginal integrates to {mass}, not 1")));
        }
        Ok(Self { levels })
    }

    pub fn uniform() -> Self {
        Self { levels: vec![1.0] }
    }

    /// Levels rising linearly from `1 - amount` to `1 + amount` across `bins` bins.
    pub fn tilted(bins: usize, amount: f64) -> Result<Self> {
        if bins == 0 {
            return Err(Error::Validation("tilted marginal needs bins >= 1".into()));
        }
        let levels = (0..bins)
            .map(|b| {
                let mid = (b as f64 + 0.5) / bins as f64;
                1.0 + amount * (2.0 * mid - 1.0)
            })
            .collect();
        Self::new(levels)
    }

    pub fn bins(&self) -> usize {
        self.levels.len()
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn min_level(&self) -> f64 {
        self.levels.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_level(&self) -> f64 {
        self.levels.iter().copied().fold(0.0, f64::max)
    }

    pub fn bin_of(&self, t: f64) -> usize {
        let m = self.levels.len();
        ((t * m as f64).floor() as isize).clamp(0, m as isize - 1) as usize
    }

    pub fn density(&self, t: f64) -> f64 {
        self.levels[self.bin_of(t)]
    }

    /// Exact `∫_lo^hi f(t) p(t) dt` given an antiderivative `prim` of `f`.
    fn integrate_with_primitive(&self, lo: f64, hi: f64, prim: impl Fn(f64) -> f64) -> f64 {
        if hi <= lo {
            return 0.0;
        }
        let m = self.levels.len() as f64;
        let first = self.bin_of(lo);
        let mut acc = 0.0;
        let mut left = lo;
        let mut b = first;
        while left < hi && b < self.levels.len() {
            let right = ((b + 1) as f64 / m).min(hi);
            if right > left {
                acc += self.levels[b] * (prim(right) - prim(left));
            }
            left = right;
            b += 1;
        }
        acc
    }

    /// Probability of `[lo, hi)`.
    pub fn mass(&self, lo: f64, hi: f64) -> f64 {
        self.integrate_with_primitive(lo, hi, |t| t)
    }

    pub fn quantile(&self, u: f64) -> f64 {
        let m = self.levels.len();
        let mut cum = 0.0;
        for (b, &level) in self.levels.iter().enumerate() {
            let w = level / m as f64;
            if u < cum + w || b == m - 1 {
                if w <= 0.0 {
                    return b as f64 / m as f64;
                }
                let frac = ((u - cum) / w).clamp(0.0, 1.0);
                return ((b as f64 + frac) / m as f64).min(1.0);
            }
            cum += w;
        }
        1.0
    }

    pub fn cdf(&self, t: f64) -> f64 {
        self.mass(0.0, t.clamp(0.0, 1.0))
    }
}

impl Density1d for PiecewiseDensity {
    fn pdf(&self, t: f64) -> f64 {
        self.density(t)
    }

    fn breakpoints(&self) -> Vec<f64> {
        let m = self.levels.len();
        (1..m).map(|i| i as f64 / m as f64).collect()
    }
}

/// Raw shape of a perturbation score before centering.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScoreKind {
    /// `t`
    #[default]
    Linear,
    /// `cos(2π·frequency·t)`
    Cosine { frequency: u32 },
}

impl ScoreKind {
    fn raw(&self, t: f64) -> f64 {
        match self {
            Self::Linear => t,
            Self::Cosine { frequency } => (2.0 * PI * f64::from(*frequency) * t).cos(),
        }
    }

    fn primitive(&self, t: f64) -> f64 {
        match self {
            Self::Linear => 0.5 * t * t,
            Self::Cosine { frequency } => {
                let w = 2.0 * PI * f64::from(*frequency);
                (w * t).sin() / w
            }
        }
    }
}

/// `a(t) = (raw(t) - mean) / scale`, centered under its marginal with
/// `sup |a| = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CenteredScore {
    pub kind: ScoreKind,
    pub mean: f64,
    pub scale: f64,
}

impl CenteredScore {
    pub fn new(kind: ScoreKind, marginal: &PiecewiseDensity) -> Result<Self> {
        if let ScoreKind::Cosine { frequency: 0 } = kind {
            return Err(Error::Validation("cosine score needs frequency >= 1".into()));
        }
        let mean = marginal.integrate_with_primitive(0.0, 1.0, |t| kind.primitive(t));
        let scale = match kind {
            ScoreKind::Linear => mean.max(1.0 - mean),
            ScoreKind::Cosine { .. } => 1.0 + mean.abs(),
        };
        Ok(Self { kind, mean, scale })
    }

    pub fn eval(&self, t: f64) -> f64 {
        (self.kind.raw(t) - self.mean) / self.scale
    }

    /// `(inf a, sup a)` over [0, 1].
    pub fn range(&self) -> (f64, f64) {
        let (lo, hi) = match self.kind {
            ScoreKind::Linear => (0.0, 1.0),
            ScoreKind::Cosine { .. } => (-1.0, 1.0),
        };
        ((lo - self.mean) / self.scale, (hi - self.mean) / self.scale)
    }

    /// Exact `∫_lo^hi a(t) p(t) dt`.
    pub fn weighted_mass(&self, marginal: &PiecewiseDensity, lo: f64, hi: f64) -> f64 {
        let (kind, mean, scale) = (self.kind, self.mean, self.scale);
        marginal.integrate_with_primitive(lo, hi, |t| (kind.primitive(t) - mean * t) / scale)
    }
}

/// Symmetric coupling coefficient for the pair `(j, k)`, zero-based.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairCoupling {
    pub j: usize,
    pub k: usize,
    pub theta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    #[default]
    Product,
    PairwisePerturbed,
}

/// `p_X(x) = Π p_k(x_k) (1 + Σ_{j<k} θ_jk a_j(x_j) a_k(x_k))`.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignModel {
    family: Family,
    marginals: Vec<PiecewiseDensity>,
    scores: Vec<CenteredScore>,
    theta: DMatrix<f64>,
    rho: f64,
}

/// Row-major `n × d` covariate batch.
#[derive(Debug, Clone, PartialEq)]
pub struct Covariates {
    n: usize,
    d: usize,
    data: Vec<f64>,
}

impl Covariates {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * d);
        for r in rows {
            if r.len() != d {
                return Err(Error::Dimension {
                    expected: d,
                    found: r.len(),
                });
            }
            for (coordinate, &value) in r.iter().enumerate() {
                if !(0.0..=1.0).contains(&value) {
                    return Err(Error::Domain { coordinate, value });
                }
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            n: rows.len(),
            d,
            data,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn column(&self, k: usize) -> impl Iterator<Item = f64> + '_ {
        (0..self.n).map(move |i| self.data[i * self.d + k])
    }

    /// Rows `range` as a new batch.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Self {
        Self {
            n: range.len(),
            d: self.d,
            data: self.data[range.start * self.d..range.end * self.d].to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundsCheck {
    pub min_density: f64,
    pub max_density: f64,
    pub ok: bool,
}

impl DesignModel {
    pub fn product(marginals: Vec<PiecewiseDensity>, rho: f64) -> Result<Self> {
        let d = marginals.len();
        Self::build(Family::Product, marginals, ScoreKind::Linear, DMatrix::zeros(d, d), rho)
    }

    pub fn uniform(d: usize) -> Result<Self> {
        Self::product(vec![PiecewiseDensity::uniform(); d], 1.0)
    }

    pub fn pairwise(
        marginals: Vec<PiecewiseDensity>,
        score: ScoreKind,
        couplings: &[PairCoupling],
        rho: f64,
    ) -> Result<Self> {
        let d = marginals.len();
        let mut theta = DMatrix::zeros(d, d);
        for c in couplings {
            if c.j == c.k || c.j >= d || c.k >= d {
                return Err(Error::Index(format!("coupling pair ({}, {}) invalid for d = {d}", c.j, c.k)));
            }
            theta[(c.j, c.k)] = c.theta;
            theta[(c.k, c.j)] = c.theta;
        }
        Self::build(Family::PairwisePerturbed, marginals, score, theta, rho)
    }

    /// Pairwise model with the same `θ` on every pair.
    pub fn pairwise_constant(
        marginals: Vec<PiecewiseDensity>,
        score: ScoreKind,
        theta: f64,
        rho: f64,
    ) -> Result<Self> {
        let d = marginals.len();
        let mut couplings = Vec::new();
        for j in 0..d {
            for k in (j + 1)..d {
                couplings.push(PairCoupling { j, k, theta });
            }
        }
        Self::pairwise(marginals, score, &couplings, rho)
    }

    fn build(
        family: Family,
        marginals: Vec<PiecewiseDensity>,
        score: ScoreKind,
        theta: DMatrix<f64>,
        rho: f64,
    ) -> Result<Self> {
        if marginals.is_empty() {
            return Err(Error::Validation("design needs d >= 1".into()));
        }
        if !(rho > 0.0 && rho <= 1.0) {
            return Err(Error::Validation(format!("rho = {rho} outside (0, 1]")));
        }
        let scores = marginals
            .iter()
            .map(|m| CenteredScore::new(score, m))
            .collect::<Result<Vec<_>>>()?;
        let model = Self {
            family,
            marginals,
            scores,
            theta,
            rho,
        };
        let check = model.validate_bounds();
        if check.min_density < 0.0 {
            return Err(Error::Validation(format!(
                "design density can be negative (lower bound {})",
                check.min_density
            )));
        }
        Ok(model)
    }

    pub fn d(&self) -> usize {
        self.marginals.len()
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn is_product(&self) -> bool {
        self.theta.iter().all(|t| *t == 0.0)
    }

    pub fn marginal(&self, k: usize) -> &PiecewiseDensity {
        &self.marginals[k]
    }

    pub fn marginals(&self) -> &[PiecewiseDensity] {
        &self.marginals
    }

    pub fn score(&self, k: usize) -> &CenteredScore {
        &self.scores[k]
    }

    pub fn theta(&self, j: usize, k: usize) -> f64 {
        self.theta[(j, k)]
    }

    /// `1 + Σ_{j<k} |θ_jk|`, the rejection envelope (scores have sup 1).
    pub fn envelope(&self) -> f64 {
        let d = self.d();
        let mut e = 1.0;
        for j in 0..d {
            for k in (j + 1)..d {
                e += self.theta[(j, k)].abs();
            }
        }
        e
    }

    fn perturbation(&self, x: &[f64]) -> f64 {
        let d = self.d();
        let mut s = 1.0;
        for j in 0..d {
            for k in (j + 1)..d {
                let t = self.theta[(j, k)];
                if t != 0.0 {
                    s += t * self.scores[j].eval(x[j]) * self.scores[k].eval(x[k]);
                }
            }
        }
        s
    }

    /// Range of `1 + Σ θ_jk a_j a_k`. The factor is multilinear in the
    /// scores, so the extremes sit on vertices of the box of score ranges.
    pub fn perturbation_range(&self) -> (f64, f64) {
        let d = self.d();
        if self.is_product() {
            return (1.0, 1.0);
        }
        if d > 20 {
            let slack = self.envelope() - 1.0;
            return (1.0 - slack, 1.0 + slack);
        }
        let ranges: Vec<(f64, f64)> = self.scores.iter().map(CenteredScore::range).collect();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let mut a = vec![0.0; d];
        for mask in 0u32..(1u32 << d) {
            for (k, r) in ranges.iter().enumerate() {
                a[k] = if mask >> k & 1 == 1 { r.1 } else { r.0 };
            }
            let mut s = 1.0;
            for j in 0..d {
                for k in (j + 1)..d {
                    s += self.theta[(j, k)] * a[j] * a[k];
                }
            }
            lo = lo.min(s);
            hi = hi.max(s);
        }
        (lo, hi)
    }

    pub fn pdf(&self, x: &[f64]) -> f64 {
        let base: f64 = self
            .marginals
            .iter()
            .zip(x)
            .map(|(m, &t)| m.density(t))
            .product();
        base * self.perturbation(x)
    }

    /// Bivariate marginal density of `(X_j, X_k)` at `(s, t)`.
    pub fn pair_pdf(&self, j: usize, k: usize, s: f64, t: f64) -> f64 {
        self.marginals[j].density(s)
            * self.marginals[k].density(t)
            * (1.0 + self.theta[(j, k)] * self.scores[j].eval(s) * self.scores[k].eval(t))
    }

    /// Midpoint-grid evaluation of the `(j, k)` bivariate marginal;
    /// row index follows `X_j`, column index `X_k`.
    pub fn bivariate_marginal(&self, j: usize, k: usize, resolution: usize) -> Result<DMatrix<f64>> {
        let d = self.d();
        if j >= d || k >= d {
            return Err(Error::Index(format!("pair ({j}, {k}) out of range for d = {d}")));
        }
        if j == k {
            return Err(Error::Index(format!(
                "bivariate marginal needs j != k (got {j}); use the 1-d marginal"
            )));
        }
        if resolution == 0 {
            return Err(Error::Parameter("resolution must be positive".into()));
        }
        let h = 1.0 / resolution as f64;
        Ok(DMatrix::from_fn(resolution, resolution, |a, b| {
            self.pair_pdf(j, k, (a as f64 + 0.5) * h, (b as f64 + 0.5) * h)
        }))
    }

    /// Density bounds from a 256-point scan of each marginal times the exact
    /// range of the pairwise factor.
    pub fn validate_bounds(&self) -> BoundsCheck {
        const GRID: usize = 256;
        let mut lo = 1.0;
        let mut hi = 1.0;
        for m in &self.marginals {
            let mut mlo = f64::INFINITY;
            let mut mhi = 0.0_f64;
            for i in 0..GRID {
                let v = m.density((i as f64 + 0.5) / GRID as f64);
                mlo = mlo.min(v);
                mhi = mhi.max(v);
            }
            // levels narrower than the scan still count
            lo *= mlo.min(m.min_level());
            hi *= mhi.max(m.max_level());
        }
        let (fmin, fmax) = self.perturbation_range();
        let min_density = if fmin >= 0.0 { lo * fmin } else { hi * fmin };
        let max_density = hi * fmax;
        let tol = 1e-12;
        BoundsCheck {
            min_density,
            max_density,
            ok: min_density >= self.rho - tol && max_density <= 1.0 / self.rho + tol,
        }
    }

    /// Declared `ρ` is a lower bound for the density and `1/ρ` an upper bound.
    pub fn check_rho(&self) -> Result<()> {
        let b = self.validate_bounds();
        if b.ok {
            Ok(())
        } else {
            Err(Error::Validation(format!(
                "density range [{}, {}] not within [rho, 1/rho] for rho = {}",
                b.min_density, b.max_density, self.rho
            )))
        }
    }

    /// `K` histogram bins give exact cell sums with this model.
    pub fn check_alignment(&self, bins: usize) -> Result<()> {
        for (k, m) in self.marginals.iter().enumerate() {
            let mb = m.bins();
            if mb % bins != 0 && bins % mb != 0 {
                return Err(Error::Alignment(format!(
                    "marginal {k} has {mb} bins, incompatible with K = {bins}"
                )));
            }
        }
        Ok(())
    }

    /// `∫_lo^hi p_k`, exact.
    pub fn marginal_mass(&self, k: usize, lo: f64, hi: f64) -> f64 {
        self.marginals[k].mass(lo, hi)
    }

    /// `∫_lo^hi a_k p_k`, exact.
    pub fn score_mass(&self, k: usize, lo: f64, hi: f64) -> f64 {
        self.scores[k].weighted_mass(&self.marginals[k], lo, hi)
    }

    /// `∫_lo^hi f p_k` by quadrature split at bin edges and `breaks`.
    pub fn integrate_marginal<F: Fn(f64) -> f64>(&self, k: usize, f: F, lo: f64, hi: f64, breaks: &[f64]) -> f64 {
        let m = &self.marginals[k];
        let mut all = m.breakpoints();
        all.extend_from_slice(breaks);
        integrate(|t| f(t) * m.density(t), lo, hi, &all)
    }

    /// `∫_lo^hi f a_k p_k` by quadrature.
    pub fn integrate_score_weighted<F: Fn(f64) -> f64>(
        &self,
        k: usize,
        f: F,
        lo: f64,
        hi: f64,
        breaks: &[f64],
    ) -> f64 {
        let a = &self.scores[k];
        self.integrate_marginal(k, |t| f(t) * a.eval(t), lo, hi, breaks)
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Covariates {
        self.sample_counted(n, rng).0
    }

    /// Draws plus the number of proposals the rejection step consumed.
    pub fn sample_counted<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> (Covariates, u64) {
        let d = self.d();
        let mut data = Vec::with_capacity(n * d);
        let mut proposals = 0u64;
        let product = self.is_product();
        let envelope = self.envelope();
        let mut x = vec![0.0; d];
        for _ in 0..n {
            loop {
                proposals += 1;
                for (k, m) in self.marginals.iter().enumerate() {
                    x[k] = m.quantile(rng.random::<f64>());
                }
                if product || rng.random::<f64>() * envelope < self.perturbation(&x) {
                    break;
                }
            }
            data.extend_from_slice(&x);
        }
        (Covariates { n, d, data }, proposals)
    }
}

/// Declarative model description as it appears in scenario files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct DesignSpec {
    #[serde(default)]
    pub family: Family,
    #[serde(default)]
    pub marginals: MarginalSpec,
    #[serde(default)]
    pub score: ScoreKind,
    /// Same coupling on every pair; ignored when `couplings` is non-empty.
    #[serde(default)]
    pub theta: f64,
    #[serde(default)]
    pub couplings: Vec<PairCoupling>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MarginalSpec {
    #[default]
    Uniform,
    Tilted {
        bins: usize,
        amount: f64,
    },
    /// One level list per coordinate.
    Levels {
        levels: Vec<Vec<f64>>,
    },
}

impl DesignSpec {
    pub fn build(&self, d: usize, rho: f64) -> Result<DesignModel> {
        let marginals = match &self.marginals {
            MarginalSpec::Uniform => vec![PiecewiseDensity::uniform(); d],
            MarginalSpec::Tilted { bins, amount } => vec![PiecewiseDensity::tilted(*bins, *amount)?; d],
            MarginalSpec::Levels { levels } => {
                if levels.len() != d {
                    return Err(Error::Dimension {
                        expected: d,
                        found: levels.len(),
                    });
                }
                levels
                    .iter()
                    .map(|l| PiecewiseDensity::new(l.clone()))
                    .collect::<Result<Vec<_>>>()?
            }
        };
        match self.family {
            Family::Product => DesignModel::product(marginals, rho),
            Family::PairwisePerturbed if self.couplings.is_empty() => {
                DesignModel::pairwise_constant(marginals, self.score, self.theta, rho)
            }
            Family::PairwisePerturbed => DesignModel::pairwise(marginals, self.score, &self.couplings, rho),
        }
    }
}
