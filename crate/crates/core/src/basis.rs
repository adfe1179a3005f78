//! Histogram system on K bins per coordinate and its orthonormalization in
//! `L₂(p_X)`.
//!
//! Every basis function is a step function of a single coordinate plus a
//! constant, so everything is carried in the feature space
//! `e(x) = (1, 1{x_1 ∈ bin 0}, …, 1{x_d ∈ bin K-1})` of dimension `1 + dK`.
//! A function `f = c·e` has `⟨f, f'⟩_{p_X} = cᵀ P c'` with `P = E[e eᵀ]`,
//! which only involves 1- and 2-d cell probabilities.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::design::{Covariates, DesignModel};
use crate::error::{Error, Result};
use crate::function::AdditiveFunction;
use crate::linalg::canonical_eigen;

/// Smallest Gram eigenvalue accepted by [`orthonormalize`].
pub const DEGENERATE_GRAM: f64 = 1e-12;
const EIGEN_CLUSTER_TOL: f64 = 1e-9;

/// One raw basis function. `coordinate == None` is the constant 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RawEntry {
    pub coordinate: Option<usize>,
    /// The step sits between bins `breakpoint - 1` and `breakpoint`.
    pub breakpoint: usize,
    pub scale: f64,
    /// Value on `[0, breakpoint/K)`.
    pub left_level: f64,
    /// Value on `[breakpoint/K, (breakpoint+1)/K)`.
    pub right_level: f64,
}

impl RawEntry {
    fn level_on_bin(&self, bin: usize) -> f64 {
        if bin < self.breakpoint {
            self.left_level
        } else if bin == self.breakpoint {
            self.right_level
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RawBasisSpec {
    pub bins: usize,
    pub d: usize,
    pub entries: Vec<RawEntry>,
}

pub fn build_raw_basis(bins: usize, d: usize) -> Result<RawBasisSpec> {
    if bins < 2 {
        return Err(Error::Parameter(format!("K = {bins}, need at least 2 bins")));
    }
    if d == 0 {
        return Err(Error::Parameter("d must be at least 1".into()));
    }
    let kf = bins as f64;
    let mut entries = Vec::with_capacity(1 + d * (bins - 1));
    entries.push(RawEntry {
        coordinate: None,
        breakpoint: 0,
        scale: 1.0,
        left_level: 1.0,
        right_level: 1.0,
    });
    for c in 0..d {
        for k in 1..bins {
            let k_f = k as f64;
            let scale = (kf * (1.0 + 1.0 / k_f)).sqrt().recip();
            entries.push(RawEntry {
                coordinate: Some(c),
                breakpoint: k,
                scale,
                left_level: scale * kf / k_f,
                right_level: -scale * kf,
            });
        }
    }
    Ok(RawBasisSpec { bins, d, entries })
}

impl RawBasisSpec {
    /// `K* = 1 + d(K-1)`
    pub fn count(&self) -> usize {
        self.entries.len()
    }

    pub fn feature_dim(&self) -> usize {
        1 + self.d * self.bins
    }

    pub fn feature_index(&self, coordinate: usize, bin: usize) -> usize {
        1 + coordinate * self.bins + bin
    }

    pub fn bin_of(&self, t: f64) -> usize {
        ((t * self.bins as f64).floor() as isize).clamp(0, self.bins as isize - 1) as usize
    }

    /// Indices of the `1 + d` features that are 1 at `x`.
    pub fn active_features<'a>(&'a self, x: &'a [f64]) -> impl Iterator<Item = usize> + 'a {
        std::iter::once(0).chain(
            x.iter()
                .enumerate()
                .map(|(c, &t)| self.feature_index(c, self.bin_of(t))),
        )
    }

    /// Rows express each raw function over the features.
    pub fn feature_matrix(&self) -> DMatrix<f64> {
        let mut r = DMatrix::zeros(self.count(), self.feature_dim());
        for (i, e) in self.entries.iter().enumerate() {
            match e.coordinate {
                None => r[(i, 0)] = 1.0,
                Some(c) => {
                    for b in 0..=e.breakpoint {
                        r[(i, self.feature_index(c, b))] = e.level_on_bin(b);
                    }
                }
            }
        }
        r
    }

    pub fn eval_entry(&self, i: usize, x: &[f64]) -> f64 {
        let e = &self.entries[i];
        match e.coordinate {
            None => 1.0,
            Some(c) => e.level_on_bin(self.bin_of(x[c])),
        }
    }
}

/// Per-coordinate K-bin probabilities and score masses of a model.
#[derive(Debug, Clone)]
pub struct CellMasses {
    pub bins: usize,
    pub mass: Vec<Vec<f64>>,
    pub score_mass: Vec<Vec<f64>>,
}

impl CellMasses {
    pub fn new(model: &DesignModel, bins: usize) -> Result<Self> {
        model.check_alignment(bins)?;
        let h = 1.0 / bins as f64;
        let edge = |b: usize| (b as f64 * h, if b + 1 == bins { 1.0 } else { (b + 1) as f64 * h });
        let mut mass = Vec::with_capacity(model.d());
        let mut score_mass = Vec::with_capacity(model.d());
        for k in 0..model.d() {
            mass.push((0..bins).map(|b| { let (lo, hi) = edge(b); model.marginal_mass(k, lo, hi) }).collect());
            score_mass.push((0..bins).map(|b| { let (lo, hi) = edge(b); model.score_mass(k, lo, hi) }).collect());
        }
        Ok(Self { bins, mass, score_mass })
    }
}

/// `P = E[e(X) e(X)ᵀ]` under the model.
pub fn population_moments(model: &DesignModel, bins: usize) -> Result<DMatrix<f64>> {
    let cells = CellMasses::new(model, bins)?;
    let d = model.d();
    let f = 1 + d * bins;
    let idx = |c: usize, b: usize| 1 + c * bins + b;
    let mut p = DMatrix::zeros(f, f);
    p[(0, 0)] = 1.0;
    for c in 0..d {
        for b in 0..bins {
            let m = cells.mass[c][b];
            p[(0, idx(c, b))] = m;
            p[(idx(c, b), 0)] = m;
            p[(idx(c, b), idx(c, b))] = m;
        }
        for c2 in (c + 1)..d {
            let theta = model.theta(c, c2);
            for b in 0..bins {
                for b2 in 0..bins {
                    let v = cells.mass[c][b] * cells.mass[c2][b2]
                        + theta * cells.score_mass[c][b] * cells.score_mass[c2][b2];
                    p[(idx(c, b), idx(c2, b2))] = v;
                    p[(idx(c2, b2), idx(c, b))] = v;
                }
            }
        }
    }
    Ok(p)
}

/// `P̂ = (1/n) Σ e(X_i) e(X_i)ᵀ` from cell co-counts.
pub fn empirical_moments(x: &Covariates, raw: &RawBasisSpec) -> Result<DMatrix<f64>> {
    if x.d() != raw.d {
        return Err(Error::Dimension { expected: raw.d, found: x.d() });
    }
    let f = raw.feature_dim();
    let mut counts = DMatrix::<f64>::zeros(f, f);
    let mut active = Vec::with_capacity(1 + raw.d);
    for i in 0..x.n() {
        active.clear();
        active.extend(raw.active_features(x.row(i)));
        for (a, &fa) in active.iter().enumerate() {
            for &fb in &active[a..] {
                counts[(fa, fb)] += 1.0;
            }
        }
    }
    let n = x.n().max(1) as f64;
    for a in 0..f {
        for b in (a + 1)..f {
            let v = counts[(a, b)] + counts[(b, a)];
            counts[(a, b)] = v;
            counts[(b, a)] = v;
        }
    }
    Ok(counts / n)
}

pub fn gram_matrix(raw: &RawBasisSpec, model: &DesignModel) -> Result<DMatrix<f64>> {
    if model.d() != raw.d {
        return Err(Error::Dimension { expected: raw.d, found: model.d() });
    }
    let r = raw.feature_matrix();
    let p = population_moments(model, raw.bins)?;
    Ok(&r * p * r.transpose())
}

/// `ψ_j = d_j^{-1/2} Σ_i U_{ij} ψ̃_i` from the spectral decomposition
/// `Gram = U D Uᵀ`.
#[derive(Debug, Clone)]
pub struct OrthonormalBasis {
    raw: RawBasisSpec,
    /// Row `j` holds the raw coefficients of `ψ_j`.
    coeffs: DMatrix<f64>,
    gram_eigenvalues: DVector<f64>,
    /// Row `j` holds the feature coefficients of `ψ_j`.
    features: DMatrix<f64>,
}

pub fn orthonormalize(raw: &RawBasisSpec, gram: &DMatrix<f64>) -> Result<OrthonormalBasis> {
    let n = raw.count();
    if gram.nrows() != n || gram.ncols() != n {
        return Err(Error::Dimension { expected: n, found: gram.nrows() });
    }
    let (values, vectors) = canonical_eigen(gram, EIGEN_CLUSTER_TOL);
    let min = values[0];
    if min <= DEGENERATE_GRAM {
        return Err(Error::Degenerate { min_eigenvalue: min });
    }
    let inv_root = DMatrix::from_diagonal(&values.map(|v| v.sqrt().recip()));
    let coeffs = inv_root * vectors.transpose();
    let features = &coeffs * raw.feature_matrix();
    Ok(OrthonormalBasis {
        raw: raw.clone(),
        coeffs,
        gram_eigenvalues: values,
        features,
    })
}

impl OrthonormalBasis {
    pub fn build(bins: usize, model: &DesignModel) -> Result<Self> {
        let raw = build_raw_basis(bins, model.d())?;
        let gram = gram_matrix(&raw, model)?;
        orthonormalize(&raw, &gram)
    }

    pub fn raw(&self) -> &RawBasisSpec {
        &self.raw
    }

    pub fn bins(&self) -> usize {
        self.raw.bins
    }

    pub fn d(&self) -> usize {
        self.raw.d
    }

    pub fn count(&self) -> usize {
        self.raw.count()
    }

    pub fn coeffs(&self) -> &DMatrix<f64> {
        &self.coeffs
    }

    pub fn gram_eigenvalues(&self) -> &DVector<f64> {
        &self.gram_eigenvalues
    }

    pub fn feature_coeffs(&self) -> &DMatrix<f64> {
        &self.features
    }

    /// `(ψ_1(x), …, ψ_{K*}(x))`
    pub fn eval(&self, x: &[f64]) -> DVector<f64> {
        let mut out = DVector::zeros(self.count());
        for f in self.raw.active_features(x) {
            out += self.features.column(f);
        }
        out
    }

    /// `Σ_j coeffs_j ψ_j(x)`
    pub fn reconstruct(&self, coeffs: &DVector<f64>, x: &[f64]) -> f64 {
        self.raw
            .active_features(x)
            .map(|f| self.features.column(f).dot(coeffs))
            .sum()
    }

    /// Coefficients of `Σ_j G_j ψ_j` over the raw functions.
    pub fn raw_coefficients(&self, g: &DVector<f64>) -> DVector<f64> {
        self.coeffs.transpose() * g
    }

    /// `⟨ψ_i, ψ_j⟩_{p_X}`, computed from exact cell probabilities.
    pub fn inner_products(&self, model: &DesignModel) -> Result<DMatrix<f64>> {
        let p = population_moments(model, self.bins())?;
        Ok(&self.features * p * self.features.transpose())
    }

    /// `M̂ = {⟨ψ_k, ψ_k'⟩_{X,n}}`.
    pub fn empirical_gram(&self, x: &Covariates) -> Result<DMatrix<f64>> {
        let p = empirical_moments(x, &self.raw)?;
        Ok(&self.features * p * self.features.transpose())
    }

    /// `(1/n) Σ_i y_i ψ(X_i)`.
    pub fn score_average(&self, x: &Covariates, y: &[f64]) -> Result<DVector<f64>> {
        if y.len() != x.n() {
            return Err(Error::Dimension { expected: x.n(), found: y.len() });
        }
        let mut acc = DVector::zeros(self.raw.feature_dim());
        for (i, &yi) in y.iter().enumerate() {
            for f in self.raw.active_features(x.row(i)) {
                acc[f] += yi;
            }
        }
        let n = x.n().max(1) as f64;
        Ok(&self.features * acc / n)
    }

    /// `sup_x Σ_j ψ_j(x)²` by enumerating all `K^d` cells when that is at
    /// most 2^24, otherwise an upper bound from separate maxima.
    pub fn sup_sum_squares(&self) -> SupSumSquares {
        let q = self.features.transpose() * &self.features;
        let k = self.bins();
        let d = self.d();
        let idx = |c: usize, b: usize| 1 + c * k + b;
        let cells = (k as f64).powi(d as i32);
        if cells <= (1u64 << 24) as f64 {
            let mut chosen = vec![0usize; d];
            let value = enumerate_cells(&q, k, d, 0, q[(0, 0)], &mut chosen, &idx);
            SupSumSquares { value, exact: true }
        } else {
            let mut value = q[(0, 0)];
            for c in 0..d {
                value += (0..k)
                    .map(|b| 2.0 * q[(0, idx(c, b))] + q[(idx(c, b), idx(c, b))])
                    .fold(f64::NEG_INFINITY, f64::max);
                for c2 in (c + 1)..d {
                    let mut best = f64::NEG_INFINITY;
                    for b in 0..k {
                        for b2 in 0..k {
                            best = best.max(2.0 * q[(idx(c, b), idx(c2, b2))]);
                        }
                    }
                    value += best;
                }
            }
            SupSumSquares { value, exact: false }
        }
    }
}

fn enumerate_cells(
    q: &DMatrix<f64>,
    k: usize,
    d: usize,
    c: usize,
    partial: f64,
    chosen: &mut Vec<usize>,
    idx: &dyn Fn(usize, usize) -> usize,
) -> f64 {
    if c == d {
        return partial;
    }
    let mut best = f64::NEG_INFINITY;
    for b in 0..k {
        let f = idx(c, b);
        let mut add = 2.0 * q[(0, f)] + q[(f, f)];
        for (c2, &b2) in chosen.iter().enumerate().take(c) {
            add += 2.0 * q[(idx(c2, b2), f)];
        }
        chosen[c] = b;
        best = best.max(enumerate_cells(q, k, d, c + 1, partial + add, chosen, idx));
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SupSumSquares {
    pub value: f64,
    /// False when `value` is only an upper bound.
    pub exact: bool,
}

/// `ρ^{-1} {1 + K d (1 + π²/6)}`
pub fn sup_sum_squares_bound(rho: f64, bins: usize, d: usize) -> f64 {
    (1.0 + (bins * d) as f64 * (1.0 + PI * PI / 6.0)) / rho
}

/// Per-coordinate integrals of an additive function against the model.
struct ComponentIntegrals {
    /// `∫ g_l p_l`
    mean: Vec<f64>,
    /// `∫ g_l a_l p_l`
    score: Vec<f64>,
    /// `∫ g_l² p_l`
    square: Vec<f64>,
}

fn component_integrals(g: &AdditiveFunction, model: &DesignModel) -> ComponentIntegrals {
    let mut out = ComponentIntegrals { mean: vec![], score: vec![], square: vec![] };
    for (l, comp) in g.components.iter().enumerate() {
        let br = comp.breakpoints();
        out.mean.push(model.integrate_marginal(l, |t| comp.eval(t), 0.0, 1.0, &br));
        out.score.push(model.integrate_score_weighted(l, |t| comp.eval(t), 0.0, 1.0, &br));
        out.square.push(model.integrate_marginal(l, |t| comp.eval(t).powi(2), 0.0, 1.0, &br));
    }
    out
}

fn check_dims(g: &AdditiveFunction, model: &DesignModel, d: usize) -> Result<()> {
    if g.dim() != d || model.d() != d {
        return Err(Error::Dimension { expected: d, found: if g.dim() != d { g.dim() } else { model.d() } });
    }
    Ok(())
}

/// `E[g(X) e(X)]`, the feature moments of `g`.
pub fn feature_moments(g: &AdditiveFunction, model: &DesignModel, raw: &RawBasisSpec) -> Result<DVector<f64>> {
    check_dims(g, model, raw.d)?;
    let cells = CellMasses::new(model, raw.bins)?;
    let ints = component_integrals(g, model);
    let k = raw.bins;
    let h = 1.0 / k as f64;
    let mut m = DVector::zeros(raw.feature_dim());
    m[0] = ints.mean.iter().sum();
    for c in 0..raw.d {
        let comp = &g.components[c];
        let br = comp.breakpoints();
        for b in 0..k {
            let hi = if b + 1 == k { 1.0 } else { (b + 1) as f64 * h };
            let mut v = model.integrate_marginal(c, |t| comp.eval(t), b as f64 * h, hi, &br);
            for l in (0..raw.d).filter(|&l| l != c) {
                v += ints.mean[l] * cells.mass[c][b] + model.theta(l, c) * ints.score[l] * cells.score_mass[c][b];
            }
            m[raw.feature_index(c, b)] = v;
        }
    }
    Ok(m)
}

/// `‖g‖²_{p_X}`
pub fn norm_sq(g: &AdditiveFunction, model: &DesignModel) -> Result<f64> {
    check_dims(g, model, model.d())?;
    let ints = component_integrals(g, model);
    let d = g.dim();
    let mut total: f64 = ints.square.iter().sum();
    for l in 0..d {
        for l2 in 0..d {
            if l != l2 {
                total += ints.mean[l] * ints.mean[l2] + model.theta(l, l2) * ints.score[l] * ints.score[l2];
            }
        }
    }
    Ok(total)
}

/// `G = {⟨g, ψ_k⟩_{p_X}}_k`
pub fn project(g: &AdditiveFunction, basis: &OrthonormalBasis, model: &DesignModel) -> Result<DVector<f64>> {
    let m = feature_moments(g, model, basis.raw())?;
    Ok(basis.feature_coeffs() * m)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ApproximationError {
    /// `‖g - g^[K*]‖²` from the residual's component integrals.
    pub err_sq: f64,
    /// `ρ^{-1} d C² K^{-2β}`
    pub bound: f64,
    /// `‖g‖² - ‖G‖²`, an independent evaluation of the same quantity.
    pub pythagorean: f64,
}

/// `‖g - Σ coeffs_j ψ_j‖²_{p_X}` by expanding the residual coordinatewise.
pub fn residual_norm_sq(
    g: &AdditiveFunction,
    coeffs: &DVector<f64>,
    basis: &OrthonormalBasis,
    model: &DesignModel,
) -> Result<f64> {
    let raw = basis.raw();
    check_dims(g, model, raw.d)?;
    let k = raw.bins;
    let d = raw.d;
    let h = 1.0 / k as f64;
    let cells = CellMasses::new(model, k)?;
    let level = basis.feature_coeffs().transpose() * coeffs;
    let shift = -level[0];
    let mut mean = vec![0.0; d];
    let mut score = vec![0.0; d];
    let mut square = vec![0.0; d];
    for c in 0..d {
        let comp = &g.components[c];
        let br = comp.breakpoints();
        for b in 0..k {
            let hstep = level[raw.feature_index(c, b)];
            let (lo, hi) = (b as f64 * h, if b + 1 == k { 1.0 } else { (b + 1) as f64 * h });
            let u = |t: f64| comp.eval(t) - hstep;
            mean[c] += model.integrate_marginal(c, u, lo, hi, &br);
            score[c] += model.integrate_score_weighted(c, u, lo, hi, &br);
            square[c] += model.integrate_marginal(c, |t| u(t).powi(2), lo, hi, &br);
        }
        debug_assert!(cells.mass[c].iter().all(|m| *m >= 0.0));
    }
    let mut total = shift * shift + 2.0 * shift * mean.iter().sum::<f64>() + square.iter().sum::<f64>();
    for c in 0..d {
        for c2 in 0..d {
            if c != c2 {
                total += mean[c] * mean[c2] + model.theta(c, c2) * score[c] * score[c2];
            }
        }
    }
    Ok(total.max(0.0))
}

pub fn approximation_error(
    g: &AdditiveFunction,
    basis: &OrthonormalBasis,
    model: &DesignModel,
) -> Result<ApproximationError> {
    let coeffs = project(g, basis, model)?;
    let err_sq = residual_norm_sq(g, &coeffs, basis, model)?;
    let pythagorean = norm_sq(g, model)? - coeffs.norm_squared();
    let bound = approximation_bound(g, basis.bins(), model.rho());
    Ok(ApproximationError { err_sq, bound, pythagorean })
}

/// `ρ^{-1} d C² K^{-2β}`
pub fn approximation_bound(g: &AdditiveFunction, bins: usize, rho: f64) -> f64 {
    g.dim() as f64 * g.holder_c.powi(2) * (bins as f64).powf(-2.0 * g.holder_beta) / rho
}

/// Cross inner products `⟨ψ*_l, ψ_k⟩_{p_X}` of a coarse basis on `J` bins
/// against a fine basis on `K` bins, `J | K`.
pub fn cross_gram(coarse: &OrthonormalBasis, fine: &OrthonormalBasis, model: &DesignModel) -> Result<DMatrix<f64>> {
    let (j, k) = (coarse.bins(), fine.bins());
    if k % j != 0 {
        return Err(Error::Parameter(format!("coarse J = {j} does not divide K = {k}")));
    }
    if coarse.d() != fine.d() {
        return Err(Error::Dimension { expected: fine.d(), found: coarse.d() });
    }
    let embedded = embed_features(coarse, k);
    let p = population_moments(model, k)?;
    Ok(embedded * p * fine.feature_coeffs().transpose())
}

/// Coarse feature coefficients rewritten over the fine `K`-bin features.
pub fn embed_features(coarse: &OrthonormalBasis, fine_bins: usize) -> DMatrix<f64> {
    let j = coarse.bins();
    let ratio = fine_bins / j;
    let d = coarse.d();
    let src = coarse.feature_coeffs();
    let mut out = DMatrix::zeros(src.nrows(), 1 + d * fine_bins);
    for r in 0..src.nrows() {
        out[(r, 0)] = src[(r, 0)];
        for c in 0..d {
            for b in 0..fine_bins {
                out[(r, 1 + c * fine_bins + b)] = src[(r, 1 + c * j + b / ratio)];
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::{PiecewiseDensity, ScoreKind};
    use crate::function::{panel_function, ComponentFunction};
    use crate::quadrature::integrate;

    fn two_level() -> DesignModel {
        DesignModel::product(vec![PiecewiseDensity::new(vec![0.5, 1.5]).unwrap()], 0.5).unwrap()
    }

    #[test]
    fn raw_k2_d1() {
        let raw = build_raw_basis(2, 1).unwrap();
        assert_eq!(raw.count(), 2);
        let e = raw.entries[1];
        assert!((e.scale - 0.5).abs() < 1e-15);
        assert!((e.left_level - 1.0).abs() < 1e-15 && (e.right_level + 1.0).abs() < 1e-15);
        assert_eq!(raw.eval_entry(0, &[0.9]), 1.0);
    }

    #[test]
    fn raw_counts_and_levels() {
        assert_eq!(build_raw_basis(4, 2).unwrap().count(), 7);
        let raw = build_raw_basis(3, 1).unwrap();
        let s = 3f64.powf(-0.5) * 1.5f64.powf(-0.5);
        let e = raw.entries[2];
        assert_eq!(e.breakpoint, 2);
        assert!((e.left_level - s * 1.5).abs() < 1e-15);
        assert!((e.right_level + s * 3.0).abs() < 1e-15);
        assert!(matches!(build_raw_basis(1, 1), Err(Error::Parameter(_))));
    }

    #[test]
    fn raw_is_orthonormal_under_uniform() {
        for (k, d) in [(2, 1), (5, 2), (16, 3)] {
            let g = gram_matrix(&build_raw_basis(k, d).unwrap(), &DesignModel::uniform(d).unwrap()).unwrap();
            assert!((g - DMatrix::<f64>::identity(1 + d * (k - 1), 1 + d * (k - 1))).abs().max() < 1e-13);
        }
    }

    #[test]
    fn two_level_gram() {
        let raw = build_raw_basis(2, 1).unwrap();
        let g = gram_matrix(&raw, &two_level()).unwrap();
        let expect = DMatrix::from_row_slice(2, 2, &[1.0, -0.5, -0.5, 1.0]);
        assert!((&g - expect).abs().max() < 1e-15);
        let b = orthonormalize(&raw, &g).unwrap();
        assert!((b.gram_eigenvalues()[0] - 0.5).abs() < 1e-14);
        assert!((b.gram_eigenvalues()[1] - 1.5).abs() < 1e-14);
        // independent check: quadrature of ψ_i ψ_j p
        let p = two_level();
        for i in 0..2 {
            for j in 0..2 {
                let v = integrate(|t| b.eval(&[t])[i] * b.eval(&[t])[j] * p.pdf(&[t]), 0.0, 1.0, &[0.5]);
                assert!((v - if i == j { 1.0 } else { 0.0 }).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn misaligned_model_is_rejected() {
        let m = DesignModel::product(vec![PiecewiseDensity::tilted(8, 0.3).unwrap()], 0.5).unwrap();
        assert!(matches!(OrthonormalBasis::build(3, &m), Err(Error::Alignment(_))));
    }

    #[test]
    fn identity_gram_gives_identity_coefficients() {
        let b = OrthonormalBasis::build(8, &DesignModel::uniform(2).unwrap()).unwrap();
        assert!((b.coeffs() - DMatrix::<f64>::identity(15, 15)).abs().max() < 1e-12);
    }

    #[test]
    fn singular_gram_is_degenerate() {
        let raw = build_raw_basis(2, 1).unwrap();
        let g = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(matches!(orthonormalize(&raw, &g), Err(Error::Degenerate { .. })));
    }

    #[test]
    fn sup_sum_uniform_k2() {
        let b = OrthonormalBasis::build(2, &DesignModel::uniform(1).unwrap()).unwrap();
        let s = b.sup_sum_squares();
        assert!(s.exact && (s.value - 2.0).abs() < 1e-12);
        assert!(s.value <= sup_sum_squares_bound(1.0, 2, 1));
        assert!((sup_sum_squares_bound(1.0, 2, 1) - (3.0 + PI * PI / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn sup_sum_matches_pointwise_scan() {
        let m = DesignModel::pairwise_constant(
            vec![PiecewiseDensity::tilted(4, 0.3).unwrap(); 3],
            ScoreKind::Linear,
            0.2,
            0.3,
        )
        .unwrap();
        let b = OrthonormalBasis::build(4, &m).unwrap();
        let mut scan: f64 = 0.0;
        for i in 0..4 {
            for j in 0..4 {
                for l in 0..4 {
                    let x = [(i as f64 + 0.5) / 4.0, (j as f64 + 0.5) / 4.0, (l as f64 + 0.5) / 4.0];
                    scan = scan.max(b.eval(&x).norm_squared());
                }
            }
        }
        assert!((b.sup_sum_squares().value - scan).abs() < 1e-10);
    }

    #[test]
    fn project_identity_k2() {
        let m = DesignModel::uniform(1).unwrap();
        let b = OrthonormalBasis::build(2, &m).unwrap();
        let g = panel_function("linear", 1).unwrap();
        let c = b.raw_coefficients(&project(&g, &b, &m).unwrap());
        assert!((c[0] - 0.5).abs() < 1e-14 && (c[1] + 0.25).abs() < 1e-14);
    }

    #[test]
    fn histogram_functions_are_reproduced() {
        let m = DesignModel::pairwise_constant(
            vec![PiecewiseDensity::tilted(8, 0.4).unwrap(); 2],
            ScoreKind::Cosine { frequency: 1 },
            0.3,
            0.2,
        )
        .unwrap();
        let b = OrthonormalBasis::build(8, &m).unwrap();
        let g = panel_function("step", 2).unwrap();
        let coeffs = project(&g, &b, &m).unwrap();
        for i in 0..50 {
            let x = [i as f64 / 49.0, (i as f64 * 0.37).fract()];
            assert!((b.reconstruct(&coeffs, &x) - g.eval(&x).unwrap()).abs() < 1e-12);
        }
        assert!(approximation_error(&g, &b, &m).unwrap().err_sq < 1e-20);
    }

    #[test]
    fn constant_function_coefficients() {
        let c = 1.7;
        let g = AdditiveFunction::new(vec![ComponentFunction::constant(c), ComponentFunction::constant(0.0)], c, 1.0)
            .unwrap();
        let u = DesignModel::uniform(2).unwrap();
        let bu = OrthonormalBasis::build(4, &u).unwrap();
        let gu = project(&g, &bu, &u).unwrap();
        assert!((gu[0] - c).abs() < 1e-14);
        assert!(gu.rows(1, gu.len() - 1).abs().max() < 1e-14);
        let m = DesignModel::pairwise_constant(
            vec![PiecewiseDensity::tilted(4, 0.5).unwrap(); 2],
            ScoreKind::Linear,
            0.4,
            0.1,
        )
        .unwrap();
        let b = OrthonormalBasis::build(4, &m).unwrap();
        let gm = project(&g, &b, &m).unwrap();
        assert!((gm.norm() - c).abs() < 1e-12);
        assert!((b.reconstruct(&gm, &[0.1, 0.8]) - c).abs() < 1e-12);
    }

    #[test]
    fn approximation_error_identity() {
        let m = DesignModel::uniform(1).unwrap();
        let g = panel_function("linear", 1).unwrap();
        for (k, expect, bound) in [(4usize, 1.0 / 192.0, 1.0 / 16.0), (2, 1.0 / 48.0, 0.25)] {
            let b = OrthonormalBasis::build(k, &m).unwrap();
            let e = approximation_error(&g, &b, &m).unwrap();
            assert!((e.err_sq - expect).abs() < 1e-14);
            assert!((e.pythagorean - expect).abs() < 1e-13);
            assert!((e.bound - bound).abs() < 1e-15);
        }
        let zero = panel_function("zero", 1).unwrap();
        let b = OrthonormalBasis::build(4, &m).unwrap();
        let e = approximation_error(&zero, &b, &m).unwrap();
        assert_eq!((e.err_sq, e.bound), (0.0, 0.0));
    }

    #[test]
    fn empirical_gram_examples() {
        let m = DesignModel::uniform(1).unwrap();
        let b = OrthonormalBasis::build(2, &m).unwrap();
        let x = Covariates::from_rows(&[vec![0.2], vec![0.8]]).unwrap();
        assert!((b.empirical_gram(&x).unwrap() - DMatrix::<f64>::identity(2, 2)).abs().max() < 1e-14);
        let z = b.score_average(&x, &[1.0, 1.0]).unwrap();
        assert!((z[0] - 1.0).abs() < 1e-14 && z[1].abs() < 1e-14);
        let one = Covariates::from_rows(&[vec![0.3]]).unwrap();
        let psi = b.eval(&[0.3]);
        assert!((b.empirical_gram(&one).unwrap() - &psi * psi.transpose()).abs().max() < 1e-14);
    }

    #[test]
    fn cross_gram_with_itself_is_identity() {
        let m = DesignModel::product(vec![PiecewiseDensity::tilted(8, 0.3).unwrap(); 2], 0.5).unwrap();
        let b = OrthonormalBasis::build(8, &m).unwrap();
        let x = cross_gram(&b, &b, &m).unwrap();
        assert!((x - DMatrix::<f64>::identity(15, 15)).abs().max() < 1e-12);
        let coarse = OrthonormalBasis::build(4, &m).unwrap();
        let x = cross_gram(&coarse, &b, &m).unwrap();
        // coarse functions lie in the fine span: rows have unit norm
        for r in 0..x.nrows() {
            assert!((x.row(r).norm() - 1.0).abs() < 1e-12);
        }
        assert!(matches!(cross_gram(&OrthonormalBasis::build(3, &DesignModel::uniform(2).unwrap()).unwrap(), &b, &m), Err(Error::Parameter(_))));
    }
}
