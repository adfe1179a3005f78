//! The operator `Γ = ΛΛᵀ` on `L₂([0,1], ℝ^d)` discretized on a midpoint grid,
//! its square root, its diagonal/off-diagonal split, and its compression to
//! finite orthonormal systems.
//!
//! A grid function is a vector of length `dG` laid out component-major:
//! entry `jG + i` is `f_j(t_i)` with `t_i = (i + 1/2)/G`. The inner product
//! is `⟨f, h⟩ = (1/G) fᵀh`, and the operator matrix `A` satisfies
//! `(Γf)_j(t_a) ≈ (A f)_{jG+a}`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::design::{Covariates, DesignModel};
use crate::error::{Error, Result};
use crate::function::{AdditiveFunction, ComponentFunction, Density1d};
use crate::linalg::{frobenius, max_abs_asymmetry, sorted_eigen, sqrt_psd, symmetrize};
use crate::quadrature::integrate;

/// Default clamp for eigenvalues of the discretized `Γ`.
pub const GAMMA_CLAMP: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorKind {
    Gamma,
    GammaSqrt,
    GammaM,
    GammaHs,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OperatorGrid {
    pub d: usize,
    pub points: usize,
    pub kind: OperatorKind,
    pub matrix: DMatrix<f64>,
}

pub fn midpoints(points: usize) -> Vec<f64> {
    (0..points).map(|i| (i as f64 + 0.5) / points as f64).collect()
}

impl OperatorGrid {
    pub fn weight(&self) -> f64 {
        1.0 / self.points as f64
    }

    pub fn dim(&self) -> usize {
        self.d * self.points
    }

    pub fn apply(&self, f: &DVector<f64>) -> DVector<f64> {
        &self.matrix * f
    }

    /// `⟨f, h⟩_{2,d}` on the grid.
    pub fn inner(&self, f: &DVector<f64>, h: &DVector<f64>) -> f64 {
        self.weight() * f.dot(h)
    }

    /// `⟨f, Γf⟩_{2,d}`
    pub fn quadratic_form(&self, f: &DVector<f64>) -> f64 {
        self.inner(f, &self.apply(f))
    }

    pub fn block(&self, j: usize, k: usize) -> DMatrix<f64> {
        let g = self.points;
        self.matrix.view((j * g, k * g), (g, g)).clone_owned()
    }

    pub fn max_asymmetry(&self) -> f64 {
        max_abs_asymmetry(&self.matrix)
    }

    pub fn eigenvalues(&self) -> DVector<f64> {
        sorted_eigen(&self.matrix).0
    }

    /// Samples `f_j(t_i)` for each component.
    pub fn sample_components(&self, components: &[ComponentFunction]) -> Result<DVector<f64>> {
        sample_components(components, self.points)
    }

    /// Operator Frobenius norm squared, `(1/G²) Σ A_ab²`, which
    /// approximates the Hilbert–Schmidt norm of an integral operator.
    pub fn hs_norm_sq(&self) -> f64 {
        let w = self.weight();
        self.matrix.iter().map(|v| v * v).sum::<f64>() * w * w
    }
}

pub fn sample_components(components: &[ComponentFunction], points: usize) -> Result<DVector<f64>> {
    let t = midpoints(points);
    let mut out = DVector::zeros(components.len() * points);
    for (j, c) in components.iter().enumerate() {
        for (i, &ti) in t.iter().enumerate() {
            out[j * points + i] = c.eval(ti);
        }
    }
    Ok(out)
}

/// `(Λᵀf)(x) = Σ_l f_l(x_l)`
pub fn apply_lambda_adjoint(f: &[ComponentFunction]) -> impl Fn(&[f64]) -> f64 + '_ {
    move |x: &[f64]| f.iter().zip(x).map(|(c, &t)| c.eval(t)).sum()
}

/// `Λᵀ` for a grid function, constant on each grid cell.
pub fn apply_lambda_adjoint_grid(f: &DVector<f64>, d: usize, points: usize) -> impl Fn(&[f64]) -> f64 + '_ {
    move |x: &[f64]| {
        (0..d)
            .map(|j| {
                let i = ((x[j] * points as f64).floor() as isize).clamp(0, points as isize - 1) as usize;
                f[j * points + i]
            })
            .sum()
    }
}

fn check_points(points: usize) -> Result<()> {
    if points < 2 {
        return Err(Error::Parameter(format!("grid needs G >= 2 points, got {points}")));
    }
    Ok(())
}

pub fn assemble_gamma(model: &DesignModel, points: usize) -> Result<OperatorGrid> {
    check_points(points)?;
    let d = model.d();
    let t = midpoints(points);
    let w = 1.0 / points as f64;
    let mut a = DMatrix::zeros(d * points, d * points);
    for j in 0..d {
        for (i, &ti) in t.iter().enumerate() {
            a[(j * points + i, j * points + i)] = model.marginal(j).density(ti);
        }
        for k in (j + 1)..d {
            for (ia, &sa) in t.iter().enumerate() {
                for (ib, &tb) in t.iter().enumerate() {
                    let v = model.pair_pdf(j, k, sa, tb) * w;
                    a[(j * points + ia, k * points + ib)] = v;
                    a[(k * points + ib, j * points + ia)] = v;
                }
            }
        }
    }
    Ok(OperatorGrid { d, points, kind: OperatorKind::Gamma, matrix: a })
}

/// Symmetrize, eigendecompose, clamp `[-tol, 0)` to zero, take roots.
pub fn gamma_sqrt(op: &OperatorGrid, tol: f64) -> Result<OperatorGrid> {
    if op.kind != OperatorKind::Gamma {
        return Err(Error::Parameter(format!("square root expects a gamma grid, got {:?}", op.kind)));
    }
    let root = sqrt_psd(&symmetrize(&op.matrix), tol)?;
    Ok(OperatorGrid { d: op.d, points: op.points, kind: OperatorKind::GammaSqrt, matrix: root })
}

#[derive(Debug, Clone)]
pub struct GammaSplit {
    pub gamma_m: OperatorGrid,
    pub gamma_hs: OperatorGrid,
    /// `Σ_{j≠k} ∬ p_{jk}²` by quadrature.
    pub hs_norm_sq: f64,
    /// Same quantity from the grid matrix.
    pub hs_norm_sq_grid: f64,
}

pub fn split_gamma(model: &DesignModel, points: usize) -> Result<GammaSplit> {
    let full = assemble_gamma(model, points)?;
    let d = model.d();
    let mut m = DMatrix::zeros(full.dim(), full.dim());
    for j in 0..d {
        m.view_mut((j * points, j * points), (points, points))
            .copy_from(&full.matrix.view((j * points, j * points), (points, points)));
    }
    let hs = &full.matrix - &m;
    let gamma_hs = OperatorGrid { d, points, kind: OperatorKind::GammaHs, matrix: hs };
    let hs_norm_sq_grid = gamma_hs.hs_norm_sq();
    Ok(GammaSplit {
        gamma_m: OperatorGrid { d, points, kind: OperatorKind::GammaM, matrix: m },
        gamma_hs,
        hs_norm_sq: hs_norm_sq(model),
        hs_norm_sq_grid,
    })
}

fn marginal_integral<F: Fn(f64) -> f64>(model: &DesignModel, k: usize, f: F, pieces: usize) -> f64 {
    let mut breaks = model.marginal(k).breakpoints();
    breaks.extend((1..pieces).map(|i| i as f64 / pieces as f64));
    integrate(f, 0.0, 1.0, &breaks)
}

/// `Σ_{j≠k} ∬ p_{jk}(s,t)² ds dt`, using the product-plus-pairwise form
/// to split each double integral into 1-d integrals.
pub fn hs_norm_sq(model: &DesignModel) -> f64 {
    let d = model.d();
    let mut sq = Vec::with_capacity(d);
    for k in 0..d {
        let p = model.marginal(k);
        let a = model.score(k);
        let m0 = marginal_integral(model, k, |t| p.density(t).powi(2), 8);
        let m1 = marginal_integral(model, k, |t| p.density(t).powi(2) * a.eval(t), 8);
        let m2 = marginal_integral(model, k, |t| (p.density(t) * a.eval(t)).powi(2), 8);
        sq.push((m0, m1, m2));
    }
    let mut total = 0.0;
    for j in 0..d {
        for k in 0..d {
            if j != k {
                let th = model.theta(j, k);
                total += sq[j].0 * sq[k].0 + 2.0 * th * sq[j].1 * sq[k].1 + th * th * sq[j].2 * sq[k].2;
            }
        }
    }
    total
}

/// Shape of one Fourier-per-component function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum FourierMode {
    Constant,
    Cos(u32),
    Sin(u32),
}

impl FourierMode {
    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            FourierMode::Constant => 1.0,
            FourierMode::Cos(m) => 2f64.sqrt() * (2.0 * PI * f64::from(m) * t).cos(),
            FourierMode::Sin(m) => 2f64.sqrt() * (2.0 * PI * f64::from(m) * t).sin(),
        }
    }

    pub fn frequency(&self) -> u32 {
        match *self {
            FourierMode::Constant => 0,
            FourierMode::Cos(m) | FourierMode::Sin(m) => m,
        }
    }

    pub fn sup_sq(&self) -> f64 {
        match self {
            FourierMode::Constant => 1.0,
            _ => 2.0,
        }
    }
}

/// `ξ_ℓ` (1-based) of the interleaved system: first the `d` constants,
/// then per frequency `m` all `d` cosines followed by all `d` sines.
pub fn fourier_xi(index: usize, d: usize) -> Result<(usize, FourierMode)> {
    if index == 0 || d == 0 {
        return Err(Error::Index(format!("xi index {index} must be >= 1 with d >= 1")));
    }
    let i = index - 1;
    if i < d {
        return Ok((i, FourierMode::Constant));
    }
    let rest = i - d;
    let group = rest / d + 1;
    let component = rest % d;
    let m = group.div_ceil(2) as u32;
    Ok((component, if group % 2 == 1 { FourierMode::Cos(m) } else { FourierMode::Sin(m) }))
}

/// User-supplied system sampled on a midpoint grid, one `dG` column each.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSystem {
    pub d: usize,
    pub points: usize,
    pub functions: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum XiBasis {
    Fourier,
    Grid(GridSystem),
}

#[derive(Debug, Clone)]
pub struct GammaL {
    pub indices: Vec<usize>,
    pub gamma: DMatrix<f64>,
    pub gamma_m: DMatrix<f64>,
    /// `‖Γ^[L] - Γ_M^[L]‖_F`
    pub frob_dist: f64,
    /// `Σ_{ℓ∈L} ‖Γ_HS ξ_ℓ‖²`, an upper bound for `frob_dist²`.
    pub hs_bound: f64,
}

struct FourierIntegrals {
    /// `∫ φ p_k`
    mean: f64,
    /// `∫ φ a_k p_k`
    score: f64,
}

fn fourier_integrals(model: &DesignModel, k: usize, mode: FourierMode) -> FourierIntegrals {
    let pieces = 4 * mode.frequency() as usize + 4;
    let p = model.marginal(k);
    let a = model.score(k);
    FourierIntegrals {
        mean: marginal_integral(model, k, |t| mode.eval(t) * p.density(t), pieces),
        score: marginal_integral(model, k, |t| mode.eval(t) * a.eval(t) * p.density(t), pieces),
    }
}

fn check_indices(l: &[usize]) -> Result<()> {
    if l.is_empty() {
        return Err(Error::Index("index set L is empty".into()));
    }
    if l.contains(&0) {
        return Err(Error::Index("indices in L are 1-based".into()));
    }
    Ok(())
}

fn check_grid_system(sys: &GridSystem, model_d: usize, l: &[usize]) -> Result<DMatrix<f64>> {
    if sys.d != model_d {
        return Err(Error::Dimension { expected: model_d, found: sys.d });
    }
    if sys.functions.nrows() != sys.d * sys.points {
        return Err(Error::Dimension { expected: sys.d * sys.points, found: sys.functions.nrows() });
    }
    if let Some(&bad) = l.iter().find(|&&i| i > sys.functions.ncols()) {
        return Err(Error::Index(format!("index {bad} exceeds the {} supplied functions", sys.functions.ncols())));
    }
    let cols: Vec<usize> = l.iter().map(|i| i - 1).collect();
    let f = sys.functions.select_columns(&cols);
    let gram = f.transpose() * &f / sys.points as f64;
    let err = (gram - DMatrix::<f64>::identity(cols.len(), cols.len())).amax();
    if err > 1e-8 {
        return Err(Error::Validation(format!("custom system is not orthonormal (max deviation {err:e})")));
    }
    Ok(f)
}

pub fn gamma_l(model: &DesignModel, basis: &XiBasis, l: &[usize]) -> Result<GammaL> {
    check_indices(l)?;
    let d = model.d();
    let n = l.len();
    let (gamma, gamma_m, hs_bound) = match basis {
        XiBasis::Fourier => {
            let xi: Vec<(usize, FourierMode)> = l.iter().map(|&i| fourier_xi(i, d)).collect::<Result<_>>()?;
            let ints: Vec<FourierIntegrals> = xi.iter().map(|&(k, mode)| fourier_integrals(model, k, mode)).collect();
            let mut gm = DMatrix::zeros(n, n);
            let mut g = DMatrix::zeros(n, n);
            for a in 0..n {
                for b in a..n {
                    let ((ka, ma), (kb, mb)) = (xi[a], xi[b]);
                    let v = if ka == kb {
                        let pieces = 4 * (ma.frequency() + mb.frequency()) as usize + 4;
                        let p = model.marginal(ka);
                        let diag = marginal_integral(model, ka, |t| ma.eval(t) * mb.eval(t) * p.density(t), pieces);
                        gm[(a, b)] = diag;
                        gm[(b, a)] = diag;
                        diag
                    } else {
                        ints[a].mean * ints[b].mean + model.theta(ka, kb) * ints[a].score * ints[b].score
                    };
                    g[(a, b)] = v;
                    g[(b, a)] = v;
                }
            }
            let mut bound = 0.0;
            for (a, &(k, _)) in xi.iter().enumerate() {
                for j in (0..d).filter(|&j| j != k) {
                    let p = model.marginal(j);
                    let s = model.score(j);
                    let th = model.theta(j, k);
                    let (i0, i1) = (ints[a].mean, ints[a].score);
                    bound += marginal_integral(
                        model,
                        j,
                        |t| (p.density(t) * (i0 + th * s.eval(t) * i1)).powi(2),
                        8,
                    );
                }
            }
            (g, gm, bound)
        }
        XiBasis::Grid(sys) => {
            let f = check_grid_system(sys, d, l)?;
            let split = split_gamma(model, sys.points)?;
            let w = 1.0 / sys.points as f64;
            let full = &split.gamma_m.matrix + &split.gamma_hs.matrix;
            let g = f.transpose() * full * &f * w;
            let gm = f.transpose() * &split.gamma_m.matrix * &f * w;
            let applied = &split.gamma_hs.matrix * &f;
            let bound = applied.iter().map(|v| v * v).sum::<f64>() * w;
            (symmetrize(&g), symmetrize(&gm), bound)
        }
    };
    let frob_dist = frobenius(&(&gamma - &gamma_m));
    Ok(GammaL { indices: l.to_vec(), gamma, gamma_m, frob_dist, hs_bound })
}

#[derive(Debug, Clone)]
pub struct EmpiricalGammaL {
    pub gamma_hat: DMatrix<f64>,
    /// `(1/n)(#L)² d² ρ^{-1} max_ℓ Σ_k ‖ξ_{ℓ,k}‖²_∞`
    pub mse_bound: f64,
}

/// `Γ̂^[L] = {(1/n) Σ_j Σ_{k,k'} ξ_{ℓ,k}(X_{j,k}) ξ_{ℓ',k'}(X_{j,k'})}`.
pub fn empirical_gamma_l(x: &Covariates, basis: &XiBasis, l: &[usize], rho: f64) -> Result<EmpiricalGammaL> {
    check_indices(l)?;
    let d = x.d();
    let n = x.n();
    if n == 0 {
        return Err(Error::Parameter("empty covariate batch".into()));
    }
    let size = l.len();
    // values[ℓ] = Λᵀξ_ℓ at every X_j
    let mut values = DMatrix::zeros(n, size);
    let sup_sum_sq: f64 = match basis {
        XiBasis::Fourier => {
            let xi: Vec<(usize, FourierMode)> = l.iter().map(|&i| fourier_xi(i, d)).collect::<Result<_>>()?;
            for (c, &(k, mode)) in xi.iter().enumerate() {
                for j in 0..n {
                    values[(j, c)] = mode.eval(x.row(j)[k]);
                }
            }
            fourier_sup_sum_sq(l, d)?
        }
        XiBasis::Grid(sys) => {
            let f = check_grid_system(sys, d, l)?;
            let g = sys.points;
            for c in 0..size {
                let col = f.column(c).clone_owned();
                let eval = apply_lambda_adjoint_grid(&col, d, g);
                for j in 0..n {
                    values[(j, c)] = eval(x.row(j));
                }
            }
            (0..size)
                .map(|c| {
                    (0..d)
                        .map(|k| f.column(c).rows(k * g, g).amax().powi(2))
                        .sum::<f64>()
                })
                .fold(0.0, f64::max)
        }
    };
    let gamma_hat = values.transpose() * &values / n as f64;
    let mse_bound = mse_bound(n, size, d, rho, sup_sum_sq);
    Ok(EmpiricalGammaL { gamma_hat, mse_bound })
}

/// `(1/n)(#L)² d² ρ^{-1} s` with `s = max_ℓ Σ_k ‖ξ_{ℓ,k}‖²_∞`.
pub fn mse_bound(n: usize, size: usize, d: usize, rho: f64, sup_sum_sq: f64) -> f64 {
    (size * size * d * d) as f64 * sup_sum_sq / (rho * n as f64)
}

/// `max_ℓ Σ_k ‖ξ_{ℓ,k}‖²_∞` over Fourier indices.
pub fn fourier_sup_sum_sq(l: &[usize], d: usize) -> Result<f64> {
    l.iter().try_fold(0.0, |acc: f64, &i| Ok(acc.max(fourier_xi(i, d)?.1.sup_sq())))
}

/// Samples an additive function on the grid.
pub fn sample_additive(g: &AdditiveFunction, points: usize) -> DVector<f64> {
    sample_components(&g.components, points).expect("sampling cannot fail")
}
