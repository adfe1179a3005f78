//! Symmetric eigen helpers shared by the whitening step, the basis
//! orthonormalization and the operator square root.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Eigenvalues sorted ascending, eigenvectors as matching columns.
///
/// Ties keep the solver order, and each eigenvector is signed so that its
/// largest-magnitude entry is positive.
pub fn sorted_eigen(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let sym = symmetrize(m);
    let eig = SymmetricEigen::new(sym);
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[a]
            .partial_cmp(&eig.eigenvalues[b])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (col, &i) in order.iter().enumerate() {
        let mut v = eig.eigenvectors.column(i).clone_owned();
        let (mut best, mut arg) = (0.0_f64, 0);
        for (r, x) in v.iter().enumerate() {
            if x.abs() > best + 1e-14 {
                best = x.abs();
                arg = r;
            }
        }
        if v[arg] < 0.0 {
            v.neg_mut();
        }
        vectors.set_column(col, &v);
    }
    (values, vectors)
}

/// Like [`sorted_eigen`], but inside every cluster of eigenvalues closer
/// than `cluster_tol` (relative to the spectral radius) the eigenvectors are
/// replaced by Gram–Schmidt applied to the cluster projector's images of the
/// unit vectors `e_1, e_2, ...`. The result no longer depends on how the
/// solver splits a degenerate eigenspace; an identity input gives identity
/// eigenvectors.
pub fn canonical_eigen(m: &DMatrix<f64>, cluster_tol: f64) -> (DVector<f64>, DMatrix<f64>) {
    let (values, mut vectors) = sorted_eigen(m);
    let n = values.len();
    let scale = values.iter().fold(0.0_f64, |a, v| a.max(v.abs())).max(1e-300);
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && (values[end] - values[end - 1]).abs() <= cluster_tol * scale {
            end += 1;
        }
        if end - start > 1 {
            let block = vectors.columns(start, end - start).clone_owned();
            let projector = &block * block.transpose();
            let mut chosen: Vec<DVector<f64>> = Vec::with_capacity(end - start);
            for i in 0..n {
                if chosen.len() == end - start {
                    break;
                }
                let mut v = projector.column(i).clone_owned();
                for _ in 0..2 {
                    for c in &chosen {
                        let dot = c.dot(&v);
                        v -= c * dot;
                    }
                }
                let norm = v.norm();
                if norm > 1e-6 {
                    chosen.push(v / norm);
                }
            }
            for (offset, v) in chosen.iter().enumerate() {
                vectors.set_column(start + offset, v);
            }
        }
        start = end;
    }
    (values, vectors)
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Clamp eigenvalues in `[-tol, 0)` to zero; anything lower is an error.
pub fn clamp_psd(values: &mut DVector<f64>, tol: f64) -> Result<()> {
    for v in values.iter_mut() {
        if *v < -tol {
            return Err(Error::NotPsd {
                eigenvalue: *v,
                tolerance: tol,
            });
        }
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    Ok(())
}

/// Principal square root of a symmetric PSD matrix.
pub fn sqrt_psd(m: &DMatrix<f64>, tol: f64) -> Result<DMatrix<f64>> {
    let (mut values, vectors) = sorted_eigen(m);
    clamp_psd(&mut values, tol)?;
    let roots = values.map(f64::sqrt);
    Ok(&vectors * DMatrix::from_diagonal(&roots) * vectors.transpose())
}

pub fn frobenius(m: &DMatrix<f64>) -> f64 {
    m.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn max_abs_asymmetry(m: &DMatrix<f64>) -> f64 {
    let mut worst = 0.0_f64;
    for i in 0..m.nrows() {
        for j in 0..i {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}
