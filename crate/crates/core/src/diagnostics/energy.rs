use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};

pub const MIN_SAMPLES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyTest {
    pub statistic: f64,
    pub p_value: f64,
    pub permutations: usize,
}

/// `nm/(n+m) · (2E|A−B| − E|A−A'| − E|B−B'|)` from a pooled distance
/// matrix and a label assignment (`true` = first sample).
fn energy_statistic(dist: &DMatrix<f64>, labels: &[bool]) -> f64 {
    let total = labels.len();
    let mut ab = 0.0;
    let mut aa = 0.0;
    let mut bb = 0.0;
    for i in 0..total {
        for j in (i + 1)..total {
            let v = dist[(i, j)];
            match (labels[i], labels[j]) {
                (true, true) => aa += v,
                (false, false) => bb += v,
                _ => ab += v,
            }
        }
    }
    let n = labels.iter().filter(|&&l| l).count() as f64;
    let m = total as f64 - n;
    // ordered pairs: off-diagonal sums counted twice, diagonals are zero
    let mean_ab = ab / (n * m);
    let mean_aa = 2.0 * aa / (n * n);
    let mean_bb = 2.0 * bb / (m * m);
    n * m / (n + m) * (2.0 * mean_ab - mean_aa - mean_bb)
}

/// Energy-distance two-sample test; rows are observations. The p-value
/// is `(1 + #{permuted ≥ observed}) / (1 + permutations)`.
pub fn two_sample_energy<R: Rng + ?Sized>(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    permutations: usize,
    rng: &mut R,
) -> Result<EnergyTest> {
    if a.ncols() != b.ncols() {
        return Err(Error::Dimension { expected: a.ncols(), found: b.ncols() });
    }
    if a.nrows() < MIN_SAMPLES || b.nrows() < MIN_SAMPLES {
        return Err(Error::Parameter(format!(
            "energy test needs at least {MIN_SAMPLES} samples per group, got {} and {}",
            a.nrows(),
            b.nrows()
        )));
    }
    let pooled = DMatrix::from_fn(a.nrows() + b.nrows(), a.ncols(), |i, j| {
        if i < a.nrows() {
            a[(i, j)]
        } else {
            b[(i - a.nrows(), j)]
        }
    });
    let total = pooled.nrows();
    let mut dist = DMatrix::zeros(total, total);
    for i in 0..total {
        for j in (i + 1)..total {
            let v = (pooled.row(i) - pooled.row(j)).norm();
            dist[(i, j)] = v;
            dist[(j, i)] = v;
        }
    }
    let mut labels: Vec<bool> = (0..total).map(|i| i < a.nrows()).collect();
    let statistic = energy_statistic(&dist, &labels);
    let mut exceed = 0usize;
    for _ in 0..permutations {
        labels.shuffle(rng);
        if energy_statistic(&dist, &labels) >= statistic {
            exceed += 1;
        }
    }
    Ok(EnergyTest {
        statistic,
        p_value: (1 + exceed) as f64 / (1 + permutations) as f64,
        permutations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::SeedNode;
    use rand_distr::StandardNormal;

    fn normal_rows<R: Rng>(n: usize, d: usize, shift: f64, rng: &mut R) -> DMatrix<f64> {
        DMatrix::from_fn(n, d, |_, _| rng.sample::<f64, _>(StandardNormal) + shift)
    }

    #[test]
    fn statistic_matches_direct_formula() {
        let mut rng = SeedNode::master(1).rng();
        let a = normal_rows(100, 2, 0.0, &mut rng);
        let b = normal_rows(100, 2, 0.3, &mut rng);
        let mean_dist = |x: &DMatrix<f64>, y: &DMatrix<f64>| {
            let mut s = 0.0;
            for i in 0..x.nrows() {
                for j in 0..y.nrows() {
                    s += (x.row(i) - y.row(j)).norm();
                }
            }
            s / (x.nrows() * y.nrows()) as f64
        };
        let direct = 50.0 * (2.0 * mean_dist(&a, &b) - mean_dist(&a, &a) - mean_dist(&b, &b));
        let r = two_sample_energy(&a, &b, 0, &mut rng).unwrap();
        assert!((r.statistic - direct).abs() < 1e-10);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn detects_a_shift() {
        let mut rng = SeedNode::master(2).rng();
        let a = normal_rows(200, 3, 0.0, &mut rng);
        let b = normal_rows(200, 3, 0.5, &mut rng);
        assert!(two_sample_energy(&a, &b, 99, &mut rng).unwrap().p_value < 0.05);
    }

    #[test]
    fn rejects_bad_shapes() {
        let mut rng = SeedNode::master(3).rng();
        let a = normal_rows(100, 2, 0.0, &mut rng);
        let b = normal_rows(100, 3, 0.0, &mut rng);
        assert!(matches!(two_sample_energy(&a, &b, 9, &mut rng), Err(Error::Dimension { .. })));
        let c = normal_rows(50, 2, 0.0, &mut rng);
        assert!(matches!(two_sample_energy(&a, &c, 9, &mut rng), Err(Error::Parameter(_))));
    }
}
