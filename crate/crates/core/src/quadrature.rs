//! Composite Gauss–Legendre quadrature on [0, 1] sub-intervals.
//!
//! Integrands in this crate are piecewise smooth with known break points
//! (density bin edges, basis bin edges, kinks of component shapes), so every
//! integral is split at those points and each smooth piece gets a fixed
//! 64-node rule.

use std::sync::OnceLock;

pub const NODES: usize = 64;

struct Rule {
    nodes: [f64; NODES],
    weights: [f64; NODES],
}

fn rule() -> &'static Rule {
    static RULE: OnceLock<Rule> = OnceLock::new();
    RULE.get_or_init(|| legendre_rule(NODES))
}

/// Nodes and weights on [-1, 1] by Newton iteration on P_n.
fn legendre_rule(n: usize) -> Rule {
    let mut nodes = [0.0; NODES];
    let mut weights = [0.0; NODES];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    Rule { nodes, weights }
}

/// Gauss–Legendre rule on a single smooth interval.
pub fn gauss_legendre<F: Fn(f64) -> f64>(f: &F, lo: f64, hi: f64) -> f64 {
    if hi <= lo {
        return 0.0;
    }
    let r = rule();
    let half = 0.5 * (hi - lo);
    let mid = 0.5 * (hi + lo);
    let mut acc = 0.0;
    for (x, w) in r.nodes.iter().zip(r.weights.iter()) {
        acc += w * f(mid + half * x);
    }
    acc * half
}

/// Integral of `f` over `[lo, hi]`, split at every break point strictly inside.
pub fn integrate<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, breaks: &[f64]) -> f64 {
    if hi <= lo {
        return 0.0;
    }
    let mut pts: Vec<f64> = breaks
        .iter()
        .copied()
        .filter(|&b| b > lo && b < hi)
        .collect();
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts.dedup_by(|a, b| (*a - *b).abs() < 1e-15);
    let mut total = 0.0;
    let mut left = lo;
    for p in pts.into_iter().chain(std::iter::once(hi)) {
        total += gauss_legendre(&f, left, p);
        left = p;
    }
    total
}

/// Uniform grid of `bins + 1` edges on [0, 1].
pub fn uniform_edges(bins: usize) -> Vec<f64> {
    (0..=bins).map(|i| i as f64 / bins as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_to_two() {
        let r = rule();
        let s: f64 = r.weights.iter().sum();
        assert!((s - 2.0).abs() < 1e-13);
    }

    #[test]
    fn exact_for_polynomials() {
        let v = integrate(|t| t.powi(9), 0.0, 1.0, &[]);
        assert!((v - 0.1).abs() < 1e-15);
    }

    #[test]
    fn split_at_kink() {
        let v = integrate(|t| (t - 0.3).abs(), 0.0, 1.0, &[0.3]);
        let exact = 0.5 * 0.3 * 0.3 + 0.5 * 0.7 * 0.7;
        assert!((v - exact).abs() < 1e-15);
    }
}
