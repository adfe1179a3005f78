use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use addeq::basis::OrthonormalBasis;
use addeq::chain::{recenter, uncenter};
use addeq::design::{DesignModel, PiecewiseDensity, ScoreKind};
use addeq::diagnostics::{regime_check, two_sample_energy};
use addeq::gamma::{assemble_gamma, gamma_sqrt, GAMMA_CLAMP};
use addeq::linalg::{frobenius, sorted_eigen, sqrt_psd};
use addeq::seed::SeedNode;

fn model(d: usize, tilt: f64, theta: f64) -> DesignModel {
    let marginals = vec![PiecewiseDensity::tilted(4, tilt).unwrap(); d];
    let build = |rho| DesignModel::pairwise_constant(marginals.clone(), ScoreKind::Linear, theta, rho).unwrap();
    let b = build(0.01).validate_bounds();
    build(b.min_density.min(1.0 / b.max_density) * 0.999)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn basis_is_orthonormal_and_sup_within_bound(d in 1usize..=3, k in 1u32..=4, tilt in 0.0..0.5f64, theta in -0.4..0.4f64) {
        let bins = 1usize << k;
        let m = model(d, tilt, if d == 1 { 0.0 } else { theta / d as f64 });
        let basis = OrthonormalBasis::build(bins, &m).unwrap();
        let ip = basis.inner_products(&m).unwrap();
        let n = basis.count();
        prop_assert!((ip - DMatrix::<f64>::identity(n, n)).amax() < 1e-8);
        prop_assert!(basis.gram_eigenvalues().min() >= m.rho() - 1e-10);
        let sup = basis.sup_sum_squares();
        prop_assert!(sup.value <= addeq::basis::sup_sum_squares_bound(m.rho(), bins, d) * (1.0 + 1e-12));
    }

    #[test]
    fn gamma_is_symmetric_psd_with_exact_root(tilt in 0.0..0.5f64, theta in -0.45..0.45f64) {
        let m = model(2, tilt, theta);
        let op = assemble_gamma(&m, 16).unwrap();
        prop_assert!(op.max_asymmetry() < 1e-12);
        prop_assert!(op.eigenvalues()[0] > -1e-10);
        let root = gamma_sqrt(&op, GAMMA_CLAMP).unwrap();
        prop_assert!(frobenius(&(&root.matrix * &root.matrix - &op.matrix)) < 1e-9);
    }

    #[test]
    fn recenter_is_inverted_by_uncenter(seed in 0u64..1000, k in 2usize..10) {
        let mut rng = SeedNode::master(seed).rng();
        let a = DMatrix::from_fn(k, k, |_, _| rand::Rng::random_range(&mut rng, -1.0..1.0));
        let root = sqrt_psd(&(&a * a.transpose()), 1e-12).unwrap();
        let z = DVector::from_fn(k, |_, _| rand::Rng::random_range(&mut rng, -2.0..2.0));
        let pilot = DVector::from_fn(k, |_, _| rand::Rng::random_range(&mut rng, -2.0..2.0));
        let back = uncenter(&recenter(&z, &root, &pilot), &root, &pilot);
        prop_assert!((back - z).amax() < 1e-12);
    }

    #[test]
    fn sqrt_psd_squares_back(seed in 0u64..1000, k in 1usize..12) {
        let mut rng = SeedNode::master(seed).rng();
        let a = DMatrix::from_fn(k, k + 2, |_, _| rand::Rng::random_range(&mut rng, -1.0..1.0));
        let m = &a * a.transpose();
        let r = sqrt_psd(&m, 1e-12).unwrap();
        prop_assert!((&r * &r - &m).amax() < 1e-10 * (1.0 + m.amax()));
        prop_assert!(sorted_eigen(&r).0[0] > -1e-12);
    }

    #[test]
    fn regime_window_is_monotone_in_alpha(beta in 0.05..1.0f64, a1 in 0.0..0.2f64, a2 in 0.0..0.2f64) {
        let (lo, hi) = if a1 <= a2 { (a1, a2) } else { (a2, a1) };
        let v_lo = regime_check(beta, lo).unwrap();
        let v_hi = regime_check(beta, hi).unwrap();
        // a larger α never makes an infeasible regime feasible
        prop_assert!(!v_hi.feasible || v_lo.feasible);
        let width = |v: &addeq::diagnostics::RegimeVerdict| (v.gamma_window.1 - v.gamma_window.0).max(0.0);
        prop_assert!(width(&v_hi) <= width(&v_lo) + 1e-12);
    }

    #[test]
    fn energy_statistic_is_symmetric(seed in 0u64..200) {
        let mut rng = SeedNode::master(seed).rng();
        let a = DMatrix::from_fn(100, 2, |_, _| rand::Rng::random_range(&mut rng, -1.0..1.0));
        let b = DMatrix::from_fn(120, 2, |_, _| rand::Rng::random_range(&mut rng, -1.0..1.5));
        let ab = two_sample_energy(&a, &b, 9, &mut SeedNode::master(1).rng()).unwrap();
        let ba = two_sample_energy(&b, &a, 9, &mut SeedNode::master(1).rng()).unwrap();
        prop_assert!((ab.statistic - ba.statistic).abs() < 1e-10 * (1.0 + ab.statistic.abs()));
        prop_assert!(ab.p_value > 0.0 && ab.p_value <= 1.0);
    }
}
