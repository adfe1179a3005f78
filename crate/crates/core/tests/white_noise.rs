use addeq::design::DesignModel;
use addeq::diagnostics::stats::mean_se;
use addeq::function::{center_components, CenteredDecomposition, AdditiveFunction, ComponentFunction};
use addeq::gamma::{assemble_gamma, gamma_sqrt, GAMMA_CLAMP};
use addeq::seed::SeedNode;
use addeq::white_noise::{extract_scores, simulate_q, simulate_rn, tilde_components, TestFunction};

fn setup() -> (DesignModel, AdditiveFunction) {
    let g = AdditiveFunction::new(
        vec![ComponentFunction::sine(1.0, 1, 0.2), ComponentFunction::linear(2.0, -0.5)],
        10.0,
        1.0,
    )
    .unwrap();
    (DesignModel::uniform(2).unwrap(), g)
}

#[test]
fn drift_gap_between_rn_and_q_shrinks_with_steps() {
    let (model, g) = setup();
    let decomp = center_components(&g, model.marginals()).unwrap();
    // Q reports the shift separately, so compare against the shift-free drift
    let tilde = tilde_components(&CenteredDecomposition { shift_g0: 0.0, ..decomp.clone() });
    let mut gaps = Vec::new();
    for steps in [256usize, 512, 1024] {
        let root = gamma_sqrt(&assemble_gamma(&model, steps / 8).unwrap(), GAMMA_CLAMP).unwrap();
        let mut rng = SeedNode::master(1).rng();
        let r = simulate_rn(&root, &tilde, 50, 1.0, steps, &mut rng).unwrap();
        let q = simulate_q(&decomp, &model, 50, 1.0, steps, &mut rng).unwrap();
        gaps.push((&r.drift - &q.paths.drift).amax());
    }
    // both the grid drift and the Euler sum are first order, so doubling T and G roughly halves the gap
    for w in gaps.windows(2) {
        assert!(w[1] < 0.7 * w[0], "{gaps:?}");
    }
}

#[test]
fn increments_are_white() {
    let (model, g) = setup();
    let decomp = center_components(&g, model.marginals()).unwrap();
    let mut rng = SeedNode::master(2).rng();
    let q = simulate_q(&decomp, &model, 400, 0.5, 4096, &mut rng).unwrap();
    let inc = q.paths.standardized_increments();
    for j in 0..2 {
        let col: Vec<f64> = inc.column(j).iter().copied().collect();
        let m = mean_se(&col);
        let var = col.iter().map(|v| (v - m.mean).powi(2)).sum::<f64>() / (col.len() - 1) as f64;
        assert!(m.mean.abs() < 4.0 * m.se, "mean {}", m.mean);
        assert!((var - 1.0).abs() < 0.1, "var {var}");
        let lag: f64 = col.windows(2).map(|w| w[0] * w[1]).sum::<f64>() / (col.len() - 1) as f64;
        assert!(lag.abs() < 0.06, "lag-1 {lag}");
    }
}

#[test]
fn scores_from_q_have_the_drift_mean() {
    // ∫ f dQ for f = (f_1, 0) has mean ∫ f_1 g_1* dt under a uniform design and sd σ‖f_1‖/√n
    let (model, g) = setup();
    let decomp = center_components(&g, model.marginals()).unwrap();
    let tests = vec![TestFunction::Components(vec![ComponentFunction::sine(1.0, 1, 0.25), ComponentFunction::constant(0.0)])];
    let n = 100;
    let sigma = 1.0;
    let reps = 2000;
    let node = SeedNode::master(3);
    let draws: Vec<f64> = (0..reps)
        .map(|i| {
            let q = simulate_q(&decomp, &model, n, sigma, 512, &mut node.index(i).rng()).unwrap();
            extract_scores(&q.paths, &tests, "cos").unwrap().values[0]
        })
        .collect();
    let m = mean_se(&draws);
    let f = |t: f64| ComponentFunction::sine(1.0, 1, 0.25).eval(t);
    let grid = 20_000;
    let target: f64 = (0..grid)
        .map(|i| {
            let t = (i as f64 + 0.5) / grid as f64;
            f(t) * decomp.centered_components[0].eval(t)
        })
        .sum::<f64>()
        / grid as f64;
    assert!((m.mean - target).abs() < 4.0 * m.se, "mean {} vs {target}", m.mean);
    let sd = (draws.iter().map(|v| (v - m.mean).powi(2)).sum::<f64>() / (reps - 1) as f64).sqrt();
    let norm: f64 = ((0..grid).map(|i| f((i as f64 + 0.5) / grid as f64).powi(2)).sum::<f64>() / grid as f64).sqrt();
    let expect = sigma * norm / (n as f64).sqrt();
    assert!((sd / expect - 1.0).abs() < 0.08, "sd {sd} vs {expect}");
}
