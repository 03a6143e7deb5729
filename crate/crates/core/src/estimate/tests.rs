use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::*;
use crate::local_means::{local_means, LocalMeanSeries};
use crate::model::ou::{default_alpha_box, ou_model};
use crate::model::{derive_scheme, Interval, ModelSpec, NoiseSpec, ObservationSeries, OuConfig, ParamBox};
use crate::rng::stream_rng;
use crate::sim::{contaminate, simulate_ou_exact};

/// `dX = beta X dt + alpha dW` in one dimension.
fn scalar_ou(alpha: (f64, f64), beta: (f64, f64)) -> ModelSpec {
    ou_model(
        1,
        ParamBox(vec![Interval::new(alpha.0, alpha.1)]),
        ParamBox(vec![Interval::new(beta.0, beta.1), Interval::new(0.0, 0.0)]),
    )
    .unwrap()
}

/// Same coefficients as [`scalar_ou`] without any structural hints.
fn scalar_ou_generic(alpha: (f64, f64), beta: (f64, f64)) -> ModelSpec {
    ModelSpec::new(
        1,
        1,
        |x, b| DVector::from_element(1, b[0] * x[0] + b[1]),
        |_x, a| DMatrix::from_element(1, 1, a[0]),
        ParamBox(vec![Interval::new(alpha.0, alpha.1)]),
        ParamBox(vec![Interval::new(beta.0, beta.1), Interval::new(0.0, 0.0)]),
    )
    .unwrap()
}

/// Local means equal to the observations: `h = 0.5`, `τ = 2` gives `p = 1`, `Δ = 0.5`.
fn unit_blocks(values: &[f64]) -> LocalMeanSeries {
    let mut v = values.to_vec();
    v.push(*values.last().unwrap());
    let obs = ObservationSeries::scalar(0.5, v).unwrap();
    let scheme = derive_scheme(obs.n(), 0.5, 2.0).unwrap();
    assert_eq!(scheme.p, 1);
    local_means(&obs, &scheme).unwrap()
}

fn reference_obs(n: usize, lambda: f64, seed: u64, tau: f64) -> (ObservationSeries, crate::model::SamplingScheme) {
    let cfg = OuConfig::reference_2d();
    let h = (n as f64).powf(-0.7);
    let path = simulate_ou_exact(2, &cfg.alpha().unwrap(), &cfg.beta().unwrap(), &[1.0, 1.0], n, h, 0, (seed, 0)).unwrap();
    let noise = NoiseSpec::gaussian(DMatrix::identity(2, 2) * lambda).unwrap();
    let obs = contaminate(&path, &noise, (seed, 1)).unwrap();
    let scheme = derive_scheme(n, h, tau).unwrap();
    (obs, scheme)
}

fn identifiable_reference() -> ModelSpec {
    ou_model(
        2,
        ParamBox::new([(0.5, 500.0), (-0.5, 0.5), (0.5, 500.0)]).unwrap(),
        ParamBox(vec![Interval::new(-50.0, 50.0); 6]),
    )
    .unwrap()
}

#[test]
fn h1_single_block_by_hand() {
    // n = 6, h = 0.25, τ = 2: p = 2, k = 3, Δ = 0.5; local means (0, 0, s).
    let s = 0.8;
    let obs = ObservationSeries::scalar(0.25, vec![0.0, 0.0, 0.0, 0.0, s, s, 42.0]).unwrap();
    let scheme = derive_scheme(6, 0.25, 2.0).unwrap();
    assert_eq!((scheme.p, scheme.k), (2, 3));
    let lm = local_means(&obs, &scheme).unwrap();
    let alpha = 1.7;
    let expected = -0.5 * (s * s / ((2.0 / 3.0) * 0.5 * alpha * alpha) + (alpha * alpha).ln());
    let lambda = DMatrix::zeros(1, 1);
    for model in [scalar_ou((0.01, 10.0), (-5.0, 5.0)), scalar_ou_generic((0.01, 10.0), (-5.0, 5.0))] {
        let got = qlik_h1(&[alpha], &lambda, &lm, &model).unwrap();
        assert!((got - expected).abs() < 1e-13, "{got} vs {expected}");
        let fast = h1_objective(&lm, &lambda, &model).unwrap();
        assert!((fast(&[alpha]) - expected).abs() < 1e-13);
    }
}

#[test]
fn h1_trace_term_counts_dimension_when_increments_match() {
    let alpha: f64 = 0.9;
    let delta = 0.5;
    let step = ((2.0 / 3.0) * delta * alpha * alpha).sqrt();
    let mut y = vec![0.3];
    for j in 0..8 {
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        y.push(y[j] + sign * step);
    }
    let lm = unit_blocks(&y);
    let blocks = (lm.k() - 2) as f64;
    let expected = -0.5 * blocks * (1.0 + (alpha * alpha).ln());
    let got = qlik_h1(&[alpha], &DMatrix::zeros(1, 1), &lm, &scalar_ou((0.1, 2.0), (-1.0, 1.0))).unwrap();
    assert!((got - expected).abs() < 1e-12);
}

#[test]
fn h1_reports_singular_block() {
    let lm = unit_blocks(&[0.0, 1.0, 0.5, 0.25]);
    let model = scalar_ou_generic((-1.0, 1.0), (-1.0, 1.0));
    let err = qlik_h1(&[0.0], &DMatrix::zeros(1, 1), &lm, &model).unwrap_err();
    assert!(matches!(err, Error::SingularBlock { block: 1, determinant, .. } if determinant == 0.0), "{err}");
}

#[test]
fn fast_h1_matches_literal_sum_for_reference_model() {
    let (obs, scheme) = reference_obs(20_000, 1e-4, 3, 1.9);
    let lm = local_means(&obs, &scheme).unwrap();
    let lambda = estimate_lambda(&obs).unwrap();
    let model = OuConfig::reference_2d().model().unwrap();
    let fast = h1_objective(&lm, &lambda, &model).unwrap();
    let mut rng = stream_rng(11, 0);
    for _ in 0..10 {
        let alpha = [rng.random_range(0.5..2.0), rng.random_range(-0.3..0.3), rng.random_range(0.5..2.0)];
        let literal = qlik_h1(&alpha, &lambda, &lm, &model).unwrap();
        assert!((fast(&alpha) - literal).abs() <= 1e-9 * literal.abs());
    }
}

#[test]
fn h2_is_zero_for_exact_fit() {
    let beta0 = -0.7;
    let delta = 0.5;
    let mut y = vec![1.0, 1.2];
    for j in 1..10 {
        let next = y[j] + delta * beta0 * y[j - 1];
        y.push(next);
    }
    let lm = unit_blocks(&y);
    let model = scalar_ou((0.1, 3.0), (-2.0, 2.0));
    assert!(qlik_h2(&[beta0, 0.0], &[1.3], &lm, &model).unwrap().abs() < 1e-24);
    assert!(qlik_h2(&[beta0 + 0.01, 0.0], &[1.3], &lm, &model).unwrap() < 0.0);
    let est = estimate_beta(&lm, &[1.3], &model).unwrap();
    assert!((est.params[0] - beta0).abs() < 1e-8, "{:?}", est.params);
    assert!(est.value <= 0.0 && est.value > -1e-12);
}

fn noisy_scalar_blocks(seed: u64, len: usize) -> LocalMeanSeries {
    let mut rng = stream_rng(seed, 7);
    let mut y = vec![1.0];
    for _ in 0..len {
        let last = *y.last().unwrap();
        y.push(last * 0.8 + rng.random_range(-0.5..0.5));
    }
    unit_blocks(&y)
}

#[test]
fn h2_vertex_matches_weighted_least_squares() {
    let lm = noisy_scalar_blocks(5, 400);
    let delta = lm.delta();
    let (mut num, mut den) = (0.0, 0.0);
    for j in 1..=lm.k() - 2 {
        let x = lm.mean(j - 1)[0];
        num += x * (lm.mean(j + 1)[0] - lm.mean(j)[0]);
        den += x * x;
    }
    let oracle = num / (delta * den);
    for model in [scalar_ou((0.1, 3.0), (-5.0, 5.0)), scalar_ou_generic((0.1, 3.0), (-5.0, 5.0))] {
        let est = estimate_beta(&lm, &[0.7], &model).unwrap();
        assert!((est.params[0] - oracle).abs() < 1e-8, "{} vs {oracle}", est.params[0]);
        assert_eq!(est.params[1], 0.0);
    }
}

#[test]
fn h2_scales_with_inverse_square_of_diffusion() {
    let lm = noisy_scalar_blocks(9, 60);
    let model = scalar_ou((0.01, 30.0), (-5.0, 5.0));
    let base = qlik_h2(&[-0.4, 0.0], &[1.0], &lm, &model).unwrap();
    let scaled = qlik_h2(&[-0.4, 0.0], &[3.0], &lm, &model).unwrap();
    assert!((scaled - base / 9.0).abs() < 1e-12 * base.abs());
    let a = estimate_beta(&lm, &[1.0], &model).unwrap();
    let b = estimate_beta(&lm, &[3.0], &model).unwrap();
    assert!((a.params[0] - b.params[0]).abs() < 1e-8);
}

#[test]
fn alpha_matches_scalar_stationary_point() {
    // Random walk with small additive jitter.
    let mut rng = stream_rng(21, 0);
    let mut level = 0.0;
    let y: Vec<f64> = (0..2000)
        .map(|_| {
            level += rng.random_range(-0.05..0.05);
            level + rng.random_range(-0.002..0.002)
        })
        .collect();
    let obs = ObservationSeries::scalar(1e-3, y).unwrap();
    let scheme = derive_scheme(obs.n(), 1e-3, 1.8).unwrap();
    let lm = local_means(&obs, &scheme).unwrap();
    let lambda = estimate_lambda(&obs).unwrap();
    let k = lm.k();
    let sum_sq: f64 = (1..=k - 2).map(|j| (lm.mean(j + 1)[0] - lm.mean(j)[0]).powi(2)).sum();
    let a2 = 1.5 / (lm.delta() * (k - 2) as f64) * sum_sq - 3.0 * scheme.noise_scale() * lambda[(0, 0)];
    assert!(a2 > 0.0);
    for model in [scalar_ou((1e-3, 100.0), (-5.0, 5.0)), scalar_ou_generic((1e-3, 100.0), (-5.0, 5.0))] {
        let est = estimate_alpha(&lm, &lambda, &model).unwrap();
        assert!((est.params[0] - a2.sqrt()).abs() < 1e-6, "{} vs {}", est.params[0], a2.sqrt());
        assert!(!est.report.any_boundary_hit());
    }
}

#[test]
fn constant_data_drives_scale_to_lower_bound() {
    let obs = ObservationSeries::scalar(0.01, vec![2.5; 101]).unwrap();
    let scheme = derive_scheme(100, 0.01, 2.0).unwrap();
    let lm = local_means(&obs, &scheme).unwrap();
    let lambda = estimate_lambda(&obs).unwrap();
    assert_eq!(lambda[(0, 0)], 0.0);
    let est = estimate_alpha(&lm, &lambda, &scalar_ou((1e-3, 10.0), (-1.0, 1.0))).unwrap();
    assert!((est.params[0] - 1e-3).abs() < 1e-6);
    assert_eq!(est.report.boundary_hits, vec![true]);
}

#[test]
fn zero_drift_box_pins_beta() {
    let lm = noisy_scalar_blocks(4, 50);
    let model = scalar_ou((0.1, 3.0), (0.0, 0.0));
    let est = estimate_beta(&lm, &[0.8], &model).unwrap();
    assert_eq!(est.params, vec![0.0, 0.0]);
    let direct = qlik_h2(&[0.0, 0.0], &[0.8], &lm, &model).unwrap();
    assert!((est.value - direct).abs() < 1e-12 * direct.abs());
}

/// Generalized least squares for the reference drift, assembled from scratch.
fn gls_oracle(lm: &LocalMeanSeries, alpha: &[f64]) -> Vec<f64> {
    let s = DMatrix::from_row_slice(2, 2, &[alpha[0], alpha[1], alpha[1], alpha[2]]);
    let p = (&s * &s).try_inverse().unwrap();
    let delta = lm.delta();
    let mut lhs = DMatrix::<f64>::zeros(6, 6);
    let mut rhs = DVector::<f64>::zeros(6);
    for j in 1..=lm.k() - 2 {
        let x = lm.mean(j - 1);
        // b = Z beta with Z = [x1 0 x2 0 1 0; 0 x1 0 x2 0 1].
        let z = DMatrix::from_row_slice(2, 6, &[x[0], 0.0, x[1], 0.0, 1.0, 0.0, 0.0, x[0], 0.0, x[1], 0.0, 1.0]);
        let diff = DVector::from_column_slice(lm.mean(j + 1)) - DVector::from_column_slice(lm.mean(j));
        lhs += z.transpose() * &p * &z * delta;
        rhs += z.transpose() * &p * diff;
    }
    lhs.lu().solve(&rhs).unwrap().as_slice().to_vec()
}

#[test]
fn beta_matches_gls_for_linear_drift() {
    for seed in 0..3 {
        let (obs, scheme) = reference_obs(40_000, 1e-4, seed, 2.0);
        let lm = local_means(&obs, &scheme).unwrap();
        let alpha = [1.02, 0.09, 0.97];
        let oracle = gls_oracle(&lm, &alpha);
        let est = estimate_beta(&lm, &alpha, &identifiable_reference()).unwrap();
        for (got, want) in est.params.iter().zip(&oracle) {
            assert!((got - want).abs() < 1e-6, "{:?} vs {:?}", est.params, oracle);
        }
    }
}

#[test]
fn fast_h2_matches_literal_sum() {
    let (obs, scheme) = reference_obs(20_000, 0.0, 8, 1.8);
    let lm = local_means(&obs, &scheme).unwrap();
    let model = OuConfig::reference_2d().model().unwrap();
    let alpha = [1.0, 0.1, 1.0];
    let fast = h2_objective(&lm, &alpha, &model).unwrap();
    let mut rng = stream_rng(12, 0);
    for _ in 0..10 {
        let beta: Vec<f64> = (0..6).map(|_| rng.random_range(-2.0..2.0)).collect();
        let literal = qlik_h2(&beta, &alpha, &lm, &model).unwrap();
        assert!((fast(&beta) - literal).abs() <= 1e-9 * literal.abs());
    }
}

#[test]
fn noiseless_pipeline_runs_and_lambda_is_small() {
    let (obs, scheme) = reference_obs(50_000, 0.0, 1, 1.9);
    let model = identifiable_reference();
    let res = estimate_adaptive(&obs, &scheme, &model, true).unwrap();
    assert!(res.lambda_hat.amax() < 10.0 * scheme.h);
    assert!((res.alpha_hat[0] - 1.0).abs() < 0.1, "{:?}", res.alpha_hat);
    let again = estimate_adaptive(&obs, &scheme, &model, true).unwrap();
    assert_eq!(res, again);
    let cov = res.cov.as_ref().unwrap();
    assert_eq!(cov.matrix.nrows(), 3 + 3 + 6);
    assert!((&cov.matrix - cov.matrix.transpose()).amax() == 0.0);
    assert!(cov.matrix.symmetric_eigenvalues().min() >= -1e-10);
    let json = serde_json::to_string(&res).unwrap();
    let back: EstimationResult = serde_json::from_str(&json).unwrap();
    assert_eq!(back.alpha_hat, res.alpha_hat);
    assert_eq!(back.cov.unwrap().labels[3], "alpha1");
}

#[test]
fn canonical_alpha_is_the_psd_root() {
    let (obs, scheme) = reference_obs(20_000, 0.0, 2, 2.0);
    let lm = local_means(&obs, &scheme).unwrap();
    let lambda = estimate_lambda(&obs).unwrap();
    let model = OuConfig::reference_2d().model().unwrap();
    let est = estimate_alpha(&lm, &lambda, &model).unwrap();
    let s = DMatrix::from_row_slice(2, 2, &[est.params[0], est.params[1], est.params[1], est.params[2]]);
    assert!(s.symmetric_eigenvalues().min() > 0.0, "{:?}", est.params);
    assert!((est.params[0] - 1.0).abs() < 0.15);
}

#[test]
fn gaussian_noise_block_is_three_lambda_squared() {
    let lambda = DMatrix::from_element(1, 1, 0.2);
    let w = noise_block(&lambda, &[3.0]).unwrap();
    assert!((w[(0, 0)] - 3.0 * 0.04).abs() < 1e-15);
    // Non-Gaussian fourth moments add `λ² (E ε⁴ − 3)`.
    let w = noise_block(&lambda, &[1.8]).unwrap();
    assert!((w[(0, 0)] - (0.12 + 0.04 * (1.8 - 3.0))).abs() < 1e-15);
}

#[test]
fn drift_information_matches_ergodic_average() {
    let (beta, sigma) = (-1.0, 0.8);
    let n = 400_000;
    let h = 1e-3;
    let path = simulate_ou_exact(1, &[sigma], &[beta, 0.0], &[0.0], n, h, 0, 17).unwrap();
    let obs = path.to_observations().unwrap();
    let scheme = derive_scheme(n, h, 1.9).unwrap();
    let lm = local_means(&obs, &scheme).unwrap();
    let model = scalar_ou((0.01, 5.0), (-5.0, 5.0));
    let cov = plugin_covariance(&lm, &DMatrix::zeros(1, 1), &[sigma], &[beta, 0.0], &model, &[3.0]).unwrap();
    let mc: f64 = path.as_slice().iter().map(|x| x * x / (sigma * sigma)).sum::<f64>() / (n + 1) as f64;
    let got = cov.info_beta[(0, 0)];
    assert!((got / mc - 1.0).abs() < 0.05, "{got} vs {mc}");
}

#[test]
fn empty_parameter_blocks_are_dropped() {
    let lm = noisy_scalar_blocks(3, 40);
    let no_drift = ModelSpec::new(
        1,
        1,
        |_x, _b| DVector::zeros(1),
        |_x, a| DMatrix::from_element(1, 1, a[0]),
        ParamBox(vec![Interval::new(0.1, 5.0)]),
        ParamBox(vec![]),
    )
    .unwrap();
    let lambda = DMatrix::from_element(1, 1, 0.01);
    let cov = plugin_covariance(&lm, &lambda, &[1.0], &[], &no_drift, &[3.0]).unwrap();
    assert_eq!(cov.matrix.nrows(), 2);
    let with_drift = scalar_ou((0.1, 5.0), (-5.0, 5.0));
    let full = plugin_covariance(&lm, &lambda, &[1.0], &[-0.5, 0.0], &with_drift, &[3.0]);
    // The intercept is fixed at zero but still carries information, so the drift block is regular.
    let full = full.unwrap();
    assert_eq!(full.matrix.nrows(), 4);
    assert!((full.lambda_block() - cov.lambda_block()).amax() == 0.0);
    // Analytic versus finite-difference diffusion derivatives.
    assert!((full.alpha_block() - cov.alpha_block()).amax() < 1e-6 * cov.alpha_block().amax());
}

#[test]
fn lga_matches_quadratic_variation_without_noise() {
    let sigma = 0.6;
    let n = 20_000;
    let h = 1e-3;
    let path = simulate_ou_exact(1, &[sigma], &[-0.5, 0.0], &[0.2], n, h, 0, 4).unwrap();
    let obs = path.to_observations().unwrap();
    let qv: f64 = (0..n).map(|i| (obs.row(i + 1)[0] - obs.row(i)[0]).powi(2)).sum::<f64>() / (n as f64 * h);
    for model in [scalar_ou((0.01, 5.0), (-5.0, 5.0)), scalar_ou_generic((0.01, 5.0), (-5.0, 5.0))] {
        let est = estimate_lga(&obs, &model).unwrap();
        let a = est.alpha[0] * est.alpha[0];
        assert!((a / qv - 1.0).abs() < 0.02, "{a} vs {qv}");
    }
}

#[test]
fn lga_profile_agrees_with_joint_search() {
    let (obs, _) = reference_obs(5_000, 0.0, 6, 2.0);
    let model = identifiable_reference();
    let est = estimate_lga(&obs, &model).unwrap();
    let value = lga_qlik(&est.alpha, &est.beta, &obs, &model).unwrap();
    assert!((value - est.value).abs() < 1e-8 * value.abs());
    let mut rng = stream_rng(2, 2);
    for _ in 0..5 {
        let alpha: Vec<f64> = est.alpha.iter().map(|a| a + rng.random_range(-0.01..0.01)).collect();
        let beta: Vec<f64> = est.beta.iter().map(|b| b + rng.random_range(-0.01..0.01)).collect();
        assert!(lga_qlik(&alpha, &beta, &obs, &model).unwrap() <= est.value + 1e-9 * value.abs());
    }
}

#[test]
fn stage_errors_carry_labels() {
    let (obs, scheme) = reference_obs(2_000, 0.0, 1, 2.0);
    let wrong = OuConfig {
        drift_matrix: vec![vec![-1.0]],
        drift_intercept: vec![0.0],
        diffusion_matrix: vec![vec![1.0]],
        alpha_box: Some(default_alpha_box(1)),
        beta_box: None,
    }
    .model()
    .unwrap();
    let err = estimate_adaptive(&obs, &scheme, &wrong, false).unwrap_err();
    assert!(matches!(err, Error::Stage { stage: "input", .. }));
    assert!(matches!(err.root(), Error::DimensionMismatch { .. }));
}

use crate::error::Error;
