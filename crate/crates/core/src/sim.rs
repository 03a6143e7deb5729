//! Latent diffusion simulation and additive noise contamination.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::matrix::psd_sqrt;
use crate::model::series::write_grid_csv;
use crate::model::{ModelSpec, NoiseSpec, ObservationSeries, OuTransition};
use crate::rng::StreamSeed;

/// Latent path `X_0, X_h, …, X_{nh}` on the observation grid.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentPath {
    h: f64,
    d: usize,
    data: Vec<f64>,
    seed: StreamSeed,
}

impl LatentPath {
    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn n(&self) -> usize {
        self.data.len() / self.d - 1
    }

    pub fn seed(&self) -> StreamSeed {
        self.seed
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn last(&self) -> &[f64] {
        self.row(self.n())
    }

    /// The path viewed as noiseless observations.
    pub fn to_observations(&self) -> Result<ObservationSeries> {
        ObservationSeries::new(self.h, self.d, self.data.clone())
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        write_grid_csv(writer, self.h, self.d, &self.data)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EulerOptions {
    /// Euler steps per observation interval.
    pub substeps: usize,
    /// Observation intervals simulated and discarded before `X_0` is recorded.
    pub burn_in: usize,
}

impl Default for EulerOptions {
    fn default() -> Self {
        Self {
            substeps: 10,
            burn_in: 0,
        }
    }
}

fn check_grid(n: usize, h: f64) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidArgument(format!("step h = {h} must be positive")));
    }
    Ok(())
}

/// Euler–Maruyama on step `h / substeps`, recording every `substeps`-th point.
#[allow(clippy::too_many_arguments)]
pub fn simulate_path(
    model: &ModelSpec,
    alpha: &[f64],
    beta: &[f64],
    x0: &[f64],
    n: usize,
    h: f64,
    options: &EulerOptions,
    seed: impl Into<StreamSeed>,
) -> Result<LatentPath> {
    let seed = seed.into();
    check_grid(n, h)?;
    if options.substeps == 0 {
        return Err(Error::InvalidArgument("substeps must be at least 1".into()));
    }
    model.check_alpha(alpha)?;
    model.check_beta(beta)?;
    model.check_dim(x0.len())?;

    let d = model.d();
    let r = model.r();
    let dt = h / options.substeps as f64;
    let sqrt_dt = dt.sqrt();
    let mut rng = seed.rng();
    let mut x = DVector::from_column_slice(x0);
    let mut z = DVector::zeros(r);
    let mut data = Vec::with_capacity((n + 1) * d);

    let total = options.burn_in + n;
    if options.burn_in == 0 {
        data.extend_from_slice(x.as_slice());
    }
    for step in 1..=total {
        for _ in 0..options.substeps {
            let b = model.drift(x.as_slice(), beta);
            let a = model.diffusion(x.as_slice(), alpha);
            for zi in z.iter_mut() {
                *zi = rng.sample(StandardNormal);
            }
            x += b * dt + a * &z * sqrt_dt;
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "simulated path",
                index: step.saturating_sub(options.burn_in),
            });
        }
        if step >= options.burn_in {
            data.extend_from_slice(x.as_slice());
        }
    }
    Ok(LatentPath { h, d, data, seed })
}

/// Exact simulation of the built-in OU family through its Gaussian transition.
#[allow(clippy::too_many_arguments)]
pub fn simulate_ou_exact(
    d: usize,
    alpha: &[f64],
    beta: &[f64],
    x0: &[f64],
    n: usize,
    h: f64,
    burn_in: usize,
    seed: impl Into<StreamSeed>,
) -> Result<LatentPath> {
    let seed = seed.into();
    check_grid(n, h)?;
    if x0.len() != d {
        return Err(Error::DimensionMismatch {
            what: "initial state",
            expected: d,
            got: x0.len(),
        });
    }
    let transition = OuTransition::new(d, alpha, beta, h)?;
    let mut rng = seed.rng();
    let mut x = DVector::from_column_slice(x0);
    let mut z = DVector::zeros(d);
    let mut data = Vec::with_capacity((n + 1) * d);
    if burn_in == 0 {
        data.extend_from_slice(x.as_slice());
    }
    for step in 1..=burn_in + n {
        for zi in z.iter_mut() {
            *zi = rng.sample(StandardNormal);
        }
        x = &transition.propagator * &x + &transition.shift + &transition.noise_root * &z;
        if step >= burn_in {
            data.extend_from_slice(x.as_slice());
        }
    }
    if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            context: "simulated path",
            index: pos / d,
        });
    }
    Ok(LatentPath { h, d, data, seed })
}

/// `Y_i = X_i + Λ^{1/2} ε_i`. With `Λ = O` the path is returned unchanged.
pub fn contaminate(path: &LatentPath, noise: &NoiseSpec, seed: impl Into<StreamSeed>) -> Result<ObservationSeries> {
    let d = path.dim();
    if noise.dim() != d {
        return Err(Error::DimensionMismatch {
            what: "noise variance",
            expected: d,
            got: noise.dim(),
        });
    }
    if noise.is_zero() {
        return path.to_observations();
    }
    let root: DMatrix<f64> = psd_sqrt(noise.lambda())?;
    let dist = noise.distribution();
    let mut rng = seed.into().rng();
    let mut eps = vec![0.0; d];
    let mut data = path.data.clone();
    for row in data.chunks_exact_mut(d) {
        for e in eps.iter_mut() {
            *e = dist.sample(&mut rng);
        }
        for (i, y) in row.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (j, e) in eps.iter().enumerate() {
                acc += root[(i, j)] * e;
            }
            *y += acc;
        }
    }
    ObservationSeries::new(path.h, d, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{OuConfig, ParamBox};

    fn scalar_ou() -> ModelSpec {
        // dX = -(X - 1) dt + dW, written as b = beta0 x + beta1, a = alpha
        ModelSpec::new(
            1,
            1,
            |x, b| DVector::from_element(1, b[0] * x[0] + b[1]),
            |_, a| DMatrix::from_element(1, 1, a[0]),
            ParamBox::new([(0.01, 10.0)]).unwrap(),
            ParamBox::new([(-10.0, 10.0), (-10.0, 10.0)]).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn zero_coefficients_give_constant_path() {
        let m = ModelSpec::new(
            2,
            2,
            |_, _| DVector::zeros(2),
            |_, _| DMatrix::zeros(2, 2),
            ParamBox::new([(0.0, 1.0)]).unwrap(),
            ParamBox::new([(0.0, 1.0)]).unwrap(),
        )
        .unwrap();
        let p = simulate_path(&m, &[0.5], &[0.5], &[1.0, 1.0], 50, 0.1, &EulerOptions::default(), 3).unwrap();
        assert!(p.as_slice().iter().all(|v| *v == 1.0));
        assert_eq!(p.n(), 50);
    }

    #[test]
    fn deterministic_drift_integrates_exactly() {
        let m = ModelSpec::new(
            1,
            1,
            |_, _| DVector::from_element(1, 1.0),
            |_, _| DMatrix::zeros(1, 1),
            ParamBox::new([(0.0, 1.0)]).unwrap(),
            ParamBox::new([(0.0, 1.0)]).unwrap(),
        )
        .unwrap();
        let opts = EulerOptions { substeps: 1, burn_in: 0 };
        let p = simulate_path(&m, &[0.0], &[0.0], &[2.0], 10, 0.1, &opts, 0).unwrap();
        assert!((p.last()[0] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn euler_is_reproducible() {
        let m = scalar_ou();
        let opts = EulerOptions { substeps: 1, burn_in: 0 };
        let a = simulate_path(&m, &[1.0], &[-1.0, 1.0], &[1.0], 500, 0.01, &opts, 42).unwrap();
        let b = simulate_path(&m, &[1.0], &[-1.0, 1.0], &[1.0], 500, 0.01, &opts, 42).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn ou_path_is_stationary_around_mean() {
        let m = scalar_ou();
        let n = 10_000;
        let h = (n as f64).powf(-0.7);
        let p = simulate_path(&m, &[1.0], &[-1.0, 1.0], &[1.0], n, h, &EulerOptions::default(), 7).unwrap();
        let second: Vec<f64> = p.as_slice()[n / 2..].to_vec();
        let mean = second.iter().sum::<f64>() / second.len() as f64;
        // Stationary variance 1/2; effective sample size ~ T/(2 * correlation time).
        let horizon = (n / 2) as f64 * h;
        let se = (0.5 * 2.0 / horizon).sqrt();
        assert!((mean - 1.0).abs() < 3.0 * se, "mean {mean}, se {se}");
    }

    #[test]
    fn euler_error_shrinks_with_substeps() {
        // RMS distance of the terminal state from the exact OU transition mean;
        // a small diffusion keeps the discretisation bias dominant.
        let m = scalar_ou();
        let (h, n, sigma) = (0.1, 20, 1e-3);
        let exact = OuTransition::new(1, &[sigma], &[-1.0, 0.0], h * n as f64).unwrap();
        let target = exact.propagator[(0, 0)] * 1.0 + exact.shift[0];
        let rms = |substeps: usize| {
            let opts = EulerOptions { substeps, burn_in: 0 };
            let total: f64 = (0..200u64)
                .map(|seed| {
                    let p = simulate_path(&m, &[sigma], &[-1.0, 0.0], &[1.0], n, h, &opts, seed).unwrap();
                    (p.last()[0] - target).powi(2)
                })
                .sum();
            (total / 200.0).sqrt()
        };
        let (e1, e2, e4) = (rms(1), rms(2), rms(4));
        assert!(e2 < e1 && e4 < e2, "{e1} {e2} {e4}");
        assert!(e2 / e1 < 0.7, "first-order decay expected: {e1} {e2}");
    }

    #[test]
    fn exact_ou_matches_stationary_moments() {
        let cfg = OuConfig::reference_2d();
        let p = simulate_ou_exact(2, &cfg.alpha().unwrap(), &cfg.beta().unwrap(), &[1.0, 1.0], 200_000, 0.01, 0, 5).unwrap();
        let mean0 = p.as_slice().chunks(2).map(|r| r[0]).sum::<f64>() / p.as_slice().len() as f64 * 2.0;
        // Stationary mean solves B m + c = 0: m = (1/1.1, 1/1.1).
        assert!((mean0 - 1.0 / 1.1).abs() < 0.05, "{mean0}");
    }

    #[test]
    fn zero_noise_is_identity() {
        let cfg = OuConfig::reference_2d();
        let p = simulate_ou_exact(2, &cfg.alpha().unwrap(), &cfg.beta().unwrap(), &[1.0, 1.0], 100, 0.01, 0, 1).unwrap();
        let y = contaminate(&p, &NoiseSpec::none(2), 2).unwrap();
        assert_eq!(y.as_slice(), p.as_slice());
    }

    #[test]
    fn unit_noise_has_unit_variance() {
        let m = ModelSpec::new(
            2,
            1,
            |_, _| DVector::zeros(2),
            |_, _| DMatrix::zeros(2, 1),
            ParamBox::new([(0.0, 1.0)]).unwrap(),
            ParamBox::new([(0.0, 1.0)]).unwrap(),
        )
        .unwrap();
        let n = 100_000;
        let opts = EulerOptions { substeps: 1, burn_in: 0 };
        let p = simulate_path(&m, &[0.0], &[0.0], &[0.0, 0.0], n, 0.01, &opts, 0).unwrap();
        let y = contaminate(&p, &NoiseSpec::gaussian(DMatrix::identity(2, 2)).unwrap(), 1).unwrap();
        for l in 0..2 {
            let var = y.iter_rows().map(|r| r[l] * r[l]).sum::<f64>() / (n + 1) as f64;
            assert!((var - 1.0).abs() < 0.05, "component {l}: {var}");
        }
    }

    #[test]
    fn contaminate_rejects_dimension_mismatch() {
        let cfg = OuConfig::reference_2d();
        let p = simulate_ou_exact(2, &cfg.alpha().unwrap(), &cfg.beta().unwrap(), &[1.0, 1.0], 10, 0.01, 0, 1).unwrap();
        assert!(matches!(
            contaminate(&p, &NoiseSpec::none(3), 0),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn permuting_components_permutes_noise_variance() {
        // Λ = diag(0.25, 4) on component order (1, 2) vs swapped.
        let cfg = OuConfig::reference_2d();
        let p = simulate_ou_exact(2, &[0.0, 0.0, 0.0], &cfg.beta().unwrap(), &[0.0, 0.0], 50_000, 0.01, 0, 1).unwrap();
        let swapped_path = LatentPath {
            h: p.h,
            d: 2,
            data: p.data.chunks(2).flat_map(|r| [r[1], r[0]]).collect(),
            seed: p.seed,
        };
        let lam = DMatrix::from_row_slice(2, 2, &[0.25, 0.0, 0.0, 4.0]);
        let lam_swapped = DMatrix::from_row_slice(2, 2, &[4.0, 0.0, 0.0, 0.25]);
        let y = contaminate(&p, &NoiseSpec::gaussian(lam).unwrap(), 3).unwrap();
        let ys = contaminate(&swapped_path, &NoiseSpec::gaussian(lam_swapped).unwrap(), 3).unwrap();
        let resid_var = |obs: &ObservationSeries, path: &LatentPath, l: usize| {
            let n = obs.rows() as f64;
            obs.iter_rows()
                .enumerate()
                .map(|(i, r)| (r[l] - path.row(i)[l]).powi(2))
                .sum::<f64>()
                / n
        };
        assert!((resid_var(&y, &p, 0) - resid_var(&ys, &swapped_path, 1)).abs() < 0.02);
        assert!((resid_var(&y, &p, 1) - resid_var(&ys, &swapped_path, 0)).abs() < 0.2);
    }
}
