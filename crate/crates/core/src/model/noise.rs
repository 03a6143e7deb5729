//! Additive observation-noise specification `Λ^{1/2} ε`.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use super::matrix::{check_psd, ensure_square};
use crate::error::Result;

/// Law of each standardized noise component: symmetric, mean 0, variance 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseDistribution {
    #[default]
    Gaussian,
    /// Uniform on `[-√3, √3]`.
    Uniform,
    /// Laplace with scale `1/√2`.
    Laplace,
}

impl NoiseDistribution {
    /// `E|ε|^4`.
    pub fn fourth_moment(self) -> f64 {
        match self {
            Self::Gaussian => 3.0,
            Self::Uniform => 9.0 / 5.0,
            Self::Laplace => 6.0,
        }
    }

    pub fn sample<R: Rng + ?Sized>(self, rng: &mut R) -> f64 {
        match self {
            Self::Gaussian => StandardNormal.sample(rng),
            Self::Uniform => (2.0 * rng.random::<f64>() - 1.0) * 3f64.sqrt(),
            Self::Laplace => {
                let e: f64 = Exp1.sample(rng);
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                sign * e / std::f64::consts::SQRT_2
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSpec {
    lambda: DMatrix<f64>,
    distribution: NoiseDistribution,
}

impl NoiseSpec {
    pub fn new(lambda: DMatrix<f64>, distribution: NoiseDistribution) -> Result<Self> {
        ensure_square(&lambda, "noise variance")?;
        check_psd(&lambda, 1e-12)?;
        Ok(Self {
            lambda,
            distribution,
        })
    }

    pub fn gaussian(lambda: DMatrix<f64>) -> Result<Self> {
        Self::new(lambda, NoiseDistribution::Gaussian)
    }

    /// `Λ = O` in dimension `d`.
    pub fn none(d: usize) -> Self {
        Self {
            lambda: DMatrix::zeros(d, d),
            distribution: NoiseDistribution::Gaussian,
        }
    }

    pub fn dim(&self) -> usize {
        self.lambda.nrows()
    }

    pub fn lambda(&self) -> &DMatrix<f64> {
        &self.lambda
    }

    pub fn distribution(&self) -> NoiseDistribution {
        self.distribution
    }

    pub fn is_zero(&self) -> bool {
        self.lambda.iter().all(|v| *v == 0.0)
    }

    pub fn fourth_moments(&self) -> Vec<f64> {
        vec![self.distribution.fourth_moment(); self.dim()]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    #[test]
    fn rejects_indefinite_lambda() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(NoiseSpec::gaussian(m).is_err());
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]);
        assert!(NoiseSpec::gaussian(m).is_err());
    }

    #[test]
    fn samplers_are_standardized() {
        for dist in [
            NoiseDistribution::Gaussian,
            NoiseDistribution::Uniform,
            NoiseDistribution::Laplace,
        ] {
            let mut rng = stream_rng(11, 0);
            let n = 200_000;
            let draws: Vec<f64> = (0..n).map(|_| dist.sample(&mut rng)).collect();
            let mean = draws.iter().sum::<f64>() / n as f64;
            let var = draws.iter().map(|x| x * x).sum::<f64>() / n as f64;
            let m4 = draws.iter().map(|x| x.powi(4)).sum::<f64>() / n as f64;
            assert!(mean.abs() < 0.01, "{dist:?} mean {mean}");
            assert!((var - 1.0).abs() < 0.02, "{dist:?} var {var}");
            assert!(
                (m4 - dist.fourth_moment()).abs() < 0.1 * dist.fourth_moment(),
                "{dist:?} m4 {m4}"
            );
            assert!(dist.fourth_moment() >= 1.0);
        }
    }
}
