//! Diffusion model specification: drift `b(x, beta)`, diffusion `a(x, alpha)` and parameter boxes.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type DriftFn = dyn Fn(&[f64], &[f64]) -> DVector<f64> + Send + Sync;
pub type DiffusionFn = dyn Fn(&[f64], &[f64]) -> DMatrix<f64> + Send + Sync;
/// `d × m2` Jacobian of the drift with respect to `beta`.
pub type DriftJacobianFn = dyn Fn(&[f64], &[f64]) -> DMatrix<f64> + Send + Sync;
/// One `d × r` matrix per coordinate of `alpha`: the partial derivatives of `a`.
pub type DiffusionGradientFn = dyn Fn(&[f64], &[f64]) -> Vec<DMatrix<f64>> + Send + Sync;
/// Maps `alpha` to an equivalent point giving the same `A = a a^T`.
pub type AlphaCanonicalFn = dyn Fn(&[f64]) -> Vec<f64> + Send + Sync;

/// Closed interval for one parameter coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn new(lower: f64, upper: f64) -> Self {
        Self { lower, upper }
    }

    pub fn is_fixed(&self) -> bool {
        self.lower == self.upper
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn center(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }

    pub fn clamp(&self, x: f64) -> f64 {
        x.clamp(self.lower, self.upper)
    }
}

/// Compact box `[l_1, u_1] × … × [l_m, u_m]`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamBox(pub Vec<Interval>);

impl ParamBox {
    pub fn new(bounds: impl IntoIterator<Item = (f64, f64)>) -> Result<Self> {
        let b = Self(bounds.into_iter().map(|(l, u)| Interval::new(l, u)).collect());
        b.validate()?;
        Ok(b)
    }

    /// Every interval must be finite with `lower <= upper`; equal bounds pin a coordinate.
    pub fn validate(&self) -> Result<()> {
        for (i, iv) in self.0.iter().enumerate() {
            if !iv.lower.is_finite() || !iv.upper.is_finite() || iv.lower > iv.upper {
                return Err(Error::InvalidArgument(format!(
                    "parameter box coordinate {i}: [{}, {}] is not a finite interval",
                    iv.lower, iv.upper
                )));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn lower(&self) -> Vec<f64> {
        self.0.iter().map(|iv| iv.lower).collect()
    }

    pub fn upper(&self) -> Vec<f64> {
        self.0.iter().map(|iv| iv.upper).collect()
    }

    pub fn center(&self) -> Vec<f64> {
        self.0.iter().map(Interval::center).collect()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && self
                .0
                .iter()
                .zip(x)
                .all(|(iv, v)| *v >= iv.lower && *v <= iv.upper)
    }
}

/// Drift and diffusion coefficients of `dX = b(X, beta) dt + a(X, alpha) dW`.
#[derive(Clone)]
pub struct ModelSpec {
    d: usize,
    r: usize,
    drift: Arc<DriftFn>,
    diffusion: Arc<DiffusionFn>,
    alpha_box: ParamBox,
    beta_box: ParamBox,
    drift_jacobian: Option<Arc<DriftJacobianFn>>,
    diffusion_gradient: Option<Arc<DiffusionGradientFn>>,
    affine_drift: bool,
    constant_diffusion: bool,
    alpha_canonical: Option<Arc<AlphaCanonicalFn>>,
}

impl fmt::Debug for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModelSpec")
            .field("d", &self.d)
            .field("r", &self.r)
            .field("alpha_box", &self.alpha_box)
            .field("beta_box", &self.beta_box)
            .field("analytic_drift_jacobian", &self.drift_jacobian.is_some())
            .field("analytic_diffusion_gradient", &self.diffusion_gradient.is_some())
            .field("affine_drift", &self.affine_drift)
            .field("constant_diffusion", &self.constant_diffusion)
            .finish()
    }
}

impl ModelSpec {
    pub fn new<B, A>(
        d: usize,
        r: usize,
        drift: B,
        diffusion: A,
        alpha_box: ParamBox,
        beta_box: ParamBox,
    ) -> Result<Self>
    where
        B: Fn(&[f64], &[f64]) -> DVector<f64> + Send + Sync + 'static,
        A: Fn(&[f64], &[f64]) -> DMatrix<f64> + Send + Sync + 'static,
    {
        if d == 0 || r == 0 {
            return Err(Error::InvalidArgument(
                "state and Wiener dimensions must be positive".into(),
            ));
        }
        alpha_box.validate()?;
        beta_box.validate()?;
        Ok(Self {
            d,
            r,
            drift: Arc::new(drift),
            diffusion: Arc::new(diffusion),
            alpha_box,
            beta_box,
            drift_jacobian: None,
            diffusion_gradient: None,
            affine_drift: false,
            constant_diffusion: false,
            alpha_canonical: None,
        })
    }

    /// Supplies `∂b/∂beta` analytically instead of by finite differences.
    pub fn with_drift_jacobian<F>(mut self, jacobian: F) -> Self
    where
        F: Fn(&[f64], &[f64]) -> DMatrix<f64> + Send + Sync + 'static,
    {
        self.drift_jacobian = Some(Arc::new(jacobian));
        self
    }

    /// Supplies `∂a/∂alpha_k` analytically instead of by finite differences.
    pub fn with_diffusion_gradient<F>(mut self, gradient: F) -> Self
    where
        F: Fn(&[f64], &[f64]) -> Vec<DMatrix<f64>> + Send + Sync + 'static,
    {
        self.diffusion_gradient = Some(Arc::new(gradient));
        self
    }

    /// Declares `b(x, beta)` affine in `beta`, enabling closed-form profiling.
    pub fn with_affine_drift(mut self) -> Self {
        self.affine_drift = true;
        self
    }

    /// Declares `a(x, alpha)` independent of `x`, so quasi-likelihoods reduce to sufficient statistics.
    pub fn with_constant_diffusion(mut self) -> Self {
        self.constant_diffusion = true;
        self
    }

    /// Picks a representative among diffusion parameters that give the same `A`.
    ///
    /// Estimators apply it to their maximizer whenever the image stays inside the box.
    pub fn with_alpha_canonical<F>(mut self, canonical: F) -> Self
    where
        F: Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        self.alpha_canonical = Some(Arc::new(canonical));
        self
    }

    pub fn has_constant_diffusion(&self) -> bool {
        self.constant_diffusion
    }

    pub(crate) fn canonical_alpha(&self, alpha: &[f64]) -> Option<Vec<f64>> {
        let canon = self.alpha_canonical.as_ref()?(alpha);
        (canon.len() == alpha.len() && self.alpha_box.contains(&canon)).then_some(canon)
    }

    pub fn with_boxes(mut self, alpha_box: ParamBox, beta_box: ParamBox) -> Result<Self> {
        if alpha_box.dim() != self.alpha_box.dim() || beta_box.dim() != self.beta_box.dim() {
            return Err(Error::DimensionMismatch {
                what: "parameter box",
                expected: self.alpha_box.dim() + self.beta_box.dim(),
                got: alpha_box.dim() + beta_box.dim(),
            });
        }
        alpha_box.validate()?;
        beta_box.validate()?;
        self.alpha_box = alpha_box;
        self.beta_box = beta_box;
        Ok(self)
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn m1(&self) -> usize {
        self.alpha_box.dim()
    }

    pub fn m2(&self) -> usize {
        self.beta_box.dim()
    }

    pub fn alpha_box(&self) -> &ParamBox {
        &self.alpha_box
    }

    pub fn beta_box(&self) -> &ParamBox {
        &self.beta_box
    }

    pub fn has_affine_drift(&self) -> bool {
        self.affine_drift
    }

    pub fn drift(&self, x: &[f64], beta: &[f64]) -> DVector<f64> {
        (self.drift)(x, beta)
    }

    pub fn diffusion(&self, x: &[f64], alpha: &[f64]) -> DMatrix<f64> {
        (self.diffusion)(x, alpha)
    }

    /// `A(x, alpha) = a a^T`.
    pub fn diffusion_matrix(&self, x: &[f64], alpha: &[f64]) -> DMatrix<f64> {
        let a = self.diffusion(x, alpha);
        &a * a.transpose()
    }

    /// `∂b/∂beta` as a `d × m2` matrix, analytic when supplied.
    pub fn drift_jacobian(&self, x: &[f64], beta: &[f64]) -> DMatrix<f64> {
        if let Some(jac) = &self.drift_jacobian {
            return jac(x, beta);
        }
        let m2 = beta.len();
        let mut out = DMatrix::zeros(self.d, m2);
        let mut work = beta.to_vec();
        for k in 0..m2 {
            let step = FD_STEP * (1.0 + beta[k].abs());
            work[k] = beta[k] + step;
            let plus = self.drift(x, &work);
            work[k] = beta[k] - step;
            let minus = self.drift(x, &work);
            work[k] = beta[k];
            out.set_column(k, &((plus - minus) / (2.0 * step)));
        }
        out
    }

    /// `∂A/∂alpha_k` for every `k`.
    pub fn diffusion_matrix_gradient(&self, x: &[f64], alpha: &[f64]) -> Vec<DMatrix<f64>> {
        if let Some(grad) = &self.diffusion_gradient {
            let a = self.diffusion(x, alpha);
            return grad(x, alpha)
                .into_iter()
                .map(|da| {
                    let t = &da * a.transpose();
                    &t + t.transpose()
                })
                .collect();
        }
        let mut work = alpha.to_vec();
        (0..alpha.len())
            .map(|k| {
                let step = FD_STEP * (1.0 + alpha[k].abs());
                work[k] = alpha[k] + step;
                let plus = self.diffusion_matrix(x, &work);
                work[k] = alpha[k] - step;
                let minus = self.diffusion_matrix(x, &work);
                work[k] = alpha[k];
                (plus - minus) / (2.0 * step)
            })
            .collect()
    }

    pub(crate) fn check_alpha(&self, alpha: &[f64]) -> Result<()> {
        if alpha.len() != self.m1() {
            return Err(Error::DimensionMismatch {
                what: "alpha",
                expected: self.m1(),
                got: alpha.len(),
            });
        }
        Ok(())
    }

    pub(crate) fn check_beta(&self, beta: &[f64]) -> Result<()> {
        if beta.len() != self.m2() {
            return Err(Error::DimensionMismatch {
                what: "beta",
                expected: self.m2(),
                got: beta.len(),
            });
        }
        Ok(())
    }

    pub(crate) fn check_dim(&self, d: usize) -> Result<()> {
        if d != self.d {
            return Err(Error::DimensionMismatch {
                what: "state dimension",
                expected: self.d,
                got: d,
            });
        }
        Ok(())
    }
}

/// Relative central-difference step for parameter derivatives.
pub const FD_STEP: f64 = 1e-6;

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_model() -> ModelSpec {
        ModelSpec::new(
            1,
            1,
            |x, b| DVector::from_element(1, b[0] * x[0] + b[1] * x[0] * x[0]),
            |x, a| DMatrix::from_element(1, 1, a[0] * (1.0 + x[0] * x[0]).sqrt()),
            ParamBox::new([(0.1, 5.0)]).unwrap(),
            ParamBox::new([(-5.0, 5.0), (-1.0, 1.0)]).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn box_validation() {
        assert!(ParamBox::new([(1.0, 0.0)]).is_err());
        assert!(ParamBox::new([(0.0, f64::INFINITY)]).is_err());
        assert!(ParamBox::new([(0.0, 0.0)]).is_ok());
    }

    #[test]
    fn finite_difference_derivatives_match_analytic() {
        let m = scalar_model();
        let x = [0.7];
        let jac = m.drift_jacobian(&x, &[0.3, -0.2]);
        assert!((jac[(0, 0)] - 0.7).abs() < 1e-8);
        assert!((jac[(0, 1)] - 0.49).abs() < 1e-8);
        let grad = m.diffusion_matrix_gradient(&x, &[1.3]);
        // A = alpha^2 (1 + x^2)
        assert!((grad[0][(0, 0)] - 2.0 * 1.3 * 1.49).abs() < 1e-7);
    }

    #[test]
    fn diffusion_matrix_is_symmetric_psd() {
        let m = ModelSpec::new(
            2,
            3,
            |_, _| DVector::zeros(2),
            |x, a| DMatrix::from_row_slice(2, 3, &[a[0], x[0], 0.3, -0.2, a[0] * x[1], 1.0]),
            ParamBox::new([(0.0, 1.0)]).unwrap(),
            ParamBox::default(),
        )
        .unwrap();
        let big_a = m.diffusion_matrix(&[0.4, -1.2], &[0.8]);
        assert_eq!(big_a, big_a.transpose());
        assert!(big_a.symmetric_eigen().eigenvalues.min() >= -1e-14);
    }
}
