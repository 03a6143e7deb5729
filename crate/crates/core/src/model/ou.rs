//! Built-in multivariate Ornstein–Uhlenbeck family.
//!
//! `dX = (B X + c) dt + S dW` with `S` symmetric. Parameters are laid out as
//! `alpha = vech(S)` and `beta = (B[:,0], …, B[:,d-1], c)`, i.e. the drift
//! matrix stacked column by column followed by the intercept. For `d = 2`
//! this gives `S = [[α1, α2], [α2, α3]]`, `B = [[β1, β3], [β2, β4]]` and
//! `c = (β5, β6)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::matrix::{from_rows, psd_sqrt, symmetrize, unvech, vech, vech_indices, vech_len};
use super::spec::{Interval, ModelSpec, ParamBox};
use crate::error::{Error, Result};

/// Config block describing an OU model: true coefficients plus search boxes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OuConfig {
    /// Row-major drift matrix `B`.
    pub drift_matrix: Vec<Vec<f64>>,
    pub drift_intercept: Vec<f64>,
    /// Row-major symmetric diffusion matrix `S`.
    pub diffusion_matrix: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_box: Option<ParamBox>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_box: Option<ParamBox>,
}

impl OuConfig {
    /// The two-dimensional model used in the simulation study, with
    /// `alpha* = (1, 0.1, 1)` and `beta* = (-1, -0.1, -0.1, -1, 1, 1)`.
    pub fn reference_2d() -> Self {
        Self {
            drift_matrix: vec![vec![-1.0, -0.1], vec![-0.1, -1.0]],
            drift_intercept: vec![1.0, 1.0],
            diffusion_matrix: vec![vec![1.0, 0.1], vec![0.1, 1.0]],
            alpha_box: None,
            beta_box: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.drift_intercept.len()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        if d == 0 {
            return Err(Error::InvalidArgument("OU dimension must be positive".into()));
        }
        let b = from_rows(&self.drift_matrix)?;
        let s = from_rows(&self.diffusion_matrix)?;
        for (what, m) in [("drift matrix", &b), ("diffusion matrix", &s)] {
            if m.nrows() != d || m.ncols() != d {
                return Err(Error::DimensionMismatch {
                    what,
                    expected: d,
                    got: m.nrows().max(m.ncols()),
                });
            }
        }
        vech(&s)?;
        if let Some(bx) = &self.alpha_box {
            check_box_dim(bx, vech_len(d), "alpha box")?;
        }
        if let Some(bx) = &self.beta_box {
            check_box_dim(bx, d * d + d, "beta box")?;
        }
        Ok(())
    }

    pub fn alpha(&self) -> Result<Vec<f64>> {
        Ok(vech(&from_rows(&self.diffusion_matrix)?)?.as_slice().to_vec())
    }

    pub fn beta(&self) -> Result<Vec<f64>> {
        let b = from_rows(&self.drift_matrix)?;
        let mut out: Vec<f64> = b.as_slice().to_vec(); // column-major storage
        out.extend_from_slice(&self.drift_intercept);
        Ok(out)
    }

    pub fn model(&self) -> Result<ModelSpec> {
        self.validate()?;
        let d = self.dim();
        let alpha_box = self
            .alpha_box
            .clone()
            .unwrap_or_else(|| default_alpha_box(d));
        let beta_box = self.beta_box.clone().unwrap_or_else(|| default_beta_box(d));
        ou_model(d, alpha_box, beta_box)
    }
}

fn check_box_dim(bx: &ParamBox, expected: usize, what: &'static str) -> Result<()> {
    bx.validate()?;
    if bx.dim() != expected {
        return Err(Error::DimensionMismatch {
            what,
            expected,
            got: bx.dim(),
        });
    }
    Ok(())
}

/// Diagonal entries in `[1e-3, 1e3]`, off-diagonal in `[-1e2, 1e2]`.
pub fn default_alpha_box(d: usize) -> ParamBox {
    ParamBox(
        vech_indices(d)
            .into_iter()
            .map(|(i, j)| {
                if i == j {
                    Interval::new(1e-3, 1e3)
                } else {
                    Interval::new(-1e2, 1e2)
                }
            })
            .collect(),
    )
}

pub fn default_beta_box(d: usize) -> ParamBox {
    ParamBox(vec![Interval::new(-1e3, 1e3); d * d + d])
}

/// Splits `beta` into the drift matrix `B` and intercept `c`.
pub fn split_beta(d: usize, beta: &[f64]) -> (DMatrix<f64>, DVector<f64>) {
    let b = DMatrix::from_column_slice(d, d, &beta[..d * d]);
    let c = DVector::from_column_slice(&beta[d * d..d * d + d]);
    (b, c)
}

/// Symmetric diffusion matrix from `alpha = vech(S)`.
pub fn diffusion_from_alpha(alpha: &[f64]) -> DMatrix<f64> {
    unvech(&DVector::from_column_slice(alpha)).expect("alpha length checked by model")
}

/// Builds the OU [`ModelSpec`] for dimension `d` with analytic derivatives.
pub fn ou_model(d: usize, alpha_box: ParamBox, beta_box: ParamBox) -> Result<ModelSpec> {
    check_box_dim(&alpha_box, vech_len(d), "alpha box")?;
    check_box_dim(&beta_box, d * d + d, "beta box")?;
    let m1 = vech_len(d);
    let m2 = d * d + d;
    let model = ModelSpec::new(
        d,
        d,
        move |x, beta| {
            let mut out = DVector::from_column_slice(&beta[d * d..d * d + d]);
            for col in 0..d {
                for row in 0..d {
                    out[row] += beta[col * d + row] * x[col];
                }
            }
            out
        },
        move |_x, alpha| {
            let mut s = DMatrix::zeros(d, d);
            let mut idx = 0;
            for j in 0..d {
                for i in j..d {
                    s[(i, j)] = alpha[idx];
                    s[(j, i)] = alpha[idx];
                    idx += 1;
                }
            }
            s
        },
        alpha_box,
        beta_box,
    )?
    .with_drift_jacobian(move |x, _beta| {
        let mut jac = DMatrix::zeros(d, m2);
        for col in 0..d {
            for row in 0..d {
                jac[(row, col * d + row)] = x[col];
            }
        }
        for row in 0..d {
            jac[(row, d * d + row)] = 1.0;
        }
        jac
    })
    .with_diffusion_gradient(move |_x, _alpha| {
        vech_indices(d)
            .into_iter()
            .map(|(i, j)| {
                let mut e = DMatrix::zeros(d, d);
                e[(i, j)] = 1.0;
                e[(j, i)] = 1.0;
                e
            })
            .collect::<Vec<_>>()
    })
    .with_affine_drift()
    .with_constant_diffusion()
    .with_alpha_canonical(move |alpha| {
        // S enters only through S², so any sign pattern on its eigenvalues
        // fits equally well; the positive semi-definite root is reported.
        let a = diffusion_from_alpha(alpha);
        match psd_sqrt(&symmetrize(&(&a * &a))) {
            Ok(root) => vech(&root).map(|v| v.as_slice().to_vec()).unwrap_or_else(|_| alpha.to_vec()),
            Err(_) => alpha.to_vec(),
        }
    });
    debug_assert_eq!(model.m1(), m1);
    Ok(model)
}

/// Exact Gaussian transition of the OU process over a fixed step `h`.
#[derive(Debug, Clone)]
pub struct OuTransition {
    /// `e^{B h}`.
    pub propagator: DMatrix<f64>,
    /// `∫_0^h e^{B s} ds · c`.
    pub shift: DVector<f64>,
    /// Symmetric square root of the transition covariance.
    pub noise_root: DMatrix<f64>,
    /// Transition covariance `∫_0^h e^{B s} S S^T e^{B^T s} ds`.
    pub covariance: DMatrix<f64>,
}

impl OuTransition {
    /// Van Loan block-exponential construction.
    pub fn new(d: usize, alpha: &[f64], beta: &[f64], h: f64) -> Result<Self> {
        let (b, c) = split_beta(d, beta);
        let s = diffusion_from_alpha(alpha);
        let q = &s * s.transpose();

        let mut mean_gen = DMatrix::zeros(d + 1, d + 1);
        mean_gen.view_mut((0, 0), (d, d)).copy_from(&(&b * h));
        mean_gen.view_mut((0, d), (d, 1)).copy_from(&(&c * h));
        let mean_exp = mean_gen.exp();
        let propagator = mean_exp.view((0, 0), (d, d)).into_owned();
        let shift = mean_exp.view((0, d), (d, 1)).column(0).into_owned();

        let mut cov_gen = DMatrix::zeros(2 * d, 2 * d);
        cov_gen.view_mut((0, 0), (d, d)).copy_from(&(-&b * h));
        cov_gen.view_mut((0, d), (d, d)).copy_from(&(&q * h));
        cov_gen.view_mut((d, d), (d, d)).copy_from(&(b.transpose() * h));
        let cov_exp = cov_gen.exp();
        let f12 = cov_exp.view((0, d), (d, d)).into_owned();
        let f22 = cov_exp.view((d, d), (d, d)).into_owned();
        let covariance = symmetrize(&(f22.transpose() * f12));
        let noise_root = psd_sqrt(&covariance).or_else(|_| {
            // Round-off can leave tiny negative eigenvalues for near-degenerate S.
            let eig = covariance.clone().symmetric_eigen();
            let roots = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
            Ok::<_, Error>(symmetrize(
                &(&eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose()),
            ))
        })?;
        Ok(Self {
            propagator,
            shift,
            noise_root,
            covariance,
        })
    }
}
