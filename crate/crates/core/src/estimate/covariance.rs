//! Plug-in asymptotic covariance of the rate-scaled adaptive estimators.
//!
//! Invariant-measure integrals are replaced by averages over the local means.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::qlik::factor;
use crate::error::{Error, Result};
use crate::local_means::LocalMeanSeries;
use crate::model::matrix::{psd_sqrt, rows, symmetrize, vech_indices};
use crate::model::ModelSpec;

/// Block-diagonal covariance of `(√n(θ̂_ε − θ_ε), √k(α̂ − α), √(nh)(β̂ − β))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PluginCovariance {
    /// Coordinate names in row/column order.
    pub labels: Vec<String>,
    #[serde(with = "rows")]
    pub matrix: DMatrix<f64>,
    /// Noise-variance block (its Hessian block is the identity).
    #[serde(with = "rows")]
    pub w1: DMatrix<f64>,
    #[serde(with = "rows")]
    pub info_alpha: DMatrix<f64>,
    #[serde(with = "rows")]
    pub hessian_alpha: DMatrix<f64>,
    /// Drift information; equal to its Hessian.
    #[serde(with = "rows")]
    pub info_beta: DMatrix<f64>,
}

impl PluginCovariance {
    pub fn lambda_block(&self) -> DMatrix<f64> {
        let q = self.w1.nrows();
        self.matrix.view((0, 0), (q, q)).into_owned()
    }

    pub fn alpha_block(&self) -> DMatrix<f64> {
        let q = self.w1.nrows();
        let m1 = self.info_alpha.nrows();
        self.matrix.view((q, q), (m1, m1)).into_owned()
    }

    pub fn beta_block(&self) -> DMatrix<f64> {
        let start = self.w1.nrows() + self.info_alpha.nrows();
        let m2 = self.info_beta.nrows();
        self.matrix.view((start, start), (m2, m2)).into_owned()
    }
}

/// Noise block from `Λ` and the per-component fourth moments `E ε⁴`, in vech order.
pub fn noise_block(lambda: &DMatrix<f64>, fourth_moments: &[f64]) -> Result<DMatrix<f64>> {
    let d = lambda.nrows();
    if fourth_moments.len() != d {
        return Err(Error::DimensionMismatch {
            what: "noise fourth moments",
            expected: d,
            got: fourth_moments.len(),
        });
    }
    let root = psd_sqrt(lambda)?;
    let idx = vech_indices(d);
    let q = idx.len();
    let mut w = DMatrix::zeros(q, q);
    for (p, &(l1, l2)) in idx.iter().enumerate() {
        for (s, &(l3, l4)) in idx.iter().enumerate() {
            let excess: f64 = (0..d)
                .map(|k| root[(l1, k)] * root[(l2, k)] * root[(l3, k)] * root[(l4, k)] * (fourth_moments[k] - 3.0))
                .sum();
            w[(p, s)] =
                excess + 1.5 * (lambda[(l1, l3)] * lambda[(l2, l4)] + lambda[(l1, l4)] * lambda[(l2, l3)]);
        }
    }
    Ok(symmetrize(&w))
}

/// `lambda[i,j]` (1-based, `i ≤ j`) in vech order, then `alpha1…` and `beta1…`.
pub fn coordinate_labels(d: usize, m1: usize, m2: usize) -> Vec<String> {
    let mut labels: Vec<String> = vech_indices(d)
        .into_iter()
        .map(|(r, c)| format!("lambda[{},{}]", c + 1, r + 1))
        .collect();
    labels.extend((1..=m1).map(|i| format!("alpha{i}")));
    labels.extend((1..=m2).map(|i| format!("beta{i}")));
    labels
}

fn trace_product(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.component_mul(&b.transpose()).sum()
}

fn sandwich_inverse(j: &DMatrix<f64>, what: &'static str) -> Result<DMatrix<f64>> {
    let inv = symmetrize(j)
        .cholesky()
        .map(|c| c.inverse())
        .ok_or(Error::SingularInformation(what))?;
    if inv.iter().all(|v| v.is_finite()) {
        Ok(inv)
    } else {
        Err(Error::SingularInformation(what))
    }
}

/// Sandwich covariance `J⁻¹ I J⁻¹` evaluated at the estimates.
pub fn plugin_covariance(
    lm: &LocalMeanSeries,
    lambda_hat: &DMatrix<f64>,
    alpha: &[f64],
    beta: &[f64],
    model: &ModelSpec,
    fourth_moments: &[f64],
) -> Result<PluginCovariance> {
    let d = lm.dim();
    model.check_dim(d)?;
    model.check_alpha(alpha)?;
    model.check_beta(beta)?;
    let (m1, m2) = (model.m1(), model.m2());
    let at_two = lm.scheme().tau == 2.0;
    let shift = if at_two { lambda_hat * 3.0 } else { DMatrix::zeros(d, d) };

    let w1 = noise_block(lambda_hat, fourth_moments)?;
    let mut i22 = DMatrix::zeros(m1, m1);
    let mut j22 = DMatrix::zeros(m1, m1);
    let mut i33 = DMatrix::zeros(m2, m2);
    let k = lm.k();
    for j in 0..k {
        let x = lm.mean(j);
        let a = model.diffusion_matrix(x, alpha);
        if m1 > 0 {
            let at_inv = factor(&a + &shift, "noise-adjusted diffusion matrix", j)?.inverse();
            let grads = model.diffusion_matrix_gradient(x, alpha);
            let weighted: Vec<DMatrix<f64>> = grads.iter().map(|g| &at_inv * g * &at_inv).collect();
            let bs: Vec<DMatrix<f64>> = weighted.iter().map(|w| symmetrize(&(w * 0.75))).collect();
            for p in 0..m1 {
                for q in 0..m1 {
                    let mut v = trace_product(&(&bs[p] * &a), &(&bs[q] * &a));
                    if at_two {
                        v += 4.0 * trace_product(&(&bs[p] * &a), &(&bs[q] * lambda_hat))
                            + 12.0 * trace_product(&(&bs[p] * lambda_hat), &(&bs[q] * lambda_hat));
                    }
                    i22[(p, q)] += v;
                    j22[(p, q)] += 0.5 * trace_product(&weighted[p], &grads[q]);
                }
            }
        }
        if m2 > 0 {
            let a_inv = factor(a, "diffusion matrix", j)?.inverse();
            let jac = model.drift_jacobian(x, beta);
            i33 += jac.transpose() * a_inv * jac;
        }
    }
    let kf = k as f64;
    let (i22, j22, i33) = (symmetrize(&(i22 / kf)), symmetrize(&(j22 / kf)), symmetrize(&(i33 / kf)));

    let q = w1.nrows();
    let total = q + m1 + m2;
    let mut matrix = DMatrix::zeros(total, total);
    matrix.view_mut((0, 0), (q, q)).copy_from(&w1);
    if m1 > 0 {
        let j_inv = sandwich_inverse(&j22, "diffusion")?;
        let block = symmetrize(&(&j_inv * &i22 * &j_inv));
        matrix.view_mut((q, q), (m1, m1)).copy_from(&block);
    }
    if m2 > 0 {
        let block = symmetrize(&sandwich_inverse(&i33, "drift")?);
        matrix.view_mut((q + m1, q + m1), (m2, m2)).copy_from(&block);
    }

    let labels = coordinate_labels(d, m1, m2);

    Ok(PluginCovariance {
        labels,
        matrix,
        w1,
        info_alpha: i22,
        hessian_alpha: j22,
        info_beta: i33,
    })
}
