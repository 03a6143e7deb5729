//! Adaptive three-stage estimation: noise variance, then diffusion, then drift.

mod affine;
mod covariance;
mod lambda;
mod lga;
mod qlik;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub use covariance::{coordinate_labels, noise_block, plugin_covariance, PluginCovariance};
pub use lambda::estimate_lambda;
pub use lga::{estimate_lga, lga_qlik, LgaEstimate};
pub use qlik::{estimate_alpha, estimate_beta, h1_objective, h2_objective, qlik_h1, qlik_h2, StageEstimate};

use crate::error::Result;
use crate::local_means::local_means;
use crate::model::matrix::{rows, vech};
use crate::model::{ModelSpec, ObservationSeries, SamplingScheme};
use crate::optimize::OptimizerReport;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReports {
    pub alpha: OptimizerReport,
    pub beta: OptimizerReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationResult {
    #[serde(with = "rows")]
    pub lambda_hat: DMatrix<f64>,
    /// `vech(lambda_hat)`.
    pub theta_eps_hat: Vec<f64>,
    pub alpha_hat: Vec<f64>,
    pub beta_hat: Vec<f64>,
    pub h1_value: f64,
    pub h2_value: f64,
    pub optimizer_report: StageReports,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cov: Option<PluginCovariance>,
    pub scheme: SamplingScheme,
    /// `k Δ²`; the asymptotic normality argument wants this small.
    pub k_delta_squared: f64,
}

/// Runs [`estimate_lambda`], [`local_means`], [`estimate_alpha`] and [`estimate_beta`] in turn.
///
/// With `with_cov`, Gaussian noise (`E ε⁴ = 3`) is assumed for the noise block.
pub fn estimate_adaptive(
    obs: &ObservationSeries,
    scheme: &SamplingScheme,
    model: &ModelSpec,
    with_cov: bool,
) -> Result<EstimationResult> {
    let moments = with_cov.then(|| vec![3.0; obs.dim()]);
    estimate_adaptive_with(obs, scheme, model, moments.as_deref())
}

/// As [`estimate_adaptive`], attaching the covariance when noise fourth moments are given.
pub fn estimate_adaptive_with(
    obs: &ObservationSeries,
    scheme: &SamplingScheme,
    model: &ModelSpec,
    fourth_moments: Option<&[f64]>,
) -> Result<EstimationResult> {
    model.check_dim(obs.dim()).map_err(|e| e.in_stage("input"))?;
    let lambda_hat = estimate_lambda(obs).map_err(|e| e.in_stage("noise variance"))?;
    let lm = local_means(obs, scheme).map_err(|e| e.in_stage("local means"))?;
    let alpha = estimate_alpha(&lm, &lambda_hat, model).map_err(|e| e.in_stage("diffusion"))?;
    let beta = estimate_beta(&lm, &alpha.params, model).map_err(|e| e.in_stage("drift"))?;
    let cov = fourth_moments
        .map(|m| plugin_covariance(&lm, &lambda_hat, &alpha.params, &beta.params, model, m))
        .transpose()
        .map_err(|e| e.in_stage("covariance"))?;
    Ok(EstimationResult {
        theta_eps_hat: vech(&lambda_hat)?.as_slice().to_vec(),
        lambda_hat,
        alpha_hat: alpha.params,
        beta_hat: beta.params,
        h1_value: alpha.value,
        h2_value: beta.value,
        optimizer_report: StageReports {
            alpha: alpha.report,
            beta: beta.report,
        },
        cov,
        scheme: *scheme,
        k_delta_squared: scheme.k_delta_squared(),
    })
}

#[cfg(test)]
mod tests;
