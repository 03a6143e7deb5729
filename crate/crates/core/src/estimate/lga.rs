//! Gaussian quasi-likelihood on raw increments, ignoring observation noise.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::affine::AffineStats;
use super::qlik::{canonicalize, factor, log_det, run_stage, StageEstimate};
use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::model::ObservationSeries;
use crate::numeric::CompensatedSum;
use crate::optimize::OptimizerReport;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LgaEstimate {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub value: f64,
    pub report: OptimizerReport,
    /// Present when `beta` needed its own box-constrained search.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_report: Option<OptimizerReport>,
}

/// `−½ Σ_i [⟨(h A(Y_i))⁻¹, (ΔY_i − h b(Y_i))^{⊗2}⟩ + log det A(Y_i)]`.
pub fn lga_qlik(alpha: &[f64], beta: &[f64], obs: &ObservationSeries, model: &ModelSpec) -> Result<f64> {
    model.check_dim(obs.dim())?;
    model.check_alpha(alpha)?;
    model.check_beta(beta)?;
    let h = obs.h();
    let d = obs.dim();
    let mut acc = CompensatedSum::new();
    for i in 0..obs.n() {
        let x = obs.row(i);
        let chol = factor(model.diffusion_matrix(x, alpha), "diffusion matrix", i)?;
        let incr = DVector::from_iterator(d, obs.row(i + 1).iter().zip(x).map(|(a, b)| a - b));
        let res = incr - model.drift(x, beta) * h;
        acc.add(res.dot(&chol.solve(&res)) / h + log_det(&chol));
    }
    Ok(-0.5 * acc.value())
}

/// Jointly maximizes [`lga_qlik`] over the parameter boxes.
///
/// With affine drift and state-independent diffusion, `beta` is profiled out by
/// generalized least squares and only `alpha` is searched.
pub fn estimate_lga(obs: &ObservationSeries, model: &ModelSpec) -> Result<LgaEstimate> {
    model.check_dim(obs.dim())?;
    if obs.n() < 2 {
        return Err(Error::InsufficientData {
            needed: 3,
            available: obs.rows(),
        });
    }
    if model.has_affine_drift() && model.has_constant_diffusion() {
        profiled(obs, model)
    } else {
        joint(obs, model)
    }
}

fn profiled(obs: &ObservationSeries, model: &ModelSpec) -> Result<LgaEstimate> {
    let h = obs.h();
    let n = obs.n();
    let stats = AffineStats::new(model, (0..n).map(|i| (obs.row(i), obs.row(i + 1))), h);
    let x0 = obs.row(0).to_vec();
    let beta_box = model.beta_box();
    let (blower, bupper) = (beta_box.lower(), beta_box.upper());
    let fixed: Vec<bool> = blower.iter().zip(&bupper).map(|(l, u)| l == u).collect();

    // Profile over the free drift coordinates only; fixed ones stay at their bound.
    let profile = |alpha: &[f64]| -> Option<(Vec<f64>, f64)> {
        let chol = factor(model.diffusion_matrix(&x0, alpha), "diffusion matrix", 0).ok()?;
        let quad = stats.quadratic(&chol.inverse());
        let beta = free_minimizer(&quad, &fixed, &blower)?;
        let value = -0.5 * (quad.eval(&beta) / h + n as f64 * log_det(&chol));
        value.is_finite().then_some((beta, value))
    };
    let f = |a: &[f64]| profile(a).map_or(f64::NEG_INFINITY, |(_, v)| v);
    let abox = model.alpha_box();
    let mut stage = run_stage(&f, abox.lower(), abox.upper())?;
    canonicalize(&mut stage, model, &f);
    let (beta, value) = profile(&stage.params).ok_or(Error::DegenerateData(
        "drift least-squares system is singular".into(),
    ))?;
    if beta_box.contains(&beta) {
        return Ok(LgaEstimate {
            alpha: stage.params,
            beta,
            value,
            report: stage.report,
            beta_report: None,
        });
    }
    let chol = factor(model.diffusion_matrix(&x0, &stage.params), "diffusion matrix", 0)?;
    let quad = stats.quadratic(&chol.inverse());
    let logdet = n as f64 * log_det(&chol);
    let g = |b: &[f64]| -0.5 * (quad.eval(b) / h + logdet);
    let beta_stage = run_stage(&g, blower.clone(), bupper.clone())?;
    Ok(LgaEstimate {
        alpha: stage.params,
        beta: beta_stage.params,
        value: beta_stage.value,
        report: stage.report,
        beta_report: Some(beta_stage.report),
    })
}

/// Minimizer of the quadratic over the free coordinates, others held at `pinned`.
fn free_minimizer(quad: &super::affine::Quadratic, fixed: &[bool], pinned: &[f64]) -> Option<Vec<f64>> {
    if !fixed.iter().any(|f| *f) {
        return quad.minimizer().map(|b| b.as_slice().to_vec());
    }
    let free: Vec<usize> = (0..fixed.len()).filter(|i| !fixed[*i]).collect();
    let mut beta: Vec<f64> = pinned.to_vec();
    if free.is_empty() {
        return Some(beta);
    }
    let base = DVector::from_iterator(beta.len(), fixed.iter().zip(pinned).map(|(f, p)| if *f { *p } else { 0.0 }));
    // Gradient of the quadratic in the free block: s² M_ff b_f = s g_f − s² M_fx b_x.
    let s = quad.step;
    let rhs = DVector::from_iterator(
        free.len(),
        free.iter().map(|&i| s * quad.g[i] - s * s * (quad.m.row(i) * &base)[0]),
    );
    let mff = nalgebra::DMatrix::from_fn(free.len(), free.len(), |a, b| s * s * quad.m[(free[a], free[b])]);
    let sol = mff.cholesky()?.solve(&rhs);
    for (k, &i) in free.iter().enumerate() {
        beta[i] = sol[k];
    }
    beta.iter().all(|v| v.is_finite()).then_some(beta)
}

fn joint(obs: &ObservationSeries, model: &ModelSpec) -> Result<LgaEstimate> {
    let m1 = model.m1();
    let f = |theta: &[f64]| {
        lga_qlik(&theta[..m1], &theta[m1..], obs, model).unwrap_or(f64::NEG_INFINITY)
    };
    let mut lower = model.alpha_box().lower();
    lower.extend(model.beta_box().lower());
    let mut upper = model.alpha_box().upper();
    upper.extend(model.beta_box().upper());
    let stage = run_stage(&f, lower, upper)?;
    let StageEstimate { params, value, report } = stage;
    let mut alpha = params[..m1].to_vec();
    let beta = params[m1..].to_vec();
    if let Some(canon) = model.canonical_alpha(&alpha) {
        alpha = canon;
    }
    Ok(LgaEstimate {
        alpha,
        beta,
        value,
        report,
        beta_report: None,
    })
}
