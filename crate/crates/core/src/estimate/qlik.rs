//! Local-mean quasi-likelihoods for the diffusion and drift parameters.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use super::affine::{Quadratic, QuadraticBuilder};
use crate::error::{Error, Result};
use crate::local_means::LocalMeanSeries;
use crate::model::matrix::determinant;
use crate::model::ModelSpec;
use crate::numeric::CompensatedSum;
use crate::optimize::{boundary_hits, default_starts, maximize, BoxProblem, OptimizerReport};

/// Maximizer of one quasi-likelihood stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageEstimate {
    pub params: Vec<f64>,
    pub value: f64,
    pub report: OptimizerReport,
}

pub(crate) fn factor(m: DMatrix<f64>, matrix: &'static str, block: usize) -> Result<Cholesky<f64, Dyn>> {
    let det = || determinant(&m);
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularBlock {
            matrix,
            block,
            determinant: f64::NAN,
        });
    }
    match m.clone().cholesky() {
        Some(chol) if chol.l_dirty().diagonal().iter().all(|v| *v > 0.0) => Ok(chol),
        _ => Err(Error::SingularBlock {
            matrix,
            block,
            determinant: det(),
        }),
    }
}

pub(crate) fn log_det(chol: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>()
}

fn check_inputs(lm: &LocalMeanSeries, model: &ModelSpec) -> Result<()> {
    model.check_dim(lm.dim())?;
    if lm.k() < 3 {
        return Err(Error::InsufficientData {
            needed: 3,
            available: lm.k(),
        });
    }
    Ok(())
}

fn difference(lm: &LocalMeanSeries, j: usize) -> DVector<f64> {
    DVector::from_iterator(lm.dim(), lm.mean(j + 1).iter().zip(lm.mean(j)).map(|(a, b)| a - b))
}

fn check_lambda(lambda: &DMatrix<f64>, d: usize) -> Result<()> {
    if lambda.nrows() != d || lambda.ncols() != d {
        return Err(Error::DimensionMismatch {
            what: "noise variance",
            expected: d,
            got: lambda.nrows(),
        });
    }
    Ok(())
}

/// Diffusion quasi-likelihood of `alpha` given a noise variance, summed over blocks `1..=k−2`.
pub fn qlik_h1(alpha: &[f64], lambda: &DMatrix<f64>, lm: &LocalMeanSeries, model: &ModelSpec) -> Result<f64> {
    check_inputs(lm, model)?;
    model.check_alpha(alpha)?;
    check_lambda(lambda, lm.dim())?;
    let shift = lambda * (3.0 * lm.scheme().noise_scale());
    let scale = 1.5 / lm.delta();
    let mut acc = CompensatedSum::new();
    for j in 1..=lm.k() - 2 {
        let a = model.diffusion_matrix(lm.mean(j - 1), alpha) + &shift;
        let chol = factor(a, "noise-adjusted diffusion matrix", j)?;
        let diff = difference(lm, j);
        acc.add(scale * diff.dot(&chol.solve(&diff)) + log_det(&chol));
    }
    Ok(-0.5 * acc.value())
}

/// Drift quasi-likelihood of `beta` given `alpha`, summed over blocks `1..=k−2`. Never positive.
pub fn qlik_h2(beta: &[f64], alpha: &[f64], lm: &LocalMeanSeries, model: &ModelSpec) -> Result<f64> {
    check_inputs(lm, model)?;
    model.check_alpha(alpha)?;
    model.check_beta(beta)?;
    let delta = lm.delta();
    let mut acc = CompensatedSum::new();
    for j in 1..=lm.k() - 2 {
        let x = lm.mean(j - 1);
        let chol = factor(model.diffusion_matrix(x, alpha), "diffusion matrix", j)?;
        let res = difference(lm, j) - model.drift(x, beta) * delta;
        acc.add(res.dot(&chol.solve(&res)) / delta);
    }
    Ok(-0.5 * acc.value())
}

/// `qlik_h1` prepared for repeated evaluation in `alpha`.
pub(crate) enum H1Objective<'a> {
    /// State-independent diffusion: only `Σ D_j D_jᵀ` matters.
    Constant {
        model: &'a ModelSpec,
        x: Vec<f64>,
        shift: DMatrix<f64>,
        outer: DMatrix<f64>,
        blocks: f64,
        scale: f64,
    },
    Generic {
        model: &'a ModelSpec,
        lm: &'a LocalMeanSeries,
        lambda: &'a DMatrix<f64>,
    },
}

impl<'a> H1Objective<'a> {
    pub fn new(lm: &'a LocalMeanSeries, lambda: &'a DMatrix<f64>, model: &'a ModelSpec) -> Result<Self> {
        check_inputs(lm, model)?;
        check_lambda(lambda, lm.dim())?;
        if !model.has_constant_diffusion() {
            return Ok(Self::Generic { model, lm, lambda });
        }
        let d = lm.dim();
        let mut acc = vec![CompensatedSum::new(); d * d];
        for j in 1..=lm.k() - 2 {
            let diff = difference(lm, j);
            for c in 0..d {
                for r in 0..d {
                    acc[c * d + r].add(diff[r] * diff[c]);
                }
            }
        }
        let outer = DMatrix::from_iterator(d, d, acc.iter().map(CompensatedSum::value));
        Ok(Self::Constant {
            model,
            x: lm.mean(0).to_vec(),
            shift: lambda * (3.0 * lm.scheme().noise_scale()),
            outer,
            blocks: (lm.k() - 2) as f64,
            scale: 1.5 / lm.delta(),
        })
    }

    pub fn value(&self, alpha: &[f64]) -> Result<f64> {
        match self {
            Self::Constant {
                model,
                x,
                shift,
                outer,
                blocks,
                scale,
            } => {
                let chol = factor(model.diffusion_matrix(x, alpha) + shift, "noise-adjusted diffusion matrix", 1)?;
                let quad = chol.solve(outer).trace();
                Ok(-0.5 * (scale * quad + blocks * log_det(&chol)))
            }
            Self::Generic { model, lm, lambda } => qlik_h1(alpha, lambda, lm, model),
        }
    }
}

/// `qlik_h2` prepared for repeated evaluation in `beta` at fixed `alpha`.
pub(crate) enum H2Objective<'a> {
    /// Affine drift: an explicit quadratic in `beta`.
    Affine(Quadratic),
    Generic {
        model: &'a ModelSpec,
        lm: &'a LocalMeanSeries,
        factors: Vec<Cholesky<f64, Dyn>>,
    },
}

impl<'a> H2Objective<'a> {
    pub fn new(lm: &'a LocalMeanSeries, alpha: &[f64], model: &'a ModelSpec) -> Result<Self> {
        check_inputs(lm, model)?;
        model.check_alpha(alpha)?;
        let k = lm.k();
        let mut factors = Vec::with_capacity(k - 2);
        let shared = if model.has_constant_diffusion() {
            Some(factor(model.diffusion_matrix(lm.mean(0), alpha), "diffusion matrix", 1)?)
        } else {
            None
        };
        if !model.has_affine_drift() {
            for j in 1..=k - 2 {
                factors.push(match &shared {
                    Some(f) => f.clone(),
                    None => factor(model.diffusion_matrix(lm.mean(j - 1), alpha), "diffusion matrix", j)?,
                });
            }
            return Ok(Self::Generic { model, lm, factors });
        }
        let d = lm.dim();
        let m2 = model.m2();
        let delta = lm.delta();
        let zero = vec![0.0; m2];
        let shared_inv = shared.as_ref().map(|f| f.inverse());
        let mut terms = Vec::with_capacity(k - 2);
        let mut builder = QuadraticBuilder::new(d, m2, delta);
        for j in 1..=k - 2 {
            let x = lm.mean(j - 1);
            let p = match &shared_inv {
                Some(p) => p.clone(),
                None => factor(model.diffusion_matrix(x, alpha), "diffusion matrix", j)?.inverse(),
            };
            let r = difference(lm, j) - model.drift(x, &zero) * delta;
            let jac = model.drift_jacobian(x, &zero);
            builder.add(&r, &jac, &p);
            terms.push((r, jac, p));
        }
        let mut quad = builder.finish();
        if let Some(star) = quad.minimizer() {
            let min: CompensatedSum = terms
                .iter()
                .map(|(r, jac, p)| {
                    let res = r - jac * &star * delta;
                    res.dot(&(p * &res))
                })
                .collect();
            quad.center = Some((star, min.value()));
        }
        Ok(Self::Affine(quad))
    }

    pub fn value(&self, beta: &[f64]) -> f64 {
        match self {
            Self::Affine(q) => -0.5 * q.eval(beta) / q.step,
            Self::Generic { model, lm, factors } => {
                let delta = lm.delta();
                let mut acc = CompensatedSum::new();
                for (j, chol) in (1..=lm.k() - 2).zip(factors) {
                    let x = lm.mean(j - 1);
                    let res = difference(lm, j) - model.drift(x, beta) * delta;
                    acc.add(res.dot(&chol.solve(&res)) / delta);
                }
                -0.5 * acc.value()
            }
        }
    }
}

pub(crate) fn run_stage(
    objective: &dyn Fn(&[f64]) -> f64,
    lower: Vec<f64>,
    upper: Vec<f64>,
) -> Result<StageEstimate> {
    let starts = default_starts(objective, &lower, &upper);
    let problem = BoxProblem::new(objective, lower, upper).with_starts(starts);
    let max = maximize(&problem)?;
    if !max.report.converged {
        return Err(Error::NonConvergence {
            best: max.argmax,
            value: max.value,
            iterations: max.report.iterations,
        });
    }
    Ok(StageEstimate {
        params: max.argmax,
        value: max.value,
        report: max.report,
    })
}

/// Replaces `alpha` by the model's canonical representative when it has one.
pub(crate) fn canonicalize(stage: &mut StageEstimate, model: &ModelSpec, objective: &dyn Fn(&[f64]) -> f64) {
    if let Some(canon) = model.canonical_alpha(&stage.params) {
        let value = objective(&canon);
        if value.is_finite() && value >= stage.value - 1e-9 * (1.0 + stage.value.abs()) {
            stage.report.boundary_hits = boundary_hits(&canon, &model.alpha_box().lower(), &model.alpha_box().upper());
            stage.params = canon;
            stage.value = value;
        }
    }
}

/// Box-constrained maximizer of [`qlik_h1`] over the model's alpha box.
pub fn estimate_alpha(lm: &LocalMeanSeries, lambda_hat: &DMatrix<f64>, model: &ModelSpec) -> Result<StageEstimate> {
    let objective = H1Objective::new(lm, lambda_hat, model)?;
    let f = |a: &[f64]| objective.value(a).unwrap_or(f64::NEG_INFINITY);
    let bx = model.alpha_box();
    let mut stage = run_stage(&f, bx.lower(), bx.upper())?;
    canonicalize(&mut stage, model, &f);
    Ok(stage)
}

/// Box-constrained maximizer of [`qlik_h2`] over the model's beta box.
pub fn estimate_beta(lm: &LocalMeanSeries, alpha_hat: &[f64], model: &ModelSpec) -> Result<StageEstimate> {
    let objective = H2Objective::new(lm, alpha_hat, model)?;
    let f = |b: &[f64]| objective.value(b);
    let bx = model.beta_box();
    run_stage(&f, bx.lower(), bx.upper())
}

/// The objective the optimizer sees for the diffusion stage; `-inf` where [`qlik_h1`] errors.
pub fn h1_objective<'a>(
    lm: &'a LocalMeanSeries,
    lambda: &'a DMatrix<f64>,
    model: &'a ModelSpec,
) -> Result<impl Fn(&[f64]) -> f64 + 'a> {
    let objective = H1Objective::new(lm, lambda, model)?;
    Ok(move |a: &[f64]| objective.value(a).unwrap_or(f64::NEG_INFINITY))
}

/// The objective the optimizer sees for the drift stage at fixed `alpha`.
pub fn h2_objective<'a>(
    lm: &'a LocalMeanSeries,
    alpha: &[f64],
    model: &'a ModelSpec,
) -> Result<impl Fn(&[f64]) -> f64 + 'a> {
    let objective = H2Objective::new(lm, alpha, model)?;
    Ok(move |b: &[f64]| objective.value(b))
}
