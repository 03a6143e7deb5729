//! Quadratic forms arising when the drift is affine in `beta`.
//!
//! With `b(x, beta) = b(x, 0) + J(x) beta`, a Gaussian residual sum
//! `Σ (r_i − s J_i beta)ᵀ P_i (r_i − s J_i beta)` is an explicit quadratic in
//! `beta`, so it can be summarized once and evaluated in `O(m2²)`.

use nalgebra::{DMatrix, DVector};

use crate::model::ModelSpec;
use crate::numeric::CompensatedSum;

/// `c0 − 2 s betaᵀ g + s² betaᵀ M beta`.
#[derive(Debug, Clone)]
pub(crate) struct Quadratic {
    pub step: f64,
    pub c0: f64,
    pub g: DVector<f64>,
    pub m: DMatrix<f64>,
    /// Minimizer and minimum, when known; evaluation then avoids cancellation.
    pub center: Option<(DVector<f64>, f64)>,
}

impl Quadratic {
    pub fn eval(&self, beta: &[f64]) -> f64 {
        let b = DVector::from_column_slice(beta);
        let s = self.step;
        match &self.center {
            Some((star, min)) => {
                let e = b - star;
                min + s * s * e.dot(&(&self.m * &e))
            }
            None => self.c0 - 2.0 * s * b.dot(&self.g) + s * s * b.dot(&(&self.m * &b)),
        }
    }

    /// Unconstrained minimizer, if `M` is positive definite.
    pub fn minimizer(&self) -> Option<DVector<f64>> {
        let chol = self.m.clone().cholesky()?;
        let sol = chol.solve(&self.g) / self.step;
        sol.iter().all(|v| v.is_finite()).then_some(sol)
    }
}

/// Accumulates per-term weighted contributions into a [`Quadratic`].
pub(crate) struct QuadraticBuilder {
    d: usize,
    m2: usize,
    step: f64,
    c0: CompensatedSum,
    g: Vec<CompensatedSum>,
    m: Vec<CompensatedSum>,
}

impl QuadraticBuilder {
    pub fn new(d: usize, m2: usize, step: f64) -> Self {
        Self {
            d,
            m2,
            step,
            c0: CompensatedSum::new(),
            g: vec![CompensatedSum::new(); m2],
            m: vec![CompensatedSum::new(); m2 * m2],
        }
    }

    /// Adds the term for residual offset `r = incr − s b(x, 0)`, Jacobian `jac` and weight `p`.
    pub fn add(&mut self, r: &DVector<f64>, jac: &DMatrix<f64>, p: &DMatrix<f64>) {
        let pr = p * r;
        self.c0.add(r.dot(&pr));
        let g = jac.transpose() * &pr;
        for (acc, v) in self.g.iter_mut().zip(g.iter()) {
            acc.add(*v);
        }
        let m = jac.transpose() * (p * jac);
        for (acc, v) in self.m.iter_mut().zip(m.iter()) {
            acc.add(*v);
        }
        debug_assert_eq!(r.len(), self.d);
    }

    pub fn finish(self) -> Quadratic {
        let m2 = self.m2;
        let m = DMatrix::from_iterator(m2, m2, self.m.iter().map(CompensatedSum::value));
        Quadratic {
            step: self.step,
            c0: self.c0.value(),
            g: DVector::from_iterator(m2, self.g.iter().map(CompensatedSum::value)),
            m: (&m + m.transpose()) * 0.5,
            center: None,
        }
    }
}

/// Weight-free summary of `(r_i, J_i)` pairs, from which the [`Quadratic`]
/// for any constant weight `P` is assembled in `O(d² m2²)`.
#[derive(Debug, Clone)]
pub(crate) struct AffineStats {
    d: usize,
    m2: usize,
    step: f64,
    /// `Σ r rᵀ`.
    rr: DMatrix<f64>,
    /// Entry `a·d + b`: `Σ J[a,:]ᵀ J[b,:]`.
    jj: Vec<DMatrix<f64>>,
    /// Entry `a·d + b`: `Σ J[a,:]ᵀ r[b]`.
    jr: Vec<DVector<f64>>,
}

impl AffineStats {
    /// Builds the summary from `(x_i, increment_i)` pairs.
    pub fn new<'a>(model: &ModelSpec, pairs: impl Iterator<Item = (&'a [f64], &'a [f64])>, step: f64) -> Self {
        let d = model.d();
        let m2 = model.m2();
        let zero = vec![0.0; m2];
        let mut rr = vec![CompensatedSum::new(); d * d];
        let mut jj = vec![CompensatedSum::new(); d * d * m2 * m2];
        let mut jr = vec![CompensatedSum::new(); d * d * m2];
        let mut r = vec![0.0; d];
        for (x, next) in pairs {
            let b0 = model.drift(x, &zero);
            let jac = model.drift_jacobian(x, &zero);
            for l in 0..d {
                r[l] = next[l] - x[l] - step * b0[l];
            }
            for a in 0..d {
                for b in 0..d {
                    rr[a * d + b].add(r[a] * r[b]);
                    let base = (a * d + b) * m2;
                    for u in 0..m2 {
                        jr[base + u].add(jac[(a, u)] * r[b]);
                    }
                    let base = (a * d + b) * m2 * m2;
                    for v in 0..m2 {
                        for u in 0..m2 {
                            jj[base + v * m2 + u].add(jac[(a, u)] * jac[(b, v)]);
                        }
                    }
                }
            }
        }
        let rr = DMatrix::from_iterator(d, d, rr.iter().map(CompensatedSum::value));
        let jj = (0..d * d)
            .map(|ab| DMatrix::from_fn(m2, m2, |u, v| jj[(ab * m2 + v) * m2 + u].value()))
            .collect();
        let jr = (0..d * d)
            .map(|ab| DVector::from_fn(m2, |u, _| jr[ab * m2 + u].value()))
            .collect();
        Self {
            d,
            m2,
            step,
            rr: (&rr + rr.transpose()) * 0.5,
            jj,
            jr,
        }
    }

    pub fn quadratic(&self, p: &DMatrix<f64>) -> Quadratic {
        let (d, m2) = (self.d, self.m2);
        let mut g = DVector::zeros(m2);
        let mut m = DMatrix::zeros(m2, m2);
        for a in 0..d {
            for b in 0..d {
                let w = p[(a, b)];
                if w != 0.0 {
                    g.axpy(w, &self.jr[a * d + b], 1.0);
                    m += &self.jj[a * d + b] * w;
                }
            }
        }
        Quadratic {
            step: self.step,
            c0: p.dot(&self.rr),
            g,
            m: (&m + m.transpose()) * 0.5,
            center: None,
        }
    }
}
