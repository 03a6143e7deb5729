//! Box-constrained maximization.
//!
//! Each start runs a projected Nelder–Mead simplex (adaptive coefficients),
//! restarted once from its best vertex with a shrunk simplex. The best start
//! is then optionally refined by a projected BFGS iteration driven by
//! central-difference gradients. Coordinates whose bounds coincide are held
//! fixed and excluded from the search.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::stream_rng;

/// Distance to a bound below which a coordinate is flagged as a boundary hit.
pub const BOUNDARY_TOL: f64 = 1e-6;

/// Default relative simplex-diameter tolerance.
pub const DEFAULT_TOL: f64 = 1e-8;

/// Label keying the random-start stream.
pub const RANDOM_START_LABEL: u64 = 0x6f70_7469_6d69_7a65;

pub struct BoxProblem<'a> {
    pub objective: &'a dyn Fn(&[f64]) -> f64,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub starts: Vec<Vec<f64>>,
    /// Nelder–Mead iterations per run; `None` means `500 · dim`.
    pub max_iters: Option<usize>,
    pub tol: f64,
    /// Refine the best start with projected quasi-Newton steps.
    pub polish: bool,
}

impl<'a> BoxProblem<'a> {
    pub fn new(objective: &'a dyn Fn(&[f64]) -> f64, lower: Vec<f64>, upper: Vec<f64>) -> Self {
        Self {
            objective,
            lower,
            upper,
            starts: Vec::new(),
            max_iters: None,
            tol: DEFAULT_TOL,
            polish: true,
        }
    }

    pub fn with_starts(mut self, starts: Vec<Vec<f64>>) -> Self {
        self.starts = starts;
        self
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn center(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| 0.5 * (l + u))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartReport {
    pub start: Vec<f64>,
    pub start_value: f64,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerReport {
    /// Total objective-improvement iterations over all starts and the polish.
    pub iterations: usize,
    pub converged: bool,
    /// Per coordinate: within [`BOUNDARY_TOL`] of a (non-degenerate) bound.
    pub boundary_hits: Vec<bool>,
    pub best_start: usize,
    pub starts: Vec<StartReport>,
    pub polish_iterations: usize,
}

impl OptimizerReport {
    pub fn any_boundary_hit(&self) -> bool {
        self.boundary_hits.iter().any(|b| *b)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Maximum {
    pub argmax: Vec<f64>,
    pub value: f64,
    pub report: OptimizerReport,
}

/// `count` uniform points inside the box from the fixed-label stream.
pub fn random_interior_points(lower: &[f64], upper: &[f64], count: usize, label: u64) -> Vec<Vec<f64>> {
    let mut rng = stream_rng(label, lower.len() as u64);
    (0..count)
        .map(|_| {
            lower
                .iter()
                .zip(upper)
                .map(|(l, u)| {
                    if l == u {
                        *l
                    } else {
                        l + (u - l) * rng.random::<f64>()
                    }
                })
                .collect()
        })
        .collect()
}

/// Per coordinate: within [`BOUNDARY_TOL`] of a bound, ignoring fixed coordinates.
pub fn boundary_hits(x: &[f64], lower: &[f64], upper: &[f64]) -> Vec<bool> {
    x.iter()
        .zip(lower.iter().zip(upper))
        .map(|(v, (l, u))| l < u && ((v - l).abs() <= BOUNDARY_TOL || (u - v).abs() <= BOUNDARY_TOL))
        .collect()
}

/// Number of random interior starts added to the box center.
pub const RANDOM_STARTS: usize = 4;

/// Box center plus up to [`RANDOM_STARTS`] random interior points, keeping
/// only points where `f` is finite. Falls back to the bare center.
pub fn default_starts(f: &dyn Fn(&[f64]) -> f64, lower: &[f64], upper: &[f64]) -> Vec<Vec<f64>> {
    let center: Vec<f64> = lower.iter().zip(upper).map(|(l, u)| 0.5 * (l + u)).collect();
    let mut starts = Vec::with_capacity(RANDOM_STARTS + 1);
    if f(&center).is_finite() {
        starts.push(center.clone());
    }
    let candidates = random_interior_points(lower, upper, 10 * RANDOM_STARTS, RANDOM_START_LABEL);
    starts.extend(
        candidates
            .into_iter()
            .filter(|x| f(x).is_finite())
            .take(RANDOM_STARTS),
    );
    if starts.is_empty() {
        starts.push(center);
    }
    starts
}

/// Central-difference gradient, falling back to one-sided differences at the bounds.
pub fn numeric_gradient(f: &dyn Fn(&[f64]) -> f64, x: &[f64], lower: &[f64], upper: &[f64]) -> Vec<f64> {
    let mut work = x.to_vec();
    (0..x.len())
        .map(|i| {
            if lower[i] == upper[i] {
                return 0.0;
            }
            let step = GRAD_STEP * (1.0 + x[i].abs());
            let hi = (x[i] + step).min(upper[i]);
            let lo = (x[i] - step).max(lower[i]);
            work[i] = hi;
            let fp = f(&work);
            work[i] = lo;
            let fm = f(&work);
            work[i] = x[i];
            (fp - fm) / (hi - lo)
        })
        .collect()
}

/// Relative finite-difference step, about the cube root of machine epsilon.
const GRAD_STEP: f64 = 6e-6;

pub fn maximize(problem: &BoxProblem<'_>) -> Result<Maximum> {
    let dim = problem.dim();
    if problem.upper.len() != dim {
        return Err(Error::DimensionMismatch {
            what: "upper bounds",
            expected: dim,
            got: problem.upper.len(),
        });
    }
    for i in 0..dim {
        if problem.lower[i] > problem.upper[i] || !problem.lower[i].is_finite() || !problem.upper[i].is_finite() {
            return Err(Error::InvalidArgument(format!(
                "bounds [{}, {}] of coordinate {i} do not form a finite interval",
                problem.lower[i], problem.upper[i]
            )));
        }
    }
    let starts = if problem.starts.is_empty() {
        vec![problem.center()]
    } else {
        problem.starts.clone()
    };

    let free: Vec<usize> = (0..dim).filter(|&i| problem.lower[i] < problem.upper[i]).collect();
    let space = Subspace {
        problem,
        free: &free,
    };

    let mut reports = Vec::with_capacity(starts.len());
    let mut best: Option<(usize, Vec<f64>, f64)> = None;
    let mut total_iters = 0;
    for (index, start) in starts.iter().enumerate() {
        if start.len() != dim {
            return Err(Error::DimensionMismatch {
                what: "start point",
                expected: dim,
                got: start.len(),
            });
        }
        if !start
            .iter()
            .enumerate()
            .all(|(i, v)| *v >= problem.lower[i] && *v <= problem.upper[i])
        {
            return Err(Error::InvalidArgument(format!("start point {index} lies outside the box")));
        }
        let start_value = (problem.objective)(start);
        if !start_value.is_finite() {
            return Err(Error::NonFiniteStart { index });
        }
        let run = space.nelder_mead_with_restart(start, start_value);
        total_iters += run.iterations;
        let full = space.embed(start, &run.point);
        if best.as_ref().is_none_or(|(_, _, v)| run.value > *v) {
            best = Some((index, full, run.value));
        }
        reports.push(StartReport {
            start: start.clone(),
            start_value,
            value: run.value,
            iterations: run.iterations,
            converged: run.converged,
        });
    }
    let (best_start, mut argmax, mut value) = best.expect("at least one start");
    let mut converged = reports[best_start].converged;

    let mut polish_iterations = 0;
    if problem.polish && !free.is_empty() {
        let refined = space.quasi_newton(&argmax, value);
        polish_iterations = refined.iterations;
        if refined.value >= value {
            argmax = refined.point;
            value = refined.value;
            converged |= refined.converged;
        }
    }
    total_iters += polish_iterations;

    let boundary_hits = boundary_hits(&argmax, &problem.lower, &problem.upper);

    Ok(Maximum {
        argmax,
        value,
        report: OptimizerReport {
            iterations: total_iters,
            converged,
            boundary_hits,
            best_start,
            starts: reports,
            polish_iterations,
        },
    })
}

struct Run {
    point: Vec<f64>,
    value: f64,
    iterations: usize,
    converged: bool,
}

/// The free coordinates of a problem; fixed ones stay at their bound.
struct Subspace<'p, 'a> {
    problem: &'p BoxProblem<'a>,
    free: &'p [usize],
}

impl Subspace<'_, '_> {
    fn n(&self) -> usize {
        self.free.len()
    }

    fn embed(&self, template: &[f64], free_values: &[f64]) -> Vec<f64> {
        let mut x = template.to_vec();
        for (i, &idx) in self.free.iter().enumerate() {
            x[idx] = free_values[i];
        }
        for (i, v) in x.iter_mut().enumerate() {
            if self.problem.lower[i] == self.problem.upper[i] {
                *v = self.problem.lower[i];
            }
        }
        x
    }

    fn restrict(&self, x: &[f64]) -> Vec<f64> {
        self.free.iter().map(|&i| x[i]).collect()
    }

    fn lower(&self, i: usize) -> f64 {
        self.problem.lower[self.free[i]]
    }

    fn upper(&self, i: usize) -> f64 {
        self.problem.upper[self.free[i]]
    }

    fn project(&self, z: &mut [f64]) {
        for (i, v) in z.iter_mut().enumerate() {
            *v = v.clamp(self.lower(i), self.upper(i));
        }
    }

    /// Negated objective on the free coordinates; non-finite maps to +inf.
    fn cost(&self, template: &[f64], z: &[f64]) -> f64 {
        let v = (self.problem.objective)(&self.embed(template, z));
        if v.is_finite() {
            -v
        } else {
            f64::INFINITY
        }
    }

    fn nelder_mead_with_restart(&self, start: &[f64], start_value: f64) -> Run {
        if self.n() == 0 {
            return Run {
                point: Vec::new(),
                value: start_value,
                iterations: 0,
                converged: true,
            };
        }
        let z0 = self.restrict(start);
        let steps: Vec<f64> = (0..self.n())
            .map(|i| {
                let width = self.upper(i) - self.lower(i);
                (0.1 * width).min(0.1 * z0[i].abs().max(1.0))
            })
            .collect();
        let first = self.nelder_mead(start, &z0, -start_value, &steps);
        let shrunk: Vec<f64> = steps.iter().map(|s| 0.1 * s).collect();
        let second = self.nelder_mead(start, &first.point, -first.value, &shrunk);
        let iterations = first.iterations + second.iterations;
        if second.value >= first.value {
            Run {
                iterations,
                ..second
            }
        } else {
            Run { iterations, ..first }
        }
    }

    /// Minimizes `cost` from `z0` (whose cost is `c0`); returns the maximized objective value.
    fn nelder_mead(&self, template: &[f64], z0: &[f64], c0: f64, steps: &[f64]) -> Run {
        let n = self.n();
        let max_iters = self.problem.max_iters.unwrap_or(500 * self.problem.dim().max(1));
        let nf = n as f64;
        let (rho, chi, gamma, sigma) = (1.0, 1.0 + 2.0 / nf, 0.75 - 0.5 / nf, 1.0 - 1.0 / nf);

        let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
        simplex.push((z0.to_vec(), c0));
        for i in 0..n {
            let mut z = z0.to_vec();
            let step = if z[i] + steps[i] <= self.upper(i) {
                steps[i]
            } else {
                -steps[i]
            };
            z[i] += step;
            self.project(&mut z);
            let c = self.cost(template, &z);
            simplex.push((z, c));
        }

        let mut iterations = 0;
        let mut converged = false;
        let mut centroid = vec![0.0; n];
        let mut trial = vec![0.0; n];
        loop {
            // Stable sort keeps earlier (older) vertices first on ties.
            simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
            let best = &simplex[0].0;
            let norm = best.iter().map(|v| v * v).sum::<f64>().sqrt();
            let diameter = simplex[1..]
                .iter()
                .map(|(z, _)| {
                    z.iter()
                        .zip(best)
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                        .sqrt()
                })
                .fold(0.0, f64::max);
            if diameter < self.problem.tol * (1.0 + norm) {
                converged = true;
                break;
            }
            if iterations >= max_iters {
                break;
            }
            iterations += 1;

            centroid.iter_mut().for_each(|c| *c = 0.0);
            for (z, _) in &simplex[..n] {
                for (c, v) in centroid.iter_mut().zip(z) {
                    *c += v / nf;
                }
            }
            let worst = simplex[n].clone();
            let along = |coef: f64, out: &mut Vec<f64>| {
                for i in 0..n {
                    out[i] = centroid[i] + coef * (centroid[i] - worst.0[i]);
                }
                self.project(out);
            };

            along(rho, &mut trial);
            let reflected = (trial.clone(), self.cost(template, &trial));
            if reflected.1 < simplex[0].1 {
                along(rho * chi, &mut trial);
                let expanded = self.cost(template, &trial);
                simplex[n] = if expanded < reflected.1 {
                    (trial.clone(), expanded)
                } else {
                    reflected
                };
                continue;
            }
            if reflected.1 < simplex[n - 1].1 {
                simplex[n] = reflected;
                continue;
            }
            let contracted = if reflected.1 < worst.1 {
                along(rho * gamma, &mut trial);
                let c = self.cost(template, &trial);
                (c <= reflected.1).then(|| (trial.clone(), c))
            } else {
                along(-gamma, &mut trial);
                let c = self.cost(template, &trial);
                (c < worst.1).then(|| (trial.clone(), c))
            };
            if let Some(v) = contracted {
                simplex[n] = v;
                continue;
            }
            let anchor = simplex[0].0.clone();
            for (z, c) in simplex[1..].iter_mut() {
                for (v, a) in z.iter_mut().zip(&anchor) {
                    *v = a + sigma * (*v - a);
                }
                *c = self.cost(template, z);
            }
        }
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let (point, c) = simplex.swap_remove(0);
        Run {
            point,
            value: -c,
            iterations,
            converged,
        }
    }

    fn gradient(&self, template: &[f64], z: &[f64]) -> Vec<f64> {
        let f = |w: &[f64]| -self.cost(template, w);
        let lower: Vec<f64> = (0..self.n()).map(|i| self.lower(i)).collect();
        let upper: Vec<f64> = (0..self.n()).map(|i| self.upper(i)).collect();
        numeric_gradient(&f, z, &lower, &upper)
            .into_iter()
            .map(|g| -g)
            .collect()
    }

    /// Projected BFGS on the cost, starting from a full-space point.
    fn quasi_newton(&self, x0: &[f64], value0: f64) -> Run {
        const MAX_ITERS: usize = 200;
        let n = self.n();
        let template = x0;
        let mut z = self.restrict(x0);
        let mut c = -value0;
        let mut g = self.gradient(template, &z);
        let mut h_inv = identity(n);
        let mut active = self.active_set(&z, &g);
        let mut iterations = 0;
        let mut converged = false;

        while iterations < MAX_ITERS {
            let pg: f64 = (0..n)
                .filter(|i| !active[*i])
                .map(|i| g[i] * g[i])
                .sum::<f64>()
                .sqrt();
            if pg <= 1e-10 * (1.0 + c.abs()) {
                converged = true;
                break;
            }
            let mut dir = vec![0.0; n];
            for i in (0..n).filter(|i| !active[*i]) {
                for j in (0..n).filter(|j| !active[*j]) {
                    dir[i] -= h_inv[i][j] * g[j];
                }
            }
            let slope: f64 = dir.iter().zip(&g).map(|(d, g)| d * g).sum();
            if slope >= 0.0 {
                h_inv = identity(n);
                for i in 0..n {
                    dir[i] = if active[i] { 0.0 } else { -g[i] };
                }
            }
            if iterations == 0 {
                // Keep the first step on the scale of the current point.
                let len = dir.iter().map(|d| d * d).sum::<f64>().sqrt();
                let cap = 0.1 * (1.0 + z.iter().map(|v| v * v).sum::<f64>().sqrt());
                if len > cap {
                    dir.iter_mut().for_each(|d| *d *= cap / len);
                }
            }

            let mut t = 1.0;
            let mut accepted = None;
            for _ in 0..60 {
                let mut trial: Vec<f64> = z.iter().zip(&dir).map(|(a, d)| a + t * d).collect();
                self.project(&mut trial);
                let ct = self.cost(template, &trial);
                let decrease: f64 = trial
                    .iter()
                    .zip(&z)
                    .zip(&g)
                    .map(|((a, b), gi)| (a - b) * gi)
                    .sum();
                if ct.is_finite() && ct <= c + 1e-4 * decrease {
                    accepted = Some((trial, ct));
                    break;
                }
                t *= 0.5;
            }
            let Some((z_new, c_new)) = accepted else {
                break;
            };
            iterations += 1;
            let g_new = self.gradient(template, &z_new);
            let s: Vec<f64> = z_new.iter().zip(&z).map(|(a, b)| a - b).collect();
            let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
            let step_norm = s.iter().map(|v| v * v).sum::<f64>().sqrt();
            let small_change = (c - c_new).abs() <= 1e-15 * (1.0 + c.abs());
            z = z_new;
            c = c_new;
            g = g_new;

            let new_active = self.active_set(&z, &g);
            if new_active != active {
                active = new_active;
                h_inv = identity(n);
            } else {
                bfgs_update(&mut h_inv, &s, &y, &active);
            }
            let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
            if step_norm <= 1e-12 * (1.0 + norm) && small_change {
                converged = true;
                break;
            }
        }
        Run {
            point: self.embed(template, &z),
            value: -c,
            iterations,
            converged,
        }
    }

    /// Coordinates pinned at a bound with the gradient pushing outward.
    fn active_set(&self, z: &[f64], g: &[f64]) -> Vec<bool> {
        (0..self.n())
            .map(|i| (z[i] <= self.lower(i) && g[i] > 0.0) || (z[i] >= self.upper(i) && g[i] < 0.0))
            .collect()
    }
}

fn identity(n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect()
}

fn bfgs_update(h: &mut [Vec<f64>], s: &[f64], y: &[f64], active: &[bool]) {
    let n = s.len();
    let sy: f64 = (0..n).filter(|i| !active[*i]).map(|i| s[i] * y[i]).sum();
    if sy <= 1e-300 {
        return;
    }
    let yy: f64 = (0..n).filter(|i| !active[*i]).map(|i| y[i] * y[i]).sum();
    let is_first = (0..n).all(|i| (0..n).all(|j| h[i][j] == if i == j { 1.0 } else { 0.0 }));
    if is_first && yy > 0.0 {
        let scale = sy / yy;
        for (i, row) in h.iter_mut().enumerate() {
            row[i] = scale;
        }
    }
    let rho = 1.0 / sy;
    let hy: Vec<f64> = (0..n)
        .map(|i| (0..n).filter(|j| !active[*j]).map(|j| h[i][j] * y[j]).sum())
        .collect();
    let yhy: f64 = (0..n).filter(|i| !active[*i]).map(|i| y[i] * hy[i]).sum();
    for i in (0..n).filter(|i| !active[*i]) {
        for j in (0..n).filter(|j| !active[*j]) {
            h[i][j] += (1.0 + rho * yhy) * rho * s[i] * s[j] - rho * (hy[i] * s[j] + s[i] * hy[j]);
        }
    }
}
