//! Block sampling scheme: `h = p^(-tau)` with `k` non-overlapping blocks of `p` observations.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingScheme {
    /// Number of observation increments.
    pub n: usize,
    /// Discretisation step.
    pub h: f64,
    pub tau: f64,
    /// Block length.
    pub p: usize,
    /// Number of blocks.
    pub k: usize,
    /// Block duration `p * h`.
    pub delta: f64,
}

impl SamplingScheme {
    /// Observations beyond `k * p` that no block uses.
    pub fn unused(&self) -> usize {
        self.n - self.k * self.p
    }

    /// `k * delta^2`, reported for judging the asymptotic regime.
    pub fn k_delta_squared(&self) -> f64 {
        self.k as f64 * self.delta * self.delta
    }

    pub fn nh(&self) -> f64 {
        self.n as f64 * self.h
    }

    pub fn nh_squared(&self) -> f64 {
        self.n as f64 * self.h * self.h
    }

    /// `delta^((2 - tau) / (tau - 1))`, exactly 1 at `tau = 2`.
    pub fn noise_scale(&self) -> f64 {
        if self.tau == 2.0 {
            return 1.0;
        }
        let exponent = (2.0 - self.tau) / (self.tau - 1.0);
        (exponent * self.delta.ln()).exp()
    }
}

/// Validates `tau` and returns it.
pub fn check_tau(tau: f64) -> Result<f64> {
    if !(tau > 1.0 && tau <= 2.0) {
        return Err(Error::InvalidScheme(format!("tau = {tau} is outside (1, 2]")));
    }
    Ok(tau)
}

/// Block length `floor(h^(-1/tau))`.
///
/// Values within 1e-9 relative of an integer snap to it so that exact powers
/// such as `0.01^(-1/2) = 10` are not lost to rounding.
pub fn block_length(h: f64, tau: f64) -> usize {
    let x = (-h.ln() / tau).exp();
    let nearest = x.round();
    let p = if (x - nearest).abs() <= 1e-9 * x {
        nearest
    } else {
        x.floor()
    };
    p.max(1.0) as usize
}

pub fn derive_scheme(n: usize, h: f64, tau: f64) -> Result<SamplingScheme> {
    check_tau(tau)?;
    if n < 4 {
        return Err(Error::InvalidScheme(format!("n = {n} must be at least 4")));
    }
    if !(h > 0.0 && h < 1.0) {
        return Err(Error::InvalidScheme(format!("h = {h} is outside (0, 1)")));
    }
    let p = block_length(h, tau);
    let k = n / p;
    if k < 3 {
        return Err(Error::InvalidScheme(format!(
            "only {k} blocks of length {p} fit in {n} increments (need at least 3)"
        )));
    }
    Ok(SamplingScheme {
        n,
        h,
        tau,
        p,
        k,
        delta: p as f64 * h,
    })
}
