//! Published results for the 2-D OU study at `n = 10⁶`, 1000 replications.

use serde::{Deserialize, Serialize};

use super::config::EstimatorKind;
use crate::error::Result;

const REFERENCE_JSON: &str = include_str!("../../data/reference_tables.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceScheme {
    pub n: usize,
    /// As printed, rounded to seven significant digits.
    pub h: f64,
    pub tau: f64,
    pub p: usize,
    pub k: usize,
    pub delta: f64,
    pub k_delta_squared: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceRejection {
    pub noise_scale: f64,
    pub tau: f64,
    pub level: f64,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceEstimate {
    pub noise_scale: f64,
    pub estimator: EstimatorKind,
    /// `None` for LGA, and for noise-variance rows shared by all `τ`.
    pub tau: Option<f64>,
    pub coordinate: String,
    pub truth: f64,
    pub mean: f64,
    pub rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceTables {
    pub description: String,
    pub n: usize,
    pub gamma: f64,
    pub replications: usize,
    pub x0: Vec<f64>,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub schemes: Vec<ReferenceScheme>,
    pub rejection: Vec<ReferenceRejection>,
    pub estimates: Vec<ReferenceEstimate>,
}

impl ReferenceTables {
    pub fn load() -> Result<Self> {
        Ok(serde_json::from_str(REFERENCE_JSON)?)
    }

    pub fn rejection_rate(&self, noise_scale: f64, tau: f64, level: f64) -> Option<f64> {
        self.rejection
            .iter()
            .find(|r| r.noise_scale == noise_scale && r.tau == tau && r.level == level)
            .map(|r| r.rate)
    }

    /// Looks up a row; noise-variance rows are found for any `τ`.
    pub fn estimate(
        &self,
        noise_scale: f64,
        estimator: EstimatorKind,
        tau: Option<f64>,
        coordinate: &str,
    ) -> Option<&ReferenceEstimate> {
        self.estimates.iter().find(|r| {
            r.noise_scale == noise_scale
                && r.estimator == estimator
                && r.coordinate == coordinate
                && (r.tau == tau || (r.tau.is_none() && coordinate.starts_with("lambda")))
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loads_and_is_complete() {
        let t = ReferenceTables::load().unwrap();
        assert_eq!(t.schemes.len(), 4);
        assert_eq!(t.rejection.len(), 3 * 6 * 3);
        // Nine coordinates, six noise levels, three τ plus LGA; then the large-noise block.
        assert_eq!(t.estimates.len(), 9 * 6 * 4 + 3 + 9 * 4);
        for e in &t.estimates {
            assert!(e.rmse >= 0.0 && e.mean.is_finite());
            let truth = if let Some(i) = e.coordinate.strip_prefix("alpha") {
                t.alpha[i.parse::<usize>().unwrap() - 1]
            } else if let Some(i) = e.coordinate.strip_prefix("beta") {
                t.beta[i.parse::<usize>().unwrap() - 1]
            } else {
                if e.coordinate == "lambda[1,2]" { 0.0 } else { e.noise_scale }
            };
            assert_eq!(e.truth, truth, "{e:?}");
        }
    }

    #[test]
    fn lookups() {
        let t = ReferenceTables::load().unwrap();
        assert_eq!(t.rejection_rate(0.0, 1.8, 0.05), Some(0.05));
        assert_eq!(t.rejection_rate(1e-7, 1.9, 0.05), Some(0.263));
        let row = t.estimate(1e-4, EstimatorKind::Adaptive, Some(2.0), "alpha1").unwrap();
        assert_eq!((row.mean, row.rmse), (0.998108, 0.009));
        let lga = t.estimate(1.0, EstimatorKind::Lga, None, "alpha1").unwrap();
        assert_eq!(lga.mean, 178.068993);
        let lam = t.estimate(1.0, EstimatorKind::Adaptive, Some(1.9), "lambda[1,1]").unwrap();
        assert_eq!(lam.mean, 1.000106);
    }
}
