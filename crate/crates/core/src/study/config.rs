use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::matrix::{check_psd, from_rows};
use crate::model::scheme::check_tau;
use crate::model::{Interval, NoiseDistribution, NoiseSpec, OuConfig, ParamBox};
use crate::sim::EulerOptions;

/// One entry of the noise-variance grid: either `scale · I` or a full matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NoiseLevel {
    Scale(f64),
    Matrix(Vec<Vec<f64>>),
}

impl NoiseLevel {
    pub fn matrix(&self, d: usize) -> Result<DMatrix<f64>> {
        let m = match self {
            Self::Scale(s) => {
                if !(*s >= 0.0 && s.is_finite()) {
                    return Err(Error::InvalidArgument(format!("noise scale {s} must be non-negative")));
                }
                DMatrix::identity(d, d) * *s
            }
            Self::Matrix(rows) => from_rows(rows)?,
        };
        if m.nrows() != d || m.ncols() != d {
            return Err(Error::DimensionMismatch {
                what: "noise variance",
                expected: d,
                got: m.nrows().max(m.ncols()),
            });
        }
        check_psd(&m, 1e-12)?;
        Ok(m)
    }

    pub fn scale(&self) -> Option<f64> {
        match self {
            Self::Scale(s) => Some(*s),
            Self::Matrix(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Adaptive,
    Lga,
}

/// How latent paths are generated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "backend", rename_all = "snake_case")]
pub enum Simulation {
    #[default]
    ExactOu,
    Euler {
        substeps: usize,
    },
}

fn default_taus() -> Vec<f64> {
    vec![1.8, 1.9, 2.0]
}

fn default_estimators() -> Vec<EstimatorKind> {
    vec![EstimatorKind::Adaptive, EstimatorKind::Lga]
}

fn default_levels() -> Vec<f64> {
    vec![0.05, 0.01, 0.001]
}

fn default_model() -> OuConfig {
    OuConfig::reference_2d()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    #[serde(default = "default_model")]
    pub model: OuConfig,
    /// Initial state; all ones when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    pub noise: Vec<NoiseLevel>,
    #[serde(default)]
    pub noise_distribution: NoiseDistribution,
    pub n: usize,
    /// Observation step. Exactly one of `h` and `gamma` is set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
    /// `h = n^(-gamma)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default = "default_taus")]
    pub taus: Vec<f64>,
    pub replications: usize,
    pub seed: u64,
    #[serde(default = "default_estimators")]
    pub estimators: Vec<EstimatorKind>,
    #[serde(default = "default_levels")]
    pub levels: Vec<f64>,
    #[serde(default)]
    pub simulation: Simulation,
    /// Observation intervals discarded before recording starts.
    #[serde(default)]
    pub burn_in: usize,
    /// Worker threads; the rayon default when absent. Results do not depend on it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
}

impl StudyConfig {
    /// The 2-D OU study on the grid `Λ = 0, 1e-8 I, …, 1e-4 I` with `h = n^-0.7`.
    ///
    /// Search boxes are narrowed to keep the diffusion coefficients identifiable:
    /// diagonal entries of `S` in `[0.5, 500]`, the off-diagonal in `[-0.5, 0.5]`
    /// and drift coefficients in `[-50, 50]`.
    pub fn reference(n: usize, replications: usize, seed: u64) -> Self {
        let mut model = OuConfig::reference_2d();
        model.alpha_box = Some(ParamBox(vec![
            Interval::new(0.5, 500.0),
            Interval::new(-0.5, 0.5),
            Interval::new(0.5, 500.0),
        ]));
        model.beta_box = Some(ParamBox(vec![Interval::new(-50.0, 50.0); 6]));
        Self {
            model,
            x0: Some(vec![1.0, 1.0]),
            noise: [0.0, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4].map(NoiseLevel::Scale).to_vec(),
            noise_distribution: NoiseDistribution::Gaussian,
            n,
            h: None,
            gamma: Some(0.7),
            taus: default_taus(),
            replications,
            seed,
            estimators: default_estimators(),
            levels: default_levels(),
            simulation: Simulation::ExactOu,
            burn_in: 0,
            threads: None,
        }
    }

    /// Parses TOML or JSON, chosen by the first non-blank character.
    pub fn parse(text: &str) -> Result<Self> {
        let config: Self = if text.trim_start().starts_with('{') {
            serde_json::from_str(text)?
        } else {
            toml::from_str(text).map_err(|e| Error::InvalidArgument(format!("config: {e}")))?
        };
        config.validate()?;
        Ok(config)
    }

    pub fn dim(&self) -> usize {
        self.model.dim()
    }

    pub fn step(&self) -> Result<f64> {
        let h = match (self.h, self.gamma) {
            (Some(h), None) => h,
            (None, Some(g)) => {
                if !(g > 0.0 && g < 1.0) {
                    return Err(Error::InvalidArgument(format!("gamma = {g} must lie in (0, 1)")));
                }
                (self.n as f64).powf(-g)
            }
            _ => {
                return Err(Error::InvalidArgument(
                    "exactly one of `h` and `gamma` must be given".into(),
                ))
            }
        };
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::InvalidArgument(format!("step h = {h} must be positive")));
        }
        Ok(h)
    }

    pub fn initial_state(&self) -> Vec<f64> {
        self.x0.clone().unwrap_or_else(|| vec![1.0; self.dim()])
    }

    pub fn noise_specs(&self) -> Result<Vec<NoiseSpec>> {
        let d = self.dim();
        self.noise
            .iter()
            .map(|level| NoiseSpec::new(level.matrix(d)?, self.noise_distribution))
            .collect()
    }

    pub fn euler_options(&self) -> Option<EulerOptions> {
        match self.simulation {
            Simulation::ExactOu => None,
            Simulation::Euler { substeps } => Some(EulerOptions {
                substeps,
                burn_in: self.burn_in,
            }),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.replications == 0 {
            return Err(Error::InvalidArgument("replications must be at least 1".into()));
        }
        if self.n < 2 {
            return Err(Error::InvalidArgument("n must be at least 2".into()));
        }
        self.step()?;
        if self.initial_state().len() != self.dim() {
            return Err(Error::DimensionMismatch {
                what: "initial state",
                expected: self.dim(),
                got: self.initial_state().len(),
            });
        }
        if self.noise.is_empty() {
            return Err(Error::InvalidArgument("the noise grid is empty".into()));
        }
        self.noise_specs()?;
        if self.taus.is_empty() {
            return Err(Error::InvalidArgument("the tau list is empty".into()));
        }
        for &tau in &self.taus {
            check_tau(tau)?;
        }
        for &level in &self.levels {
            if !(level > 0.0 && level < 1.0) {
                return Err(Error::InvalidArgument(format!("level {level} is outside (0, 1)")));
            }
        }
        if let Simulation::Euler { substeps: 0 } = self.simulation {
            return Err(Error::InvalidArgument("substeps must be at least 1".into()));
        }
        if let Some(0) = self.threads {
            return Err(Error::InvalidArgument("threads must be at least 1".into()));
        }
        Ok(())
    }
}
