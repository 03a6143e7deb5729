//! Monte Carlo studies: simulate, contaminate, estimate and test, many times over.
//!
//! Replication `r` draws its latent path from stream `2r` and its noise from
//! stream `2r + 1` of the configured seed. The same draws are reused across the
//! noise grid and the `τ` list, so cells of one replication differ only in the
//! setting under study. Raw per-replication records are kept so that tables
//! can be recomputed without rerunning.

mod config;
mod reference;
mod report;

use std::io::{BufRead, Write};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use config::{EstimatorKind, NoiseLevel, Simulation, StudyConfig};
pub use reference::{ReferenceEstimate, ReferenceRejection, ReferenceScheme, ReferenceTables};
pub use report::{aggregate, EstimateRow, RejectionRow, RuntimeStats, StudyReport, StudyTables};

use crate::error::{Error, Result};
use crate::estimate::{estimate_adaptive, estimate_lga};
use crate::model::{derive_scheme, ModelSpec, NoiseSpec, ObservationSeries, SamplingScheme};
use crate::noise_test::noise_test;
use crate::sim::{contaminate, simulate_ou_exact, simulate_path, LatentPath};

/// Which part of a replication a record describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Simulation,
    Test,
    Adaptive,
    Lga,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Outcome {
    Test {
        z: f64,
        p_value: f64,
    },
    Adaptive {
        /// `vech(Λ̂)`.
        lambda: Vec<f64>,
        alpha: Vec<f64>,
        beta: Vec<f64>,
    },
    Lga {
        alpha: Vec<f64>,
        beta: Vec<f64>,
    },
    Failed {
        stage: Stage,
        message: String,
        degenerate: bool,
        non_convergence: bool,
    },
}

/// One line of the per-replication dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub replication: usize,
    /// Index into the noise grid; absent for simulation failures.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<usize>,
    /// Absent for the LGA estimator, which does not use local means.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(flatten)]
    pub outcome: Outcome,
}

impl ReplicationRecord {
    pub fn is_failure(&self) -> bool {
        matches!(self.outcome, Outcome::Failed { .. })
    }
}

fn failed(replication: usize, noise: Option<usize>, tau: Option<f64>, stage: Stage, err: &Error) -> ReplicationRecord {
    ReplicationRecord {
        replication,
        noise,
        tau,
        outcome: Outcome::Failed {
            stage,
            message: err.to_string(),
            degenerate: err.is_degenerate_data(),
            non_convergence: err.is_non_convergence(),
        },
    }
}

struct Prepared {
    model: ModelSpec,
    alpha: Vec<f64>,
    beta: Vec<f64>,
    x0: Vec<f64>,
    h: f64,
    noise: Vec<NoiseSpec>,
    schemes: Vec<SamplingScheme>,
}

impl Prepared {
    fn new(config: &StudyConfig) -> Result<Self> {
        config.validate()?;
        let h = config.step()?;
        let schemes = config
            .taus
            .iter()
            .map(|&tau| derive_scheme(config.n, h, tau))
            .collect::<Result<_>>()?;
        Ok(Self {
            model: config.model.model()?,
            alpha: config.model.alpha()?,
            beta: config.model.beta()?,
            x0: config.initial_state(),
            h,
            noise: config.noise_specs()?,
            schemes,
        })
    }

    fn simulate(&self, config: &StudyConfig, r: usize) -> Result<LatentPath> {
        let seed = (config.seed, 2 * r as u64);
        match config.euler_options() {
            None => simulate_ou_exact(
                config.dim(),
                &self.alpha,
                &self.beta,
                &self.x0,
                config.n,
                self.h,
                config.burn_in,
                seed,
            ),
            Some(options) => simulate_path(
                &self.model,
                &self.alpha,
                &self.beta,
                &self.x0,
                config.n,
                self.h,
                &options,
                seed,
            ),
        }
    }

    fn replicate(&self, config: &StudyConfig, r: usize) -> Vec<ReplicationRecord> {
        let path = match self.simulate(config, r) {
            Ok(path) => path,
            Err(e) => return vec![failed(r, None, None, Stage::Simulation, &e)],
        };
        let mut out = Vec::new();
        for (ni, noise) in self.noise.iter().enumerate() {
            let obs = match contaminate(&path, noise, (config.seed, 2 * r as u64 + 1)) {
                Ok(obs) => obs,
                Err(e) => {
                    out.push(failed(r, Some(ni), None, Stage::Simulation, &e));
                    continue;
                }
            };
            self.cell(config, r, ni, &obs, &mut out);
        }
        out
    }

    fn cell(&self, config: &StudyConfig, r: usize, ni: usize, obs: &ObservationSeries, out: &mut Vec<ReplicationRecord>) {
        for scheme in &self.schemes {
            let tau = Some(scheme.tau);
            out.push(match noise_test(obs, scheme, 0.05) {
                Ok(t) => ReplicationRecord {
                    replication: r,
                    noise: Some(ni),
                    tau,
                    outcome: Outcome::Test {
                        z: t.z,
                        p_value: t.p_value,
                    },
                },
                Err(e) => failed(r, Some(ni), tau, Stage::Test, &e),
            });
            if config.estimators.contains(&EstimatorKind::Adaptive) {
                out.push(match estimate_adaptive(obs, scheme, &self.model, false) {
                    Ok(est) => ReplicationRecord {
                        replication: r,
                        noise: Some(ni),
                        tau,
                        outcome: Outcome::Adaptive {
                            lambda: est.theta_eps_hat,
                            alpha: est.alpha_hat,
                            beta: est.beta_hat,
                        },
                    },
                    Err(e) => failed(r, Some(ni), tau, Stage::Adaptive, &e),
                });
            }
        }
        if config.estimators.contains(&EstimatorKind::Lga) {
            out.push(match estimate_lga(obs, &self.model) {
                Ok(est) => ReplicationRecord {
                    replication: r,
                    noise: Some(ni),
                    tau: None,
                    outcome: Outcome::Lga {
                        alpha: est.alpha,
                        beta: est.beta,
                    },
                },
                Err(e) => failed(r, Some(ni), None, Stage::Lga, &e),
            });
        }
    }
}

/// Runs every replication and aggregates the tables.
pub fn run_study(config: &StudyConfig) -> Result<StudyReport> {
    let prepared = Prepared::new(config)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(threads) = config.threads {
        builder = builder.num_threads(threads);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot start worker pool: {e}")))?;
    let start = Instant::now();
    let results: Vec<(Vec<ReplicationRecord>, f64)> = pool.install(|| {
        (0..config.replications)
            .into_par_iter()
            .map(|r| {
                let t = Instant::now();
                let records = prepared.replicate(config, r);
                (records, t.elapsed().as_secs_f64())
            })
            .collect()
    });
    let total = start.elapsed().as_secs_f64();

    let seconds: Vec<f64> = results.iter().map(|(_, s)| *s).collect();
    let records: Vec<ReplicationRecord> = results.into_iter().flat_map(|(r, _)| r).collect();
    let runtime = RuntimeStats {
        threads: pool.current_num_threads(),
        total_seconds: total,
        mean_replication_seconds: seconds.iter().sum::<f64>() / seconds.len() as f64,
        max_replication_seconds: seconds.iter().copied().fold(0.0, f64::max),
    };
    StudyReport::new(config.clone(), prepared.schemes, records, runtime)
}

pub fn write_records<W: Write>(records: &[ReplicationRecord], mut writer: W) -> Result<()> {
    for record in records {
        serde_json::to_writer(&mut writer, record)?;
        writeln!(writer).map_err(|e| Error::Io {
            path: "<records>".into(),
            source: e,
        })?;
    }
    Ok(())
}

pub fn read_records<R: BufRead>(reader: R) -> Result<Vec<ReplicationRecord>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::Io {
            path: "<records>".into(),
            source: e,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            row: i + 1,
            column: e.column(),
            message: e.to_string(),
        })?);
    }
    Ok(out)
}
