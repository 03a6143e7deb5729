use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::config::{EstimatorKind, StudyConfig};
use super::{Outcome, ReplicationRecord};
use crate::error::{Error, Result};
use crate::estimate::coordinate_labels;
use crate::model::matrix::vech;
use crate::model::{derive_scheme, SamplingScheme};
use crate::noise_test::critical_value;
use crate::numeric::CompensatedSum;

/// Empirical mean and RMSE of one coordinate in one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRow {
    pub noise: usize,
    /// `s` when the noise variance is `s · I`.
    pub noise_scale: Option<f64>,
    pub tau: Option<f64>,
    pub estimator: EstimatorKind,
    pub coordinate: String,
    pub truth: f64,
    pub mean: f64,
    pub rmse: f64,
    /// Successful replications behind the row.
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectionRow {
    pub noise: usize,
    pub noise_scale: Option<f64>,
    pub tau: f64,
    pub level: f64,
    pub rate: f64,
    pub rejections: usize,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct StudyTables {
    pub estimates: Vec<EstimateRow>,
    pub rejections: Vec<RejectionRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct RuntimeStats {
    pub threads: usize,
    pub total_seconds: f64,
    pub mean_replication_seconds: f64,
    pub max_replication_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub config: StudyConfig,
    pub schemes: Vec<SamplingScheme>,
    pub tables: StudyTables,
    /// Replications with at least one failed cell.
    pub replications_with_failures: usize,
    pub failures: Vec<ReplicationRecord>,
    pub runtime: RuntimeStats,
    /// Raw records; written separately as JSON lines.
    #[serde(skip)]
    pub records: Vec<ReplicationRecord>,
}

type CellKey = (usize, Option<u64>, EstimatorKind);

fn tau_key(tau: Option<f64>) -> Option<u64> {
    tau.map(f64::to_bits)
}

fn mean_and_rmse(values: &[f64], truth: f64) -> (f64, f64) {
    let count = values.len() as f64;
    let mean = values.iter().copied().collect::<CompensatedSum>().value() / count;
    let mse = values.iter().map(|v| (v - truth).powi(2)).collect::<CompensatedSum>().value() / count;
    (mean, mse.sqrt())
}

/// Builds the tables from raw records.
///
/// Rows with no successful replication are left out. A test rejects at `level`
/// when `z ≥ z_level`.
pub fn aggregate(config: &StudyConfig, records: &[ReplicationRecord]) -> Result<StudyTables> {
    let d = config.dim();
    let alpha = config.model.alpha()?;
    let beta = config.model.beta()?;
    let noise = config.noise_specs()?;
    let q = d * (d + 1) / 2;

    let mut estimates: BTreeMap<CellKey, Vec<Vec<f64>>> = BTreeMap::new();
    let mut statistics: BTreeMap<(usize, u64), Vec<f64>> = BTreeMap::new();
    for rec in records {
        let Some(ni) = rec.noise else { continue };
        if ni >= noise.len() {
            return Err(Error::InvalidArgument(format!(
                "record for replication {} refers to noise level {ni}, but the grid has {}",
                rec.replication,
                noise.len()
            )));
        }
        if let Some(tau) = rec.tau {
            if !config.taus.contains(&tau) {
                return Err(Error::InvalidArgument(format!(
                    "record for replication {} uses tau = {tau}, which is not in the config",
                    rec.replication
                )));
            }
        }
        let (kind, values) = match &rec.outcome {
            Outcome::Test { z, .. } => {
                let tau = rec.tau.ok_or_else(|| Error::InvalidArgument("test record without tau".into()))?;
                statistics.entry((ni, tau.to_bits())).or_default().push(*z);
                continue;
            }
            Outcome::Adaptive { lambda, alpha, beta } => {
                (EstimatorKind::Adaptive, [lambda.as_slice(), alpha, beta].concat())
            }
            Outcome::Lga { alpha, beta } => (EstimatorKind::Lga, [alpha.as_slice(), beta].concat()),
            Outcome::Failed { .. } => continue,
        };
        let expected = match kind {
            EstimatorKind::Adaptive => q + alpha.len() + beta.len(),
            EstimatorKind::Lga => alpha.len() + beta.len(),
        };
        if values.len() != expected {
            return Err(Error::DimensionMismatch {
                what: "recorded estimate",
                expected,
                got: values.len(),
            });
        }
        estimates.entry((ni, tau_key(rec.tau), kind)).or_default().push(values);
    }

    let labels = coordinate_labels(d, alpha.len(), beta.len());
    let mut tables = StudyTables::default();
    for (ni, spec) in noise.iter().enumerate() {
        let scale = config.noise[ni].scale();
        let lambda_truth = vech(spec.lambda())?;
        let truth: Vec<f64> = lambda_truth.iter().chain(&alpha).chain(&beta).copied().collect();
        let mut cells: Vec<(Option<f64>, EstimatorKind)> = config
            .taus
            .iter()
            .map(|&t| (Some(t), EstimatorKind::Adaptive))
            .collect();
        cells.push((None, EstimatorKind::Lga));
        for (tau, kind) in cells {
            let Some(rows) = estimates.get(&(ni, tau_key(tau), kind)) else { continue };
            let offset = match kind {
                EstimatorKind::Adaptive => 0,
                EstimatorKind::Lga => q,
            };
            for (c, label) in labels.iter().enumerate().skip(offset) {
                let column: Vec<f64> = rows.iter().map(|r| r[c - offset]).collect();
                let (mean, rmse) = mean_and_rmse(&column, truth[c]);
                tables.estimates.push(EstimateRow {
                    noise: ni,
                    noise_scale: scale,
                    tau,
                    estimator: kind,
                    coordinate: label.clone(),
                    truth: truth[c],
                    mean,
                    rmse,
                    count: column.len(),
                });
            }
        }
        for &tau in &config.taus {
            let Some(zs) = statistics.get(&(ni, tau.to_bits())) else { continue };
            for &level in &config.levels {
                let z_level = critical_value(level);
                let rejections = zs.iter().filter(|&&z| z >= z_level).count();
                tables.rejections.push(RejectionRow {
                    noise: ni,
                    noise_scale: scale,
                    tau,
                    level,
                    rate: rejections as f64 / zs.len() as f64,
                    rejections,
                    count: zs.len(),
                });
            }
        }
    }
    Ok(tables)
}

impl StudyReport {
    pub fn new(
        config: StudyConfig,
        schemes: Vec<SamplingScheme>,
        records: Vec<ReplicationRecord>,
        runtime: RuntimeStats,
    ) -> Result<Self> {
        let tables = aggregate(&config, &records)?;
        let failures: Vec<ReplicationRecord> = records.iter().filter(|r| r.is_failure()).cloned().collect();
        let mut failed_reps: Vec<usize> = failures.iter().map(|r| r.replication).collect();
        failed_reps.sort_unstable();
        failed_reps.dedup();
        Ok(Self {
            config,
            schemes,
            tables,
            replications_with_failures: failed_reps.len(),
            failures,
            runtime,
            records,
        })
    }

    /// Rebuilds a report from a saved record dump; runtime stats are left empty.
    pub fn from_records(config: StudyConfig, records: Vec<ReplicationRecord>) -> Result<Self> {
        config.validate()?;
        let h = config.step()?;
        let schemes = config
            .taus
            .iter()
            .map(|&tau| derive_scheme(config.n, h, tau))
            .collect::<Result<_>>()?;
        Self::new(config, schemes, records, RuntimeStats::default())
    }

    pub fn estimate(
        &self,
        noise: usize,
        tau: Option<f64>,
        estimator: EstimatorKind,
        coordinate: &str,
    ) -> Option<&EstimateRow> {
        self.tables
            .estimates
            .iter()
            .find(|r| r.noise == noise && r.tau == tau && r.estimator == estimator && r.coordinate == coordinate)
    }

    pub fn rejection_rate(&self, noise: usize, tau: f64, level: f64) -> Option<f64> {
        self.tables
            .rejections
            .iter()
            .find(|r| r.noise == noise && r.tau == tau && r.level == level)
            .map(|r| r.rate)
    }

    pub fn write_estimates_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for row in &self.tables.estimates {
            w.serialize(row)?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn write_rejections_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for row in &self.tables.rejections {
            w.serialize(row)?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}
