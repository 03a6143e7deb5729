//! Estimation and testing for diffusions observed at high frequency with
//! additive noise.

pub mod error;
pub mod estimate;
pub mod local_means;
pub mod model;
pub mod numeric;
pub mod optimize;
pub mod rng;
pub mod sim;
pub mod study;

pub use error::{Error, Result};
pub use estimate::{
    estimate_adaptive, estimate_alpha, estimate_beta, estimate_lambda, estimate_lga, plugin_covariance, qlik_h1,
    qlik_h2, EstimationResult, LgaEstimate, PluginCovariance,
};
pub use local_means::{local_means, LocalMeanSeries};
pub use model::{
    derive_scheme, ingest_csv, psd_sqrt, unvech, vech, ColumnSpec, Interval, ModelSpec, NoiseDistribution,
    NoiseSpec, ObservationSeries, OuConfig, OuTransition, ParamBox, SamplingScheme,
};
pub use noise_test::{component_sum_series, noise_test, power_approximation, NoiseTestResult};
pub use rng::{stream_rng, StreamSeed};
pub use study::{run_study, StudyConfig, StudyReport};
