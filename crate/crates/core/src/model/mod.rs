//! Model specification, sampling scheme, noise and observation types.

pub mod matrix;
pub mod noise;
pub mod ou;
pub mod scheme;
pub mod series;
pub mod spec;

pub use matrix::{psd_sqrt, unvech, vech};
pub use noise::{NoiseDistribution, NoiseSpec};
pub use ou::{OuConfig, OuTransition};
pub use scheme::{derive_scheme, SamplingScheme};
pub use series::{ingest_csv, ColumnSpec, ObservationSeries};
pub use spec::{Interval, ModelSpec, ParamBox};
