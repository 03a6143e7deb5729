//! Block-wise local means `Ȳ_j = (1/p) Σ_{i<p} Y_{jΔ + ih}`.

use std::io::Write;

use crate::error::{Error, Result};
use crate::model::series::write_grid_csv;
use crate::model::{ObservationSeries, SamplingScheme};
use crate::numeric::CompensatedSum;

#[derive(Debug, Clone, PartialEq)]
pub struct LocalMeanSeries {
    scheme: SamplingScheme,
    d: usize,
    means: Vec<f64>,
}

impl LocalMeanSeries {
    pub fn scheme(&self) -> &SamplingScheme {
        &self.scheme
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn k(&self) -> usize {
        self.scheme.k
    }

    pub fn delta(&self) -> f64 {
        self.scheme.delta
    }

    pub fn mean(&self, j: usize) -> &[f64] {
        &self.means[j * self.d..(j + 1) * self.d]
    }

    pub fn iter(&self) -> std::slice::ChunksExact<'_, f64> {
        self.means.chunks_exact(self.d)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.means
    }

    /// Writes `t,y1,…,yd` with `t = jΔ`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        write_grid_csv(writer, self.scheme.delta, self.d, &self.means)
    }
}

/// Block `j` averages observation indices `j·p … j·p + p − 1`; the tail beyond `k·p` is ignored.
pub fn local_means(obs: &ObservationSeries, scheme: &SamplingScheme) -> Result<LocalMeanSeries> {
    let needed = scheme.k * scheme.p;
    if obs.rows() < needed {
        return Err(Error::InsufficientData {
            needed,
            available: obs.rows(),
        });
    }
    let d = obs.dim();
    let p = scheme.p;
    let mut means = Vec::with_capacity(scheme.k * d);
    let mut acc = vec![CompensatedSum::new(); d];
    for j in 0..scheme.k {
        acc.iter_mut().for_each(|a| *a = CompensatedSum::new());
        for i in j * p..(j + 1) * p {
            for (a, v) in acc.iter_mut().zip(obs.row(i)) {
                a.add(*v);
            }
        }
        means.extend(acc.iter().map(|a| a.value() / p as f64));
    }
    Ok(LocalMeanSeries {
        scheme: *scheme,
        d,
        means,
    })
}
