use nalgebra::DMatrix;

use crate::error::Result;
use crate::model::ObservationSeries;
use crate::numeric::CompensatedSum;

/// Noise variance from the raw quadratic variation: `(1/2n) Σ ΔY ΔYᵀ`.
pub fn estimate_lambda(obs: &ObservationSeries) -> Result<DMatrix<f64>> {
    let d = obs.dim();
    let n = obs.n();
    let mut acc = vec![CompensatedSum::new(); d * (d + 1) / 2];
    let mut incr = vec![0.0; d];
    for i in 0..n {
        let (a, b) = (obs.row(i), obs.row(i + 1));
        for l in 0..d {
            incr[l] = b[l] - a[l];
        }
        let mut idx = 0;
        for c in 0..d {
            for r in c..d {
                acc[idx].add(incr[r] * incr[c]);
                idx += 1;
            }
        }
    }
    let scale = 1.0 / (2.0 * n as f64);
    let mut out = DMatrix::zeros(d, d);
    let mut idx = 0;
    for c in 0..d {
        for r in c..d {
            let v = acc[idx].value() * scale;
            out[(r, c)] = v;
            out[(c, r)] = v;
            idx += 1;
        }
    }
    Ok(out)
}
