//! Symmetric-matrix utilities: half-vectorisation and PSD square roots.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub const SYMMETRY_TOL: f64 = 1e-10;
pub const PSD_TOL: f64 = 1e-12;

pub fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..m.nrows() {
        for j in 0..i {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

pub fn ensure_square(m: &DMatrix<f64>, what: &'static str) -> Result<usize> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch {
            what,
            expected: m.nrows(),
            got: m.ncols(),
        });
    }
    Ok(m.nrows())
}

/// Length of `vech` for a `d × d` matrix.
pub const fn vech_len(d: usize) -> usize {
    d * (d + 1) / 2
}

/// Column-stacked lower triangle: (1,1),(2,1),…,(d,1),(2,2),…,(d,d).
pub fn vech(m: &DMatrix<f64>) -> Result<DVector<f64>> {
    let d = ensure_square(m, "vech operand")?;
    let asym = max_asymmetry(m);
    if asym > SYMMETRY_TOL {
        return Err(Error::NotSymmetric { asymmetry: asym });
    }
    let mut out = Vec::with_capacity(vech_len(d));
    for j in 0..d {
        for i in j..d {
            out.push(m[(i, j)]);
        }
    }
    Ok(DVector::from_vec(out))
}

/// Index pairs `(row, col)` in `vech` order.
pub fn vech_indices(d: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(vech_len(d));
    for j in 0..d {
        for i in j..d {
            out.push((i, j));
        }
    }
    out
}

/// Rebuilds the symmetric matrix from its half-vectorisation.
pub fn unvech(v: &DVector<f64>) -> Result<DMatrix<f64>> {
    // d(d+1)/2 = len  =>  d = (sqrt(8 len + 1) - 1) / 2
    let d = (((8 * v.len() + 1) as f64).sqrt() as usize).saturating_sub(1) / 2;
    if vech_len(d) != v.len() {
        return Err(Error::InvalidArgument(format!(
            "{} is not a triangular number",
            v.len()
        )));
    }
    let mut m = DMatrix::zeros(d, d);
    for (value, (i, j)) in v.iter().zip(vech_indices(d)) {
        m[(i, j)] = *value;
        m[(j, i)] = *value;
    }
    Ok(m)
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Symmetric square root of a symmetric PSD matrix via eigendecomposition.
///
/// Eigenvalues in `[-1e-12, 0)` are clamped to zero.
pub fn psd_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let d = ensure_square(m, "psd_sqrt operand")?;
    let asym = max_asymmetry(m);
    if asym > SYMMETRY_TOL {
        return Err(Error::NotSymmetric { asymmetry: asym });
    }
    if d == 0 {
        return Ok(m.clone());
    }
    if m.iter().all(|v| *v == 0.0) {
        return Ok(DMatrix::zeros(d, d));
    }
    let eig = symmetrize(m).symmetric_eigen();
    let mut roots = eig.eigenvalues.clone();
    for v in roots.iter_mut() {
        if *v < -PSD_TOL {
            return Err(Error::NotPsd { eigenvalue: *v });
        }
        *v = v.max(0.0).sqrt();
    }
    let q = &eig.eigenvectors;
    let s = q * DMatrix::from_diagonal(&roots) * q.transpose();
    Ok(symmetrize(&s))
}

/// Checks symmetry and the PSD eigenvalue floor.
pub fn check_psd(m: &DMatrix<f64>, tol: f64) -> Result<()> {
    ensure_square(m, "PSD matrix")?;
    let asym = max_asymmetry(m);
    if asym > tol {
        return Err(Error::NotSymmetric { asymmetry: asym });
    }
    if m.nrows() == 0 {
        return Ok(());
    }
    let min = symmetrize(m)
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    if min < -tol {
        return Err(Error::NotPsd { eigenvalue: min });
    }
    Ok(())
}

/// Determinant of a small square matrix via LU; used for error reporting.
pub(crate) fn determinant(m: &DMatrix<f64>) -> f64 {
    m.clone().lu().determinant()
}

pub(crate) fn from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if let Some(bad) = rows.iter().find(|r| r.len() != ncols) {
        return Err(Error::DimensionMismatch {
            what: "matrix row length",
            expected: ncols,
            got: bad.len(),
        });
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

pub(crate) fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

/// Serde adapter writing a matrix as a list of rows.
pub mod rows {
    use nalgebra::DMatrix;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        super::to_rows(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        super::from_rows(&rows).map_err(serde::de::Error::custom)
    }
}
