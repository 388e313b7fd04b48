//! Dense symmetric covariance matrices of centred Gaussian laws on the lattice.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Pivot tolerance used by the positive-semidefiniteness check.
pub const PSD_TOLERANCE: f64 = 1e-10;

/// Eigenvalues above `-SQRT_CLAMP` are clamped to zero before taking roots.
pub const SQRT_CLAMP: f64 = 1e-12;

/// `C_{xy} = E[Ψ_x Ψ_y]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceMatrix {
    entries: DMatrix<f64>,
}

impl CovarianceMatrix {
    /// Wraps a square matrix, symmetrising it exactly. Does not check PSD.
    pub fn from_matrix(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::ShapeMismatch {
                expected: "square matrix".into(),
                got: format!("{}x{}", m.nrows(), m.ncols()),
            });
        }
        let sym = (&m + m.transpose()) * 0.5;
        Ok(Self { entries: sym })
    }

    /// Like [`from_matrix`](Self::from_matrix) but also runs the PSD check.
    pub fn checked(m: DMatrix<f64>) -> Result<Self> {
        let c = Self::from_matrix(m)?;
        c.cholesky_lower()?;
        Ok(c)
    }

    pub fn identity(n: usize) -> Self {
        Self {
            entries: DMatrix::identity(n, n),
        }
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.entries
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.entries[(x, y)]
    }

    pub fn trace(&self) -> f64 {
        self.entries.trace()
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        (&self.entries - &other.entries).abs().max()
    }

    pub fn max_diagonal_deviation(&self, value: f64) -> f64 {
        self.entries
            .diagonal()
            .iter()
            .map(|d| (d - value).abs())
            .fold(0.0, f64::max)
    }

    /// Lower-triangular `L` with `L Lᵀ = C`, tolerating semidefinite input.
    ///
    /// Pivots in `[-PSD_TOLERANCE, PSD_TOLERANCE]` are treated as zero and
    /// their column is dropped; a pivot below `-PSD_TOLERANCE` is an error.
    pub fn cholesky_lower(&self) -> Result<DMatrix<f64>> {
        let n = self.dim();
        let c = &self.entries;
        let scale = c.diagonal().iter().fold(1.0f64, |a, &d| a.max(d.abs()));
        let tol = PSD_TOLERANCE * scale;
        let mut l = DMatrix::<f64>::zeros(n, n);
        for j in 0..n {
            let mut pivot = c[(j, j)];
            for k in 0..j {
                pivot -= l[(j, k)] * l[(j, k)];
            }
            if pivot < -tol {
                return Err(Error::NotPsd { row: j, pivot });
            }
            if pivot <= tol {
                continue;
            }
            let root = pivot.sqrt();
            l[(j, j)] = root;
            for i in (j + 1)..n {
                let mut v = c[(i, j)];
                for k in 0..j {
                    v -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = v / root;
            }
        }
        Ok(l)
    }

    pub fn is_psd(&self) -> bool {
        self.cholesky_lower().is_ok()
    }

    /// Symmetric square root via eigendecomposition, eigenvalues clamped at 0.
    pub fn sqrt(&self) -> Result<DMatrix<f64>> {
        symmetric_sqrt(&self.entries)
    }
}

pub(crate) fn symmetric_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::new(m.clone());
    let scale = eig.eigenvalues.iter().fold(1.0f64, |a, &v| a.max(v.abs()));
    let mut roots = eig.eigenvalues.clone();
    for (i, v) in roots.iter_mut().enumerate() {
        if *v < -SQRT_CLAMP.max(PSD_TOLERANCE * scale) {
            return Err(Error::NotPsd { row: i, pivot: *v });
        }
        *v = v.max(0.0).sqrt();
    }
    let q = &eig.eigenvectors;
    Ok(q * DMatrix::from_diagonal(&roots) * q.transpose())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_handles_rank_one() {
        let c = CovarianceMatrix::from_matrix(DMatrix::from_element(4, 4, 1.0)).unwrap();
        let l = c.cholesky_lower().unwrap();
        assert!((&l * l.transpose() - c.matrix()).abs().max() < 1e-14);
    }

    #[test]
    fn rejects_indefinite() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(CovarianceMatrix::checked(m), Err(Error::NotPsd { .. })));
    }

    #[test]
    fn sqrt_squares_back() {
        let m = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0]);
        let c = CovarianceMatrix::checked(m.clone()).unwrap();
        let r = c.sqrt().unwrap();
        assert!((&r * &r - m).abs().max() < 1e-12);
    }
}
