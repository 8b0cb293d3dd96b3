//! Tolerance-aware spectral primitives on symmetric positive semidefinite
//! matrices: numerical rank, pseudo-determinant, image containment and the
//! log-determinant of strictly positive definite matrices.
//!
//! Every rank-like decision goes through one symmetric eigendecomposition so
//! rank and pseudo-determinant always agree on which eigenvalues are "zero".

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative symmetry tolerance applied on construction.
const SYMMETRY_TOLERANCE: f64 = 1e-10;
/// Relative tolerance on negative eigenvalues before a matrix is rejected.
const NEGATIVE_EIGEN_TOLERANCE: f64 = 1e-10;

/// Relative cutoff deciding which eigenvalues count toward the rank.
///
/// An eigenvalue `λ` counts iff `λ > threshold · λ_max`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankTolerance(f64);

impl RankTolerance {
    pub const DEFAULT_THRESHOLD: f64 = 1e-9;

    pub fn new(relative_threshold: f64) -> Result<Self> {
        if relative_threshold > 0.0 && relative_threshold < 1.0 {
            Ok(Self(relative_threshold))
        } else {
            Err(Error::InvalidArgument(format!(
                "rank tolerance must lie in (0, 1), got {relative_threshold}"
            )))
        }
    }

    pub fn relative_threshold(self) -> f64 {
        self.0
    }
}

impl Default for RankTolerance {
    fn default() -> Self {
        Self(Self::DEFAULT_THRESHOLD)
    }
}

/// A validated symmetric positive semidefinite matrix with its spectrum.
///
/// Slightly negative eigenvalues produced by rounding are clamped to zero in
/// the cached spectrum; the stored entries are the exactly symmetrized input.
#[derive(Debug, Clone)]
pub struct PsdMatrix {
    entries: DMatrix<f64>,
    eigenvalues: DVector<f64>,
    eigenvectors: DMatrix<f64>,
}

impl PsdMatrix {
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        let (rows, cols) = entries.shape();
        if rows != cols {
            return Err(Error::NotSquare { rows, cols });
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        let scale = entries.amax();
        let mut asymmetry = 0.0_f64;
        for i in 0..rows {
            for j in (i + 1)..rows {
                asymmetry = asymmetry.max((entries[(i, j)] - entries[(j, i)]).abs());
            }
        }
        let limit = SYMMETRY_TOLERANCE * scale;
        if asymmetry > limit {
            return Err(Error::NotSymmetric { asymmetry, limit });
        }
        let entries = (&entries + entries.transpose()) * 0.5;

        let eigen = SymmetricEigen::new(entries.clone());
        let magnitude = eigen.eigenvalues.amax();
        let limit = NEGATIVE_EIGEN_TOLERANCE * magnitude;
        if let Some(&eigenvalue) = eigen.eigenvalues.iter().find(|&&l| l < -limit) {
            return Err(Error::NotPsd { eigenvalue, limit });
        }
        let eigenvalues = eigen.eigenvalues.map(|l| l.max(0.0));

        Ok(Self {
            entries,
            eigenvalues,
            eigenvectors: eigen.eigenvectors,
        })
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            entries: DMatrix::zeros(dim, dim),
            eigenvalues: DVector::zeros(dim),
            eigenvectors: DMatrix::identity(dim, dim),
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            entries: DMatrix::identity(dim, dim),
            eigenvalues: DVector::from_element(dim, 1.0),
            eigenvectors: DMatrix::identity(dim, dim),
        }
    }

    /// `A Σ Aᵀ` for a rectangular `A`.
    pub fn congruence(a: &DMatrix<f64>, sigma: &PsdMatrix) -> Result<Self> {
        if a.ncols() != sigma.dim() {
            return Err(Error::DimensionMismatch {
                expected: sigma.dim(),
                actual: a.ncols(),
            });
        }
        Self::new(a * &sigma.entries * a.transpose())
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

    /// Clamped eigenvalues in the order returned by the eigensolver.
    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    pub fn largest_eigenvalue(&self) -> f64 {
        self.eigenvalues.iter().copied().fold(0.0, f64::max)
    }

    fn cutoff(&self, tol: RankTolerance) -> f64 {
        tol.relative_threshold() * self.largest_eigenvalue()
    }

    /// Indices of eigenvalues above the rank cutoff.
    fn support(&self, tol: RankTolerance) -> impl Iterator<Item = usize> + '_ {
        let cutoff = self.cutoff(tol);
        let has_spectrum = self.largest_eigenvalue() > 0.0;
        self.eigenvalues
            .iter()
            .enumerate()
            .filter(move |&(_, &l)| has_spectrum && l > cutoff)
            .map(|(k, _)| k)
    }

    /// `N × r` factor `B` with `B Bᵀ` equal to the matrix restricted to its
    /// numerical support.
    pub fn range_factor(&self, tol: RankTolerance) -> DMatrix<f64> {
        let support: Vec<usize> = self.support(tol).collect();
        let mut factor = DMatrix::zeros(self.dim(), support.len());
        for (col, &k) in support.iter().enumerate() {
            let scale = self.eigenvalues[k].sqrt();
            factor
                .column_mut(col)
                .copy_from(&(self.eigenvectors.column(k) * scale));
        }
        factor
    }
}

/// Number of eigenvalues exceeding `tol · λ_max`; zero for the zero matrix.
pub fn numerical_rank(a: &PsdMatrix, tol: RankTolerance) -> usize {
    a.support(tol).count()
}

/// Product of the eigenvalues above the rank cutoff. The empty product (zero
/// matrix) is 1.
pub fn pseudo_det(a: &PsdMatrix, tol: RankTolerance) -> f64 {
    a.support(tol).map(|k| a.eigenvalues[k]).product()
}

/// Natural log of [`pseudo_det`], summed in log space.
pub fn ln_pseudo_det(a: &PsdMatrix, tol: RankTolerance) -> f64 {
    a.support(tol).map(|k| a.eigenvalues[k].ln()).sum()
}

/// Whether `v` lies in the column space of `a`, up to a residual of
/// `sqrt(threshold) · ‖v‖` after projecting onto the numerical support.
pub fn image_contains(a: &PsdMatrix, v: &DVector<f64>, tol: RankTolerance) -> Result<bool> {
    if v.len() != a.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            actual: v.len(),
        });
    }
    let norm = v.norm();
    if norm == 0.0 {
        return Ok(true);
    }
    let mut residual = v.clone();
    for k in a.support(tol) {
        let u = a.eigenvectors.column(k);
        let coeff = u.dot(v);
        residual.axpy(-coeff, &u, 1.0);
    }
    Ok(residual.norm() <= tol.relative_threshold().sqrt() * norm)
}

/// `ln det A` for strictly positive definite `A`, via Cholesky.
pub fn log_det_spd(a: &PsdMatrix) -> Result<f64> {
    Ok(SpdFactor::new(a.matrix())?.ln_det())
}

/// Cholesky factor of a strictly positive definite matrix, with its
/// log-determinant cached.
#[derive(Debug, Clone)]
pub struct SpdFactor {
    lower: DMatrix<f64>,
    ln_det: f64,
}

impl SpdFactor {
    pub fn new(a: &DMatrix<f64>) -> Result<Self> {
        let (rows, cols) = a.shape();
        if rows != cols {
            return Err(Error::NotSquare { rows, cols });
        }
        let chol: Cholesky<f64, Dyn> =
            Cholesky::new(a.clone()).ok_or(Error::NotPositiveDefinite)?;
        let lower = chol.unpack();
        let mut ln_det = 0.0;
        for i in 0..rows {
            let d = lower[(i, i)];
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::NotPositiveDefinite);
            }
            ln_det += 2.0 * d.ln();
        }
        Ok(Self { lower, ln_det })
    }

    pub fn dim(&self) -> usize {
        self.lower.nrows()
    }

    pub fn ln_det(&self) -> f64 {
        self.ln_det
    }

    pub fn lower(&self) -> &DMatrix<f64> {
        &self.lower
    }

    /// `vᵀ A⁻¹ v` using a caller-provided scratch buffer of length `dim`.
    ///
    /// `v` is overwritten with `L⁻¹ v`.
    pub fn quad_form_in_place(&self, v: &mut [f64]) -> f64 {
        let n = self.dim();
        debug_assert_eq!(v.len(), n);
        let l = self.lower.as_slice();
        let mut acc = 0.0;
        // Column-major storage: L[(i, k)] = l[k * n + i].
        for i in 0..n {
            let mut s = v[i];
            for k in 0..i {
                s -= l[k * n + i] * v[k];
            }
            let w = s / l[i * n + i];
            v[i] = w;
            acc += w * w;
        }
        acc
    }

    pub fn quad_form(&self, v: &DVector<f64>) -> f64 {
        let mut buf = v.as_slice().to_vec();
        self.quad_form_in_place(&mut buf)
    }
}
