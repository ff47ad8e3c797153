//! Dense symmetric linear algebra used by the optimizer.
//!
//! Three contracts live here: a symmetric matrix type that enforces exact
//! symmetry on construction, a full ascending eigendecomposition, and a
//! Cholesky factorization reused across many right-hand sides.

use log::warn;
use faer::{Mat, Side};
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Asymmetry above this triggers a warning when symmetrizing.
pub const ASYMMETRY_WARN: f64 = 1e-8;

/// A finite, exactly symmetric square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricMatrix {
    inner: DMatrix<f64>,
}

impl SymmetricMatrix {
    /// Validates finiteness and replaces `a` by `(a + aᵀ) / 2`.
    pub fn new(mut a: DMatrix<f64>) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::NotSquare {
                rows: a.nrows(),
                cols: a.ncols(),
            });
        }
        check_finite(&a)?;
        let n = a.nrows();
        let mut worst = 0.0f64;
        for j in 0..n {
            for i in (j + 1)..n {
                let (x, y) = (a[(i, j)], a[(j, i)]);
                worst = worst.max((x - y).abs());
                let mid = 0.5 * (x + y);
                a[(i, j)] = mid;
                a[(j, i)] = mid;
            }
        }
        if worst > ASYMMETRY_WARN {
            warn!("symmetrizing matrix with max asymmetry {worst:e}");
        }
        Ok(Self { inner: a })
    }

    pub fn from_fn(n: usize, f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        Self::new(DMatrix::from_fn(n, n, f))
    }

    pub fn identity(n: usize) -> Self {
        Self {
            inner: DMatrix::identity(n, n),
        }
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            inner: DMatrix::zeros(n, n),
        }
    }

    pub fn from_diagonal(d: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&DVector::from_column_slice(d)))
    }

    /// Wraps a matrix the caller has built symmetric entry by entry.
    pub(crate) fn from_exact(inner: DMatrix<f64>) -> Self {
        debug_assert!(inner.nrows() == inner.ncols());
        debug_assert!(inner == inner.transpose());
        Self { inner }
    }

    pub fn order(&self) -> usize {
        self.inner.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.inner
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.inner
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.inner[(i, j)]
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        self.inner
            .row_iter()
            .map(|r| r.iter().map(|x| x.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// `self + shift * I`.
    pub fn shifted(&self, shift: f64) -> Self {
        let mut inner = self.inner.clone();
        for i in 0..inner.nrows() {
            inner[(i, i)] += shift;
        }
        Self { inner }
    }
}

pub(crate) fn check_finite(a: &DMatrix<f64>) -> Result<()> {
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            if !a[(i, j)].is_finite() {
                return Err(Error::NonFinite { row: i, col: j });
            }
        }
    }
    Ok(())
}

/// Eigenvalues in ascending order with matching eigenvector columns.
#[derive(Debug, Clone)]
pub struct EigenSystem {
    pub eigenvalues: DVector<f64>,
    pub eigenvectors: DMatrix<f64>,
}

impl EigenSystem {
    pub fn order(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Sum of the `k` smallest eigenvalues.
    pub fn smallest_sum(&self, k: usize) -> f64 {
        self.eigenvalues.iter().take(k).sum()
    }
}

/// Full symmetric eigendecomposition, spectrum sorted ascending.
pub fn symmetric_eigen(a: &SymmetricMatrix) -> Result<EigenSystem> {
    // SymmetricMatrix is finite by construction; re-check in case the
    // caller mutated entries through `from_exact`.
    check_finite(a.as_matrix())?;
    let n = a.order();
    if n == 0 {
        return Ok(EigenSystem {
            eigenvalues: DVector::zeros(0),
            eigenvectors: DMatrix::zeros(0, 0),
        });
    }
    let src = a.as_matrix();
    let evd = Mat::<f64>::from_fn(n, n, |i, j| src[(i, j)])
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Eigen(format!("{e:?}")))?;
    // faer returns the spectrum in nondecreasing order already.
    let s = evd.S().column_vector();
    let u = evd.U();
    let eigenvalues = DVector::from_fn(n, |i, _| s[i]);
    let eigenvectors = DMatrix::from_fn(n, n, |i, j| u[(i, j)]);
    debug_assert!(eigenvalues.as_slice().windows(2).all(|w| w[0] <= w[1]));
    Ok(EigenSystem {
        eigenvalues,
        eigenvectors,
    })
}

/// Cholesky factor `A = L Lᵀ` of a symmetric positive definite matrix.
#[derive(Debug, Clone)]
pub struct SpdFactorization {
    lower: DMatrix<f64>,
}

/// Factorizes `a`; fails at the first non-positive pivot.
pub fn spd_factorize(a: &SymmetricMatrix) -> Result<SpdFactorization> {
    let n = a.order();
    let src = a.as_matrix();
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut diag = src[(j, j)];
        for k in 0..j {
            diag -= l[(j, k)] * l[(j, k)];
        }
        if !(diag > 0.0) {
            return Err(Error::NotPositiveDefinite {
                index: j,
                value: diag,
            });
        }
        let pivot = diag.sqrt();
        l[(j, j)] = pivot;
        for i in (j + 1)..n {
            let mut s = src[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / pivot;
        }
    }
    Ok(SpdFactorization { lower: l })
}

impl SpdFactorization {
    pub fn order(&self) -> usize {
        self.lower.nrows()
    }

    /// Solves `A x = b` into `b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) -> Result<()> {
        let n = self.order();
        if b.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: b.len(),
            });
        }
        let l = &self.lower;
        // L y = b
        for i in 0..n {
            let mut s = b[i];
            for k in 0..i {
                s -= l[(i, k)] * b[k];
            }
            b[i] = s / l[(i, i)];
        }
        // Lᵀ x = y; column i of L is row i of Lᵀ, contiguous in column-major storage.
        for i in (0..n).rev() {
            let mut s = b[i];
            for k in (i + 1)..n {
                s -= l[(k, i)] * b[k];
            }
            b[i] = s / l[(i, i)];
        }
        Ok(())
    }
}

/// Solves `A x = b` using a precomputed factorization.
pub fn spd_solve(f: &SpdFactorization, b: &DVector<f64>) -> Result<DVector<f64>> {
    let mut x = b.clone();
    f.solve_in_place(x.as_mut_slice())?;
    Ok(x)
}
