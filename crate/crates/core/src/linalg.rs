//! Dense complex Hermitian algebra: validation, symmetrization,
//! eigendecomposition and eigenvector gauge tracking.
//!
//! Eigenvalues are always reported in ascending order, so a level index is its
//! rank in the spectrum. Eigenvector phases are arbitrary out of [`eigh`]; a
//! [`GaugeFrame`] fixes them by demanding a real, non-negative overlap with the
//! vectors of a neighbouring grid point, which is the discrete analogue of the
//! parallel-transport condition `<m|dm> = 0`.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;

/// Largest `|A - A^H|` entry accepted when constructing a [`HermitianOperator`].
pub const HERMITIAN_TOLERANCE: f64 = 1e-8;

/// Overlaps below this make eigenvector matching ambiguous.
pub const MIN_ALIGNMENT_OVERLAP: f64 = std::f64::consts::FRAC_1_SQRT_2;

pub fn c64(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// `out += alpha * x` without a temporary.
pub fn add_scaled(out: &mut CMatrix, alpha: f64, x: &CMatrix) {
    out.zip_apply(x, |a, b| *a += b * alpha);
}

/// Largest entry of `|A - A^H|`.
pub fn max_hermitian_deviation(a: &CMatrix) -> f64 {
    let n = a.nrows().min(a.ncols());
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    worst
}

/// Largest entry of `|A - B|`.
pub fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

/// `(A + A^H) / 2`. The result has an exactly real diagonal and exact
/// conjugate symmetry, and is bitwise idempotent.
pub fn hermitize(a: &CMatrix) -> HermitianOperator {
    let n = a.nrows();
    let mut out = CMatrix::zeros(n, n);
    for i in 0..n {
        out[(i, i)] = c64(a[(i, i)].re, 0.0);
        for j in (i + 1)..n {
            let upper = (a[(i, j)] + a[(j, i)].conj()) * 0.5;
            out[(i, j)] = upper;
            out[(j, i)] = upper.conj();
        }
    }
    HermitianOperator(out)
}

/// `tr(rho^2)`, computed as the squared Frobenius norm (valid for Hermitian
/// input).
pub fn purity(rho: &CMatrix) -> f64 {
    rho.iter().map(|z| z.norm_sqr()).sum()
}

/// A dense complex matrix with exact Hermitian symmetry.
#[derive(Clone, Debug, PartialEq)]
pub struct HermitianOperator(CMatrix);

impl HermitianOperator {
    /// Validates `m` and stores its symmetrized form.
    pub fn new(m: CMatrix) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::NotSquare {
                rows: m.nrows(),
                cols: m.ncols(),
            });
        }
        let max_deviation = max_hermitian_deviation(&m);
        if !(max_deviation <= HERMITIAN_TOLERANCE) {
            return Err(Error::NonHermitianInput { max_deviation });
        }
        Ok(hermitize(&m))
    }

    /// Builds a real symmetric operator from row-major entries.
    pub fn from_real_rows(n: usize, entries: &[f64]) -> Result<Self> {
        if entries.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                found: entries.len(),
            });
        }
        Self::new(CMatrix::from_row_iterator(
            n,
            n,
            entries.iter().map(|&x| c64(x, 0.0)),
        ))
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut m = CMatrix::zeros(n, n);
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = c64(d, 0.0);
        }
        HermitianOperator(m)
    }

    pub fn zeros(n: usize) -> Self {
        HermitianOperator(CMatrix::zeros(n, n))
    }

    pub fn identity(n: usize) -> Self {
        HermitianOperator(CMatrix::identity(n, n))
    }

    /// Wraps a matrix that is Hermitian by construction.
    pub(crate) fn from_matrix_unchecked(m: CMatrix) -> Self {
        HermitianOperator(m)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> CMatrix {
        self.0
    }

    pub fn scale(&self, factor: f64) -> Self {
        HermitianOperator(self.0.map(|z| z * factor))
    }

    pub fn add(&self, other: &HermitianOperator) -> Result<Self> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: other.dim(),
            });
        }
        Ok(HermitianOperator(&self.0 + &other.0))
    }

    /// Matrix elements `<m|A|n>` in the basis given by the columns of `v`.
    pub fn in_basis(&self, v: &CMatrix) -> HermitianOperator {
        hermitize(&(v.adjoint() * &self.0 * v))
    }

    /// Inverse of [`in_basis`](Self::in_basis): `V A V^H`.
    pub fn from_basis(&self, v: &CMatrix) -> HermitianOperator {
        hermitize(&(v * &self.0 * v.adjoint()))
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.0.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

/// Ascending eigenvalues with matching unit eigenvectors in the columns of
/// `vectors`.
#[derive(Clone, Debug, PartialEq)]
pub struct EigenSystem {
    pub values: Vec<f64>,
    pub vectors: CMatrix,
}

impl EigenSystem {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// `V diag(values) V^H`.
    pub fn reconstruct(&self) -> CMatrix {
        let n = self.dim();
        let mut scaled = self.vectors.clone();
        for k in 0..n {
            let value = self.values[k];
            scaled.column_mut(k).iter_mut().for_each(|z| *z *= value);
        }
        scaled * self.vectors.adjoint()
    }

    /// Largest `|eigenvalue|`, the spectral norm of the decomposed operator.
    pub fn spectral_radius(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).fold(0.0, f64::max)
    }

    /// Smallest separation between any two eigenvalues, with the pair that
    /// attains it. `None` for a 1x1 system.
    pub fn min_gap(&self) -> Option<(usize, usize, f64)> {
        let n = self.dim();
        let mut best: Option<(usize, usize, f64)> = None;
        for m in 0..n {
            for k in (m + 1)..n {
                let gap = (self.values[m] - self.values[k]).abs();
                if best.is_none_or(|(_, _, g)| gap < g) {
                    best = Some((m, k, gap));
                }
            }
        }
        best
    }
}

/// Eigendecomposition of a Hermitian operator with ascending eigenvalues.
pub fn eigh(h: &HermitianOperator) -> EigenSystem {
    let n = h.dim();
    let decomposition = h.matrix().clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        decomposition.eigenvalues[a].total_cmp(&decomposition.eigenvalues[b])
    });
    let values = order.iter().map(|&k| decomposition.eigenvalues[k]).collect();
    let mut vectors = CMatrix::zeros(n, n);
    for (dest, &src) in order.iter().enumerate() {
        vectors.set_column(dest, &decomposition.eigenvectors.column(src));
    }
    EigenSystem { values, vectors }
}

/// Reference eigenvectors from a neighbouring grid point.
#[derive(Clone, Debug, PartialEq)]
pub struct GaugeFrame {
    reference: CMatrix,
}

impl GaugeFrame {
    pub fn new(reference: CMatrix) -> Self {
        GaugeFrame { reference }
    }

    pub fn reference(&self) -> &CMatrix {
        &self.reference
    }
}

impl From<&EigenSystem> for GaugeFrame {
    fn from(system: &EigenSystem) -> Self {
        GaugeFrame::new(system.vectors.clone())
    }
}

/// Reorders and rephases `fresh` so that column `k` continues reference
/// column `k`: `<ref_k|aligned_k>` is real and non-negative. Eigenvalues are
/// permuted along with their vectors, so after a level crossing they are no
/// longer ascending.
pub fn gauge_align(frame: &GaugeFrame, fresh: &EigenSystem) -> Result<EigenSystem> {
    let n = fresh.dim();
    if frame.reference.ncols() != n || frame.reference.nrows() != n {
        return Err(Error::DimensionMismatch {
            expected: frame.reference.ncols(),
            found: n,
        });
    }
    let overlaps = frame.reference.adjoint() * &fresh.vectors;
    let mut taken = vec![false; n];
    let mut vectors = CMatrix::zeros(n, n);
    let mut values = vec![0.0; n];
    for k in 0..n {
        let (best, magnitude) = (0..n)
            .map(|j| (j, overlaps[(k, j)].norm()))
            .fold((0, -1.0), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
        if magnitude < MIN_ALIGNMENT_OVERLAP || taken[best] {
            return Err(Error::AmbiguousAlignment {
                level: k,
                overlap: magnitude,
            });
        }
        taken[best] = true;
        let phase = overlaps[(k, best)].conj() / magnitude;
        vectors.set_column(k, &(fresh.vectors.column(best) * phase));
        values[k] = fresh.values[best];
    }
    Ok(EigenSystem { values, vectors })
}
