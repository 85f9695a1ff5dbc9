//! Complex subspace algebra built on a single rank-revealing primitive, the
//! singular value decomposition.
//!
//! Every basis handed out by this module has orthonormal columns under the
//! conjugate inner product. Bases are not canonical: two calls on matrices
//! spanning the same subspace may return different (rotated) bases, so
//! callers should only ever compare spans and ranks.

use nalgebra::{DMatrix, SVD};
use num_complex::Complex64;
use thiserror::Error;

/// Dense complex matrix used throughout the crate.
pub type CMatrix = DMatrix<Complex64>;

/// Tolerance used for orthonormality and containment checks.
pub const SUBSPACE_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix entry ({row}, {col}) is not finite")]
    NonFinite { row: usize, col: usize },
    #[error("ambient dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("subspace is not contained in the enclosing span (residual {residual:.3e})")]
    NotContained { residual: f64 },
}

/// Orthonormal basis of a subspace of `C^ambient_dim`, stored as columns.
#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceBasis {
    vectors: CMatrix,
}

impl SubspaceBasis {
    /// The zero subspace of `C^ambient`.
    pub fn empty(ambient: usize) -> Self {
        Self { vectors: CMatrix::zeros(ambient, 0) }
    }

    /// The whole space `C^ambient` with the standard basis.
    pub fn full(ambient: usize) -> Self {
        Self { vectors: CMatrix::identity(ambient, ambient) }
    }

    /// Wraps columns that are already orthonormal. Only checked in debug builds.
    pub fn from_orthonormal(vectors: CMatrix) -> Self {
        debug_assert!(orthonormality_error(&vectors) < 1e-8);
        Self { vectors }
    }

    /// Orthonormal basis for the column span of `a`.
    pub fn span_of(a: &CMatrix, tol: Option<f64>) -> Result<Self, LinalgError> {
        check_finite(a)?;
        if a.ncols() == 0 || a.nrows() == 0 {
            return Ok(Self::empty(a.nrows()));
        }
        let tol = tol.unwrap_or_else(|| default_tol(a.nrows(), a.ncols()));
        let svd = SVD::new(a.clone(), true, false);
        let u = svd.u.as_ref().expect("left singular vectors requested");
        let order = descending_order(svd.singular_values.as_slice());
        let smax = order.first().map(|&i| svd.singular_values[i]).unwrap_or(0.0);
        let keep: Vec<usize> = order
            .into_iter()
            .filter(|&i| smax > 0.0 && svd.singular_values[i] > tol * smax)
            .collect();
        Ok(Self { vectors: select_columns(u, &keep) })
    }

    pub fn ambient_dim(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.dim() == 0
    }

    pub fn vectors(&self) -> &CMatrix {
        &self.vectors
    }

    pub fn into_vectors(self) -> CMatrix {
        self.vectors
    }

    /// Largest entry of `a - P a`, where `P` projects onto this span.
    pub fn containment_residual(&self, a: &CMatrix) -> f64 {
        if a.ncols() == 0 {
            return 0.0;
        }
        let b = &self.vectors;
        let projected = b * (b.adjoint() * a);
        max_abs(&(a - projected))
    }

    /// Keeps the first `k` basis vectors.
    pub fn truncate(&self, k: usize) -> Self {
        let k = k.min(self.dim());
        Self { vectors: self.vectors.columns(0, k).into_owned() }
    }
}

/// Rank threshold `max(rows, cols) * eps * 64`, relative to the largest
/// singular value.
pub fn default_tol(rows: usize, cols: usize) -> f64 {
    rows.max(cols).max(1) as f64 * f64::EPSILON * 64.0
}

pub fn check_finite(a: &CMatrix) -> Result<(), LinalgError> {
    for (idx, z) in a.iter().enumerate() {
        if !z.re.is_finite() || !z.im.is_finite() {
            // nalgebra stores column-major
            let (row, col) = (idx % a.nrows(), idx / a.nrows());
            return Err(LinalgError::NonFinite { row, col });
        }
    }
    Ok(())
}

/// Singular values in descending order.
pub fn singular_values(a: &CMatrix) -> Vec<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Vec::new();
    }
    let mut s: Vec<f64> = a.clone().singular_values().iter().copied().collect();
    s.sort_by(|x, y| y.total_cmp(x));
    s
}

/// Largest singular value (0 for empty matrices).
pub fn spectral_norm(a: &CMatrix) -> f64 {
    singular_values(a).first().copied().unwrap_or(0.0)
}

/// Number of singular values above `tol * sigma_max`. Zero and empty
/// matrices have rank 0.
pub fn numerical_rank(a: &CMatrix, tol: Option<f64>) -> Result<usize, LinalgError> {
    check_finite(a)?;
    let tol = tol.unwrap_or_else(|| default_tol(a.nrows(), a.ncols()));
    Ok(rank_from_values(&singular_values(a), tol))
}

/// Threshold to pass for `a` so that singular values are compared against
/// `tol * reference` instead of `tol * sigma_max(a)`.
pub fn tol_relative_to(a: &CMatrix, reference: f64, tol: Option<f64>) -> Option<f64> {
    let smax = spectral_norm(a);
    if smax <= 0.0 || reference <= 0.0 {
        return tol;
    }
    let tol = tol.unwrap_or_else(|| default_tol(a.nrows(), a.ncols()));
    Some(tol * reference / smax)
}

fn rank_from_values(s: &[f64], tol: f64) -> usize {
    match s.first() {
        Some(&smax) if smax > 0.0 => s.iter().filter(|&&v| v > tol * smax).count(),
        _ => 0,
    }
}

/// Orthonormal basis of the right kernel `{x : a x = 0}`.
pub fn null_space_basis(a: &CMatrix, tol: Option<f64>) -> Result<SubspaceBasis, LinalgError> {
    check_finite(a)?;
    let (rows, cols) = a.shape();
    if cols == 0 {
        return Ok(SubspaceBasis::empty(0));
    }
    if rows == 0 {
        return Ok(SubspaceBasis::full(cols));
    }
    let tol = tol.unwrap_or_else(|| default_tol(rows, cols));
    // A thin SVD of a wide matrix does not expose the kernel; pad with zero
    // rows so that the full right factor is computed.
    let padded = if rows < cols {
        let mut p = CMatrix::zeros(cols, cols);
        p.view_mut((0, 0), (rows, cols)).copy_from(a);
        p
    } else {
        a.clone()
    };
    let svd = SVD::new(padded, false, true);
    let v_t = svd.v_t.as_ref().expect("right singular vectors requested");
    let values = svd.singular_values.as_slice();
    let order = descending_order(values);
    let sorted: Vec<f64> = order.iter().map(|&i| values[i]).collect();
    let rank = rank_from_values(&sorted, tol);
    let mut basis = CMatrix::zeros(cols, cols - rank);
    for (j, &idx) in order[rank..].iter().enumerate() {
        basis.set_column(j, &v_t.row(idx).adjoint());
    }
    Ok(SubspaceBasis { vectors: basis })
}

/// Orthonormal basis of `{w : w^H a = 0}`; the rows `w^H` annihilate `a`
/// from the left.
pub fn left_null_space_basis(a: &CMatrix, tol: Option<f64>) -> Result<SubspaceBasis, LinalgError> {
    null_space_basis(&a.adjoint(), tol)
}

/// Orthonormal basis of `span(b1) ∩ span(b2)`.
pub fn intersect_subspaces(
    b1: &SubspaceBasis,
    b2: &SubspaceBasis,
) -> Result<SubspaceBasis, LinalgError> {
    let n = same_ambient(b1, b2)?;
    if b1.is_empty() || b2.is_empty() {
        return Ok(SubspaceBasis::empty(n));
    }
    let stacked = hcat(&[b1.vectors(), &(-b2.vectors())]);
    let coeffs = null_space_basis(&stacked, None)?;
    if coeffs.is_empty() {
        return Ok(SubspaceBasis::empty(n));
    }
    let top = coeffs.vectors().rows(0, b1.dim()).into_owned();
    SubspaceBasis::span_of(&(b1.vectors() * top), Some(1e-6))
}

/// Orthonormal basis of the orthogonal complement of `span(sub)` inside
/// `span(big)`.
pub fn complement_within(
    big: &SubspaceBasis,
    sub: &SubspaceBasis,
) -> Result<SubspaceBasis, LinalgError> {
    same_ambient(big, sub)?;
    let residual = big.containment_residual(sub.vectors());
    if residual > SUBSPACE_TOL {
        return Err(LinalgError::NotContained { residual });
    }
    if sub.is_empty() {
        return Ok(big.clone());
    }
    let coupling = sub.vectors().adjoint() * big.vectors();
    let coeffs = null_space_basis(&coupling, None)?;
    Ok(SubspaceBasis { vectors: big.vectors() * coeffs.vectors() })
}

fn same_ambient(a: &SubspaceBasis, b: &SubspaceBasis) -> Result<usize, LinalgError> {
    if a.ambient_dim() != b.ambient_dim() {
        return Err(LinalgError::DimensionMismatch { left: a.ambient_dim(), right: b.ambient_dim() });
    }
    Ok(a.ambient_dim())
}

fn descending_order(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[j].total_cmp(&values[i]));
    order
}

fn select_columns(m: &CMatrix, cols: &[usize]) -> CMatrix {
    let mut out = CMatrix::zeros(m.nrows(), cols.len());
    for (j, &c) in cols.iter().enumerate() {
        out.set_column(j, &m.column(c));
    }
    out
}

/// `max |B^H B - I|` over all entries.
pub fn orthonormality_error(b: &CMatrix) -> f64 {
    let gram = b.adjoint() * b;
    max_abs(&(gram - CMatrix::identity(b.ncols(), b.ncols())))
}

/// Largest entry magnitude (0 for empty matrices).
pub fn max_abs(a: &CMatrix) -> f64 {
    a.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Horizontal concatenation. All parts must share a row count.
pub fn hcat(parts: &[&CMatrix]) -> CMatrix {
    let rows = parts.first().map(|p| p.nrows()).unwrap_or(0);
    let cols = parts.iter().map(|p| p.ncols()).sum();
    let mut out = CMatrix::zeros(rows, cols);
    let mut at = 0;
    for p in parts {
        assert_eq!(p.nrows(), rows, "hcat row mismatch");
        out.view_mut((0, at), (rows, p.ncols())).copy_from(*p);
        at += p.ncols();
    }
    out
}

/// Vertical concatenation. All parts must share a column count.
pub fn vcat(parts: &[&CMatrix]) -> CMatrix {
    let cols = parts.first().map(|p| p.ncols()).unwrap_or(0);
    let rows = parts.iter().map(|p| p.nrows()).sum();
    let mut out = CMatrix::zeros(rows, cols);
    let mut at = 0;
    for p in parts {
        assert_eq!(p.ncols(), cols, "vcat column mismatch");
        out.view_mut((at, 0), (p.nrows(), cols)).copy_from(*p);
        at += p.nrows();
    }
    out
}

/// Block-diagonal matrix from the given blocks (empty blocks allowed).
pub fn block_diag(blocks: &[&CMatrix]) -> CMatrix {
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = CMatrix::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), b.shape()).copy_from(*b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}
