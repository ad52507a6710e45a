//! Lagrangian angles of symmetric matrices.
//!
//! For a real symmetric `A` the lifted angle is `θ̃(A) = Σ arctan λ_i(A)`,
//! a real lift of `arg det(I + iA)`. On `Sym(R^{n+1})` the space-time angle
//! `Θ̃(A) = tr arg(I_n + iA)` uses the degenerate identity
//! `I_n = diag(0, 1, …, 1)`. It is smooth away from the degenerate locus
//! `𝓢 = {diag(0, A⁺)}` and extended to `𝓢` by `π/2 + θ̃(A⁺)`, which is the
//! smallest upper semicontinuous extension.
//!
//! The hot path evaluates `Θ̃` with the block identity
//!
//! ```text
//! Θ̃(A) − θ̃(A⁺) = arg( i·a00 + ā0 (I + iA⁺)⁻¹ ā0ᵀ ) ∈ [−π/2, π/2]
//! ```
//!
//! where `A = [[a00, ā0], [ā0ᵀ, A⁺]]`. [`spacetime_angle_direct`] sums the
//! arguments of the eigenvalues of the non-normal matrix `I_n + iA` and is
//! kept as an independent cross-check.

use std::f64::consts::FRAC_PI_2;
use std::fmt;

use nalgebra::{Complex, DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Complex64 = Complex<f64>;

/// Relative tolerance used to decide membership of the degenerate locus.
pub const DEFAULT_LOCUS_TOL: f64 = 1e-9;

/// Relative asymmetry accepted (and symmetrized away) on construction.
pub const ASYMMETRY_TOL: f64 = 1e-12;

const EIGEN_EPS: f64 = 1e-15;
const EIGEN_MAX_ITER: usize = 10_000;

/// Dense real symmetric matrix.
///
/// Construction symmetrizes the input as `(M + Mᵀ)/2`, so `get(i, j) ==
/// get(j, i)` holds bit for bit.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MatrixJson", into = "MatrixJson")]
pub struct SymMatrix {
    inner: DMatrix<f64>,
}

/// Wire format: `{"dim": m, "rows": [[...], ...]}`, row-major.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MatrixJson {
    pub dim: usize,
    pub rows: Vec<Vec<f64>>,
}

impl TryFrom<MatrixJson> for SymMatrix {
    type Error = Error;

    fn try_from(json: MatrixJson) -> Result<Self> {
        if json.rows.len() != json.dim {
            return Err(Error::input(format!(
                "matrix declares dim {} but has {} rows",
                json.dim,
                json.rows.len()
            )));
        }
        SymMatrix::from_rows(&json.rows)
    }
}

impl From<SymMatrix> for MatrixJson {
    fn from(m: SymMatrix) -> Self {
        let dim = m.dim();
        let rows = (0..dim)
            .map(|i| (0..dim).map(|j| m.get(i, j)).collect())
            .collect();
        MatrixJson { dim, rows }
    }
}

impl SymMatrix {
    /// Wraps a square matrix, rejecting non-finite entries and asymmetry
    /// beyond [`ASYMMETRY_TOL`] relative to `1 + ‖M‖_F`.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() == 0 || m.nrows() != m.ncols() {
            return Err(Error::input(format!(
                "expected a non-empty square matrix, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::input("matrix has non-finite entries"));
        }
        let scale = 1.0 + m.norm();
        let dim = m.nrows();
        for i in 0..dim {
            for j in (i + 1)..dim {
                if (m[(i, j)] - m[(j, i)]).abs() > ASYMMETRY_TOL * scale {
                    return Err(Error::input(format!(
                        "matrix is not symmetric at ({i}, {j}): {} vs {}",
                        m[(i, j)],
                        m[(j, i)]
                    )));
                }
            }
        }
        Ok(Self::symmetrized(m))
    }

    fn symmetrized(m: DMatrix<f64>) -> Self {
        let inner = (&m + m.transpose()) * 0.5;
        SymMatrix { inner }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.len();
        if let Some(bad) = rows.iter().position(|r| r.len() != dim) {
            return Err(Error::input(format!(
                "row {bad} has {} entries, expected {dim}",
                rows[bad].len()
            )));
        }
        Self::new(DMatrix::from_fn(dim, dim, |i, j| rows[i][j]))
    }

    pub fn from_row_slice(dim: usize, entries: &[f64]) -> Result<Self> {
        if entries.len() != dim * dim {
            return Err(Error::input(format!(
                "expected {} entries for a {dim}x{dim} matrix, got {}",
                dim * dim,
                entries.len()
            )));
        }
        Self::new(DMatrix::from_row_slice(dim, dim, entries))
    }

    /// Symmetric part of an arbitrary square matrix; never rejects asymmetry.
    pub fn symmetric_part(m: &DMatrix<f64>) -> Result<Self> {
        if m.nrows() == 0 || m.nrows() != m.ncols() || m.iter().any(|v| !v.is_finite()) {
            return Err(Error::input("expected a finite non-empty square matrix"));
        }
        Ok(Self::symmetrized(m.clone()))
    }

    pub fn diag(values: &[f64]) -> Self {
        assert!(!values.is_empty(), "diagonal matrix needs at least one entry");
        SymMatrix {
            inner: DMatrix::from_diagonal(&DVector::from_row_slice(values)),
        }
    }

    pub fn zeros(dim: usize) -> Self {
        assert!(dim > 0);
        SymMatrix {
            inner: DMatrix::zeros(dim, dim),
        }
    }

    pub fn identity(dim: usize) -> Self {
        assert!(dim > 0);
        SymMatrix {
            inner: DMatrix::identity(dim, dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.inner.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.inner[(i, j)]
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.inner
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.inner
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.inner.norm()
    }

    /// Entrywise sum. Panics if the dimensions differ.
    pub fn add(&self, other: &SymMatrix) -> SymMatrix {
        assert_eq!(self.dim(), other.dim(), "dimension mismatch");
        SymMatrix {
            inner: &self.inner + &other.inner,
        }
    }

    pub fn scale(&self, factor: f64) -> SymMatrix {
        SymMatrix {
            inner: &self.inner * factor,
        }
    }

    /// Convex combination `(1 − s)·self + s·other`.
    pub fn lerp(&self, other: &SymMatrix, s: f64) -> SymMatrix {
        assert_eq!(self.dim(), other.dim(), "dimension mismatch");
        SymMatrix {
            inner: &self.inner * (1.0 - s) + &other.inner * s,
        }
    }

    /// `D·self·D` for a diagonal `D`.
    pub fn congruence_diag(&self, d: &[f64]) -> SymMatrix {
        assert_eq!(d.len(), self.dim());
        SymMatrix {
            inner: DMatrix::from_fn(self.dim(), self.dim(), |i, j| d[i] * self.inner[(i, j)] * d[j]),
        }
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        let eig = self.eigen()?;
        let mut values: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        values.sort_by(f64::total_cmp);
        Ok(values)
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        Ok(self.eigenvalues()?[0])
    }

    pub(crate) fn eigen(&self) -> Result<SymmetricEigen<f64, nalgebra::Dyn>> {
        SymmetricEigen::try_new(self.inner.clone(), EIGEN_EPS, EIGEN_MAX_ITER).ok_or_else(|| {
            Error::numerical(format!(
                "symmetric eigensolve did not converge (dim {}, ‖A‖_F = {:e})",
                self.dim(),
                self.frobenius_norm()
            ))
        })
    }
}

impl fmt::Debug for SymMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows: Vec<Vec<f64>> = (0..self.dim())
            .map(|i| (0..self.dim()).map(|j| self.get(i, j)).collect())
            .collect();
        f.debug_struct("SymMatrix").field("rows", &rows).finish()
    }
}

/// How an [`AngleResult`] was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AngleMethod {
    BlockFormula,
    DirectEigensolve,
    Limit,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AngleResult {
    pub angle: f64,
    pub on_degenerate_locus: bool,
    pub method: AngleMethod,
}

/// `θ̃(A) = Σ arctan λ_i(A)`, in `(−mπ/2, mπ/2)`.
pub fn lifted_angle(a: &SymMatrix) -> Result<f64> {
    let eig = a.eigen()?;
    Ok(eig.eigenvalues.iter().map(|l| l.atan()).sum())
}

/// Corner, first-row tail and trailing block of a symmetric matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockParts {
    pub corner: f64,
    pub edge: DVector<f64>,
    pub trailing: SymMatrix,
}

impl BlockParts {
    pub fn assemble(&self) -> SymMatrix {
        let m = self.trailing.dim() + 1;
        let mut inner = DMatrix::zeros(m, m);
        inner[(0, 0)] = self.corner;
        for k in 0..m - 1 {
            inner[(0, k + 1)] = self.edge[k];
            inner[(k + 1, 0)] = self.edge[k];
        }
        inner
            .view_mut((1, 1), (m - 1, m - 1))
            .copy_from(self.trailing.as_matrix());
        SymMatrix { inner }
    }
}

/// Splits `A` into `(a00, ā0, A⁺)`.
pub fn block_decompose(a: &SymMatrix) -> Result<BlockParts> {
    let m = a.dim();
    if m < 2 {
        return Err(Error::domain("block decomposition needs dim >= 2"));
    }
    let inner = a.as_matrix();
    Ok(BlockParts {
        corner: inner[(0, 0)],
        edge: DVector::from_fn(m - 1, |k, _| inner[(0, k + 1)]),
        trailing: SymMatrix {
            inner: inner.view((1, 1), (m - 1, m - 1)).into_owned(),
        },
    })
}

/// Whether `A = diag(0, A⁺)` up to `tol·(1 + ‖A‖_F)`.
///
/// A 1×1 matrix has no edge and is degenerate iff its single entry vanishes.
pub fn in_degenerate_locus(a: &SymMatrix, tol: f64) -> bool {
    let bound = tol * (1.0 + a.frobenius_norm());
    let inner = a.as_matrix();
    if inner[(0, 0)].abs() > bound {
        return false;
    }
    let edge_norm = (1..a.dim())
        .map(|k| inner[(0, k)] * inner[(0, k)])
        .sum::<f64>()
        .sqrt();
    edge_norm <= bound
}

/// `Θ̃(A)` with the locus decided at [`DEFAULT_LOCUS_TOL`].
pub fn spacetime_lifted_angle(a: &SymMatrix) -> Result<AngleResult> {
    spacetime_lifted_angle_with_tol(a, DEFAULT_LOCUS_TOL)
}

pub fn spacetime_lifted_angle_with_tol(a: &SymMatrix, locus_tol: f64) -> Result<AngleResult> {
    let parts = block_decompose(a)?;
    let eig = parts.trailing.eigen()?;
    let trailing_angle: f64 = eig.eigenvalues.iter().map(|l| l.atan()).sum();

    if in_degenerate_locus(a, locus_tol) {
        return Ok(AngleResult {
            angle: FRAC_PI_2 + trailing_angle,
            on_degenerate_locus: true,
            method: AngleMethod::BlockFormula,
        });
    }

    // ā0 (I + iA⁺)⁻¹ ā0ᵀ in the eigenbasis of A⁺: Σ w_k² (1 − iλ_k)/(1 + λ_k²).
    let w = eig.eigenvectors.transpose() * &parts.edge;
    let (mut re, mut im) = (0.0, parts.corner);
    for (wk, lk) in w.iter().zip(eig.eigenvalues.iter()) {
        let weight = wk * wk / (1.0 + lk * lk);
        re += weight;
        im -= weight * lk;
    }
    let arg = im.atan2(re).clamp(-FRAC_PI_2, FRAC_PI_2);
    Ok(AngleResult {
        angle: trailing_angle + arg,
        on_degenerate_locus: false,
        method: AngleMethod::BlockFormula,
    })
}

/// `Θ̃(A)` as `Σ arg λ` over the eigenvalues of `I_n + iA`, computed with a
/// general complex Schur decomposition. Undefined on the degenerate locus.
pub fn spacetime_angle_direct(a: &SymMatrix) -> Result<f64> {
    if a.dim() < 2 {
        return Err(Error::domain("space-time angle needs dim >= 2"));
    }
    if in_degenerate_locus(a, DEFAULT_LOCUS_TOL) {
        return Err(Error::domain(
            "matrix lies on the degenerate locus; I_n + iA has a zero eigenvalue",
        ));
    }
    let m = a.dim();
    let c = DMatrix::from_fn(m, m, |i, j| {
        let real = if i == j && i > 0 { 1.0 } else { 0.0 };
        Complex64::new(real, a.get(i, j))
    });
    let schur = nalgebra::linalg::Schur::try_new(c, 1e-15, 100_000)
        .ok_or_else(|| Error::numerical("complex Schur decomposition did not converge"))?;
    let (_, t) = schur.unpack();
    Ok((0..m).map(|k| t[(k, k)].arg()).sum())
}

/// `θ̃(I_n^p A I_n^p)`, which tends to `Θ̃(A)` as `p → ∞` off the locus.
pub fn scaled_angle(a: &SymMatrix, p: f64) -> Result<f64> {
    if !(p > 0.0 && p.is_finite()) {
        return Err(Error::domain(format!("scale p must be positive, got {p}")));
    }
    let mut d = vec![1.0; a.dim()];
    d[0] = p;
    lifted_angle(&a.congruence_diag(&d))
}

/// Determinant of a complex symmetric matrix through its first Schur
/// complement, `c00 · det(C⁺ − c̄0ᵀc̄0 / c00)`.
pub fn schur_det(c: &DMatrix<Complex64>) -> Result<Complex64> {
    let m = c.nrows();
    if m == 0 || m != c.ncols() {
        return Err(Error::input("expected a non-empty square complex matrix"));
    }
    if c.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::input("complex matrix has non-finite entries"));
    }
    let scale = 1.0 + c.norm();
    for i in 0..m {
        for j in (i + 1)..m {
            if (c[(i, j)] - c[(j, i)]).norm() > ASYMMETRY_TOL * scale {
                return Err(Error::input(format!(
                    "complex matrix is not symmetric at ({i}, {j})"
                )));
            }
        }
    }
    let c00 = c[(0, 0)];
    if c00.norm() <= 1e-14 * scale {
        return Err(Error::domain("leading entry c00 vanishes"));
    }
    if m == 1 {
        return Ok(c00);
    }
    let complement = DMatrix::from_fn(m - 1, m - 1, |i, j| {
        c[(i + 1, j + 1)] - c[(0, i + 1)] * c[(0, j + 1)] / c00
    });
    Ok(c00 * complement.lu().determinant())
}

/// Real and imaginary parts of `(I + iC)⁻¹`.
///
/// With `C = Qᵀ diag(λ) Q` these are `Qᵀ diag(1/(1+λ²)) Q` (positive
/// definite) and `Qᵀ diag(−λ/(1+λ²)) Q`.
pub fn resolvent_parts(c: &SymMatrix) -> Result<(SymMatrix, SymMatrix)> {
    let eig = c.eigen()?;
    let q = &eig.eigenvectors;
    let re_diag = eig.eigenvalues.map(|l| 1.0 / (1.0 + l * l));
    let im_diag = eig.eigenvalues.map(|l| -l / (1.0 + l * l));
    let re = q * DMatrix::from_diagonal(&re_diag) * q.transpose();
    let im = q * DMatrix::from_diagonal(&im_diag) * q.transpose();
    Ok((SymMatrix::symmetrized(re), SymMatrix::symmetrized(im)))
}

/// `I_n^η = diag(η, 1, …, 1)` of dimension `n + 1`.
pub fn degenerate_identity(eta: f64, n: usize) -> Result<SymMatrix> {
    if !(eta >= 0.0 && eta.is_finite()) {
        return Err(Error::domain(format!("eta must be non-negative, got {eta}")));
    }
    if n == 0 {
        return Err(Error::domain("space dimension must be positive"));
    }
    let mut d = vec![1.0; n + 1];
    d[0] = eta;
    Ok(SymMatrix::diag(&d))
}
