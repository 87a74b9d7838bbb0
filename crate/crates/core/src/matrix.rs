//! Partial Fourier matrices, their Gram matrices, and the frame certificates
//! read off from the Gram spectrum.
//!
//! For a grid spectrum with cells `I` at order `m` and scale `d`, and a row
//! set `J`, the frequency set `Λ = (J + mZ)/d` satisfies
//!
//! ```text
//! (d·λ_min/m)·‖f‖² ≤ Σ_{λ∈Λ} |f(λ)|² ≤ (d·λ_max/m)·‖f‖²   for f ∈ PW_Ω
//! ```
//!
//! where `λ_min, λ_max` are the extreme eigenvalues of `G = B*B` and `B` is
//! the `|J|×|I|` block of the order-`m` DFT matrix. Both bounds are sharp.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::spectrum::{GridSpectrum, MAX_GRID_ORDER};

/// Relative threshold below which `λ_min` is treated as roundoff.
pub const CLAMP_TOLERANCE: f64 = 1e-9;

/// Allowed asymmetry of a Hermitian input, relative to its Frobenius norm.
pub const HERMITIAN_TOLERANCE: f64 = 1e-8;

/// Conditioning floor for [`inverse_sqrt`].
pub const SINGULAR_TOLERANCE: f64 = 1e-10;

pub type CMatrix = DMatrix<Complex64>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MatrixError {
    #[error("index {index} out of range for order {m}")]
    IndexOutOfRange { index: usize, m: usize },
    #[error("row selection is empty")]
    EmptySelection,
    #[error("matrix is not Hermitian: asymmetry {asymmetry:e} exceeds {limit:e}")]
    NotHermitian { asymmetry: f64, limit: f64 },
    #[error("operator is singular: lambda_min {lambda_min:e} vs lambda_max {lambda_max:e}")]
    SingularOperator { lambda_min: f64, lambda_max: f64 },
    #[error("order {m} exceeds the desk-scale limit {MAX_GRID_ORDER}")]
    ProblemTooLarge { m: usize },
    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
}

/// Sorted, deduplicated, nonempty subset of `{0, …, m−1}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(transparent)]
pub struct RowSelection(Vec<usize>);

impl RowSelection {
    pub fn new(m: usize, rows: &[usize]) -> Result<Self, MatrixError> {
        if let Some(&index) = rows.iter().find(|&&j| j >= m) {
            return Err(MatrixError::IndexOutOfRange { index, m });
        }
        let mut rows = rows.to_vec();
        rows.sort_unstable();
        rows.dedup();
        if rows.is_empty() {
            return Err(MatrixError::EmptySelection);
        }
        Ok(RowSelection(rows))
    }

    pub fn full(m: usize) -> Self {
        RowSelection((0..m).collect())
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// `Λ = {(j + k·m)/d : j ∈ J, k ∈ Z}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrequencySet {
    #[serde(rename = "J")]
    pub rows: RowSelection,
    pub m: usize,
    pub d: f64,
}

impl FrequencySet {
    pub fn new(rows: RowSelection, m: usize, d: f64) -> Self {
        FrequencySet { rows, m, d }
    }

    /// Smallest cyclic gap of `J` in `Z_m`, divided by `d`.
    pub fn separation(&self) -> f64 {
        let j = self.rows.indices();
        let mut gap = self.m + j[0] - j[j.len() - 1];
        for w in j.windows(2) {
            gap = gap.min(w[1] - w[0]);
        }
        gap as f64 / self.d
    }

    /// Period of `Λ` on the real line.
    pub fn period(&self) -> f64 {
        self.m as f64 / self.d
    }
}

/// All `λ ∈ Λ` inside `[x0, x1)`, ascending.
pub fn enumerate_lambda(set: &FrequencySet, x0: f64, x1: f64) -> Vec<f64> {
    if !(x0 < x1) {
        return Vec::new();
    }
    let m = set.m as i64;
    let mut out = Vec::new();
    for &j in set.rows.indices() {
        let j = j as i64;
        // k range from (j + k m)/d ∈ [x0, x1), widened by one and filtered.
        let k_lo = ((x0 * set.d - j as f64) / m as f64).floor() as i64 - 1;
        let k_hi = ((x1 * set.d - j as f64) / m as f64).ceil() as i64 + 1;
        for k in k_lo..=k_hi {
            let lambda = (j + k * m) as f64 / set.d;
            if lambda >= x0 && lambda < x1 {
                out.push(lambda);
            }
        }
    }
    out.sort_by(f64::total_cmp);
    out
}

/// `exp(2πi·j·r/m)`, with the phase reduced mod `m` before scaling.
pub fn dft_entry(m: usize, j: usize, r: usize) -> Complex64 {
    let phase = ((j as u128 * r as u128) % m as u128) as f64;
    Complex64::from_polar(1.0, 2.0 * PI * phase / m as f64)
}

/// Rows `J`, columns `I` of the order-`m` DFT matrix (unnormalized).
pub fn build_submatrix(m: usize, cells: &[usize], rows: &[usize]) -> Result<CMatrix, MatrixError> {
    if m > MAX_GRID_ORDER {
        return Err(MatrixError::ProblemTooLarge { m });
    }
    if let Some(&index) = cells.iter().chain(rows).find(|&&x| x >= m) {
        return Err(MatrixError::IndexOutOfRange { index, m });
    }
    Ok(CMatrix::from_fn(rows.len(), cells.len(), |a, b| {
        dft_entry(m, rows[a], cells[b])
    }))
}

/// `B*B`, symmetrized by averaging with its conjugate transpose.
pub fn gram(b: &CMatrix) -> CMatrix {
    let g = b.adjoint() * b;
    hermitian_part(&g)
}

pub(crate) fn hermitian_part(g: &CMatrix) -> CMatrix {
    (g + g.adjoint()).scale(0.5)
}

fn check_hermitian(g: &CMatrix) -> Result<(), MatrixError> {
    if !g.is_square() {
        return Err(MatrixError::NotSquare { rows: g.nrows(), cols: g.ncols() });
    }
    let asymmetry = (g - g.adjoint()).norm();
    let limit = HERMITIAN_TOLERANCE * g.norm();
    if asymmetry > limit {
        return Err(MatrixError::NotHermitian { asymmetry, limit });
    }
    Ok(())
}

/// Full eigendecomposition of a Hermitian matrix, eigenvalues ascending and
/// eigenvectors in matching columns.
pub fn hermitian_eigen(g: &CMatrix) -> Result<(Vec<f64>, CMatrix), MatrixError> {
    check_hermitian(g)?;
    let eig = SymmetricEigen::new(hermitian_part(g));
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMatrix::from_fn(g.nrows(), order.len(), |row, col| {
        eig.eigenvectors[(row, order[col])]
    });
    Ok((values, vectors))
}

/// Extreme eigenvalues of a Hermitian PSD matrix. `λ_min` is clamped to zero
/// when it lies within `1e-9·λ_max` of zero.
pub fn eigen_extremes(g: &CMatrix) -> Result<(f64, f64), MatrixError> {
    check_hermitian(g)?;
    let (lo, hi) = raw_extremes(g);
    Ok((clamp_min(lo, hi), hi))
}

pub(crate) fn clamp_min(lo: f64, hi: f64) -> f64 {
    if lo.abs() <= CLAMP_TOLERANCE * hi.abs() {
        0.0
    } else {
        lo
    }
}

/// Extremes without the Hermitian check; closed form for orders 1 and 2.
pub(crate) fn raw_extremes(g: &CMatrix) -> (f64, f64) {
    match g.nrows() {
        0 => (0.0, 0.0),
        1 => (g[(0, 0)].re, g[(0, 0)].re),
        2 => {
            let a = g[(0, 0)].re;
            let c = g[(1, 1)].re;
            let b = g[(0, 1)];
            let mean = 0.5 * (a + c);
            let radius = (0.5 * (a - c)).hypot(b.norm());
            (mean - radius, mean + radius)
        }
        _ => {
            let values = SymmetricEigen::new(hermitian_part(g)).eigenvalues;
            let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (lo, hi)
        }
    }
}

/// `M^{-1/2}` for a Hermitian positive definite `M`.
pub fn inverse_sqrt(mat: &CMatrix) -> Result<CMatrix, MatrixError> {
    let (values, vectors) = hermitian_eigen(mat)?;
    let lambda_min = values[0];
    let lambda_max = values[values.len() - 1];
    if !(lambda_min > SINGULAR_TOLERANCE * lambda_max) {
        return Err(MatrixError::SingularOperator { lambda_min, lambda_max });
    }
    let scales = DVector::from_iterator(
        values.len(),
        values.iter().map(|&v| Complex64::new(v.sqrt().recip(), 0.0)),
    );
    let scaled = CMatrix::from_fn(vectors.nrows(), vectors.ncols(), |r, c| vectors[(r, c)] * scales[c]);
    Ok(hermitian_part(&(scaled * vectors.adjoint())))
}

/// Exact frame and sampling bounds for `E((J + mZ)/d)` on a grid spectrum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameCertificate {
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// Lower constant in `Σ|f(λ)|² ≥ a·‖f‖²` (unitary Fourier transform).
    pub a_sampling: f64,
    #[serde(rename = "A_sampling")]
    pub upper_sampling: f64,
    /// Lower frame bound of `E(Λ)` in `L²(Ω)`.
    pub a_frame: f64,
    #[serde(rename = "A_frame")]
    pub upper_frame: f64,
    /// `a_frame/|Ω|`, independent of `d`.
    pub normalized_lower: f64,
    pub normalized_upper: f64,
    pub is_frame: bool,
    pub m: usize,
    pub n: usize,
    #[serde(rename = "J_size")]
    pub rows: usize,
    pub d: f64,
}

impl FrameCertificate {
    pub fn from_extremes(grid: &GridSpectrum, rows: usize, lambda_min: f64, lambda_max: f64) -> Self {
        let m = grid.m() as f64;
        let n = grid.n() as f64;
        let d = grid.d();
        FrameCertificate {
            lambda_min,
            lambda_max,
            a_sampling: d * lambda_min / m,
            upper_sampling: d * lambda_max / m,
            a_frame: 2.0 * PI * d * lambda_min / m,
            upper_frame: 2.0 * PI * d * lambda_max / m,
            normalized_lower: lambda_min / n,
            normalized_upper: lambda_max / n,
            is_frame: lambda_min > 0.0,
            m: grid.m(),
            n: grid.n(),
            rows,
            d,
        }
    }

    /// `normalized_upper / normalized_lower`; infinite when not a frame.
    pub fn condition_ratio(&self) -> f64 {
        if self.is_frame {
            self.lambda_max / self.lambda_min
        } else {
            f64::INFINITY
        }
    }
}

pub fn grid_submatrix(grid: &GridSpectrum, rows: &RowSelection) -> Result<CMatrix, MatrixError> {
    build_submatrix(grid.m(), grid.cells(), rows.indices())
}

pub fn frame_certificate(grid: &GridSpectrum, rows: &RowSelection) -> Result<FrameCertificate, MatrixError> {
    let b = grid_submatrix(grid, rows)?;
    let (lo, hi) = eigen_extremes(&gram(&b))?;
    Ok(FrameCertificate::from_extremes(grid, rows.len(), lo, hi))
}

/// Full Gram spectrum, ascending.
pub fn gram_spectrum(grid: &GridSpectrum, rows: &RowSelection) -> Result<Vec<f64>, MatrixError> {
    let b = grid_submatrix(grid, rows)?;
    Ok(hermitian_eigen(&gram(&b))?.0)
}
