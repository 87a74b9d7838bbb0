#![allow(dead_code)]

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::seq::index::sample;
use rand::Rng;

pub type CMatrix = DMatrix<Complex64>;

/// `e^{2πi·jr/m}`, computed directly from the unreduced product.
pub fn entry(m: usize, j: usize, r: usize) -> Complex64 {
    let theta = 2.0 * PI * (j * r) as f64 / m as f64;
    Complex64::new(theta.cos(), theta.sin())
}

pub fn dft_block(m: usize, rows: &[usize], cells: &[usize]) -> CMatrix {
    CMatrix::from_fn(rows.len(), cells.len(), |a, b| entry(m, rows[a], cells[b]))
}

/// Eigenvalues of `B*B` through the general Hermitian solver, ascending.
pub fn gram_eigenvalues(b: &CMatrix) -> Vec<f64> {
    let g = b.adjoint() * b;
    let g = (&g + g.adjoint()).scale(0.5);
    let mut values: Vec<f64> = SymmetricEigen::new(g).eigenvalues.iter().copied().collect();
    values.sort_by(f64::total_cmp);
    values
}

pub fn extremes(m: usize, rows: &[usize], cells: &[usize]) -> (f64, f64) {
    let values = gram_eigenvalues(&dft_block(m, rows, cells));
    (values[0], values[values.len() - 1])
}

/// `λ_max/λ_min`, infinite when the rows do not span.
pub fn condition(m: usize, rows: &[usize], cells: &[usize]) -> f64 {
    if rows.len() < cells.len() {
        return f64::INFINITY;
    }
    let (lo, hi) = extremes(m, rows, cells);
    if lo <= 1e-9 * hi { f64::INFINITY } else { hi / lo }
}

pub fn random_subset<R: Rng>(rng: &mut R, m: usize, size: usize) -> Vec<usize> {
    let mut s: Vec<usize> = sample(rng, m, size).into_vec();
    s.sort_unstable();
    s
}

pub fn norm_sq(b: &CMatrix, w: &DVector<Complex64>) -> f64 {
    (b * w).norm_squared() / w.norm_squared()
}

pub fn shift(set: &[usize], s: usize, m: usize) -> Vec<usize> {
    let mut out: Vec<usize> = set.iter().map(|&x| (x + s) % m).collect();
    out.sort_unstable();
    out
}

/// Largest eigenvalue of a 2×2 (or 1×1) Hermitian matrix in closed form.
pub fn small_lambda_max(g: &CMatrix) -> f64 {
    match g.nrows() {
        1 => g[(0, 0)].re,
        2 => {
            let a = g[(0, 0)].re;
            let c = g[(1, 1)].re;
            let b = g[(0, 1)].norm();
            0.5 * (a + c) + (0.25 * (a - c) * (a - c) + b * b).sqrt()
        }
        _ => unreachable!("closed form only for n ≤ 2"),
    }
}
