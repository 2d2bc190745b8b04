//! Small dense helpers shared by the graph, sequence and bound modules.
//!
//! Everything here works on `nalgebra::DMatrix<f64>`; the matrices involved are
//! at most a few hundred rows, so dense routines are adequate.

use nalgebra::{DMatrix, SymmetricEigen};

/// The exact averaging matrix `(1/K) 1 1ᵀ`.
pub fn averaging_matrix(k: usize) -> DMatrix<f64> {
    DMatrix::from_element(k, k, 1.0 / k as f64)
}

/// Largest singular value.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .fold(0.0_f64, |acc, &s| acc.max(s))
}

/// Eigenvalues of a symmetric matrix, sorted ascending.
///
/// Only the lower triangle is trusted by the solver; callers check symmetry
/// beforehand when it matters.
pub fn symmetric_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let mut values: Vec<f64> = SymmetricEigen::new(m.clone()).eigenvalues.iter().copied().collect();
    values.sort_by(f64::total_cmp);
    values
}

/// Spectral radius of a symmetric matrix.
pub fn symmetric_spectral_radius(m: &DMatrix<f64>) -> f64 {
    symmetric_eigenvalues(m)
        .into_iter()
        .fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// Largest `|a_kl - a_lk|`.
pub fn symmetry_defect(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0_f64;
    for k in 0..n {
        for l in (k + 1)..n {
            worst = worst.max((m[(k, l)] - m[(l, k)]).abs());
        }
    }
    worst
}

/// Largest `|Σ_l a_kl - 1|` over rows.
pub fn row_sum_defect(m: &DMatrix<f64>) -> f64 {
    m.row_iter()
        .map(|row| (row.sum() - 1.0).abs())
        .fold(0.0_f64, f64::max)
}

/// Largest absolute entry.
pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// Spectral radius of a 2×2 matrix from the closed-form characteristic roots.
///
/// Complex roots share a modulus equal to `sqrt(det)`.
pub fn spectral_radius_2x2(h: &[[f64; 2]; 2]) -> f64 {
    let trace = h[0][0] + h[1][1];
    let det = h[0][0] * h[1][1] - h[0][1] * h[1][0];
    let disc = (h[0][0] - h[1][1]).powi(2) + 4.0 * h[0][1] * h[1][0];
    if disc >= 0.0 {
        let root = disc.sqrt();
        ((trace + root) / 2.0).abs().max(((trace - root) / 2.0).abs())
    } else {
        det.abs().sqrt()
    }
}
