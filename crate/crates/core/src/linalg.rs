//! Small dense complex matrix helpers.

use nalgebra::DMatrix;
use num_complex::Complex64;

/// max |A_ij − conj(A_ji)|
pub fn hermitian_deviation(a: &DMatrix<Complex64>) -> f64 {
    let n = a.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    worst
}

/// Hermitian deviation of a row-major n×n block.
pub(crate) fn hermitian_deviation_flat(block: &[Complex64], n: usize) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((block[i * n + j] - block[j * n + i].conj()).norm());
        }
    }
    worst
}

/// Eigenvalues of a Hermitian matrix; only the upper triangle is read.
pub fn hermitian_eigenvalues(a: &DMatrix<Complex64>) -> Vec<f64> {
    let n = a.nrows();
    match n {
        0 => Vec::new(),
        1 => vec![a[(0, 0)].re],
        2 => {
            let (p, q, b) = (a[(0, 0)].re, a[(1, 1)].re, a[(0, 1)]);
            let mean = 0.5 * (p + q);
            let radius = (0.25 * (p - q) * (p - q) + b.norm_sqr()).sqrt();
            vec![mean - radius, mean + radius]
        }
        _ => {
            // symmetrize so the decomposition sees an exactly Hermitian input
            let sym = DMatrix::from_fn(n, n, |i, j| {
                if i <= j {
                    a[(i, j)]
                } else {
                    a[(j, i)].conj()
                }
            });
            sym.symmetric_eigenvalues().iter().copied().collect()
        }
    }
}

/// Trace norm Σ|λ_i| of a Hermitian matrix.
pub fn hermitian_trace_norm(a: &DMatrix<Complex64>) -> f64 {
    hermitian_eigenvalues(a).iter().map(|x| x.abs()).sum()
}

/// Trace norm Σ s_i of a general square matrix via singular values.
pub fn trace_norm(a: &DMatrix<Complex64>) -> f64 {
    a.clone().singular_values().iter().sum()
}

pub(crate) fn matrix_from_block(block: &[Complex64], n: usize) -> DMatrix<Complex64> {
    DMatrix::from_row_slice(n, n, block)
}

pub(crate) fn block_from_matrix(m: &DMatrix<Complex64>) -> Vec<Complex64> {
    let n = m.nrows();
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            out.push(m[(i, j)]);
        }
    }
    out
}

pub(crate) fn block_trace(block: &[Complex64], n: usize) -> Complex64 {
    (0..n).map(|i| block[i * n + i]).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn two_by_two_closed_form_matches_decomposition() {
        let a = DMatrix::from_row_slice(2, 2, &[c(0.3, 0.0), c(0.1, -0.4), c(0.1, 0.4), c(-0.7, 0.0)]);
        let mut fast = hermitian_eigenvalues(&a);
        let mut slow: Vec<f64> = a.clone().symmetric_eigenvalues().iter().copied().collect();
        fast.sort_by(f64::total_cmp);
        slow.sort_by(f64::total_cmp);
        for (x, y) in fast.iter().zip(&slow) {
            assert!((x - y).abs() < 1e-14);
        }
        assert!((hermitian_trace_norm(&a) - trace_norm(&a)).abs() < 1e-13);
    }

    #[test]
    fn deviation_detects_asymmetry() {
        let a = DMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 1.0), c(0.0, 1.0), c(0.0, 0.0)]);
        assert!((hermitian_deviation(&a) - 2.0).abs() < 1e-15);
        let block = block_from_matrix(&a);
        assert_eq!(hermitian_deviation_flat(&block, 2), hermitian_deviation(&a));
        assert_eq!(matrix_from_block(&block, 2), a);
    }
}
