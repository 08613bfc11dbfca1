use nalgebra::{DMatrix, DVector};

/// Orthonormal basis (m × (m−1)) of the subspace of zero-sum vectors in ℝᵐ
/// (Helmert contrasts). Column k is (1,…,1, −k, 0,…,0)/√(k(k+1)) with k ones.
pub fn zero_mean_basis(m: usize) -> DMatrix<f64> {
    assert!(m >= 2, "zero-mean subspace needs m >= 2");
    let mut q = DMatrix::zeros(m, m - 1);
    for col in 0..m - 1 {
        let k = (col + 1) as f64;
        let scale = 1.0 / (k * (k + 1.0)).sqrt();
        for row in 0..=col {
            q[(row, col)] = scale;
        }
        q[(col + 1, col)] = -k * scale;
    }
    q
}

/// True when every column sums to zero within `tol` relative to its ℓ1 mass.
pub fn columns_are_zero_mean(d: &DMatrix<f64>, tol: f64) -> bool {
    d.column_iter().all(|c| {
        let mass: f64 = c.iter().map(|v| v.abs()).sum();
        c.sum().abs() <= tol * mass.max(f64::MIN_POSITIVE)
    })
}

pub fn column_norms(d: &DMatrix<f64>) -> Vec<f64> {
    d.column_iter().map(|c| c.norm()).collect()
}

/// Largest eigenvalue of `DᵀD` (= ‖D‖₂²) by power iteration on the smaller Gram matrix.
pub fn spectral_norm_sq(d: &DMatrix<f64>) -> f64 {
    let gram = if d.nrows() <= d.ncols() {
        d * d.transpose()
    } else {
        d.transpose() * d
    };
    let k = gram.nrows();
    if k == 0 {
        return 0.0;
    }
    let mut v = DVector::from_element(k, 1.0 / (k as f64).sqrt());
    let mut estimate = 0.0;
    for _ in 0..1000 {
        let w = &gram * &v;
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        let next = v.dot(&w);
        v = w / norm;
        if (next - estimate).abs() <= 1e-13 * next.abs() {
            estimate = next;
            break;
        }
        estimate = next;
    }
    estimate
}
