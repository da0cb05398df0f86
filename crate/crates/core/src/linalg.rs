//! Small dense linear-algebra helpers shared by the modules.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Largest symmetric-eigensolver input accepted.
pub const MAX_DENSE_DIM: usize = 2000;

/// Eigen-decomposition of a symmetric matrix with eigenvalues sorted ascending
/// and eigenvectors (columns) permuted accordingly.
pub fn sorted_eigen(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let sym = symmetrize(m);
    let eig = SymmetricEigen::new(sym);
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[a]
            .partial_cmp(&eig.eigenvalues[b])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn sorted_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let mut v: Vec<f64> = SymmetricEigen::new(symmetrize(m))
        .eigenvalues
        .iter()
        .copied()
        .collect();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    v
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Spectral norm (largest singular value).
pub fn operator_norm(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    m.singular_values().max()
}

/// Maximum absolute column sum (the induced 1→1 norm).
pub fn norm_one_to_one(m: &DMatrix<f64>) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Numerical rank with relative singular value cutoff.
pub fn rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    let sv = m.clone().singular_values();
    let smax = sv.max();
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * smax).count()
}

/// Pairwise (cascade) summation of equally shaped matrices; the result is
/// independent of how the inputs were produced as long as their order is.
pub fn pairwise_sum(mats: &[DMatrix<f64>]) -> Option<DMatrix<f64>> {
    match mats.len() {
        0 => None,
        1 => Some(mats[0].clone()),
        n => {
            let (l, r) = mats.split_at(n / 2);
            let mut a = pairwise_sum(l)?;
            a += pairwise_sum(r)?;
            Some(a)
        }
    }
}

pub fn frobenius_sq(m: &DMatrix<f64>) -> f64 {
    m.iter().map(|x| x * x).sum()
}

pub fn all_finite(m: &DMatrix<f64>) -> bool {
    m.iter().all(|x| x.is_finite())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigen_sorted_ascending_with_vectors() {
        let m = DMatrix::from_row_slice(3, 3, &[2.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 5.0]);
        let (vals, vecs) = sorted_eigen(&m);
        assert_eq!(vals.as_slice(), &[-1.0, 2.0, 5.0]);
        assert!((vecs[(1, 0)].abs() - 1.0).abs() < 1e-12);
        assert!((vecs[(2, 2)].abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pairwise_sum_matches_naive() {
        let mats: Vec<_> = (0..7)
            .map(|k| DMatrix::from_element(2, 2, k as f64 * 0.1))
            .collect();
        let s = pairwise_sum(&mats).unwrap();
        assert!((s[(0, 0)] - 2.1).abs() < 1e-12);
    }

    #[test]
    fn norm_inequalities() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 3.0, -1.0, 0.0]);
        assert!((operator_norm(&m) - 3.0).abs() < 1e-12);
        assert_eq!(norm_one_to_one(&m), 3.0);
        assert_eq!(rank(&m, 1e-12), 2);
    }
}
