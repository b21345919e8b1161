//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Symmetric eigendecomposition with eigenpairs sorted by descending eigenvalue.
///
/// Ties are broken by original index so the ordering is deterministic.
pub fn sym_eigen_desc(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let sym = symmetric_part(m);
    let eig = SymmetricEigen::new(sym);
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b))
    });
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (k, &i) in order.iter().enumerate() {
        vectors.set_column(k, &eig.eigenvectors.column(i));
    }
    (values, vectors)
}

/// Same as [`sym_eigen_desc`] but ascending.
pub fn sym_eigen_asc(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let (vals, vecs) = sym_eigen_desc(m);
    let n = vals.len();
    let values = DVector::from_iterator(n, (0..n).rev().map(|i| vals[i]));
    let mut vectors = DMatrix::zeros(vecs.nrows(), n);
    for k in 0..n {
        vectors.set_column(k, &vecs.column(n - 1 - k));
    }
    (values, vectors)
}

/// `(M + Mᵀ) / 2`.
pub fn symmetric_part(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |a, &x| a.max(x.abs()))
}

pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()))
}

/// Weighted mean `(1/Q) Σ vₙ yₙ`.
pub fn weighted_mean(y: &DVector<f64>, v: &DVector<f64>) -> f64 {
    y.dot(v) / v.sum()
}

/// Weighted second moment `(1/Q) Σ vₙ aₙ bₙ`.
pub fn weighted_inner(a: &DVector<f64>, b: &DVector<f64>, v: &DVector<f64>) -> f64 {
    a.iter().zip(b.iter()).zip(v.iter()).map(|((x, y), w)| w * x * y).sum::<f64>() / v.sum()
}

/// Flips the sign of `y` so that its first entry of non-negligible magnitude is negative.
pub fn first_entry_negative(y: &mut DVector<f64>) {
    let scale = y.amax();
    if scale == 0.0 {
        return;
    }
    if let Some(&first) = y.iter().find(|x| x.abs() > 1e-9 * scale) {
        if first > 0.0 {
            y.neg_mut();
        }
    }
}

/// Index of the first sample among those carrying the minimal label.
pub fn first_min_index(labels: &[f64]) -> Option<usize> {
    let min = labels.iter().cloned().fold(f64::INFINITY, f64::min);
    labels.iter().position(|&l| l == min)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigen_sorted_descending() {
        let m = DMatrix::from_row_slice(3, 3, &[2.0, 0.0, 0.0, 0.0, 5.0, 0.0, 0.0, 0.0, -1.0]);
        let (vals, vecs) = sym_eigen_desc(&m);
        assert_eq!(vals.as_slice(), &[5.0, 2.0, -1.0]);
        assert!((vecs[(1, 0)].abs() - 1.0).abs() < 1e-12);
        let (asc, _) = sym_eigen_asc(&m);
        assert_eq!(asc.as_slice(), &[-1.0, 2.0, 5.0]);
    }

    #[test]
    fn sign_rule() {
        let mut y = DVector::from_vec(vec![0.0, 2.0, -1.0]);
        first_entry_negative(&mut y);
        assert_eq!(y.as_slice(), &[-0.0, -2.0, 1.0]);
        assert_eq!(first_min_index(&[3.0, 1.0, 1.0]), Some(1));
    }
}
