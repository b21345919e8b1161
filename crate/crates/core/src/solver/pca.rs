use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::data::{center, sample_covariance, weighted_mean};
use crate::error::{GsfaError, Result};
use crate::linalg::sym_eigen_desc;

/// Weighted principal component basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: DVector<f64>,
    /// `I×k`, orthonormal columns by descending variance.
    pub basis: DMatrix<f64>,
    pub variances: Vec<f64>,
}

impl PcaModel {
    pub fn out_dims(&self) -> usize {
        self.basis.ncols()
    }

    pub fn project(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.nrows() != self.mean.len() {
            return Err(GsfaError::Dimension(format!("PCA expects {} dimensions, got {}", self.mean.len(), x.nrows())));
        }
        Ok(self.basis.transpose() * center(x, &self.mean))
    }

    pub fn reconstruct(&self, z: &DMatrix<f64>) -> DMatrix<f64> {
        let mut x = &self.basis * z;
        for mut col in x.column_iter_mut() {
            col += &self.mean;
        }
        x
    }
}

/// Fits `out_dims` principal components under vertex weights `v` and projects `x`.
pub fn pca_reduce(x: &DMatrix<f64>, v: &DVector<f64>, out_dims: usize) -> Result<(PcaModel, DMatrix<f64>)> {
    let limit = x.nrows().min(x.ncols().saturating_sub(1));
    if out_dims == 0 || out_dims > limit {
        return Err(GsfaError::Parameter(format!("PCA output dimension must lie in 1..={limit}, got {out_dims}")));
    }
    let mean = weighted_mean(x, v)?;
    let cov = sample_covariance(x, v)?;
    let (values, vectors) = sym_eigen_desc(&cov);
    let mut basis = vectors.columns(0, out_dims).clone_owned();
    for mut col in basis.column_iter_mut() {
        let amax = col.amax();
        if let Some(first) = col.iter().copied().find(|c| c.abs() > 1e-9 * amax) {
            if first < 0.0 {
                col.neg_mut();
            }
        }
    }
    let model = PcaModel { mean, basis, variances: values.iter().take(out_dims).map(|x| x.max(0.0)).collect() };
    let z = model.project(x)?;
    Ok((model, z))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs_diff;

    fn sample(dims: usize, n: usize) -> DMatrix<f64> {
        let mut rng = crate::rng::stream(5, 0);
        DMatrix::from_fn(dims, n, |_, _| crate::rng::standard_normal(&mut rng))
    }

    #[test]
    fn full_rank_is_lossless() {
        let x = sample(4, 30);
        let v = DVector::from_fn(30, |n, _| 1.0 + (n % 4) as f64);
        let (m, z) = pca_reduce(&x, &v, 4).unwrap();
        assert!(max_abs_diff(&m.reconstruct(&z), &x) < 1e-8);
        let gram = m.basis.transpose() * &m.basis;
        assert!(max_abs_diff(&gram, &DMatrix::identity(4, 4)) < 1e-10);
    }

    #[test]
    fn line_data_is_one_dimensional() {
        let dir = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let x = DMatrix::from_fn(3, 20, |i, n| dir[i] * (n as f64 - 7.0) + 4.0);
        let (m, _) = pca_reduce(&x, &DVector::from_element(20, 1.0), 2).unwrap();
        let total: f64 = m.variances.iter().sum();
        assert!(m.variances[0] / total >= 1.0 - 1e-10);
    }

    #[test]
    fn reconstruction_error_non_increasing() {
        let x = sample(5, 25);
        let v = DVector::from_element(25, 1.0);
        let mut last = f64::INFINITY;
        for k in 1..=5 {
            let (m, z) = pca_reduce(&x, &v, k).unwrap();
            let err = (m.reconstruct(&z) - &x).norm();
            assert!(err <= last + 1e-12);
            last = err;
        }
        assert!(pca_reduce(&x, &v, 6).is_err());
        assert!(pca_reduce(&sample(5, 3), &DVector::from_element(3, 1.0), 3).is_err());
    }
}
