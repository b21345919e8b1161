use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{GsfaError, Result};
use crate::{matrix_io, parallel};

/// `I×N` samples (column `n` is `x(n)`) with optional feature names.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    pub values: DMatrix<f64>,
    pub names: Vec<String>,
}

impl DataMatrix {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        let names = (0..values.nrows()).map(|i| format!("x{i}")).collect();
        Self::with_names(values, names)
    }

    pub fn with_names(values: DMatrix<f64>, names: Vec<String>) -> Result<Self> {
        if values.ncols() < 2 {
            return Err(GsfaError::Dimension(format!("need N >= 2 samples, got {}", values.ncols())));
        }
        if names.len() != values.nrows() {
            return Err(GsfaError::Dimension(format!("{} feature names for {} features", names.len(), values.nrows())));
        }
        check_finite(&values)?;
        Ok(DataMatrix { values, names })
    }

    pub fn dims(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_samples(&self) -> usize {
        self.values.ncols()
    }

    /// CSV with one row per sample and the feature names as header.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        matrix_io::write_csv(path, &self.names, &self.values.transpose())
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let (names, rows) = matrix_io::read_csv(path)?;
        Self::with_names(rows.transpose(), names)
    }

    pub fn write_binary(&self, path: impl AsRef<Path>) -> Result<()> {
        matrix_io::write_binary(path, &self.values)
    }

    pub fn read_binary(path: impl AsRef<Path>) -> Result<Self> {
        Self::new(matrix_io::read_binary(path)?)
    }

    /// Reads CSV or binary depending on the extension (`.csv` is CSV).
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let p = path.as_ref();
        match p.extension().and_then(|e| e.to_str()) {
            Some("csv") => Self::read_csv(p),
            _ => Self::read_binary(p),
        }
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let p = path.as_ref();
        match p.extension().and_then(|e| e.to_str()) {
            Some("csv") => self.write_csv(p),
            _ => self.write_binary(p),
        }
    }
}

pub(crate) fn check_finite(x: &DMatrix<f64>) -> Result<()> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(GsfaError::Contract("data contains non-finite values".into()));
    }
    Ok(())
}

fn check_weights(x: &DMatrix<f64>, v: &DVector<f64>) -> Result<()> {
    if x.ncols() != v.len() {
        return Err(GsfaError::Dimension(format!("{} samples but {} vertex weights", x.ncols(), v.len())));
    }
    if v.iter().any(|&w| !(w > 0.0)) {
        return Err(GsfaError::Contract("vertex weights must be positive".into()));
    }
    Ok(())
}

/// `x̃ = (1/Q) Σ vₙ x(n)`.
pub fn weighted_mean(x: &DMatrix<f64>, v: &DVector<f64>) -> Result<DVector<f64>> {
    check_weights(x, v)?;
    Ok(x * v / v.sum())
}

/// `x(n) − x̃` for every column.
pub(crate) fn center(x: &DMatrix<f64>, mean: &DVector<f64>) -> DMatrix<f64> {
    let mut c = x.clone();
    for mut col in c.column_iter_mut() {
        col -= mean;
    }
    c
}

/// `Σₙ wₙ a(n) a(n)ᵀ` over the columns of `a`, reduced in sample blocks.
pub(crate) fn weighted_gram(a: &DMatrix<f64>, w: &DVector<f64>) -> DMatrix<f64> {
    let dims = a.nrows();
    let sum = parallel::sum_blocks(a.ncols(), dims, dims, |range| {
        let block = a.columns(range.start, range.len());
        let mut scaled = block.clone_owned();
        for (k, mut col) in scaled.column_iter_mut().enumerate() {
            col *= w[range.start + k];
        }
        scaled * block.transpose()
    });
    crate::linalg::symmetric_part(&sum)
}

/// `C_G = (1/Q) Σ vₙ (x(n) − x̃)(x(n) − x̃)ᵀ`.
pub fn sample_covariance(x: &DMatrix<f64>, v: &DVector<f64>) -> Result<DMatrix<f64>> {
    let mean = weighted_mean(x, v)?;
    Ok(weighted_gram(&center(x, &mean), v) / v.sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn mean_examples() {
        let x = DMatrix::from_row_slice(2, 2, &[0., 2., 0., 2.]);
        let m = weighted_mean(&x, &DVector::from_vec(vec![1., 3.])).unwrap();
        assert_eq!(m.as_slice(), &[1.5, 1.5]);
        let x = DMatrix::from_row_slice(1, 4, &[1., 2., 3., 6.]);
        assert_eq!(weighted_mean(&x, &DVector::from_element(4, 2.0)).unwrap()[0], 3.0);
        let rep = DMatrix::from_fn(3, 5, |i, _| i as f64 - 0.5);
        assert_abs_diff_eq!(
            weighted_mean(&rep, &DVector::from_vec(vec![1., 2., 3., 4., 5.])).unwrap(),
            rep.column(0).clone_owned(),
            epsilon = 1e-15
        );
        assert!(weighted_mean(&rep, &DVector::from_element(4, 1.0)).is_err());
    }

    #[test]
    fn covariance_examples() {
        let c = sample_covariance(&DMatrix::from_row_slice(1, 2, &[-1., 1.]), &DVector::from_element(2, 1.0)).unwrap();
        assert_eq!(c[(0, 0)], 1.0);
        let flat = sample_covariance(&DMatrix::from_element(3, 4, 2.5), &DVector::from_element(4, 1.0)).unwrap();
        assert_eq!(flat, DMatrix::zeros(3, 3));
        let x = DMatrix::from_fn(4, 150, |i, n| ((i + 1) as f64 * (n as f64 * 0.37).sin()).powi(i as i32 + 1));
        let v = DVector::from_fn(150, |n, _| 1.0 + (n % 3) as f64);
        let c = sample_covariance(&x, &v).unwrap();
        assert!(crate::linalg::max_abs_diff(&c, &c.transpose()) <= 1e-12);
    }

    #[test]
    fn data_matrix_files() {
        let dir = tempfile::tempdir().unwrap();
        let d = DataMatrix::with_names(
            DMatrix::from_row_slice(2, 3, &[1., 2., 3., 4., 5., 6.5]),
            vec!["a".into(), "b".into()],
        )
        .unwrap();
        d.write(dir.path().join("d.csv")).unwrap();
        d.write(dir.path().join("d.bin")).unwrap();
        assert_eq!(DataMatrix::read(dir.path().join("d.csv")).unwrap(), d);
        assert_eq!(DataMatrix::read(dir.path().join("d.bin")).unwrap().values, d.values);
        let text = std::fs::read_to_string(dir.path().join("d.csv")).unwrap();
        assert!(text.starts_with("a,b\n1,4\n"));
        assert!(DataMatrix::new(DMatrix::from_element(2, 1, 0.0)).is_err());
        assert!(DataMatrix::new(DMatrix::from_element(1, 2, f64::NAN)).is_err());
    }
}
