use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{GsfaError, Result};

pub const MAX_POLYNOMIAL_DEGREE: usize = 6;

/// Nonlinear expansion applied to every sample before GSFA.
///
/// Outputs always start with the original coordinates. Monomials follow in
/// graded lexicographic order: by degree, then by the ascending index tuple
/// `i₁ ≤ i₂ ≤ …`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExpansionSpec {
    #[default]
    Identity,
    /// `(x₁, …, x_I, |x₁|^0.8, …, |x_I|^0.8)`.
    ZeroEightExpo,
    /// Originals plus all `xᵢxⱼ`, `i ≤ j`.
    Quadratic,
    /// All monomials of total degree `1..=degree`.
    Polynomial { degree: usize },
}

impl ExpansionSpec {
    pub fn validate(&self) -> Result<()> {
        if let ExpansionSpec::Polynomial { degree } = self {
            if *degree == 0 || *degree > MAX_POLYNOMIAL_DEGREE {
                return Err(GsfaError::Parameter(format!(
                    "polynomial degree must lie in 1..={MAX_POLYNOMIAL_DEGREE}, got {degree}"
                )));
            }
        }
        Ok(())
    }

    fn max_degree(&self) -> usize {
        match self {
            ExpansionSpec::Identity | ExpansionSpec::ZeroEightExpo => 1,
            ExpansionSpec::Quadratic => 2,
            ExpansionSpec::Polynomial { degree } => *degree,
        }
    }

    /// Output dimensionality for `dims` inputs.
    pub fn output_dim(&self, dims: usize) -> usize {
        match self {
            ExpansionSpec::ZeroEightExpo => 2 * dims,
            _ => (1..=self.max_degree()).map(|d| multiset_count(dims, d)).sum(),
        }
    }

    pub fn apply(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.validate()?;
        let dims = x.nrows();
        match self {
            ExpansionSpec::Identity => Ok(x.clone()),
            ExpansionSpec::ZeroEightExpo => Ok(DMatrix::from_fn(2 * dims, x.ncols(), |r, n| {
                if r < dims {
                    x[(r, n)]
                } else {
                    x[(r - dims, n)].abs().powf(0.8)
                }
            })),
            _ => {
                let monomials: Vec<Vec<usize>> = (1..=self.max_degree()).flat_map(|d| multisets(dims, d)).collect();
                Ok(DMatrix::from_fn(monomials.len(), x.ncols(), |r, n| {
                    monomials[r].iter().map(|&i| x[(i, n)]).product()
                }))
            }
        }
    }
}

/// Number of multisets of size `k` from `n` items, `C(n + k − 1, k)`.
fn multiset_count(n: usize, k: usize) -> usize {
    if n == 0 {
        return 0;
    }
    let mut c: u128 = 1;
    for i in 0..k as u128 {
        c = c * (n as u128 + i) / (i + 1);
    }
    c as usize
}

/// Non-decreasing index tuples of length `k` over `0..n` in lexicographic order.
fn multisets(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(k);
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i, n, k, cur, out);
            cur.pop();
        }
    }
    rec(0, n, k, &mut cur, &mut out);
    out
}
