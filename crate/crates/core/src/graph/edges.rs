use nalgebra::{DMatrix, DVector};

use crate::error::{GsfaError, Result};
use crate::parallel;

/// Upper-triangular triplets `(i, j, γ)` with `i ≤ j`; the `(j, i)` entry is implied.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricTriplets {
    n: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl SymmetricTriplets {
    /// Accepts entries in either orientation; duplicates of the same unordered
    /// pair are summed.
    pub fn from_entries(n: usize, raw: impl IntoIterator<Item = (usize, usize, f64)>) -> Result<Self> {
        let mut entries: Vec<(usize, usize, f64)> = Vec::new();
        for (i, j, w) in raw {
            if i >= n || j >= n {
                return Err(GsfaError::Dimension(format!("edge ({i}, {j}) out of range for {n} vertices")));
            }
            if !w.is_finite() {
                return Err(GsfaError::Contract(format!("edge ({i}, {j}) has non-finite weight")));
            }
            let (a, b) = if i <= j { (i, j) } else { (j, i) };
            entries.push((a, b, w));
        }
        entries.sort_by_key(|x| (x.0, x.1));
        let mut merged: Vec<(usize, usize, f64)> = Vec::with_capacity(entries.len());
        for e in entries {
            match merged.last_mut() {
                Some(last) if last.0 == e.0 && last.1 == e.1 => last.2 += e.2,
                _ => merged.push(e),
            }
        }
        Ok(SymmetricTriplets { n, entries: merged })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    fn get(&self, i: usize, j: usize) -> f64 {
        let key = if i <= j { (i, j) } else { (j, i) };
        self.entries.binary_search_by(|e| (e.0, e.1).cmp(&key)).map(|k| self.entries[k].2).unwrap_or(0.0)
    }
}

/// Symmetric edge-weight storage: dense, or sparse upper triplets.
#[derive(Debug, Clone, PartialEq)]
pub enum EdgeWeights {
    Dense(DMatrix<f64>),
    Sparse(SymmetricTriplets),
}

impl EdgeWeights {
    pub fn n(&self) -> usize {
        match self {
            EdgeWeights::Dense(m) => m.nrows(),
            EdgeWeights::Sparse(t) => t.n,
        }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        match self {
            EdgeWeights::Dense(m) => {
                if m.nrows() != m.ncols() {
                    return Err(GsfaError::Dimension("edge matrix must be square".into()));
                }
                if m.iter().any(|x| !x.is_finite()) {
                    return Err(GsfaError::Contract("edge matrix has non-finite entries".into()));
                }
                let n = m.nrows();
                for i in 0..n {
                    for j in (i + 1)..n {
                        if m[(i, j)] != m[(j, i)] {
                            return Err(GsfaError::Contract(format!("edge matrix is not symmetric at ({i}, {j})")));
                        }
                    }
                }
                Ok(())
            }
            EdgeWeights::Sparse(_) => Ok(()),
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        match self {
            EdgeWeights::Dense(m) => m[(i, j)],
            EdgeWeights::Sparse(t) => t.get(i, j),
        }
    }

    /// `R = 1ᵀΓ1`, counting both orientations of every off-diagonal edge.
    pub fn total(&self) -> f64 {
        match self {
            EdgeWeights::Dense(m) => {
                let n = m.nrows();
                parallel::sum_blocks_scalar(n, |rows| rows.map(|i| m.row(i).sum()).sum())
            }
            EdgeWeights::Sparse(t) => t.entries.iter().map(|&(i, j, w)| if i == j { w } else { 2.0 * w }).sum(),
        }
    }

    /// `Γ·1`.
    pub fn row_sums(&self) -> DVector<f64> {
        match self {
            EdgeWeights::Dense(m) => DVector::from_vec(parallel::map_indexed(m.nrows(), |i| m.row(i).sum())),
            EdgeWeights::Sparse(t) => {
                let mut s = DVector::zeros(t.n);
                for &(i, j, w) in &t.entries {
                    s[i] += w;
                    if i != j {
                        s[j] += w;
                    }
                }
                s
            }
        }
    }

    pub fn diagonal(&self) -> DVector<f64> {
        match self {
            EdgeWeights::Dense(m) => m.diagonal(),
            EdgeWeights::Sparse(t) => {
                let mut d = DVector::zeros(t.n);
                for &(i, j, w) in &t.entries {
                    if i == j {
                        d[i] += w;
                    }
                }
                d
            }
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            EdgeWeights::Dense(m) => m.clone(),
            EdgeWeights::Sparse(t) => {
                let mut m = DMatrix::zeros(t.n, t.n);
                for &(i, j, w) in &t.entries {
                    m[(i, j)] = w;
                    m[(j, i)] = w;
                }
                m
            }
        }
    }

    /// Smallest entry of the full matrix (absent sparse entries count as 0).
    pub fn min_entry(&self) -> f64 {
        match self {
            EdgeWeights::Dense(m) => m.min(),
            EdgeWeights::Sparse(t) => {
                let dense_min = t.entries.iter().map(|e| e.2).fold(f64::INFINITY, f64::min);
                let full = t.entries.iter().map(|&(i, j, _)| if i == j { 1 } else { 2 }).sum::<usize>();
                if full < t.n * t.n {
                    dense_min.min(0.0)
                } else {
                    dense_min
                }
            }
        }
    }

    /// Visits every stored upper-triangular entry `i ≤ j` (dense: only nonzeros).
    pub fn for_each_upper(&self, mut f: impl FnMut(usize, usize, f64)) {
        match self {
            EdgeWeights::Dense(m) => {
                let n = m.nrows();
                for i in 0..n {
                    for j in i..n {
                        let w = m[(i, j)];
                        if w != 0.0 {
                            f(i, j, w);
                        }
                    }
                }
            }
            EdgeWeights::Sparse(t) => {
                for &(i, j, w) in &t.entries {
                    f(i, j, w);
                }
            }
        }
    }

    /// `Σₙ,ₙ′ γₙ,ₙ′ (y(n′) − y(n))²`.
    pub fn pairwise_squared_differences(&self, y: &DVector<f64>) -> f64 {
        match self {
            EdgeWeights::Dense(m) => parallel::sum_blocks_scalar(m.nrows(), |rows| {
                let mut acc = 0.0;
                for i in rows {
                    let yi = y[i];
                    for (j, yj) in y.iter().enumerate() {
                        let d = yj - yi;
                        acc += m[(i, j)] * d * d;
                    }
                }
                acc
            }),
            EdgeWeights::Sparse(t) => t
                .entries
                .iter()
                .map(|&(i, j, w)| {
                    let d = y[j] - y[i];
                    2.0 * w * d * d
                })
                .sum(),
        }
    }

    /// `yᵀΓy`.
    pub fn quadratic_form(&self, y: &DVector<f64>) -> f64 {
        match self {
            EdgeWeights::Dense(m) => y.dot(&(m * y)),
            EdgeWeights::Sparse(t) => {
                t.entries.iter().map(|&(i, j, w)| if i == j { w * y[i] * y[i] } else { 2.0 * w * y[i] * y[j] }).sum()
            }
        }
    }

    /// `Γ·B` for an `N×k` matrix `B`.
    pub fn mul_matrix(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            EdgeWeights::Dense(m) => m * b,
            EdgeWeights::Sparse(t) => {
                let mut out = DMatrix::zeros(t.n, b.ncols());
                for &(i, j, w) in &t.entries {
                    for c in 0..b.ncols() {
                        out[(i, c)] += w * b[(j, c)];
                        if i != j {
                            out[(j, c)] += w * b[(i, c)];
                        }
                    }
                }
                out
            }
        }
    }

    pub fn without_diagonal(&self) -> EdgeWeights {
        match self {
            EdgeWeights::Dense(m) => {
                let mut m = m.clone();
                m.fill_diagonal(0.0);
                EdgeWeights::Dense(m)
            }
            EdgeWeights::Sparse(t) => EdgeWeights::Sparse(SymmetricTriplets {
                n: t.n,
                entries: t.entries.iter().copied().filter(|e| e.0 != e.1).collect(),
            }),
        }
    }

    pub fn scaled(&self, factor: f64) -> EdgeWeights {
        match self {
            EdgeWeights::Dense(m) => EdgeWeights::Dense(m * factor),
            EdgeWeights::Sparse(t) => EdgeWeights::Sparse(SymmetricTriplets {
                n: t.n,
                entries: t.entries.iter().map(|&(i, j, w)| (i, j, w * factor)).collect(),
            }),
        }
    }
}
