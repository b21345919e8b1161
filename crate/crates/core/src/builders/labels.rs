use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{GsfaError, Result};
use crate::linalg::weighted_inner;

/// Tolerance for the normalization and decorrelation invariants of a label set.
pub const LABEL_TOL: f64 = 1e-9;

pub const LABEL_FORMAT_VERSION: u32 = 1;

/// Target labels over `N` samples together with their ELL eigenvalues.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelSet {
    /// `L×N`, row `j` is label `j` over the samples.
    pub labels: DMatrix<f64>,
    pub eigenvalues: Vec<f64>,
    pub vertex_weights: DVector<f64>,
    pub normalized: bool,
    pub decorrelated: bool,
    /// `(μ, σ)` of each raw label, recorded at normalization.
    pub stats: Vec<(f64, f64)>,
    /// Lower-triangular `T` with `decorrelated = T · normalized`.
    pub decorrelation: Option<DMatrix<f64>>,
}

impl LabelSet {
    pub fn n_labels(&self) -> usize {
        self.labels.nrows()
    }

    pub fn n_samples(&self) -> usize {
        self.labels.ncols()
    }

    pub fn label(&self, j: usize) -> DVector<f64> {
        self.labels.row(j).transpose()
    }

    pub fn with_eigenvalues(mut self, eigenvalues: Vec<f64>) -> Result<Self> {
        if eigenvalues.len() != self.n_labels() {
            return Err(GsfaError::Dimension(format!(
                "{} eigenvalues for {} labels",
                eigenvalues.len(),
                self.n_labels()
            )));
        }
        self.eigenvalues = eigenvalues;
        Ok(self)
    }

    /// Maps a normalized value of label `j` back to the raw label scale.
    pub fn denormalize(&self, j: usize, value: f64) -> f64 {
        let (mu, sigma) = self.stats[j];
        value * sigma + mu
    }

    /// Largest deviation from weighted zero mean / unit variance over all rows.
    pub fn normalization_residual(&self) -> f64 {
        let v = &self.vertex_weights;
        (0..self.n_labels())
            .map(|j| {
                let l = self.label(j);
                let mean = l.dot(v) / v.sum();
                let var = weighted_inner(&l, &l, v);
                mean.abs().max((var - 1.0).abs())
            })
            .fold(0.0, f64::max)
    }

    /// Largest weighted cross-correlation between distinct rows.
    pub fn decorrelation_residual(&self) -> f64 {
        let v = &self.vertex_weights;
        let rows: Vec<DVector<f64>> = (0..self.n_labels()).map(|j| self.label(j)).collect();
        let mut worst = 0.0_f64;
        for a in 0..rows.len() {
            for b in 0..a {
                worst = worst.max(weighted_inner(&rows[a], &rows[b], v).abs());
            }
        }
        worst
    }

    pub fn to_json(&self) -> Result<String> {
        let file = LabelFile {
            format_version: LABEL_FORMAT_VERSION,
            labels: (0..self.n_labels()).map(|j| self.labels.row(j).iter().copied().collect()).collect(),
            eigenvalues: self.eigenvalues.clone(),
            vertex_weights: self.vertex_weights.iter().copied().collect(),
            mu_sigma: self.stats.clone(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    /// Reads a label file; the normalized/decorrelated flags are re-derived from the data.
    pub fn from_json(text: &str) -> Result<Self> {
        let file: LabelFile = serde_json::from_str(text)?;
        if file.format_version != LABEL_FORMAT_VERSION {
            return Err(GsfaError::FormatVersion { found: file.format_version, expected: LABEL_FORMAT_VERSION });
        }
        let l = file.labels.len();
        let n = file.vertex_weights.len();
        if file.labels.iter().any(|row| row.len() != n) || file.eigenvalues.len() != l || file.mu_sigma.len() != l {
            return Err(GsfaError::Dimension("inconsistent label file dimensions".into()));
        }
        let labels = DMatrix::from_fn(l, n, |j, i| file.labels[j][i]);
        let mut set = LabelSet {
            labels,
            eigenvalues: file.eigenvalues,
            vertex_weights: DVector::from_vec(file.vertex_weights),
            normalized: false,
            decorrelated: false,
            stats: file.mu_sigma,
            decorrelation: None,
        };
        set.normalized = set.normalization_residual() <= LABEL_TOL;
        set.decorrelated = set.normalized && set.decorrelation_residual() <= LABEL_TOL;
        Ok(set)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct LabelFile {
    format_version: u32,
    labels: Vec<Vec<f64>>,
    eigenvalues: Vec<f64>,
    vertex_weights: Vec<f64>,
    mu_sigma: Vec<(f64, f64)>,
}

/// Eigenvalue schedule: `n_original` equal weights followed by `n_aux` weights
/// decreasing linearly towards zero, `(A+1−k)/(A+1)` for the k-th auxiliary,
/// all scaled to sum to 1.
pub fn auxiliary_eigenvalue_schedule(n_original: usize, n_aux: usize) -> Vec<f64> {
    let mut raw = vec![1.0; n_original];
    let a = n_aux as f64;
    raw.extend((1..=n_aux).map(|k| (a + 1.0 - k as f64) / (a + 1.0)));
    let total: f64 = raw.iter().sum();
    raw.iter().map(|x| x / total).collect()
}

/// Normalizes every row of `raw` (`L×N`) to weighted zero mean and unit variance.
///
/// The eigenvalues default to [`auxiliary_eigenvalue_schedule`] with the first
/// row treated as the original label.
pub fn normalize_labels(raw: &DMatrix<f64>, v: &DVector<f64>) -> Result<LabelSet> {
    if raw.ncols() != v.len() {
        return Err(GsfaError::Dimension(format!("labels over {} samples, {} vertex weights", raw.ncols(), v.len())));
    }
    let q = v.sum();
    let mut labels = raw.clone();
    let mut stats = Vec::with_capacity(raw.nrows());
    for j in 0..raw.nrows() {
        let row = raw.row(j).transpose();
        let mu = row.dot(v) / q;
        let centered = row.add_scalar(-mu);
        let var = weighted_inner(&centered, &centered, v);
        if var <= 1e-300 || !var.is_finite() {
            return Err(GsfaError::DegenerateLabel { index: j, variance: var });
        }
        let sigma = var.sqrt();
        labels.set_row(j, &(centered / sigma).transpose());
        stats.push((mu, sigma));
    }
    let l = raw.nrows();
    let eigenvalues = if l == 0 { Vec::new() } else { auxiliary_eigenvalue_schedule(1, l - 1) };
    Ok(LabelSet {
        labels,
        eigenvalues,
        vertex_weights: v.clone(),
        normalized: true,
        decorrelated: l <= 1,
        stats,
        decorrelation: None,
    })
}

/// Sequentially projects earlier labels out of later ones and re-normalizes.
pub fn decorrelate_labels(ls: &LabelSet) -> Result<LabelSet> {
    if !ls.normalized {
        return Err(GsfaError::Contract("labels must be normalized before decorrelation".into()));
    }
    let v = &ls.vertex_weights;
    let l = ls.n_labels();
    let mut rows: Vec<DVector<f64>> = (0..l).map(|j| ls.label(j)).collect();
    let mut transform = DMatrix::<f64>::identity(l, l);
    for jp in 0..l {
        for j in 0..jp {
            let coef = weighted_inner(&rows[jp], &rows[j], v);
            let pj = rows[j].clone();
            rows[jp] -= &pj * coef;
            let tj = transform.row(j).clone_owned();
            let mut tjp = transform.row_mut(jp);
            tjp -= tj * coef;
        }
        let var = weighted_inner(&rows[jp], &rows[jp], v);
        if var < 1e-12 {
            return Err(GsfaError::DependentLabel { index: jp, variance: var });
        }
        let s = var.sqrt();
        rows[jp] /= s;
        let mut tjp = transform.row_mut(jp);
        tjp /= s;
    }
    let mut labels = ls.labels.clone();
    for (j, r) in rows.iter().enumerate() {
        labels.set_row(j, &r.transpose());
    }
    let combined = match &ls.decorrelation {
        Some(prev) => &transform * prev,
        None => transform,
    };
    Ok(LabelSet {
        labels,
        eigenvalues: ls.eigenvalues.clone(),
        vertex_weights: v.clone(),
        normalized: true,
        decorrelated: true,
        stats: ls.stats.clone(),
        decorrelation: Some(combined),
    })
}

/// Cosine harmonics of the first label for `k = 2..=K`.
///
/// `ℓₖ = cos(t · πk/2)` with `t = (ℓ₁ − min) / (max − min)`, so the argument
/// spans `[0, π]` for `k = 2` and `[0, 3π/2]` for `k = 3`.
pub fn auxiliary_labels(l1: &[f64], k: usize) -> Result<DMatrix<f64>> {
    if k < 2 {
        return Err(GsfaError::Parameter(format!("K must be >= 2, got {k}")));
    }
    let min = l1.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = l1.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(max > min) {
        return Err(GsfaError::DegenerateLabel { index: 0, variance: 0.0 });
    }
    let span = max - min;
    Ok(DMatrix::from_fn(k - 1, l1.len(), |r, n| {
        let kk = (r + 2) as f64;
        ((l1[n] - min) / span * std::f64::consts::FRAC_PI_2 * kk).cos()
    }))
}

/// Per-class ±1 codes for `C = 2^B` classes.
#[derive(Debug, Clone, PartialEq)]
pub struct CompactLabels {
    pub n_classes: usize,
    pub bits: usize,
    /// `L×C`, entry `(j, c)` is the label of class `c` (0-based).
    pub per_class: DMatrix<f64>,
    /// Factor indices (0-based) of each label.
    pub factors: Vec<Vec<usize>>,
    pub eigenvalues: Vec<f64>,
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::new(), &mut out);
    out
}

/// Builds the first `l` compact binary labels for `c` classes.
///
/// Labels `1..=B` are the bits of `c − 1` (most significant first) mapped to ±1.
/// Later labels are products of `B`, `B−1`, …, 2 of them in lexicographic
/// factor order, negated when needed so the first class gets −1.
pub fn compact_binary_labels(c: usize, l: usize) -> Result<CompactLabels> {
    if c < 2 || !c.is_power_of_two() {
        return Err(GsfaError::Parameter(format!("number of classes must be a power of two >= 2, got {c}")));
    }
    let bits = c.trailing_zeros() as usize;
    if l > c - 1 {
        return Err(GsfaError::Rank(format!("at most C−1 = {} labels, requested {l}", c - 1)));
    }
    if l < bits {
        return Err(GsfaError::Parameter(format!("at least log2(C) = {bits} labels are needed, requested {l}")));
    }
    let mut factors: Vec<Vec<usize>> = (0..bits).map(|j| vec![j]).collect();
    for size in (2..=bits).rev() {
        factors.extend(combinations(bits, size));
    }
    factors.truncate(l);
    let base = |j: usize, class: usize| -> f64 { 2.0 * (((class >> (bits - 1 - j)) & 1) as f64) - 1.0 };
    let mut per_class = DMatrix::zeros(l, c);
    for (row, f) in factors.iter().enumerate() {
        let sign = if f.len() % 2 == 0 { -1.0 } else { 1.0 };
        for class in 0..c {
            per_class[(row, class)] = sign * f.iter().map(|&j| base(j, class)).product::<f64>();
        }
    }
    Ok(CompactLabels {
        n_classes: c,
        bits,
        per_class,
        factors,
        eigenvalues: auxiliary_eigenvalue_schedule(bits, l - bits),
    })
}

impl CompactLabels {
    /// Expands the per-class codes to samples (`class_ids` are 0-based) under
    /// uniform vertex weights; classes must be balanced.
    pub fn expand(&self, class_ids: &[usize]) -> Result<LabelSet> {
        let mut counts = vec![0usize; self.n_classes];
        for &id in class_ids {
            if id >= self.n_classes {
                return Err(GsfaError::Parameter(format!("class id {id} out of range")));
            }
            counts[id] += 1;
        }
        if counts.iter().any(|&k| k != counts[0]) || counts[0] == 0 {
            return Err(GsfaError::Parameter("compact labels require balanced classes".into()));
        }
        let l = self.per_class.nrows();
        let n = class_ids.len();
        let labels = DMatrix::from_fn(l, n, |j, i| self.per_class[(j, class_ids[i])]);
        Ok(LabelSet {
            labels,
            eigenvalues: self.eigenvalues.clone(),
            vertex_weights: DVector::from_element(n, 1.0),
            normalized: true,
            decorrelated: true,
            stats: vec![(0.0, 1.0); l],
            decorrelation: None,
        })
    }

    /// Expansion for classes laid out consecutively with `per_class` samples each.
    pub fn expand_consecutive(&self, per_class: usize) -> Result<LabelSet> {
        let ids: Vec<usize> = (0..self.n_classes).flat_map(|c| std::iter::repeat_n(c, per_class)).collect();
        self.expand(&ids)
    }
}
