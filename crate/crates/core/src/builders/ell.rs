use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::build_clustered_graph;
use super::labels::{compact_binary_labels, LabelSet, LABEL_TOL};
use crate::error::{GsfaError, Result};
use crate::graph::{EdgeWeights, GraphStructure, TrainingGraph};

/// Which eigenvalues the ELL construction assigns to the labels.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EigenvalueSchedule {
    /// Use the eigenvalues stored in the label set.
    #[default]
    FromLabels,
    /// The same eigenvalue `1/L` for every label.
    Equal,
    /// `n_original` equal eigenvalues followed by a linearly decreasing tail.
    LinearAuxiliary {
        n_original: usize,
    },
    Explicit {
        values: Vec<f64>,
    },
}

impl EigenvalueSchedule {
    pub fn resolve(&self, ls: &LabelSet) -> Result<Vec<f64>> {
        let l = ls.n_labels();
        let values = match self {
            EigenvalueSchedule::FromLabels => ls.eigenvalues.clone(),
            EigenvalueSchedule::Equal => vec![1.0 / l as f64; l],
            EigenvalueSchedule::LinearAuxiliary { n_original } => {
                if *n_original > l {
                    return Err(GsfaError::Parameter(format!("{n_original} original labels but only {l} labels")));
                }
                super::labels::auxiliary_eigenvalue_schedule(*n_original, l - n_original)
            }
            EigenvalueSchedule::Explicit { values } => values.clone(),
        };
        if values.len() != l {
            return Err(GsfaError::Dimension(format!("{} eigenvalues for {l} labels", values.len())));
        }
        Ok(values)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EllOptions {
    /// Apply [`eliminate_negative_weights`] to the result.
    pub nonnegative: bool,
    /// Total edge weight `R`; defaults to `Q`, which makes `λ₀ = 1`.
    pub r_total: Option<f64>,
    pub schedule: EigenvalueSchedule,
}

/// `λⱼ = (R / 2Q)(2 − Δⱼ)`. Targets above 2 yield negative eigenvalues and are logged.
pub fn eigenvalues_from_deltas(deltas: &[f64], q: f64, r: f64) -> Vec<f64> {
    deltas
        .iter()
        .enumerate()
        .map(|(j, &d)| {
            if d > 2.0 {
                log::warn!("target delta {d} of label {j} exceeds 2, eigenvalue will be negative");
            }
            r / (2.0 * q) * (2.0 - d)
        })
        .collect()
}

/// `Δ = 2 − (2Q/R) λ`.
pub fn delta_from_eigenvalue(lambda: f64, q: f64, r: f64) -> f64 {
    2.0 - 2.0 * q / r * lambda
}

/// Builds the ELL graph whose slowest free responses are the given labels.
///
/// `Γ = (1/Q) Diag(v) (λ₀ 11ᵀ + Σⱼ λⱼ ℓⱼ ℓⱼᵀ) Diag(v)` with `λ₀ = R/Q`.
pub fn build_ell_graph(ls: &LabelSet, opts: &EllOptions) -> Result<TrainingGraph> {
    let n = ls.n_samples();
    let l = ls.n_labels();
    if l + 1 > n {
        return Err(GsfaError::Rank(format!("{l} labels need at least {} samples, got {n}", l + 1)));
    }
    if !ls.normalized || ls.normalization_residual() > LABEL_TOL {
        return Err(GsfaError::Contract("ELL labels must be normalized".into()));
    }
    if l > 1 && (!ls.decorrelated || ls.decorrelation_residual() > LABEL_TOL) {
        return Err(GsfaError::Contract("ELL labels must be decorrelated".into()));
    }
    let lambdas = opts.schedule.resolve(ls)?;
    if lambdas.iter().any(|x| !x.is_finite()) {
        return Err(GsfaError::Parameter("eigenvalues must be finite".into()));
    }
    if !(lambdas.iter().sum::<f64>() > 0.0) {
        return Err(GsfaError::Parameter("sum of label eigenvalues must be positive".into()));
    }
    for (j, &lam) in lambdas.iter().enumerate() {
        if lam < 0.0 {
            log::warn!("label {j} has negative eigenvalue {lam}");
        }
    }
    let v = &ls.vertex_weights;
    let q = v.sum();
    let r = opts.r_total.unwrap_or(q);
    if !(r > 0.0 && r.is_finite()) {
        return Err(GsfaError::Parameter(format!("R must be positive, got {r}")));
    }
    let lambda0 = r / q;

    let scaled = DMatrix::from_fn(l, n, |j, i| lambdas[j] * ls.labels[(j, i)]);
    let inner = ls.labels.transpose() * scaled;
    let mut gamma = DMatrix::zeros(n, n);
    for i in 0..n {
        for k in i..n {
            let w = v[i] * v[k] * (lambda0 + inner[(i, k)]) / q;
            gamma[(i, k)] = w;
            gamma[(k, i)] = w;
        }
    }
    let g = TrainingGraph::new(v.clone(), EdgeWeights::Dense(gamma))?;
    if opts.nonnegative {
        Ok(eliminate_negative_weights(&g)?.graph)
    } else {
        Ok(g)
    }
}

/// Outcome of [`eliminate_negative_weights`].
#[derive(Debug, Clone)]
pub struct NegativeWeightElimination {
    pub graph: TrainingGraph,
    /// Added multiple of `vvᵀ`; zero when no weight was negative.
    pub c: f64,
    /// Divisor `1 + cQ²/R`.
    pub scale: f64,
    q: f64,
    r: f64,
}

impl NegativeWeightElimination {
    /// Maps a Δ value on the original graph to the transformed graph.
    pub fn map_delta(&self, delta: f64) -> f64 {
        (delta + 2.0 * self.c * self.q * self.q / self.r) / self.scale
    }
}

/// `Γ′ = (Γ + c vvᵀ)/(1 + cQ²/R)` with the smallest `c` making all weights nonnegative.
pub fn eliminate_negative_weights(g: &TrainingGraph) -> Result<NegativeWeightElimination> {
    let v = g.vertex_weights();
    if v.iter().any(|&w| !(w > 0.0)) {
        return Err(GsfaError::Contract("vertex weights must be positive".into()));
    }
    let (q, r) = (g.q_sum(), g.r_sum());
    if g.min_edge_weight() >= 0.0 {
        return Ok(NegativeWeightElimination { graph: g.clone(), c: 0.0, scale: 1.0, q, r });
    }
    let mut c = 0.0_f64;
    g.edges().for_each_upper(|i, j, w| c = c.max(-w / (v[i] * v[j])));
    let scale = 1.0 + c * q * q / r;
    let gamma = g.gamma_dense();
    let n = g.n_samples();
    let mut out = DMatrix::zeros(n, n);
    for i in 0..n {
        for k in i..n {
            let w = (gamma[(i, k)] + c * v[i] * v[k]) / scale;
            out[(i, k)] = w;
            out[(k, i)] = w;
        }
    }
    let graph = TrainingGraph::with_structure(v.clone(), EdgeWeights::Dense(out), GraphStructure::Generic)?;
    Ok(NegativeWeightElimination { graph, c, scale, q, r })
}

/// Comparison of a compact+(C−1) ELL graph with the clustered graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub n_classes: usize,
    pub per_class: usize,
    /// Max abs difference of both Γ after removing self loops and scaling to `R = N`.
    pub max_abs_diff: f64,
    /// Largest magnitude of an ELL edge between different classes (same scaling).
    pub max_inter_class: f64,
    pub equivalent: bool,
}

/// Equal-eigenvalue check: all `C−1` compact labels with `λ = 1/(C−1)`.
pub fn clustered_equivalence_check(n_classes: usize, per_class: usize) -> Result<EquivalenceReport> {
    let l = n_classes.saturating_sub(1).max(1);
    clustered_equivalence_report(n_classes, per_class, &vec![1.0 / l as f64; l])
}

/// Builds the compact+(C−1) ELL graph with the given label eigenvalues and
/// `λ₀` equal to their mean, and compares it with the clustered graph.
pub fn clustered_equivalence_report(
    n_classes: usize,
    per_class: usize,
    eigenvalues: &[f64],
) -> Result<EquivalenceReport> {
    if per_class < 2 {
        return Err(GsfaError::Parameter(format!("per_class must be >= 2, got {per_class}")));
    }
    let compact = compact_binary_labels(n_classes, n_classes - 1)?;
    let ls = compact.expand_consecutive(per_class)?;
    let lambda0 = eigenvalues.iter().sum::<f64>() / eigenvalues.len().max(1) as f64;
    let q = ls.vertex_weights.sum();
    let opts = EllOptions {
        nonnegative: false,
        r_total: Some(lambda0 * q),
        schedule: EigenvalueSchedule::Explicit { values: eigenvalues.to_vec() },
    };
    let ell = build_ell_graph(&ls, &opts)?.remove_self_loops();
    let clustered = build_clustered_graph(&vec![per_class; n_classes])?;
    let n = (n_classes * per_class) as f64;
    let a = ell.gamma_dense() * (n / ell.r_sum());
    let b = clustered.gamma_dense() * (n / clustered.r_sum());
    let max_abs_diff = crate::linalg::max_abs_diff(&a, &b);
    let mut max_inter_class = 0.0_f64;
    for i in 0..a.nrows() {
        for k in 0..a.ncols() {
            if i / per_class != k / per_class {
                max_inter_class = max_inter_class.max(a[(i, k)].abs());
            }
        }
    }
    Ok(EquivalenceReport {
        n_classes,
        per_class,
        max_abs_diff,
        max_inter_class,
        equivalent: max_abs_diff <= 1e-10 && max_inter_class <= 1e-12,
    })
}
