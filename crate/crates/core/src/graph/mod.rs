//! Weighted training graphs: vertex weights `v`, symmetric edge weights `Γ`,
//! and the cached sums `Q = Σ v` and `R = Σ Γ`.

mod edges;
pub mod io;

pub use edges::{EdgeWeights, SymmetricTriplets};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{GsfaError, Result};
use crate::linalg;

/// Default relative tolerance of the consistency test (scaled by `‖v‖∞`).
pub const CONSISTENCY_TOL: f64 = 1e-9;

/// Tolerance used when checking the normalization preconditions of a feature.
pub const FEATURE_TOL: f64 = 1e-8;

/// Known layout of a graph, used by the structured derivative-covariance path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GraphStructure {
    #[default]
    Generic,
    /// Fully connected groups (no self loops) with weight `1/(|group|-1)`.
    Clustered { groups: Vec<Vec<usize>> },
    /// All pairs between consecutive groups connected with weight 1.
    Serial { groups: Vec<Vec<usize>> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingGraph {
    vertex_weights: DVector<f64>,
    edges: EdgeWeights,
    q_sum: f64,
    r_sum: f64,
    structure: GraphStructure,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConsistencyReport {
    pub consistent: bool,
    /// `v − (Q/R)·Γ·1`.
    pub residual: DVector<f64>,
    pub max_residual: f64,
}

/// Identifies the graph a model was trained on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphFingerprint {
    pub n: usize,
    pub q: f64,
    pub r: f64,
    pub checksum: String,
}

/// `(Γ + Γᵀ) / 2`.
pub fn symmetrize(gamma_raw: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if gamma_raw.nrows() != gamma_raw.ncols() {
        return Err(GsfaError::Dimension(format!(
            "edge-weight matrix must be square, got {}x{}",
            gamma_raw.nrows(),
            gamma_raw.ncols()
        )));
    }
    Ok(linalg::symmetric_part(gamma_raw))
}

/// Scales `y` to weighted zero mean and weighted unit variance under `v`.
pub fn normalize_feature(y: &DVector<f64>, v: &DVector<f64>) -> Result<DVector<f64>> {
    if y.len() != v.len() {
        return Err(GsfaError::Dimension(format!("feature has length {}, vertex weights {}", y.len(), v.len())));
    }
    let mean = linalg::weighted_mean(y, v);
    let centered = y.add_scalar(-mean);
    let var = linalg::weighted_inner(&centered, &centered, v);
    if var <= 1e-300 || !var.is_finite() {
        return Err(GsfaError::DegenerateFeature(var));
    }
    Ok(centered / var.sqrt())
}

impl TrainingGraph {
    /// Builds a graph, validating positivity of `v`, symmetry of `Γ` and `R > 0`.
    pub fn new(vertex_weights: DVector<f64>, edges: EdgeWeights) -> Result<Self> {
        Self::with_structure(vertex_weights, edges, GraphStructure::Generic)
    }

    pub fn with_structure(vertex_weights: DVector<f64>, edges: EdgeWeights, structure: GraphStructure) -> Result<Self> {
        let n = vertex_weights.len();
        if n == 0 {
            return Err(GsfaError::DegenerateGraph("graph has no vertices".into()));
        }
        if edges.n() != n {
            return Err(GsfaError::Dimension(format!("{} vertex weights but edge matrix of order {}", n, edges.n())));
        }
        if let Some((i, w)) = vertex_weights.iter().enumerate().find(|(_, w)| !(w.is_finite() && **w > 0.0)) {
            return Err(GsfaError::Contract(format!("vertex weight {i} must be strictly positive, got {w}")));
        }
        edges.validate()?;
        let g = Self::from_parts(vertex_weights, edges, structure);
        if !(g.r_sum > 0.0) {
            return Err(GsfaError::DegenerateGraph(format!("sum of edge weights R = {} must be positive", g.r_sum)));
        }
        Ok(g)
    }

    /// Dense constructor; `gamma` is symmetrized first.
    pub fn from_dense(vertex_weights: DVector<f64>, gamma: &DMatrix<f64>) -> Result<Self> {
        let sym = symmetrize(gamma)?;
        Self::new(vertex_weights, EdgeWeights::Dense(sym))
    }

    pub(crate) fn from_parts(vertex_weights: DVector<f64>, edges: EdgeWeights, structure: GraphStructure) -> Self {
        let q_sum = vertex_weights.sum();
        let r_sum = edges.total();
        TrainingGraph { vertex_weights, edges, q_sum, r_sum, structure }
    }

    pub fn n_samples(&self) -> usize {
        self.vertex_weights.len()
    }

    pub fn vertex_weights(&self) -> &DVector<f64> {
        &self.vertex_weights
    }

    pub fn edges(&self) -> &EdgeWeights {
        &self.edges
    }

    pub fn q_sum(&self) -> f64 {
        self.q_sum
    }

    pub fn r_sum(&self) -> f64 {
        self.r_sum
    }

    pub fn structure(&self) -> &GraphStructure {
        &self.structure
    }

    pub fn gamma_dense(&self) -> DMatrix<f64> {
        self.edges.to_dense()
    }

    pub fn min_edge_weight(&self) -> f64 {
        self.edges.min_entry()
    }

    fn check_len(&self, y: &DVector<f64>) -> Result<()> {
        if y.len() != self.n_samples() {
            return Err(GsfaError::Dimension(format!(
                "feature has length {}, graph has {} samples",
                y.len(),
                self.n_samples()
            )));
        }
        Ok(())
    }

    /// Tests `‖v − (Q/R)·Γ·1‖∞ ≤ tol · ‖v‖∞`.
    pub fn check_consistency(&self, tol: f64) -> Result<ConsistencyReport> {
        if self.r_sum == 0.0 || !self.r_sum.is_finite() {
            return Err(GsfaError::DegenerateGraph(format!("R = {}", self.r_sum)));
        }
        let scale = self.q_sum / self.r_sum;
        let residual = &self.vertex_weights - self.edges.row_sums() * scale;
        let max_residual = residual.amax();
        let consistent = max_residual <= tol * self.vertex_weights.amax();
        Ok(ConsistencyReport { consistent, residual, max_residual })
    }

    pub fn is_consistent(&self) -> bool {
        self.check_consistency(CONSISTENCY_TOL).map(|r| r.consistent).unwrap_or(false)
    }

    /// `(1/R) Σₙ,ₙ′ γₙ,ₙ′ (y(n′) − y(n))²`, summed over all ordered pairs.
    pub fn weighted_delta(&self, y: &DVector<f64>) -> Result<f64> {
        self.check_len(y)?;
        Ok(self.edges.pairwise_squared_differences(y) / self.r_sum)
    }

    /// `2 − (2/R)·yᵀΓy`, valid for consistent graphs and normalized `y`.
    pub fn weighted_delta_fast(&self, y: &DVector<f64>) -> Result<f64> {
        self.check_len(y)?;
        let report = self.check_consistency(CONSISTENCY_TOL)?;
        if !report.consistent {
            return Err(GsfaError::Contract(format!(
                "consistency restriction violated (residual {:e})",
                report.max_residual
            )));
        }
        let v = &self.vertex_weights;
        let mean = linalg::weighted_mean(y, v);
        if mean.abs() > FEATURE_TOL {
            return Err(GsfaError::Contract(format!("weighted zero mean violated (mean {mean:e})")));
        }
        let var = linalg::weighted_inner(y, y, v);
        if (var - 1.0).abs() > FEATURE_TOL {
            return Err(GsfaError::Contract(format!("weighted unit variance violated (variance {var})")));
        }
        Ok(2.0 - 2.0 / self.r_sum * self.edges.quadratic_form(y))
    }

    /// Zeroes the diagonal of `Γ`; `Q` is kept and `R` recomputed. The result may
    /// be inconsistent, and may have `R = 0` if `Γ` held only self loops.
    pub fn remove_self_loops(&self) -> TrainingGraph {
        let structure = match &self.structure {
            GraphStructure::Clustered { .. } | GraphStructure::Serial { .. } => self.structure.clone(),
            GraphStructure::Generic => GraphStructure::Generic,
        };
        TrainingGraph::from_parts(self.vertex_weights.clone(), self.edges.without_diagonal(), structure)
    }

    /// Row-normalized transition matrix `Pₙ,ₙ′ = γₙ,ₙ′ / Σₙ″ γₙ,ₙ″`.
    ///
    /// Self loops are kept as ordinary transitions.
    pub fn markov_transition_matrix(&self) -> Result<DMatrix<f64>> {
        if self.edges.min_entry() < 0.0 {
            return Err(GsfaError::UnsupportedGraph(
                "negative edge weights have no transition-probability meaning".into(),
            ));
        }
        let mut p = self.edges.to_dense();
        let sums = self.edges.row_sums();
        for (i, s) in sums.iter().enumerate() {
            if *s <= 0.0 {
                return Err(GsfaError::ZeroRow(i));
            }
            let mut row = p.row_mut(i);
            row /= *s;
        }
        Ok(p)
    }

    /// Samples a vertex sequence of the Markov chain defined by the graph.
    ///
    /// The start vertex is drawn from the stationary distribution `v/Q`.
    pub fn sample_markov_sequence(&self, len: usize, seed: u64) -> Result<Vec<usize>> {
        let p = self.markov_transition_matrix()?;
        let mut rng = crate::rng::stream(seed, 0);
        let n = self.n_samples();
        let draw = |probs: &mut dyn Iterator<Item = f64>, u: f64| -> usize {
            let mut acc = 0.0;
            let mut last = 0;
            for (i, pr) in probs.enumerate() {
                acc += pr;
                last = i;
                if u < acc {
                    return i;
                }
            }
            last
        };
        let mut seq = Vec::with_capacity(len);
        if len == 0 {
            return Ok(seq);
        }
        let u = crate::rng::uniform(&mut rng);
        let q = self.q_sum;
        let mut state = draw(&mut self.vertex_weights.iter().map(|w| w / q), u);
        seq.push(state);
        while seq.len() < len {
            let u = crate::rng::uniform(&mut rng);
            state = draw(&mut (0..n).map(|j| p[(state, j)]), u);
            seq.push(state);
        }
        Ok(seq)
    }

    pub fn fingerprint(&self) -> GraphFingerprint {
        let mut hasher = Sha256::new();
        hasher.update((self.n_samples() as u64).to_le_bytes());
        for w in self.vertex_weights.iter() {
            hasher.update(w.to_le_bytes());
        }
        self.edges.for_each_upper(|i, j, w| {
            hasher.update((i as u64).to_le_bytes());
            hasher.update((j as u64).to_le_bytes());
            hasher.update(w.to_le_bytes());
        });
        let digest = hasher.finalize();
        let checksum = digest.iter().take(16).map(|b| format!("{b:02x}")).collect();
        GraphFingerprint { n: self.n_samples(), q: self.q_sum, r: self.r_sum, checksum }
    }

    /// Multiplies every edge weight by `factor > 0`. The result is [`GraphStructure::Generic`].
    pub fn scaled_edges(&self, factor: f64) -> Result<TrainingGraph> {
        if !(factor > 0.0) {
            return Err(GsfaError::Parameter(format!("scale factor {factor} must be positive")));
        }
        Ok(TrainingGraph::from_parts(self.vertex_weights.clone(), self.edges.scaled(factor), GraphStructure::Generic))
    }
}
