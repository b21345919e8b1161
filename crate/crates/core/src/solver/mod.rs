//! Linear GSFA: sphering of the weighted covariance followed by a rotation that
//! diagonalizes the derivative second-moment matrix.

mod covariance;
mod data;
mod expansion;
mod pca;

pub use covariance::{derivative_covariance, CovariancePath};
pub use data::{sample_covariance, weighted_mean, DataMatrix};
pub use expansion::{ExpansionSpec, MAX_POLYNOMIAL_DEGREE};
pub use pca::{pca_reduce, PcaModel};

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{GsfaError, Result};
use crate::graph::{GraphFingerprint, TrainingGraph};
use crate::linalg::sym_eigen_desc;
use crate::matrix_io::{from_rows, to_rows};
use crate::spectrum::SignRule;

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    /// Number of output features `J`.
    pub out_dims: usize,
    /// `None` picks [`CovariancePath::auto`].
    pub path: Option<CovariancePath>,
    /// Ridge `ε = ridge · trace(C_G)/I` added to `C_G`.
    pub ridge: f64,
    /// Sphering drops covariance directions below `rank_tol · λ_max`.
    pub rank_tol: f64,
    pub sign_rule: SignRule,
}

impl TrainOptions {
    pub fn new(out_dims: usize) -> Self {
        TrainOptions { out_dims, path: None, ridge: 1e-10, rank_tol: 1e-9, sign_rule: SignRule::FirstSample }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GsfaModel {
    pub weighted_mean: DVector<f64>,
    /// `I×J`.
    pub projection: DMatrix<f64>,
    /// Ascending Δ of each output feature on the training graph.
    pub deltas: Vec<f64>,
    pub trained_on: GraphFingerprint,
    /// Covariance directions removed before sphering.
    pub dropped_dims: usize,
}

impl GsfaModel {
    pub fn in_dims(&self) -> usize {
        self.projection.nrows()
    }

    pub fn out_dims(&self) -> usize {
        self.projection.ncols()
    }

    /// `y(n) = Wᵀ (x(n) − x̃)`, returned as `J×N`.
    pub fn extract(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.nrows() != self.in_dims() {
            return Err(GsfaError::Dimension(format!(
                "model expects {} input dimensions, got {}",
                self.in_dims(),
                x.nrows()
            )));
        }
        Ok(self.projection.transpose() * data::center(x, &self.weighted_mean))
    }
}

pub fn extract_features(model: &GsfaModel, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    model.extract(x)
}

/// Trains a linear GSFA model on the columns of `x` with training graph `g`.
pub fn train_gsfa(x: &DMatrix<f64>, g: &TrainingGraph, opts: &TrainOptions) -> Result<GsfaModel> {
    let n = g.n_samples();
    if x.ncols() != n {
        return Err(GsfaError::Dimension(format!("{} samples but graph has {n} vertices", x.ncols())));
    }
    if n < 2 {
        return Err(GsfaError::Dimension("training needs at least two samples".into()));
    }
    if opts.out_dims == 0 {
        return Err(GsfaError::Parameter("out_dims must be positive".into()));
    }
    data::check_finite(x)?;
    let v = g.vertex_weights();
    let dims = x.nrows();
    let mean = weighted_mean(x, v)?;
    let mut cov = sample_covariance(x, v)?;
    let eps = opts.ridge * cov.trace() / dims as f64;
    for i in 0..dims {
        cov[(i, i)] += eps;
    }

    let (values, vectors) = sym_eigen_desc(&cov);
    let top = values[0];
    let keep = if top > 0.0 { values.iter().filter(|&&l| l > opts.rank_tol * top).count() } else { 0 };
    if keep < opts.out_dims {
        return Err(GsfaError::Singular { null_dim: dims - keep, rank: keep, requested: opts.out_dims });
    }
    if keep < dims {
        log::debug!("sphering drops {} near-null covariance directions", dims - keep);
    }
    let mut sphering = vectors.columns(0, keep).clone_owned();
    for (k, mut col) in sphering.column_iter_mut().enumerate() {
        col /= values[k].sqrt();
    }

    let path = match opts.path {
        Some(p) => p,
        None => {
            let p = CovariancePath::auto(g);
            if p == CovariancePath::Laplacian {
                log::warn!("training graph is inconsistent, using the general pairwise form");
            }
            p
        }
    };
    let cdot = derivative_covariance(x, g, path)?;
    let reduced = crate::linalg::symmetric_part(&(sphering.transpose() * cdot * &sphering));
    let (rvals, rvecs) = sym_eigen_desc(&reduced);
    let mut projection = DMatrix::zeros(dims, opts.out_dims);
    let mut deltas = Vec::with_capacity(opts.out_dims);
    for j in 0..opts.out_dims {
        let k = keep - 1 - j;
        projection.set_column(j, &(&sphering * rvecs.column(k)));
        deltas.push(rvals[k]);
    }
    orient(&mut projection, &data::center(x, &mean), &opts.sign_rule)?;
    Ok(GsfaModel { weighted_mean: mean, projection, deltas, trained_on: g.fingerprint(), dropped_dims: dims - keep })
}

/// Applies the sign convention to every projection column.
fn orient(projection: &mut DMatrix<f64>, centered: &DMatrix<f64>, rule: &SignRule) -> Result<()> {
    if let SignRule::MinLabel { labels } = rule {
        if labels.len() != centered.ncols() {
            return Err(GsfaError::Dimension(format!("{} sign labels for {} samples", labels.len(), centered.ncols())));
        }
    }
    for j in 0..projection.ncols() {
        let flip = match rule {
            SignRule::FirstSample => {
                let col = projection.column(j);
                let amax = col.amax();
                col.iter().find(|c| c.abs() > 1e-9 * amax).is_some_and(|&c| c < 0.0)
            }
            SignRule::MinLabel { .. } => {
                let y = centered.transpose() * projection.column(j);
                let mut oriented = y.clone();
                rule.apply(&mut oriented);
                oriented.dot(&y) < 0.0
            }
        };
        if flip {
            projection.column_mut(j).neg_mut();
        }
    }
    Ok(())
}

/// One processing node: optional PCA, then expansion, then GSFA.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub pca_dims: Option<usize>,
    #[serde(default)]
    pub expansion: ExpansionSpec,
    pub train: TrainOptions,
}

impl NodeSpec {
    pub fn new(out_dims: usize) -> Self {
        NodeSpec { pca_dims: None, expansion: ExpansionSpec::Identity, train: TrainOptions::new(out_dims) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeModel {
    pub pca: Option<PcaModel>,
    pub expansion: ExpansionSpec,
    pub gsfa: GsfaModel,
}

impl NodeModel {
    pub fn in_dims(&self) -> usize {
        match &self.pca {
            Some(p) => p.mean.len(),
            None => self.gsfa.in_dims(),
        }
    }

    pub fn out_dims(&self) -> usize {
        self.gsfa.out_dims()
    }

    pub fn apply(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let reduced = match &self.pca {
            Some(p) => p.project(x)?,
            None => x.clone(),
        };
        self.gsfa.extract(&self.expansion.apply(&reduced)?)
    }

    pub fn to_json(&self) -> Result<String> {
        let file = ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            expansion: self.expansion,
            pca: self.pca.as_ref().map(|p| PcaFile {
                mean: p.mean.iter().copied().collect(),
                basis: to_rows(&p.basis),
                variances: p.variances.clone(),
            }),
            weighted_mean: self.gsfa.weighted_mean.iter().copied().collect(),
            projection: to_rows(&self.gsfa.projection),
            deltas: self.gsfa.deltas.clone(),
            fingerprint: self.gsfa.trained_on.clone(),
            dropped_dims: self.gsfa.dropped_dims,
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: ModelFile = serde_json::from_str(text)?;
        if f.format_version != MODEL_FORMAT_VERSION {
            return Err(GsfaError::FormatVersion { found: f.format_version, expected: MODEL_FORMAT_VERSION });
        }
        f.expansion.validate()?;
        let projection = from_rows(&f.projection, f.deltas.len())?;
        if projection.nrows() != f.weighted_mean.len() || projection.ncols() != f.deltas.len() {
            return Err(GsfaError::Parse("model dimensions do not match".into()));
        }
        let pca = match f.pca {
            Some(p) => {
                let basis = from_rows(&p.basis, p.variances.len())?;
                if basis.nrows() != p.mean.len() || basis.ncols() != p.variances.len() {
                    return Err(GsfaError::Parse("PCA dimensions do not match".into()));
                }
                Some(PcaModel { mean: DVector::from_vec(p.mean), basis, variances: p.variances })
            }
            None => None,
        };
        Ok(NodeModel {
            pca,
            expansion: f.expansion,
            gsfa: GsfaModel {
                weighted_mean: DVector::from_vec(f.weighted_mean),
                projection,
                deltas: f.deltas,
                trained_on: f.fingerprint,
                dropped_dims: f.dropped_dims,
            },
        })
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
struct PcaFile {
    mean: Vec<f64>,
    basis: Vec<Vec<f64>>,
    variances: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    expansion: ExpansionSpec,
    pca: Option<PcaFile>,
    weighted_mean: Vec<f64>,
    projection: Vec<Vec<f64>>,
    deltas: Vec<f64>,
    fingerprint: GraphFingerprint,
    dropped_dims: usize,
}

/// Trains PCA (if requested), expansion and GSFA on `x` in sequence.
pub fn train_node(x: &DMatrix<f64>, g: &TrainingGraph, spec: &NodeSpec) -> Result<NodeModel> {
    let (pca, reduced) = match spec.pca_dims {
        Some(k) => {
            let (m, z) = pca_reduce(x, g.vertex_weights(), k)?;
            (Some(m), z)
        }
        None => (None, x.clone()),
    };
    let expanded = spec.expansion.apply(&reduced)?;
    let gsfa = train_gsfa(&expanded, g, &spec.train)?;
    Ok(NodeModel { pca, expansion: spec.expansion, gsfa })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builders::{
        build_clustered_graph, build_linear_graph, build_serial_graph, LinearVariant, RemainderPolicy,
    };
    use crate::linalg::{weighted_inner, weighted_mean as wmean};
    use crate::spectrum::{optimal_free_responses, SpectrumOptions};
    use approx::assert_abs_diff_eq;

    fn noise(dims: usize, n: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = crate::rng::stream(seed, 0);
        DMatrix::from_fn(dims, n, |_, _| crate::rng::standard_normal(&mut rng))
    }

    fn constraint_residual(y: &DMatrix<f64>, v: &DVector<f64>) -> f64 {
        let mut worst = 0.0_f64;
        for a in 0..y.nrows() {
            let ya = y.row(a).transpose();
            worst = worst.max(wmean(&ya, v).abs());
            for b in 0..=a {
                let yb = y.row(b).transpose();
                let target = if a == b { 1.0 } else { 0.0 };
                worst = worst.max((weighted_inner(&ya, &yb, v) - target).abs());
            }
        }
        worst
    }

    #[test]
    fn one_hot_matches_free_responses() {
        let g = build_linear_graph(12, LinearVariant::EndpointHalvedVertexWeights).unwrap();
        let x = DMatrix::identity(12, 12);
        let model = train_gsfa(&x, &g, &TrainOptions::new(11)).unwrap();
        assert_eq!(model.dropped_dims, 1);
        let y = model.extract(&x).unwrap();
        let s = optimal_free_responses(&g, &SpectrumOptions::default()).unwrap();
        let resp = s.slowest(11);
        for j in 0..11 {
            assert_abs_diff_eq!(model.deltas[j], s.slowest_deltas(11)[j], epsilon = 1e-6);
            let yj = y.row(j).transpose();
            let rj = resp.column(j).clone_owned();
            let err = (&yj - &rj).amax().min((&yj + &rj).amax());
            assert!(err < 1e-6, "feature {j}: {err}");
        }
        assert!(matches!(
            train_gsfa(&x, &g, &TrainOptions::new(12)),
            Err(GsfaError::Singular { null_dim: 1, rank: 11, requested: 12 })
        ));
    }

    #[test]
    fn one_dimensional_whitened_input() {
        let g = build_linear_graph(6, LinearVariant::SelfLoopExtended).unwrap();
        let raw = DVector::from_vec(vec![0.3, -1.0, 2.0, 0.1, -0.4, 0.7]);
        let normalized = crate::graph::normalize_feature(&raw, g.vertex_weights()).unwrap();
        let x = DMatrix::from_row_slice(1, 6, normalized.as_slice());
        let y = train_gsfa(&x, &g, &TrainOptions::new(1)).unwrap().extract(&x).unwrap();
        let err = (&y - &x).amax().min((&y + &x).amax());
        assert!(err < 1e-9);
    }

    #[test]
    fn deltas_constraints_and_shift() {
        let labels: Vec<f64> = (0..40).map(|i| i as f64).collect();
        let g = build_serial_graph(&labels, 8, RemainderPolicy::Strict).unwrap().graph;
        let latent = DMatrix::from_fn(1, 40, |_, n| n as f64 / 39.0);
        let x = DMatrix::from_fn(5, 40, |i, n| latent[(0, n)] * (i as f64 + 1.0)) + noise(5, 40, 9) * 0.3;
        let model = train_gsfa(&x, &g, &TrainOptions::new(4)).unwrap();
        let y = model.extract(&x).unwrap();
        for j in 0..4 {
            let d = g.weighted_delta(&y.row(j).transpose()).unwrap();
            assert_abs_diff_eq!(model.deltas[j], d, epsilon = 1e-6);
        }
        for w in model.deltas.windows(2) {
            assert!(w[0] <= w[1]);
        }
        assert!(constraint_residual(&y, g.vertex_weights()) < 1e-6);
        assert!(
            model.extract(&DMatrix::from_columns(std::slice::from_ref(&model.weighted_mean))).unwrap().amax() < 1e-15
        );

        let shift = DVector::from_vec(vec![10.0, -3.0, 0.5, 7.0, 100.0]);
        let mut moved = x.clone();
        for mut col in moved.column_iter_mut() {
            col += &shift;
        }
        let y2 = train_gsfa(&moved, &g, &TrainOptions::new(4)).unwrap().extract(&moved).unwrap();
        assert!((&y2 - &y).amax() < 1e-6);
    }

    #[test]
    fn slowest_feature_beats_random_probes() {
        let g = build_clustered_graph(&[6, 6, 6]).unwrap();
        let x = noise(4, 18, 4);
        let model = train_gsfa(&x, &g, &TrainOptions::new(1)).unwrap();
        let mut rng = crate::rng::stream(77, 0);
        for _ in 0..200 {
            let w = DVector::from_fn(4, |_, _| crate::rng::standard_normal(&mut rng));
            let y = x.transpose() * w;
            let y = crate::graph::normalize_feature(&y, g.vertex_weights()).unwrap();
            assert!(g.weighted_delta(&y).unwrap() >= model.deltas[0] - 1e-9);
        }
    }

    #[test]
    fn edge_scaling_keeps_projection() {
        let g = build_linear_graph(15, LinearVariant::SelfLoopExtended).unwrap();
        let x = noise(3, 15, 6);
        let a = train_gsfa(&x, &g, &TrainOptions::new(3)).unwrap();
        let b = train_gsfa(&x, &g.scaled_edges(3.5).unwrap(), &TrainOptions::new(3)).unwrap();
        assert!((&a.projection - &b.projection).amax() < 1e-8);
    }

    #[test]
    fn min_label_sign_rule() {
        let g = build_linear_graph(8, LinearVariant::SelfLoopExtended).unwrap();
        let x = noise(3, 8, 2);
        let labels: Vec<f64> = vec![5., 1., 3., 1., 2., 8., 9., 4.];
        let mut opts = TrainOptions::new(2);
        opts.sign_rule = SignRule::MinLabel { labels: labels.clone() };
        let y = train_gsfa(&x, &g, &opts).unwrap().extract(&x).unwrap();
        assert!(y[(0, 1)] < 0.0 && y[(1, 1)] < 0.0);
        opts.sign_rule = SignRule::MinLabel { labels: vec![1.0; 3] };
        assert!(train_gsfa(&x, &g, &opts).is_err());
    }

    #[test]
    fn node_model_round_trip() {
        let g = build_clustered_graph(&[5, 5, 5, 5]).unwrap();
        let x = noise(6, 20, 8);
        let spec = NodeSpec { pca_dims: Some(4), expansion: ExpansionSpec::Quadratic, train: TrainOptions::new(3) };
        let node = train_node(&x, &g, &spec).unwrap();
        assert_eq!(node.in_dims(), 6);
        let back = NodeModel::from_json(&node.to_json().unwrap()).unwrap();
        assert_eq!(back, node);
        assert_eq!(back.apply(&x).unwrap(), node.apply(&x).unwrap());
        let bumped = node.to_json().unwrap().replace("\"format_version\": 1", "\"format_version\": 3");
        assert!(matches!(NodeModel::from_json(&bumped), Err(GsfaError::FormatVersion { .. })));
        assert!(matches!(
            train_gsfa(&x, &build_clustered_graph(&[3, 3]).unwrap(), &TrainOptions::new(1)),
            Err(GsfaError::Dimension(_))
        ));
    }
}
