use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::data::{center, check_finite, weighted_gram, weighted_mean};
use crate::error::{GsfaError, Result};
use crate::graph::{EdgeWeights, GraphStructure, TrainingGraph};
use crate::linalg::symmetric_part;
use crate::parallel;

/// Evaluation strategy for the derivative second-moment matrix `Ċ_G`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovariancePath {
    /// Literal double sum over all edges.
    Pairwise,
    /// `(2/Q) X Diag(v) Xᵀ − (2/R) X Γ Xᵀ`; consistent graphs only.
    ConsistentForm,
    /// Group-sum algebra for clustered and serial graphs.
    Structured,
    /// `(2/R) X (Diag(Γ1) − Γ) Xᵀ`; any symmetric graph.
    Laplacian,
}

impl CovariancePath {
    /// Cheapest exact path for `g`.
    pub fn auto(g: &TrainingGraph) -> Self {
        match g.structure() {
            GraphStructure::Clustered { .. } | GraphStructure::Serial { .. } => CovariancePath::Structured,
            GraphStructure::Generic if g.is_consistent() => CovariancePath::ConsistentForm,
            GraphStructure::Generic => CovariancePath::Laplacian,
        }
    }
}

/// `Ċ_G = (1/R) Σₙ,ₙ′ γₙ,ₙ′ (x(n′) − x(n))(x(n′) − x(n))ᵀ`.
pub fn derivative_covariance(x: &DMatrix<f64>, g: &TrainingGraph, path: CovariancePath) -> Result<DMatrix<f64>> {
    if x.ncols() != g.n_samples() {
        return Err(GsfaError::Dimension(format!("{} samples but graph has {} vertices", x.ncols(), g.n_samples())));
    }
    check_finite(x)?;
    // every path is translation invariant, centering only improves conditioning
    let xc = center(x, &weighted_mean(x, g.vertex_weights())?);
    let r = g.r_sum();
    let sum = match path {
        CovariancePath::Pairwise => pairwise(&xc, g.edges()),
        CovariancePath::ConsistentForm => {
            let report = g.check_consistency(crate::graph::CONSISTENCY_TOL)?;
            if !report.consistent {
                return Err(GsfaError::Contract(format!(
                    "consistent-form path needs a consistent graph (residual {:e})",
                    report.max_residual
                )));
            }
            let v = g.vertex_weights();
            weighted_gram(&xc, v) * (2.0 * r / g.q_sum()) - gamma_form(&xc, g.edges()) * 2.0
        }
        CovariancePath::Laplacian => weighted_gram(&xc, &g.edges().row_sums()) * 2.0 - gamma_form(&xc, g.edges()) * 2.0,
        CovariancePath::Structured => match g.structure() {
            GraphStructure::Clustered { groups } => clustered(&xc, groups),
            GraphStructure::Serial { groups } => serial(&xc, groups),
            GraphStructure::Generic => {
                return Err(GsfaError::Contract("structured path needs a clustered or serial graph".into()))
            }
        },
    };
    Ok(symmetric_part(&sum) / r)
}

/// `X Γ Xᵀ`.
fn gamma_form(x: &DMatrix<f64>, edges: &EdgeWeights) -> DMatrix<f64> {
    let xg = edges.mul_matrix(&x.transpose());
    x * xg
}

fn pairwise(x: &DMatrix<f64>, edges: &EdgeWeights) -> DMatrix<f64> {
    let dims = x.nrows();
    match edges {
        EdgeWeights::Dense(m) => parallel::sum_blocks(x.ncols(), dims, dims, |rows| {
            let mut acc = DMatrix::zeros(dims, dims);
            for i in rows {
                let xi = x.column(i);
                let mut diff = x.clone_owned();
                for mut col in diff.column_iter_mut() {
                    col -= xi;
                }
                let mut weighted = diff.clone();
                for (k, mut col) in weighted.column_iter_mut().enumerate() {
                    col *= m[(i, k)];
                }
                acc += weighted * diff.transpose();
            }
            acc
        }),
        EdgeWeights::Sparse(t) => {
            let mut acc = DMatrix::zeros(dims, dims);
            for &(i, j, w) in t.entries() {
                if i != j {
                    let d = x.column(j) - x.column(i);
                    acc += &d * d.transpose() * (2.0 * w);
                }
            }
            acc
        }
    }
}

fn group_sums(x: &DMatrix<f64>, members: &[usize]) -> (DMatrix<f64>, DVector<f64>) {
    let sub = x.select_columns(members);
    let ones = DVector::from_element(members.len(), 1.0);
    (weighted_gram(&sub, &ones), &sub * ones)
}

/// Per class with `w = 1/(N_c − 1)`: `w (2 N_c Σ xxᵀ − 2 s sᵀ)`.
fn clustered(x: &DMatrix<f64>, groups: &[Vec<usize>]) -> DMatrix<f64> {
    let dims = x.nrows();
    let parts = parallel::map_indexed(groups.len(), |c| {
        let members = &groups[c];
        let nc = members.len() as f64;
        let (gram, s) = group_sums(x, members);
        (gram * (2.0 * nc) - &s * s.transpose() * 2.0) / (nc - 1.0)
    });
    parts.into_iter().fold(DMatrix::zeros(dims, dims), |a, b| a + b)
}

/// Per consecutive pair `A, B`: `2 (|B| Σ_A aaᵀ + |A| Σ_B bbᵀ − s_A s_Bᵀ − s_B s_Aᵀ)`.
fn serial(x: &DMatrix<f64>, groups: &[Vec<usize>]) -> DMatrix<f64> {
    let dims = x.nrows();
    let sums = parallel::map_indexed(groups.len(), |k| group_sums(x, &groups[k]));
    let mut acc = DMatrix::zeros(dims, dims);
    for k in 0..groups.len().saturating_sub(1) {
        let (na, nb) = (groups[k].len() as f64, groups[k + 1].len() as f64);
        let (ga, sa) = &sums[k];
        let (gb, sb) = &sums[k + 1];
        let cross = sa * sb.transpose();
        acc += (ga * nb + gb * na - &cross - cross.transpose()) * 2.0;
    }
    acc
}
