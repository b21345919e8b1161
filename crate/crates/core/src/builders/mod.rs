//! Pre-defined training graphs (linear, clustered, serial) and the
//! label-driven ELL construction.

mod ell;
mod labels;

pub use ell::{
    build_ell_graph, clustered_equivalence_check, clustered_equivalence_report, delta_from_eigenvalue,
    eigenvalues_from_deltas, eliminate_negative_weights, EigenvalueSchedule, EllOptions, EquivalenceReport,
    NegativeWeightElimination,
};
pub use labels::{
    auxiliary_eigenvalue_schedule, auxiliary_labels, compact_binary_labels, decorrelate_labels, normalize_labels,
    CompactLabels, LabelSet, LABEL_TOL,
};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{GsfaError, Result};
use crate::graph::{EdgeWeights, GraphStructure, SymmetricTriplets, TrainingGraph};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinearVariant {
    /// `v = (1, 2, …, 2, 1)`.
    EndpointHalvedVertexWeights,
    /// `v = 1` with self loops of weight 1 at both ends.
    SelfLoopExtended,
}

/// Chain over samples `0..n` in index order, each consecutive pair weight 1.
pub fn build_linear_graph(n: usize, variant: LinearVariant) -> Result<TrainingGraph> {
    if n < 2 {
        return Err(GsfaError::Parameter(format!("linear graph needs N >= 2, got {n}")));
    }
    let mut entries: Vec<(usize, usize, f64)> = (0..n - 1).map(|i| (i, i + 1, 1.0)).collect();
    let v = match variant {
        LinearVariant::EndpointHalvedVertexWeights => {
            DVector::from_fn(n, |i, _| if i == 0 || i == n - 1 { 1.0 } else { 2.0 })
        }
        LinearVariant::SelfLoopExtended => {
            entries.push((0, 0, 1.0));
            entries.push((n - 1, n - 1, 1.0));
            DVector::from_element(n, 1.0)
        }
    };
    TrainingGraph::new(v, EdgeWeights::Sparse(SymmetricTriplets::from_entries(n, entries)?))
}

/// Clustered graph with classes laid out consecutively in sample order.
pub fn build_clustered_graph(class_sizes: &[usize]) -> Result<TrainingGraph> {
    let ids: Vec<usize> = class_sizes.iter().enumerate().flat_map(|(c, &size)| std::iter::repeat_n(c, size)).collect();
    clustered_graph_from_ids(&ids)
}

/// Clustered graph from per-sample class ids (any order).
///
/// Every ordered pair `n ≠ n′` of the same class gets `γ = 1/(N_c − 1)`.
pub fn clustered_graph_from_ids(class_ids: &[usize]) -> Result<TrainingGraph> {
    let groups = group_by_id(class_ids);
    if groups.is_empty() {
        return Err(GsfaError::Parameter("clustered graph needs at least one class".into()));
    }
    if let Some(g) = groups.iter().find(|g| g.len() < 2) {
        return Err(GsfaError::Parameter(format!(
            "cluster size must be >= 2, class containing sample {} has {}",
            g.first().copied().unwrap_or(0),
            g.len()
        )));
    }
    let n = class_ids.len();
    let mut entries = Vec::new();
    for members in &groups {
        let w = 1.0 / (members.len() - 1) as f64;
        for (a, &i) in members.iter().enumerate() {
            for &j in &members[a + 1..] {
                entries.push((i, j, w));
            }
        }
    }
    TrainingGraph::with_structure(
        DVector::from_element(n, 1.0),
        EdgeWeights::Sparse(SymmetricTriplets::from_entries(n, entries)?),
        GraphStructure::Clustered { groups },
    )
}

fn group_by_id(ids: &[usize]) -> Vec<Vec<usize>> {
    let mut distinct: Vec<usize> = ids.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    distinct.iter().map(|&c| ids.iter().enumerate().filter(|(_, &x)| x == c).map(|(i, _)| i).collect()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RemainderPolicy {
    /// `N mod K ≠ 0` is an error.
    #[default]
    Strict,
    /// Drop the `N mod K` samples with the largest labels.
    Truncate,
}

#[derive(Debug, Clone)]
pub struct SerialGraph {
    pub graph: TrainingGraph,
    /// Original indices of the samples that are vertices of `graph`, ascending.
    pub kept: Vec<usize>,
}

/// Serial graph over `K` equally sized label groups.
///
/// Samples are stably sorted by `(label, index)`; all pairs between consecutive
/// groups are joined with weight 1, interior groups get vertex weight 2.
pub fn build_serial_graph(labels: &[f64], k: usize, policy: RemainderPolicy) -> Result<SerialGraph> {
    let n = labels.len();
    if k < 2 || k > n {
        return Err(GsfaError::Parameter(format!("serial graph needs 2 <= K <= N, got K = {k}, N = {n}")));
    }
    if labels.iter().any(|l| !l.is_finite()) {
        return Err(GsfaError::Parameter("labels must be finite".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| labels[a].total_cmp(&labels[b]).then(a.cmp(&b)));
    let rem = n % k;
    if rem != 0 {
        match policy {
            RemainderPolicy::Strict => {
                return Err(GsfaError::Parameter(format!("N = {n} is not divisible by K = {k}")))
            }
            RemainderPolicy::Truncate => {
                log::warn!("serial graph: dropping {rem} samples with the largest labels");
                order.truncate(n - rem);
            }
        }
    }
    let mut kept = order.clone();
    kept.sort_unstable();
    let mut position = vec![usize::MAX; n];
    for (new, &old) in kept.iter().enumerate() {
        position[old] = new;
    }
    let m = kept.len() / k;
    let groups: Vec<Vec<usize>> = (0..k)
        .map(|g| {
            let mut members: Vec<usize> = order[g * m..(g + 1) * m].iter().map(|&o| position[o]).collect();
            members.sort_unstable();
            members
        })
        .collect();
    let mut entries = Vec::with_capacity((k - 1) * m * m);
    for pair in groups.windows(2) {
        for &a in &pair[0] {
            for &b in &pair[1] {
                entries.push((a, b, 1.0));
            }
        }
    }
    let mut v = DVector::from_element(kept.len(), 2.0);
    for &i in groups[0].iter().chain(groups[k - 1].iter()) {
        v[i] = 1.0;
    }
    let nk = kept.len();
    let graph = TrainingGraph::with_structure(
        v,
        EdgeWeights::Sparse(SymmetricTriplets::from_entries(nk, entries)?),
        GraphStructure::Serial { groups },
    )?;
    Ok(SerialGraph { graph, kept })
}
