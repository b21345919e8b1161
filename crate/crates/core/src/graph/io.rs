//! Versioned JSON container for training graphs.
//!
//! ```json
//! {"format_version": 1, "n": 3, "vertex_weights": [1, 2, 1],
//!  "edges": [[0, 1, 1.0], [1, 2, 1.0]]}
//! ```
//! Edges are `[i, j, gamma]` with `i ≤ j`; the symmetric counterpart is implied.

use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::{EdgeWeights, GraphStructure, SymmetricTriplets, TrainingGraph};
use crate::error::{GsfaError, Result};

pub const GRAPH_FORMAT_VERSION: u32 = 1;

/// Above this fill ratio a loaded graph is stored densely.
const DENSE_FILL: f64 = 0.25;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphFile {
    pub format_version: u32,
    pub n: usize,
    pub vertex_weights: Vec<f64>,
    pub edges: Vec<(usize, usize, f64)>,
    #[serde(default, skip_serializing_if = "is_generic")]
    pub structure: GraphStructure,
}

fn is_generic(s: &GraphStructure) -> bool {
    *s == GraphStructure::Generic
}

impl GraphFile {
    pub fn from_graph(g: &TrainingGraph) -> Self {
        let mut edges = Vec::new();
        g.edges().for_each_upper(|i, j, w| edges.push((i, j, w)));
        GraphFile {
            format_version: GRAPH_FORMAT_VERSION,
            n: g.n_samples(),
            vertex_weights: g.vertex_weights().iter().copied().collect(),
            edges,
            structure: g.structure().clone(),
        }
    }

    pub fn into_graph(self) -> Result<TrainingGraph> {
        if self.format_version != GRAPH_FORMAT_VERSION {
            return Err(GsfaError::FormatVersion { found: self.format_version, expected: GRAPH_FORMAT_VERSION });
        }
        if self.vertex_weights.len() != self.n {
            return Err(GsfaError::Dimension(format!(
                "n = {} but {} vertex weights",
                self.n,
                self.vertex_weights.len()
            )));
        }
        if let Some(&(i, j, _)) = self.edges.iter().find(|e| e.0 > e.1) {
            return Err(GsfaError::Parse(format!("edge ({i}, {j}) must satisfy i <= j")));
        }
        let triplets = SymmetricTriplets::from_entries(self.n, self.edges)?;
        let filled = triplets.entries().len() as f64 * 2.0;
        let edges = if filled > DENSE_FILL * (self.n * self.n) as f64 {
            EdgeWeights::Dense(EdgeWeights::Sparse(triplets).to_dense())
        } else {
            EdgeWeights::Sparse(triplets)
        };
        TrainingGraph::with_structure(DVector::from_vec(self.vertex_weights), edges, self.structure)
    }
}

pub fn to_json(g: &TrainingGraph) -> Result<String> {
    Ok(serde_json::to_string_pretty(&GraphFile::from_graph(g))?)
}

pub fn from_json(text: &str) -> Result<TrainingGraph> {
    let file: GraphFile = serde_json::from_str(text)?;
    file.into_graph()
}

pub fn write_graph(path: impl AsRef<Path>, g: &TrainingGraph) -> Result<()> {
    std::fs::write(path, to_json(g)?)?;
    Ok(())
}

pub fn read_graph(path: impl AsRef<Path>) -> Result<TrainingGraph> {
    from_json(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    #[test]
    fn round_trip_and_version_gate() {
        let g = TrainingGraph::from_dense(
            DVector::from_vec(vec![1.0, 2.0, 1.0]),
            &DMatrix::from_row_slice(3, 3, &[0., 1., 0., 1., 0., 1., 0., 1., 0.]),
        )
        .unwrap();
        let text = to_json(&g).unwrap();
        let back = from_json(&text).unwrap();
        assert_eq!(back.gamma_dense(), g.gamma_dense());
        assert_eq!(back.vertex_weights(), g.vertex_weights());

        let bumped = text.replace("\"format_version\": 1", "\"format_version\": 2");
        assert!(matches!(from_json(&bumped), Err(GsfaError::FormatVersion { found: 2, .. })));
        let lower = r#"{"format_version":1,"n":2,"vertex_weights":[1,1],"edges":[[1,0,1.0]]}"#;
        assert!(matches!(from_json(lower), Err(GsfaError::Parse(_))));
    }
}
