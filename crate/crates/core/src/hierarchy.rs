//! Hierarchical GSFA: layers of independent nodes over non-overlapping
//! receptive fields, all trained with the same training graph.
//!
//! A layer sees its input as a grid of cells, each a vector of equal length.
//! The network input is an `height × width` image with `channels` values per
//! pixel, stored per sample as `(row · width + col) · channels + channel`. A
//! node concatenates its field's cells in row-major order, and its output
//! becomes one cell of the next layer's grid.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{GsfaError, Result};
use crate::graph::TrainingGraph;
use crate::parallel;
use crate::solver::{train_node, ExpansionSpec, NodeModel, NodeSpec, TrainOptions};

pub const NETWORK_FORMAT_VERSION: u32 = 1;
const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputShape {
    pub height: usize,
    pub width: usize,
    #[serde(default = "one")]
    pub channels: usize,
}

fn one() -> usize {
    1
}

impl InputShape {
    pub fn dims(&self) -> usize {
        self.height * self.width * self.channels
    }
}

/// How a layer groups the cells of its input grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FanIn {
    /// `height × width` fields; `stride` defaults to the field size and may not differ from it.
    Tile {
        height: usize,
        width: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        stride: Option<(usize, usize)>,
    },
    /// Pairs of horizontally adjacent cells (1×2 fields).
    MergeHorizontal,
    /// Pairs of vertically adjacent cells (2×1 fields).
    MergeVertical,
}

impl FanIn {
    pub fn field(&self) -> (usize, usize) {
        match *self {
            FanIn::Tile { height, width, .. } => (height, width),
            FanIn::MergeHorizontal => (1, 2),
            FanIn::MergeVertical => (2, 1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub fan_in: FanIn,
    #[serde(default)]
    pub pca_dims: Option<usize>,
    #[serde(default)]
    pub expansion: ExpansionSpec,
    pub out_dims: usize,
    #[serde(default = "default_ridge")]
    pub ridge: f64,
}

fn default_ridge() -> f64 {
    1e-10
}

impl LayerSpec {
    pub fn new(fan_in: FanIn, out_dims: usize) -> Self {
        LayerSpec { fan_in, pca_dims: None, expansion: ExpansionSpec::Identity, out_dims, ridge: default_ridge() }
    }

    fn node_spec(&self) -> NodeSpec {
        let mut train = TrainOptions::new(self.out_dims);
        train.ridge = self.ridge;
        NodeSpec { pca_dims: self.pca_dims, expansion: self.expansion, train }
    }
}

/// Architecture config file contents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_shape: InputShape,
    pub layers: Vec<LayerSpec>,
}

impl Architecture {
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

/// Per-layer dimensions, in the style of a network structure table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerReport {
    pub layer: usize,
    /// Node grid `(rows, cols)`.
    pub grid: (usize, usize),
    /// Receptive field in cells of the layer input.
    pub field: (usize, usize),
    /// Receptive field in input pixels.
    pub field_pixels: (usize, usize),
    pub node_input_dim: usize,
    pub pca_dim: Option<usize>,
    pub expanded_dim: usize,
    pub out_dim: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchitectureReport {
    pub layers: Vec<LayerReport>,
}

impl ArchitectureReport {
    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.grid.0 * l.grid.1 * l.out_dim)
    }

    pub fn to_table(&self) -> String {
        let mut out = String::from("layer,nodes,field,field_pixels,input_dim,pca_dim,expanded_dim,output_dim\n");
        for l in &self.layers {
            out.push_str(&format!(
                "{},{}x{},{}x{},{}x{},{},{},{},{}\n",
                l.layer,
                l.grid.0,
                l.grid.1,
                l.field.0,
                l.field.1,
                l.field_pixels.0,
                l.field_pixels.1,
                l.node_input_dim,
                l.pca_dim.map_or("-".to_string(), |d| d.to_string()),
                l.expanded_dim,
                l.out_dim
            ));
        }
        out
    }
}

/// Checks exact tiling and dimension chains; layers are numbered from 1.
pub fn validate_architecture(specs: &[LayerSpec], input: InputShape) -> Result<ArchitectureReport> {
    if specs.is_empty() {
        return Err(GsfaError::Architecture { layer: 0, reason: "network has no layers".into() });
    }
    if input.dims() == 0 {
        return Err(GsfaError::Architecture { layer: 0, reason: "empty input shape".into() });
    }
    let (mut rows, mut cols, mut cell_dim) = (input.height, input.width, input.channels);
    let (mut px_h, mut px_w) = (1, 1);
    let mut layers = Vec::with_capacity(specs.len());
    for (k, spec) in specs.iter().enumerate() {
        let layer = k + 1;
        let fail = |reason: String| GsfaError::Architecture { layer, reason };
        let (fh, fw) = spec.fan_in.field();
        if fh == 0 || fw == 0 {
            return Err(fail("receptive field must be non-empty".into()));
        }
        if let FanIn::Tile { stride: Some(s), .. } = spec.fan_in {
            if s != (fh, fw) {
                return Err(fail(format!(
                    "stride {s:?} differs from field {fh}x{fw}; only non-overlapping tiling is supported"
                )));
            }
        }
        if rows % fh != 0 || cols % fw != 0 {
            return Err(fail(format!("field {fh}x{fw} does not tile the {rows}x{cols} input grid")));
        }
        let node_input_dim = fh * fw * cell_dim;
        if let Some(p) = spec.pca_dims {
            if p == 0 || p > node_input_dim {
                return Err(fail(format!("PCA dimension {p} not in 1..={node_input_dim}")));
            }
        }
        spec.expansion.validate().map_err(|e| fail(e.to_string()))?;
        let expanded_dim = spec.expansion.output_dim(spec.pca_dims.unwrap_or(node_input_dim));
        if spec.out_dims == 0 || spec.out_dims > expanded_dim {
            return Err(fail(format!("output dimension {} not in 1..={expanded_dim}", spec.out_dims)));
        }
        px_h *= fh;
        px_w *= fw;
        rows /= fh;
        cols /= fw;
        layers.push(LayerReport {
            layer,
            grid: (rows, cols),
            field: (fh, fw),
            field_pixels: (px_h, px_w),
            node_input_dim,
            pca_dim: spec.pca_dims,
            expanded_dim,
            out_dim: spec.out_dims,
        });
        cell_dim = spec.out_dims;
    }
    Ok(ArchitectureReport { layers })
}

/// Cell grid with `dim` values per cell, cells stored row-major.
struct Grid {
    cols: usize,
    dim: usize,
    data: DMatrix<f64>,
}

impl Grid {
    fn field(&self, r: usize, c: usize, fh: usize, fw: usize) -> DMatrix<f64> {
        let mut idx = Vec::with_capacity(fh * fw * self.dim);
        for i in 0..fh {
            for j in 0..fw {
                let cell = (r * fh + i) * self.cols + (c * fw + j);
                idx.extend(cell * self.dim..(cell + 1) * self.dim);
            }
        }
        self.data.select_rows(&idx)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HgsfaNetwork {
    pub input_shape: InputShape,
    pub layers: Vec<LayerSpec>,
    /// Per layer, node models in row-major grid order.
    pub nodes: Vec<Vec<NodeModel>>,
    pub report: ArchitectureReport,
}

fn forward_layer<F>(grid: &Grid, report: &LayerReport, node: F) -> Result<Grid>
where
    F: Fn(usize, usize, &DMatrix<f64>) -> Result<DMatrix<f64>> + Sync + Send,
{
    let (rows, cols) = report.grid;
    let (fh, fw) = report.field;
    let outputs = parallel::map_indexed(rows * cols, |k| {
        let (r, c) = (k / cols, k % cols);
        node(r, c, &grid.field(r, c, fh, fw))
    });
    let n = grid.data.ncols();
    let mut data = DMatrix::zeros(rows * cols * report.out_dim, n);
    for (k, out) in outputs.into_iter().enumerate() {
        data.rows_mut(k * report.out_dim, report.out_dim).copy_from(&out?);
    }
    Ok(Grid { cols, dim: report.out_dim, data })
}

fn input_grid(x: &DMatrix<f64>, shape: InputShape) -> Result<Grid> {
    if x.nrows() != shape.dims() {
        return Err(GsfaError::Dimension(format!(
            "input has {} dimensions, shape {}x{}x{} needs {}",
            x.nrows(),
            shape.height,
            shape.width,
            shape.channels,
            shape.dims()
        )));
    }
    Ok(Grid { cols: shape.width, dim: shape.channels, data: x.clone() })
}

/// Trains all nodes layer by layer; nodes of a layer train in parallel.
pub fn train_hgsfa(
    x: &DMatrix<f64>,
    g: &TrainingGraph,
    specs: &[LayerSpec],
    input: InputShape,
) -> Result<HgsfaNetwork> {
    if x.ncols() != g.n_samples() {
        return Err(GsfaError::Dimension(format!("{} samples but graph has {} vertices", x.ncols(), g.n_samples())));
    }
    let report = validate_architecture(specs, input)?;
    let mut grid = input_grid(x, input)?;
    let mut nodes = Vec::with_capacity(specs.len());
    for (k, spec) in specs.iter().enumerate() {
        let lr = &report.layers[k];
        let node_spec = spec.node_spec();
        let (rows, cols) = lr.grid;
        let (fh, fw) = lr.field;
        let trained = parallel::map_indexed(rows * cols, |idx| {
            let (r, c) = (idx / cols, idx % cols);
            train_node(&grid.field(r, c, fh, fw), g, &node_spec).map_err(|e| GsfaError::Node {
                layer: k + 1,
                row: r,
                col: c,
                source: Box::new(e),
            })
        });
        let models: Vec<NodeModel> = trained.into_iter().collect::<Result<_>>()?;
        grid = forward_layer(&grid, lr, |r, c, field| models[r * cols + c].apply(field))?;
        log::info!("trained layer {} ({}x{} nodes)", k + 1, rows, cols);
        nodes.push(models);
    }
    Ok(HgsfaNetwork { input_shape: input, layers: specs.to_vec(), nodes, report })
}

impl HgsfaNetwork {
    pub fn output_dim(&self) -> usize {
        self.report.output_dim()
    }

    /// Forward pass; returns `J_top × N`.
    pub fn extract(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let mut grid = input_grid(x, self.input_shape)?;
        for (k, lr) in self.report.layers.iter().enumerate() {
            let models = &self.nodes[k];
            let cols = lr.grid.1;
            grid = forward_layer(&grid, lr, |r, c, field| models[r * cols + c].apply(field))?;
        }
        Ok(grid.data)
    }

    /// Writes `manifest.json` plus one model file per node into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let mut files = Vec::with_capacity(self.nodes.len());
        for (k, layer) in self.nodes.iter().enumerate() {
            let cols = self.report.layers[k].grid.1;
            let mut names = Vec::with_capacity(layer.len());
            for (idx, node) in layer.iter().enumerate() {
                let name = format!("node_l{}_r{}_c{}.json", k + 1, idx / cols, idx % cols);
                node.write(dir.join(&name))?;
                names.push(name);
            }
            files.push(names);
        }
        let manifest = Manifest {
            format_version: NETWORK_FORMAT_VERSION,
            architecture: Architecture { input_shape: self.input_shape, layers: self.layers.clone() },
            nodes: files,
        };
        std::fs::write(dir.join(MANIFEST), serde_json::to_string_pretty(&manifest)?)?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let manifest: Manifest = serde_json::from_str(&std::fs::read_to_string(dir.join(MANIFEST))?)?;
        if manifest.format_version != NETWORK_FORMAT_VERSION {
            return Err(GsfaError::FormatVersion { found: manifest.format_version, expected: NETWORK_FORMAT_VERSION });
        }
        let arch = manifest.architecture;
        let report = validate_architecture(&arch.layers, arch.input_shape)?;
        if manifest.nodes.len() != report.layers.len() {
            return Err(GsfaError::Parse("manifest node lists do not match the layers".into()));
        }
        let mut nodes = Vec::with_capacity(manifest.nodes.len());
        for (k, names) in manifest.nodes.iter().enumerate() {
            let (rows, cols) = report.layers[k].grid;
            if names.len() != rows * cols {
                return Err(GsfaError::Parse(format!(
                    "layer {} lists {} nodes, expected {}",
                    k + 1,
                    names.len(),
                    rows * cols
                )));
            }
            nodes.push(names.iter().map(|n| NodeModel::read(dir.join(n))).collect::<Result<Vec<_>>>()?);
        }
        Ok(HgsfaNetwork { input_shape: arch.input_shape, layers: arch.layers, nodes, report })
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    architecture: Architecture,
    nodes: Vec<Vec<String>>,
}
