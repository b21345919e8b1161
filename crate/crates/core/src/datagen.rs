//! Seeded synthetic datasets.
//!
//! Random values come from [`crate::rng`] streams of the spec's seed:
//!
//! | stream | use |
//! |--------|-----|
//! | 0 | mixing matrix `A` (regression) or class centroids |
//! | 1 | sample order permutation (regression) |
//! | 2 | additive noise, drawn sample by sample, dimension by dimension |
//!
//! The permutation is a Fisher-Yates shuffle from the last index down, using
//! [`crate::rng::below`].

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{GsfaError, Result};
use crate::matrix_io::to_rows;
use crate::rng::{below, standard_normal, stream};
use crate::solver::DataMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticRegressionSpec {
    /// Number of distinct label values on an even grid over `label_range`.
    pub n_values: usize,
    pub per_value: usize,
    pub dims: usize,
    /// `φ(ℓ) = (s, s², …, s^latent_dim)` with `s` the label scaled to `[−1, 1]`.
    pub latent_dim: usize,
    pub label_range: (f64, f64),
    /// Apply `tanh` to `A·φ(ℓ)` before adding noise.
    pub tanh: bool,
    pub noise: f64,
    pub seed: u64,
}

impl Default for SyntheticRegressionSpec {
    fn default() -> Self {
        SyntheticRegressionSpec {
            n_values: 60,
            per_value: 10,
            dims: 20,
            latent_dim: 2,
            label_range: (-3.0, 3.0),
            tanh: false,
            noise: 0.05,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticClassificationSpec {
    pub n_classes: usize,
    pub per_class: usize,
    pub dims: usize,
    /// Standard deviation of the centroid coordinates.
    pub spread: f64,
    /// Standard deviation of the samples around their centroid.
    pub noise: f64,
    pub seed: u64,
}

impl Default for SyntheticClassificationSpec {
    fn default() -> Self {
        SyntheticClassificationSpec { n_classes: 8, per_class: 20, dims: 16, spread: 5.0, noise: 0.5, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetMetadata {
    Regression { spec: SyntheticRegressionSpec, mixing: Vec<Vec<f64>>, label_values: Vec<f64> },
    Classification { spec: SyntheticClassificationSpec, centroids: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub data: DataMatrix,
    pub labels: Vec<f64>,
    /// Class ids for classification datasets.
    pub class_ids: Option<Vec<usize>>,
    pub metadata: DatasetMetadata,
}

fn noisy(mut x: DMatrix<f64>, noise: f64, seed: u64) -> DMatrix<f64> {
    if noise > 0.0 {
        let mut rng = stream(seed, 2);
        for n in 0..x.ncols() {
            for i in 0..x.nrows() {
                x[(i, n)] += noise * standard_normal(&mut rng);
            }
        }
    }
    x
}

pub fn gen_regression(spec: &SyntheticRegressionSpec) -> Result<SyntheticDataset> {
    let (lo, hi) = spec.label_range;
    if spec.n_values < 2 || spec.per_value == 0 {
        return Err(GsfaError::Parameter("need at least 2 label values and 1 sample per value".into()));
    }
    if spec.latent_dim == 0 || spec.dims < spec.latent_dim {
        return Err(GsfaError::Parameter(format!(
            "input dimension {} is below the latent dimension {}",
            spec.dims, spec.latent_dim
        )));
    }
    if !(lo < hi) || !(spec.noise >= 0.0) {
        return Err(GsfaError::Parameter("invalid label range or noise level".into()));
    }
    let step = (hi - lo) / (spec.n_values - 1) as f64;
    let label_values: Vec<f64> = (0..spec.n_values).map(|k| lo + step * k as f64).collect();
    let mut labels: Vec<f64> = label_values.iter().flat_map(|&l| std::iter::repeat_n(l, spec.per_value)).collect();
    let mut rng = stream(spec.seed, 0);
    let mixing = DMatrix::from_fn(spec.dims, spec.latent_dim, |_, _| standard_normal(&mut rng));
    let mut rng = stream(spec.seed, 1);
    for k in (1..labels.len()).rev() {
        labels.swap(k, below(&mut rng, k + 1));
    }
    let phi = DMatrix::from_fn(spec.latent_dim, labels.len(), |d, n| {
        let s = 2.0 * (labels[n] - lo) / (hi - lo) - 1.0;
        s.powi(d as i32 + 1)
    });
    let mut x = &mixing * phi;
    if spec.tanh {
        x.apply(|v| *v = v.tanh());
    }
    let x = noisy(x, spec.noise, spec.seed);
    Ok(SyntheticDataset {
        data: DataMatrix::new(x)?,
        labels,
        class_ids: None,
        metadata: DatasetMetadata::Regression { spec: spec.clone(), mixing: to_rows(&mixing), label_values },
    })
}

/// Balanced Gaussian blobs; samples are ordered class by class.
pub fn gen_classification(spec: &SyntheticClassificationSpec) -> Result<SyntheticDataset> {
    if spec.per_class < 2 {
        return Err(GsfaError::Parameter(format!("need at least 2 samples per class, got {}", spec.per_class)));
    }
    if spec.n_classes < 2 || !spec.n_classes.is_power_of_two() {
        return Err(GsfaError::Parameter(format!("class count must be a power of two ≥ 2, got {}", spec.n_classes)));
    }
    if spec.dims == 0 || !(spec.spread >= 0.0) || !(spec.noise >= 0.0) {
        return Err(GsfaError::Parameter("invalid dimension, spread or noise".into()));
    }
    let mut rng = stream(spec.seed, 0);
    let centroids = DMatrix::from_fn(spec.dims, spec.n_classes, |_, _| spec.spread * standard_normal(&mut rng));
    let class_ids: Vec<usize> = (0..spec.n_classes).flat_map(|c| std::iter::repeat_n(c, spec.per_class)).collect();
    let x = DMatrix::from_fn(spec.dims, class_ids.len(), |i, n| centroids[(i, class_ids[n])]);
    let x = noisy(x, spec.noise, spec.seed);
    Ok(SyntheticDataset {
        data: DataMatrix::new(x)?,
        labels: class_ids.iter().map(|&c| c as f64).collect(),
        class_ids: Some(class_ids),
        metadata: DatasetMetadata::Classification { spec: spec.clone(), centroids: to_rows(&centroids.transpose()) },
    })
}

impl SyntheticDataset {
    /// Writes `data.bin` (or `data.csv`), `labels.csv` and `metadata.json` into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>, csv: bool) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        self.data.write(dir.join(if csv { "data.csv" } else { "data.bin" }))?;
        let mut labels = String::from("label\n");
        for l in &self.labels {
            labels.push_str(&format!("{l}\n"));
        }
        std::fs::write(dir.join("labels.csv"), labels)?;
        std::fs::write(dir.join("metadata.json"), serde_json::to_string_pretty(&self.metadata)?)?;
        Ok(())
    }
}

/// Reads a single-column `label` CSV.
pub fn read_labels(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    let (header, m) = crate::matrix_io::read_csv(path)?;
    if header.len() != 1 {
        return Err(GsfaError::Parse(format!("label file has {} columns, expected 1", header.len())));
    }
    Ok(m.iter().copied().collect())
}
