//! Reproducible experiment pipelines shared by the command line tool.
//!
//! Every pipeline writes into one directory: `config.json` (the echoed
//! configuration), `log.txt`, CSV tables and any binary artifacts. Nothing
//! time-dependent is written, so reruns with the same configuration produce
//! byte-identical directories.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::builders::{
    auxiliary_labels, build_ell_graph, build_linear_graph, build_serial_graph, clustered_equivalence_check,
    clustered_graph_from_ids, compact_binary_labels, decorrelate_labels, eliminate_negative_weights, normalize_labels,
    EigenvalueSchedule, EllOptions, LabelSet, LinearVariant, RemainderPolicy,
};
use crate::datagen::{gen_classification, gen_regression, SyntheticClassificationSpec, SyntheticRegressionSpec};
use crate::error::{GsfaError, Result};
use crate::estimators::{
    chance_rmse, default_soft_gc_classes, fit_linear_regression, fit_linear_scaling, fit_soft_gc, metrics_to_csv, rmse,
    LabelEstimator, MetricRow,
};
use crate::graph::{io::write_graph, TrainingGraph};
use crate::rng::{standard_normal, stream, uniform};
use crate::solver::{train_node, ExpansionSpec, NodeSpec};
use crate::spectrum::{optimal_free_responses, FreeResponseSpectrum, SpectrumOptions};

/// Normalized, decorrelated labels: `l1` plus `n_labels − 1` cosine auxiliaries.
pub fn ell_label_set(l1: &[f64], n_labels: usize, v: &DVector<f64>) -> Result<LabelSet> {
    if n_labels == 0 {
        return Err(GsfaError::Parameter("need at least one label".into()));
    }
    let n = l1.len();
    let mut raw = DMatrix::zeros(n_labels, n);
    raw.set_row(0, &DVector::from_column_slice(l1).transpose());
    if n_labels > 1 {
        let aux = auxiliary_labels(l1, n_labels)?;
        raw.rows_mut(1, n_labels - 1).copy_from(&aux);
    }
    decorrelate_labels(&normalize_labels(&raw, v)?)
}

/// Graph over a labeled training set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LabelGraphKind {
    /// Reordering graph over the label-sorted samples.
    Linear { variant: LinearVariant },
    /// One class per distinct label value.
    Clustered,
    /// Serial graph; surplus samples with the largest labels are dropped.
    Serial { groups: usize },
    /// ELL with the label and `n_labels − 1` cosine auxiliaries.
    Ell { n_labels: usize, nonnegative: bool },
}

impl fmt::Display for LabelGraphKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LabelGraphKind::Linear { .. } => write!(f, "linear"),
            LabelGraphKind::Clustered => write!(f, "clustered"),
            LabelGraphKind::Serial { groups } => write!(f, "serial{groups}"),
            LabelGraphKind::Ell { n_labels, nonnegative } => {
                write!(f, "ell{n_labels}{}", if *nonnegative { "nn" } else { "" })
            }
        }
    }
}

/// Parses `linear`, `linear-endpoint`, `clustered`, `serial:K`, `ell:K` and `ell:K:nn`.
impl FromStr for LabelGraphKind {
    type Err = GsfaError;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let count = |t: &str| {
            t.parse::<usize>().map_err(|_| GsfaError::Parameter(format!("invalid count {t:?} in graph kind {s:?}")))
        };
        match parts.as_slice() {
            ["linear"] => Ok(LabelGraphKind::Linear { variant: LinearVariant::SelfLoopExtended }),
            ["linear-endpoint"] => Ok(LabelGraphKind::Linear { variant: LinearVariant::EndpointHalvedVertexWeights }),
            ["clustered"] => Ok(LabelGraphKind::Clustered),
            ["serial", k] => Ok(LabelGraphKind::Serial { groups: count(k)? }),
            ["ell", k] => Ok(LabelGraphKind::Ell { n_labels: count(k)?, nonnegative: false }),
            ["ell", k, "nn"] => Ok(LabelGraphKind::Ell { n_labels: count(k)?, nonnegative: true }),
            _ => Err(GsfaError::Parameter(format!("unknown graph kind {s:?}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LabelGraph {
    pub graph: TrainingGraph,
    /// Vertex `k` of `graph` is sample `samples[k]`.
    pub samples: Vec<usize>,
}

pub fn graph_for_labels(kind: LabelGraphKind, labels: &[f64]) -> Result<LabelGraph> {
    let n = labels.len();
    match kind {
        LabelGraphKind::Linear { variant } => {
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| labels[a].total_cmp(&labels[b]).then(a.cmp(&b)));
            Ok(LabelGraph { graph: build_linear_graph(n, variant)?, samples: order })
        }
        LabelGraphKind::Clustered => {
            let mut distinct = labels.to_vec();
            distinct.sort_by(f64::total_cmp);
            distinct.dedup();
            let ids: Vec<usize> = labels.iter().map(|l| distinct.partition_point(|d| d.total_cmp(l).is_lt())).collect();
            Ok(LabelGraph { graph: clustered_graph_from_ids(&ids)?, samples: (0..n).collect() })
        }
        LabelGraphKind::Serial { groups } => {
            let s = build_serial_graph(labels, groups, RemainderPolicy::Truncate)?;
            Ok(LabelGraph { graph: s.graph, samples: s.kept })
        }
        LabelGraphKind::Ell { n_labels, nonnegative } => {
            let ls = ell_label_set(labels, n_labels, &DVector::from_element(n, 1.0))?;
            let graph = build_ell_graph(&ls, &EllOptions { nonnegative, ..Default::default() })?;
            Ok(LabelGraph { graph, samples: (0..n).collect() })
        }
    }
}

/// Canonical correlations between the row spaces of `a` and `b` (both `k×N`), descending.
pub fn canonical_correlations(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<Vec<f64>> {
    if a.ncols() != b.ncols() {
        return Err(GsfaError::Dimension(format!("{} vs {} samples", a.ncols(), b.ncols())));
    }
    let basis = |m: &DMatrix<f64>| {
        let mut c = m.transpose();
        let mean = c.row_mean();
        for mut row in c.row_iter_mut() {
            row -= &mean;
        }
        c.qr().q()
    };
    let s = (basis(a).transpose() * basis(b)).singular_values();
    let mut out: Vec<f64> = s.iter().copied().collect();
    out.sort_by(|x, y| y.total_cmp(x));
    Ok(out)
}

/// One named pass/fail check of a reproduction pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: String,
    pub passed: bool,
}

impl Check {
    fn exact(name: impl Into<String>, value: usize, expected: usize) -> Self {
        Check { name: name.into(), value: value as f64, threshold: format!("== {expected}"), passed: value == expected }
    }

    fn at_most(name: impl Into<String>, value: f64, limit: f64) -> Self {
        Check { name: name.into(), value, threshold: format!("<= {limit:e}"), passed: value <= limit }
    }

    fn at_least(name: impl Into<String>, value: f64, limit: f64) -> Self {
        Check { name: name.into(), value, threshold: format!(">= {limit}"), passed: value >= limit }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pipeline {
    Fig6Spectra,
    EllRoundtrip,
    CompactVsClustered,
}

impl Pipeline {
    pub const ALL: [Pipeline; 3] = [Pipeline::Fig6Spectra, Pipeline::EllRoundtrip, Pipeline::CompactVsClustered];

    pub fn name(&self) -> &'static str {
        match self {
            Pipeline::Fig6Spectra => "fig6-spectra",
            Pipeline::EllRoundtrip => "ell-roundtrip",
            Pipeline::CompactVsClustered => "compact-vs-clustered",
        }
    }
}

impl FromStr for Pipeline {
    type Err = GsfaError;

    fn from_str(s: &str) -> Result<Self> {
        Pipeline::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| GsfaError::Parameter(format!("unknown pipeline {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReproduceSummary {
    pub pipeline: Pipeline,
    pub seed: u64,
    pub checks: Vec<Check>,
}

impl ReproduceSummary {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("check,value,threshold,pass\n");
        for c in &self.checks {
            out.push_str(&format!("{},{},{},{}\n", c.name, c.value, c.threshold, c.passed));
        }
        out
    }
}

#[derive(Serialize)]
struct ReproduceConfig<'a> {
    pipeline: &'a str,
    seed: u64,
}

/// Runs `pipeline` and writes its bundle into `out`.
pub fn reproduce(pipeline: Pipeline, out: impl AsRef<Path>, seed: u64) -> Result<ReproduceSummary> {
    let out = out.as_ref();
    std::fs::create_dir_all(out)?;
    std::fs::write(
        out.join("config.json"),
        serde_json::to_string_pretty(&ReproduceConfig { pipeline: pipeline.name(), seed })?,
    )?;
    let checks = match pipeline {
        Pipeline::Fig6Spectra => fig6_spectra(out)?,
        Pipeline::EllRoundtrip => ell_roundtrip(out, seed, 20)?,
        Pipeline::CompactVsClustered => compact_vs_clustered(out, seed)?,
    };
    let summary = ReproduceSummary { pipeline, seed, checks };
    std::fs::write(out.join("summary.csv"), summary.to_csv())?;
    let mut log = String::new();
    for c in &summary.checks {
        log.push_str(&format!(
            "{} {} (value {}, {})\n",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.value,
            c.threshold
        ));
    }
    std::fs::write(out.join("log.txt"), log)?;
    Ok(summary)
}

/// The three N = 30 graphs of the spectrum figure.
pub fn fig6_graphs() -> Result<Vec<(&'static str, TrainingGraph)>> {
    let n = 30;
    let labels: Vec<f64> = (0..n).map(|i| i as f64).collect();
    let ell = ell_label_set(&labels, 4, &DVector::from_element(n, 1.0))?;
    Ok(vec![
        ("reordering", build_linear_graph(n, LinearVariant::SelfLoopExtended)?),
        ("serial", build_serial_graph(&labels, 15, RemainderPolicy::Strict)?.graph),
        ("ell4", build_ell_graph(&ell, &EllOptions::default())?),
    ])
}

fn write_spectrum(out: &Path, name: &str, s: &FreeResponseSpectrum) -> Result<()> {
    s.write_csv(out.join(format!("{name}_spectrum.csv")))?;
    let five = s.slowest(5);
    let header: Vec<String> = (1..=five.ncols()).map(|j| format!("y{j}")).collect();
    crate::matrix_io::write_csv(out.join(format!("{name}_slowest5.csv")), &header, &five)
}

fn fig6_spectra(out: &Path) -> Result<Vec<Check>> {
    let expected = [("reordering", 14), ("serial", 6), ("ell4", 4)];
    let mut checks = Vec::new();
    for ((name, g), (_, want)) in fig6_graphs()?.into_iter().zip(expected) {
        write_graph(out.join(format!("{name}_graph.json")), &g)?;
        let s = optimal_free_responses(&g, &SpectrumOptions::default())?;
        write_spectrum(out, name, &s)?;
        checks.push(Check::exact(format!("{name}_delta_below_2"), s.count_delta_below_two(), want));
    }
    Ok(checks)
}

/// Outcome of one random ELL round trip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundTripTrial {
    pub n: usize,
    pub n_labels: usize,
    pub max_response_error: f64,
    pub max_delta_error: f64,
    pub min_weight_after: f64,
    pub r_relative_change: f64,
    pub order_preserved: bool,
    pub max_delta_map_error: f64,
}

/// Random weighted label set with `N ∈ [8, 64]`, `L ∈ [1, 5]` and distinct positive eigenvalues below 1.
pub fn random_label_set(seed: u64, trial: u64) -> Result<LabelSet> {
    let mut rng = stream(seed, 1000 + trial);
    let n = 8 + crate::rng::below(&mut rng, 57);
    let l = 1 + crate::rng::below(&mut rng, 5);
    let v = DVector::from_fn(n, |_, _| 0.5 + 1.5 * uniform(&mut rng));
    let raw = DMatrix::from_fn(l, n, |_, _| standard_normal(&mut rng));
    let mut eigenvalues: Vec<f64> = (0..l).map(|k| 0.9 - 0.15 * k as f64 - 0.1 * uniform(&mut rng)).collect();
    eigenvalues.iter_mut().for_each(|x| *x = x.max(0.01));
    decorrelate_labels(&normalize_labels(&raw, &v)?)?.with_eigenvalues(eigenvalues)
}

/// Builds the ELL graph of `ls`, compares responses with the labels, then
/// eliminates negative weights and compares again.
pub fn ell_roundtrip_trial(ls: &LabelSet) -> Result<RoundTripTrial> {
    let l = ls.n_labels();
    let g = build_ell_graph(ls, &EllOptions { schedule: EigenvalueSchedule::FromLabels, ..Default::default() })?;
    let opts = SpectrumOptions::default();
    let s = optimal_free_responses(&g, &opts)?;
    let (q, r) = (g.q_sum(), g.r_sum());
    let mut order: Vec<usize> = (0..l).collect();
    order.sort_by(|&a, &b| ls.eigenvalues[b].total_cmp(&ls.eigenvalues[a]));
    let feasible = s.feasible_indices();
    let compare = |s: &FreeResponseSpectrum| -> f64 {
        let feasible = s.feasible_indices();
        order
            .iter()
            .enumerate()
            .map(|(rank, &j)| {
                let y = s.responses.column(feasible[rank]);
                let label = ls.label(j);
                let plus = (y - &label).amax();
                let minus = (y + &label).amax();
                plus.min(minus)
            })
            .fold(0.0, f64::max)
    };
    let max_response_error = compare(&s);
    let max_delta_error = order
        .iter()
        .enumerate()
        .map(|(rank, &j)| {
            (s.deltas[feasible[rank]] - crate::builders::delta_from_eigenvalue(ls.eigenvalues[j], q, r)).abs()
        })
        .fold(0.0, f64::max);

    let e = eliminate_negative_weights(&g)?;
    let s2 = optimal_free_responses(&e.graph, &opts)?;
    let f2 = s2.feasible_indices();
    let order_preserved = compare(&s2) <= 1e-8;
    let max_delta_map_error =
        (0..l).map(|rank| (s2.deltas[f2[rank]] - e.map_delta(s.deltas[feasible[rank]])).abs()).fold(0.0, f64::max);
    Ok(RoundTripTrial {
        n: ls.n_samples(),
        n_labels: l,
        max_response_error,
        max_delta_error,
        min_weight_after: e.graph.min_edge_weight(),
        r_relative_change: (e.graph.r_sum() - r).abs() / r,
        order_preserved,
        max_delta_map_error,
    })
}

fn ell_roundtrip(out: &Path, seed: u64, trials: u64) -> Result<Vec<Check>> {
    let mut csv = String::from(
        "trial,n,l,max_response_error,max_delta_error,min_weight_after,r_relative_change,order_preserved,max_delta_map_error\n",
    );
    let mut all = Vec::new();
    for t in 0..trials {
        let r = ell_roundtrip_trial(&random_label_set(seed, t)?)?;
        csv.push_str(&format!(
            "{t},{},{},{},{},{},{},{},{}\n",
            r.n,
            r.n_labels,
            r.max_response_error,
            r.max_delta_error,
            r.min_weight_after,
            r.r_relative_change,
            r.order_preserved,
            r.max_delta_map_error
        ));
        all.push(r);
    }
    std::fs::write(out.join("trials.csv"), csv)?;
    let worst = |f: fn(&RoundTripTrial) -> f64| all.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
    Ok(vec![
        Check::at_most("response_error", worst(|r| r.max_response_error), 1e-8),
        Check::at_most("delta_error", worst(|r| r.max_delta_error), 1e-10),
        Check::at_least("min_weight_after", -worst(|r| -r.min_weight_after), -1e-12),
        Check::at_most("r_relative_change", worst(|r| r.r_relative_change), 1e-9),
        Check::exact("order_preserved", all.iter().filter(|r| r.order_preserved).count(), all.len()),
        Check::at_most("delta_map_error", worst(|r| r.max_delta_map_error), 1e-9),
    ])
}

/// Canonical correlations between the `C−1` GSFA features learned from one-hot
/// inputs on the compact+(C−1) ELL graph and on the clustered graph.
pub fn same_subspace_correlations(n_classes: usize, per_class: usize, seed: u64) -> Result<Vec<f64>> {
    let data = gen_classification(&SyntheticClassificationSpec { n_classes, per_class, seed, ..Default::default() })?;
    let ids = data.class_ids.expect("classification ids");
    let n = ids.len();
    let compact = compact_binary_labels(n_classes, n_classes - 1)?.expand(&ids)?;
    let ell = build_ell_graph(&compact, &EllOptions::default())?;
    let clustered = clustered_graph_from_ids(&ids)?;
    let one_hot = DMatrix::<f64>::identity(n, n);
    let spec = NodeSpec::new(n_classes - 1);
    let a = train_node(&one_hot, &ell, &spec)?.apply(&one_hot)?;
    let b = train_node(&one_hot, &clustered, &spec)?.apply(&one_hot)?;
    canonical_correlations(&a, &b)
}

fn compact_vs_clustered(out: &Path, seed: u64) -> Result<Vec<Check>> {
    let mut csv = String::from("n_classes,per_class,max_abs_diff,max_inter_class,equivalent\n");
    let mut checks = Vec::new();
    for c in [2, 4, 8] {
        let rep = clustered_equivalence_check(c, 4)?;
        csv.push_str(&format!("{c},4,{},{},{}\n", rep.max_abs_diff, rep.max_inter_class, rep.equivalent));
        checks.push(Check::at_most(format!("c{c}_max_abs_diff"), rep.max_abs_diff, 1e-10));
        checks.push(Check::at_most(format!("c{c}_max_inter_class"), rep.max_inter_class, 1e-12));
    }
    std::fs::write(out.join("equivalence.csv"), csv)?;
    let cc = same_subspace_correlations(8, 6, seed)?;
    let mut cc_csv = String::from("k,canonical_correlation\n");
    for (k, x) in cc.iter().enumerate() {
        cc_csv.push_str(&format!("{},{x}\n", k + 1));
    }
    std::fs::write(out.join("canonical_correlations.csv"), cc_csv)?;
    checks.push(Check::at_least("c8_min_canonical_correlation", cc.iter().copied().fold(1.0, f64::min), 1.0 - 1e-8));
    Ok(checks)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorChoice {
    LinearScaling,
    LinearRegression,
    SoftGc,
}

impl fmt::Display for EstimatorChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EstimatorChoice::LinearScaling => "linear_scaling",
            EstimatorChoice::LinearRegression => "linear_regression",
            EstimatorChoice::SoftGc => "soft_gc",
        })
    }
}

/// Feature-count sweep over graphs and estimators on a synthetic regression task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluateConfig {
    pub dataset: SyntheticRegressionSpec,
    /// Leading fraction of the (shuffled) samples used for training.
    pub train_fraction: f64,
    pub graphs: Vec<LabelGraphKind>,
    #[serde(default)]
    pub expansion: ExpansionSpec,
    #[serde(default)]
    pub pca_dims: Option<usize>,
    pub d_min: usize,
    pub d_max: usize,
    pub estimators: Vec<EstimatorChoice>,
    #[serde(default)]
    pub soft_gc_classes: Option<usize>,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        EvaluateConfig {
            dataset: SyntheticRegressionSpec::default(),
            train_fraction: 0.8,
            graphs: vec![LabelGraphKind::Ell { n_labels: 4, nonnegative: false }],
            expansion: ExpansionSpec::Identity,
            pca_dims: None,
            d_min: 1,
            d_max: 5,
            estimators: vec![
                EstimatorChoice::LinearScaling,
                EstimatorChoice::LinearRegression,
                EstimatorChoice::SoftGc,
            ],
            soft_gc_classes: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub graph: String,
    pub estimator: String,
    pub d: usize,
    pub train_rmse: f64,
    pub test_rmse: f64,
    pub train_chance_rmse: f64,
    pub test_chance_rmse: f64,
}

pub fn eval_rows_to_csv(rows: &[EvalRow]) -> String {
    let mut out = String::from("graph,estimator,d,train_rmse,test_rmse,train_chance_rmse,test_chance_rmse\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.graph, r.estimator, r.d, r.train_rmse, r.test_rmse, r.train_chance_rmse, r.test_chance_rmse
        ));
    }
    out
}

/// Splits columns into the leading `fraction` and the rest.
pub fn split_train_test(n: usize, fraction: f64) -> Result<(Vec<usize>, Vec<usize>)> {
    let n_train = (fraction * n as f64).floor() as usize;
    if !(fraction > 0.0 && fraction < 1.0) || n_train < 2 || n_train == n {
        return Err(GsfaError::Parameter(format!("train fraction {fraction} leaves an empty split of {n} samples")));
    }
    Ok(((0..n_train).collect(), (n_train..n).collect()))
}

fn fit(
    choice: EstimatorChoice,
    y: &DMatrix<f64>,
    labels: &[f64],
    v: &DVector<f64>,
    classes: usize,
) -> Result<LabelEstimator> {
    match choice {
        EstimatorChoice::LinearScaling => fit_linear_scaling(&y.row(0).transpose(), labels, v),
        EstimatorChoice::LinearRegression => fit_linear_regression(y, labels),
        EstimatorChoice::SoftGc => fit_soft_gc(y, labels, classes),
    }
}

pub fn evaluate(cfg: &EvaluateConfig) -> Result<Vec<EvalRow>> {
    if cfg.d_min == 0 || cfg.d_min > cfg.d_max {
        return Err(GsfaError::Parameter(format!("invalid d range {}..={}", cfg.d_min, cfg.d_max)));
    }
    let data = gen_regression(&cfg.dataset)?;
    let x = &data.data.values;
    let (train, test) = split_train_test(x.ncols(), cfg.train_fraction)?;
    let test_x = x.select_columns(&test);
    let test_l = DVector::from_iterator(test.len(), test.iter().map(|&k| data.labels[k]));
    let mut rows = Vec::new();
    for &kind in &cfg.graphs {
        let train_labels: Vec<f64> = train.iter().map(|&k| data.labels[k]).collect();
        let lg = graph_for_labels(kind, &train_labels)?;
        let cols: Vec<usize> = lg.samples.iter().map(|&k| train[k]).collect();
        let labels: Vec<f64> = cols.iter().map(|&k| data.labels[k]).collect();
        let train_x = x.select_columns(&cols);
        let spec = NodeSpec {
            pca_dims: cfg.pca_dims,
            expansion: cfg.expansion,
            train: crate::solver::TrainOptions::new(cfg.d_max),
        };
        let model = train_node(&train_x, &lg.graph, &spec)?;
        let y_train = model.apply(&train_x)?;
        let y_test = model.apply(&test_x)?;
        let truth = DVector::from_column_slice(&labels);
        let train_chance = chance_rmse(&truth, None)?;
        let test_chance = chance_rmse(&test_l, None)?;
        let classes = cfg.soft_gc_classes.unwrap_or_else(|| default_soft_gc_classes(&labels));
        let v = lg.graph.vertex_weights();
        for &choice in &cfg.estimators {
            for d in cfg.d_min..=cfg.d_max {
                let yt = y_train.rows(0, d).clone_owned();
                let est = fit(choice, &yt, &labels, v, classes)?;
                rows.push(EvalRow {
                    graph: kind.to_string(),
                    estimator: choice.to_string(),
                    d,
                    train_rmse: rmse(&est.predict(&yt)?, &truth)?,
                    test_rmse: rmse(&est.predict(&y_test.rows(0, d).clone_owned())?, &test_l)?,
                    train_chance_rmse: train_chance,
                    test_chance_rmse: test_chance,
                });
            }
        }
    }
    Ok(rows)
}

/// Runs [`evaluate`] and writes `config.json`, `evaluate.csv` and `metrics.csv` into `out`.
pub fn evaluate_to_dir(cfg: &EvaluateConfig, out: impl AsRef<Path>) -> Result<Vec<EvalRow>> {
    let out = out.as_ref();
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("config.json"), serde_json::to_string_pretty(cfg)?)?;
    let rows = evaluate(cfg)?;
    std::fs::write(out.join("evaluate.csv"), eval_rows_to_csv(&rows))?;
    let metrics: Vec<MetricRow> = rows
        .iter()
        .flat_map(|r| {
            [("train_rmse", r.train_rmse), ("test_rmse", r.test_rmse)].map(|(metric, value)| MetricRow {
                estimator: format!("{}/{}", r.graph, r.estimator),
                features_used: r.d,
                metric: metric.into(),
                value,
            })
        })
        .collect();
    std::fs::write(out.join("metrics.csv"), metrics_to_csv(&metrics))?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pipeline_names() {
        for p in Pipeline::ALL {
            assert_eq!(p.name().parse::<Pipeline>().unwrap(), p);
        }
        assert!("fig7".parse::<Pipeline>().is_err());
        assert_eq!("serial:15".parse::<LabelGraphKind>().unwrap(), LabelGraphKind::Serial { groups: 15 });
        assert_eq!(
            "ell:4:nn".parse::<LabelGraphKind>().unwrap(),
            LabelGraphKind::Ell { n_labels: 4, nonnegative: true }
        );
        assert!("ell:x".parse::<LabelGraphKind>().is_err());
    }

    #[test]
    fn label_graphs_are_consistent() {
        let labels: Vec<f64> = (0..24).map(|k| ((k * 7) % 12) as f64).collect();
        for kind in [
            LabelGraphKind::Linear { variant: LinearVariant::SelfLoopExtended },
            LabelGraphKind::Clustered,
            LabelGraphKind::Serial { groups: 5 },
            LabelGraphKind::Ell { n_labels: 3, nonnegative: true },
        ] {
            let lg = graph_for_labels(kind, &labels).unwrap();
            assert!(lg.graph.is_consistent(), "{kind}");
            assert_eq!(lg.graph.n_samples(), lg.samples.len());
        }
        let serial = graph_for_labels(LabelGraphKind::Serial { groups: 5 }, &labels).unwrap();
        assert_eq!(serial.samples.len(), 20);
    }

    #[test]
    fn canonical_correlation_of_rotated_basis() {
        let a = DMatrix::from_fn(2, 10, |r, n| ((r + 1) * n) as f64 + (n * n) as f64 * r as f64);
        let rot = DMatrix::from_row_slice(2, 2, &[0.6, 0.8, -0.8, 0.6]);
        let cc = canonical_correlations(&a, &(rot * &a)).unwrap();
        assert!(cc.iter().all(|&c| (c - 1.0).abs() < 1e-12));
    }

    #[test]
    fn evaluate_sweep_shape() {
        let cfg = EvaluateConfig {
            dataset: SyntheticRegressionSpec { n_values: 20, per_value: 6, dims: 6, ..Default::default() },
            d_min: 2,
            d_max: 4,
            ..Default::default()
        };
        let rows = evaluate(&cfg).unwrap();
        assert_eq!(rows.len(), 3 * 3);
        for r in rows.iter().filter(|r| r.estimator == "linear_regression") {
            assert!(r.train_rmse <= r.train_chance_rmse);
        }
        assert_eq!(evaluate(&cfg).unwrap(), rows);
    }
}
