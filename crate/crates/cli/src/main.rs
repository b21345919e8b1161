use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use gsfa::builders::{
    build_clustered_graph, build_ell_graph, build_linear_graph, build_serial_graph, clustered_graph_from_ids,
    compact_binary_labels, EigenvalueSchedule, EllOptions, LabelSet, LinearVariant, RemainderPolicy,
};
use gsfa::datagen::{
    gen_classification, gen_regression, read_labels, SyntheticClassificationSpec, SyntheticRegressionSpec,
};
use gsfa::experiments::{
    evaluate_to_dir, graph_for_labels, reproduce, EstimatorChoice, EvaluateConfig, LabelGraphKind, Pipeline,
};
use gsfa::graph::io::{read_graph, write_graph};
use gsfa::graph::{TrainingGraph, CONSISTENCY_TOL};
use gsfa::hierarchy::{train_hgsfa, Architecture};
use gsfa::solver::{train_node, DataMatrix, ExpansionSpec, NodeSpec};
use gsfa::spectrum::{monte_carlo_noise_delta, optimal_free_responses, SpectrumOptions};

/// Graph-based slow feature analysis experiments.
#[derive(Parser)]
#[command(name = "gsfa", version)]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a training graph and write it with a consistency report.
    BuildGraph(BuildGraphArgs),
    /// Optimal free responses of a graph file.
    Spectrum(SpectrumArgs),
    /// Train a GSFA node or hierarchical network.
    Train(TrainArgs),
    /// Sweep the number of slow features over graphs and estimators.
    Evaluate(EvaluateArgs),
    /// Run a named reproduction pipeline.
    Reproduce(ReproduceArgs),
    /// Generate a synthetic dataset.
    GenData(GenDataArgs),
}

/// Usage problems detected after argument parsing.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

#[derive(Args, Serialize)]
struct OutArgs {
    /// Output directory; defaults to `$GSFA_OUT/<command>`.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl OutArgs {
    fn dir(&self, command: &str) -> PathBuf {
        self.out.clone().unwrap_or_else(|| {
            let root = std::env::var_os("GSFA_OUT").map(PathBuf::from).unwrap_or_else(|| PathBuf::from("runs"));
            root.join(command)
        })
    }
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum GraphKindArg {
    Linear,
    Clustered,
    Serial,
    Ell,
    Compact,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum VariantArg {
    SelfLoop,
    Endpoint,
}

#[derive(Args, Serialize)]
struct BuildGraphArgs {
    #[arg(long, value_enum)]
    kind: GraphKindArg,
    /// Number of samples (linear, serial without labels).
    #[arg(long)]
    n: Option<usize>,
    /// Number of serial groups.
    #[arg(long)]
    k: Option<usize>,
    /// Labels: a `label` CSV, or a label set JSON for `ell`.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Total number of ELL labels (original plus cosine auxiliaries) for CSV labels.
    #[arg(long, default_value_t = 1)]
    n_labels: usize,
    /// Clustered class sizes, comma separated.
    #[arg(long, value_delimiter = ',')]
    sizes: Vec<usize>,
    /// Number of classes (compact).
    #[arg(long)]
    classes: Option<usize>,
    /// Samples per class (compact).
    #[arg(long)]
    per_class: Option<usize>,
    #[arg(long, value_enum, default_value = "self-loop")]
    variant: VariantArg,
    /// Eliminate negative ELL weights.
    #[arg(long)]
    nonnegative: bool,
    /// Give every ELL label the same eigenvalue.
    #[arg(long)]
    equal_eigenvalues: bool,
    /// Drop surplus samples instead of failing when N is not divisible by K.
    #[arg(long)]
    truncate: bool,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args, Serialize)]
struct SpectrumArgs {
    /// Graph file.
    #[arg(long)]
    graph: PathBuf,
    /// Accept graphs that violate the consistency restriction.
    #[arg(long)]
    allow_inconsistent: bool,
    /// Monte-Carlo trials of the noise Δ estimate (0 disables).
    #[arg(long, default_value_t = 0)]
    noise_trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum ExpansionArg {
    Identity,
    ZeroEight,
    Quadratic,
}

impl ExpansionArg {
    fn spec(self, degree: Option<usize>) -> ExpansionSpec {
        match (self, degree) {
            (_, Some(degree)) => ExpansionSpec::Polynomial { degree },
            (ExpansionArg::Identity, None) => ExpansionSpec::Identity,
            (ExpansionArg::ZeroEight, None) => ExpansionSpec::ZeroEightExpo,
            (ExpansionArg::Quadratic, None) => ExpansionSpec::Quadratic,
        }
    }
}

#[derive(Args, Serialize)]
struct TrainArgs {
    /// Data file (`.csv` with one row per sample, otherwise binary).
    #[arg(long)]
    data: PathBuf,
    /// Label CSV, required with `--label-graph`.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Graph file whose vertices are the data samples.
    #[arg(long, conflicts_with = "label_graph")]
    graph: Option<PathBuf>,
    /// Graph built from the labels: linear, clustered, serial:K, ell:K or ell:K:nn.
    #[arg(long)]
    label_graph: Option<String>,
    /// Number of slow features.
    #[arg(long, default_value_t = 3)]
    out_dims: usize,
    #[arg(long)]
    pca_dims: Option<usize>,
    #[arg(long, value_enum, default_value = "identity")]
    expansion: ExpansionArg,
    /// Polynomial expansion degree (overrides `--expansion`).
    #[arg(long)]
    degree: Option<usize>,
    /// Hierarchical architecture file; replaces the single-node options.
    #[arg(long)]
    architecture: Option<PathBuf>,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args, Serialize)]
struct EvaluateArgs {
    /// Configuration file; flags below are ignored when given.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Graph kinds, e.g. `ell:4`, `serial:15`, `clustered`.
    #[arg(long = "graph", default_values_t = vec!["ell:4".to_string()])]
    graphs: Vec<String>,
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = vec![EstimatorArg::LinearScaling, EstimatorArg::LinearRegression, EstimatorArg::SoftGc])]
    estimators: Vec<EstimatorArg>,
    #[arg(long, default_value_t = 1)]
    d_min: usize,
    #[arg(long, default_value_t = 5)]
    d_max: usize,
    #[arg(long, default_value_t = 60)]
    n_values: usize,
    #[arg(long, default_value_t = 10)]
    per_value: usize,
    #[arg(long, default_value_t = 20)]
    dims: usize,
    #[arg(long, default_value_t = 0.05)]
    noise: f64,
    #[arg(long, default_value_t = 0.8)]
    train_fraction: f64,
    #[arg(long, value_enum, default_value = "identity")]
    expansion: ExpansionArg,
    #[arg(long)]
    soft_gc_classes: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum EstimatorArg {
    LinearScaling,
    LinearRegression,
    SoftGc,
}

impl std::fmt::Display for EstimatorArg {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.to_possible_value().expect("no skipped values").get_name())
    }
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
enum PipelineArg {
    #[value(name = "fig6-spectra")]
    Fig6Spectra,
    #[value(name = "ell-roundtrip")]
    EllRoundtrip,
    #[value(name = "compact-vs-clustered")]
    CompactVsClustered,
}

#[derive(Args, Serialize)]
struct ReproduceArgs {
    #[arg(value_enum)]
    name: PipelineArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args, Serialize)]
struct GenDataArgs {
    #[command(subcommand)]
    kind: GenKind,
}

#[derive(Subcommand, Serialize)]
enum GenKind {
    /// Labels on a grid, embedded by a random map of label powers.
    Regression {
        #[arg(long, default_value_t = 60)]
        n_values: usize,
        #[arg(long, default_value_t = 10)]
        per_value: usize,
        #[arg(long, default_value_t = 20)]
        dims: usize,
        #[arg(long, default_value_t = 2)]
        latent_dim: usize,
        #[arg(long, default_value_t = 0.05)]
        noise: f64,
        #[arg(long)]
        tanh: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write data as CSV instead of binary.
        #[arg(long)]
        csv: bool,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Balanced Gaussian blobs.
    Classification {
        #[arg(long, default_value_t = 8)]
        classes: usize,
        #[arg(long, default_value_t = 20)]
        per_class: usize,
        #[arg(long, default_value_t = 16)]
        dims: usize,
        #[arg(long, default_value_t = 5.0)]
        spread: f64,
        #[arg(long, default_value_t = 0.5)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        csv: bool,
        #[command(flatten)]
        out: OutArgs,
    },
}

fn echo_config(dir: &Path, config: &impl Serialize) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    std::fs::write(dir.join("config.json"), serde_json::to_string_pretty(config)?)?;
    Ok(())
}

fn write_json(path: &Path, value: &impl Serialize) -> anyhow::Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)?).with_context(|| format!("writing {}", path.display()))
}

fn require<T: Copy>(value: Option<T>, flag: &str, kind: &str) -> anyhow::Result<T> {
    value.ok_or_else(|| usage(format!("--{flag} is required for --kind {kind}")))
}

fn read_label_file(path: &Path) -> anyhow::Result<Vec<f64>> {
    read_labels(path).with_context(|| format!("reading labels {}", path.display()))
}

fn build_graph(args: &BuildGraphArgs) -> anyhow::Result<TrainingGraph> {
    let labels = args.labels.as_deref();
    let graph = match args.kind {
        GraphKindArg::Linear => {
            let variant = match args.variant {
                VariantArg::SelfLoop => LinearVariant::SelfLoopExtended,
                VariantArg::Endpoint => LinearVariant::EndpointHalvedVertexWeights,
            };
            build_linear_graph(require(args.n, "n", "linear")?, variant)?
        }
        GraphKindArg::Clustered => match labels {
            Some(p) => {
                let ids = read_label_file(p)?
                    .into_iter()
                    .map(|l| {
                        if l >= 0.0 && l.fract() == 0.0 {
                            Ok(l as usize)
                        } else {
                            Err(usage("class ids must be non-negative integers"))
                        }
                    })
                    .collect::<anyhow::Result<Vec<usize>>>()?;
                clustered_graph_from_ids(&ids)?
            }
            None if !args.sizes.is_empty() => build_clustered_graph(&args.sizes)?,
            None => return Err(usage("--sizes or --labels is required for --kind clustered")),
        },
        GraphKindArg::Serial => {
            let k = require(args.k, "k", "serial")?;
            let labels = match labels {
                Some(p) => read_label_file(p)?,
                None => (0..require(args.n, "n", "serial")?).map(|i| i as f64).collect(),
            };
            let policy = if args.truncate { RemainderPolicy::Truncate } else { RemainderPolicy::Strict };
            build_serial_graph(&labels, k, policy)?.graph
        }
        GraphKindArg::Ell => {
            let p = labels.ok_or_else(|| usage("--labels is required for --kind ell"))?;
            let is_csv = p.extension().and_then(|e| e.to_str()) == Some("csv");
            let ls = if is_csv {
                let l1 = read_label_file(p)?;
                gsfa::experiments::ell_label_set(
                    &l1,
                    args.n_labels,
                    &gsfa::nalgebra::DVector::from_element(l1.len(), 1.0),
                )?
            } else {
                LabelSet::read(p).with_context(|| format!("reading label set {}", p.display()))?
            };
            build_ell_graph(&ls, &ell_options(args))?
        }
        GraphKindArg::Compact => {
            let c = require(args.classes, "classes", "compact")?;
            let per_class = require(args.per_class, "per-class", "compact")?;
            let l = if args.n_labels > 1 { args.n_labels } else { c - 1 };
            let ls = compact_binary_labels(c, l)?.expand_consecutive(per_class)?;
            build_ell_graph(&ls, &ell_options(args))?
        }
    };
    Ok(graph)
}

fn ell_options(args: &BuildGraphArgs) -> EllOptions {
    EllOptions {
        nonnegative: args.nonnegative,
        r_total: None,
        schedule: if args.equal_eigenvalues { EigenvalueSchedule::Equal } else { EigenvalueSchedule::FromLabels },
    }
}

#[derive(Serialize)]
struct GraphReport {
    n: usize,
    q: f64,
    r: f64,
    consistent: bool,
    max_residual: f64,
    min_edge_weight: f64,
}

fn cmd_build_graph(args: &BuildGraphArgs) -> anyhow::Result<()> {
    let dir = args.out.dir("build-graph");
    echo_config(&dir, args)?;
    let g = build_graph(args)?;
    write_graph(dir.join("graph.json"), &g)?;
    let c = g.check_consistency(CONSISTENCY_TOL)?;
    let report = GraphReport {
        n: g.n_samples(),
        q: g.q_sum(),
        r: g.r_sum(),
        consistent: c.consistent,
        max_residual: c.max_residual,
        min_edge_weight: g.min_edge_weight(),
    };
    write_json(&dir.join("consistency.json"), &report)?;
    println!(
        "{}: N = {}, consistent = {}, min weight = {}",
        dir.join("graph.json").display(),
        report.n,
        report.consistent,
        report.min_edge_weight
    );
    Ok(())
}

fn cmd_spectrum(args: &SpectrumArgs) -> anyhow::Result<()> {
    let dir = args.out.dir("spectrum");
    echo_config(&dir, args)?;
    let g = read_graph(&args.graph).with_context(|| format!("reading graph {}", args.graph.display()))?;
    let opts = SpectrumOptions { require_consistent: !args.allow_inconsistent, ..Default::default() };
    let s = optimal_free_responses(&g, &opts)?;
    s.write_csv(dir.join("spectrum.csv"))?;
    s.write_responses_csv(dir.join("responses.csv"))?;
    let five = s.slowest(5);
    let header: Vec<String> = (1..=five.ncols()).map(|j| format!("y{j}")).collect();
    gsfa::matrix_io::write_csv(dir.join("slowest5.csv"), &header, &five)?;
    let count = s.count_delta_below_two();
    let mut summary = format!("delta_below_2,{count}\n");
    if args.noise_trials > 0 {
        let mc = monte_carlo_noise_delta(&g, args.noise_trials, args.seed)?;
        summary.push_str(&format!("noise_delta_mean,{}\nnoise_delta_std_error,{}\n", mc.mean, mc.std_error));
    }
    std::fs::write(dir.join("summary.csv"), &summary)?;
    println!("delta < 2: {count}");
    Ok(())
}

#[derive(Serialize)]
struct TrainReport {
    n_samples: usize,
    in_dims: usize,
    out_dims: usize,
    /// Δ of each output feature on the training graph.
    deltas: Vec<f64>,
    graph: gsfa::graph::GraphFingerprint,
}

fn cmd_train(args: &TrainArgs) -> anyhow::Result<()> {
    let dir = args.out.dir("train");
    echo_config(&dir, args)?;
    let data = DataMatrix::read(&args.data).with_context(|| format!("reading data {}", args.data.display()))?;
    let (g, x) = match (&args.graph, &args.label_graph) {
        (Some(path), _) => {
            let g = read_graph(path).with_context(|| format!("reading graph {}", path.display()))?;
            (g, data.values.clone())
        }
        (None, Some(kind)) => {
            let kind: LabelGraphKind = kind.parse().map_err(|e: gsfa::GsfaError| usage(e.to_string()))?;
            let path = args.labels.as_deref().ok_or_else(|| usage("--labels is required with --label-graph"))?;
            let labels = read_label_file(path)?;
            if labels.len() != data.n_samples() {
                bail!("{} labels for {} samples", labels.len(), data.n_samples());
            }
            let lg = graph_for_labels(kind, &labels)?;
            (lg.graph, data.values.select_columns(&lg.samples))
        }
        (None, None) => return Err(usage("one of --graph or --label-graph is required")),
    };
    if g.n_samples() != x.ncols() {
        bail!("graph has {} vertices but the data has {} samples", g.n_samples(), x.ncols());
    }
    let y = match &args.architecture {
        Some(path) => {
            let arch = Architecture::read(path).with_context(|| format!("reading architecture {}", path.display()))?;
            arch.write(dir.join("architecture.json"))?;
            let net = train_hgsfa(&x, &g, &arch.layers, arch.input_shape)?;
            std::fs::write(dir.join("architecture_table.csv"), net.report.to_table())?;
            net.save(dir.join("network"))?;
            net.extract(&x)?
        }
        None => {
            let mut spec = NodeSpec::new(args.out_dims);
            spec.pca_dims = args.pca_dims;
            spec.expansion = args.expansion.spec(args.degree);
            let model = train_node(&x, &g, &spec)?;
            model.write(dir.join("model.json"))?;
            model.apply(&x)?
        }
    };
    let deltas = (0..y.nrows()).map(|j| g.weighted_delta(&y.row(j).transpose())).collect::<gsfa::Result<Vec<f64>>>()?;
    let report =
        TrainReport { n_samples: x.ncols(), in_dims: x.nrows(), out_dims: y.nrows(), deltas, graph: g.fingerprint() };
    write_json(&dir.join("report.json"), &report)?;
    for (j, d) in report.deltas.iter().enumerate() {
        println!("feature {}: delta = {d}", j + 1);
    }
    Ok(())
}

fn cmd_evaluate(args: &EvaluateArgs) -> anyhow::Result<()> {
    let dir = args.out.dir("evaluate");
    let cfg = match &args.config {
        Some(path) => {
            serde_json::from_str(&std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?)
                .map_err(|e| usage(format!("invalid evaluate config: {e}")))?
        }
        None => EvaluateConfig {
            dataset: SyntheticRegressionSpec {
                n_values: args.n_values,
                per_value: args.per_value,
                dims: args.dims,
                noise: args.noise,
                seed: args.seed,
                ..Default::default()
            },
            train_fraction: args.train_fraction,
            graphs: args
                .graphs
                .iter()
                .map(|s| s.parse::<LabelGraphKind>().map_err(|e| usage(e.to_string())))
                .collect::<anyhow::Result<_>>()?,
            expansion: args.expansion.spec(None),
            pca_dims: None,
            d_min: args.d_min,
            d_max: args.d_max,
            estimators: args
                .estimators
                .iter()
                .map(|e| match e {
                    EstimatorArg::LinearScaling => EstimatorChoice::LinearScaling,
                    EstimatorArg::LinearRegression => EstimatorChoice::LinearRegression,
                    EstimatorArg::SoftGc => EstimatorChoice::SoftGc,
                })
                .collect(),
            soft_gc_classes: args.soft_gc_classes,
        },
    };
    let rows = evaluate_to_dir(&cfg, &dir)?;
    println!("{} rows written to {}", rows.len(), dir.join("evaluate.csv").display());
    Ok(())
}

fn cmd_reproduce(args: &ReproduceArgs) -> anyhow::Result<bool> {
    let pipeline = match args.name {
        PipelineArg::Fig6Spectra => Pipeline::Fig6Spectra,
        PipelineArg::EllRoundtrip => Pipeline::EllRoundtrip,
        PipelineArg::CompactVsClustered => Pipeline::CompactVsClustered,
    };
    let dir = args.out.dir(pipeline.name());
    let summary = reproduce(pipeline, &dir, args.seed)?;
    for c in &summary.checks {
        println!("{} {} = {} ({})", if c.passed { "PASS" } else { "FAIL" }, c.name, c.value, c.threshold);
    }
    Ok(summary.passed())
}

fn cmd_gen_data(args: &GenDataArgs) -> anyhow::Result<()> {
    let (ds, out, csv) = match &args.kind {
        GenKind::Regression { n_values, per_value, dims, latent_dim, noise, tanh, seed, csv, out } => {
            let spec = SyntheticRegressionSpec {
                n_values: *n_values,
                per_value: *per_value,
                dims: *dims,
                latent_dim: *latent_dim,
                tanh: *tanh,
                noise: *noise,
                seed: *seed,
                ..Default::default()
            };
            (gen_regression(&spec)?, out.dir("gen-data"), *csv)
        }
        GenKind::Classification { classes, per_class, dims, spread, noise, seed, csv, out } => {
            let spec = SyntheticClassificationSpec {
                n_classes: *classes,
                per_class: *per_class,
                dims: *dims,
                spread: *spread,
                noise: *noise,
                seed: *seed,
            };
            (gen_classification(&spec)?, out.dir("gen-data"), *csv)
        }
    };
    echo_config(&out, args)?;
    ds.write(&out, csv)?;
    println!("{} samples × {} dimensions written to {}", ds.data.n_samples(), ds.data.dims(), out.display());
    Ok(())
}

fn run(cli: &Cli) -> anyhow::Result<bool> {
    match &cli.command {
        Command::BuildGraph(a) => cmd_build_graph(a).map(|_| true),
        Command::Spectrum(a) => cmd_spectrum(a).map(|_| true),
        Command::Train(a) => cmd_train(a).map(|_| true),
        Command::Evaluate(a) => cmd_evaluate(a).map(|_| true),
        Command::Reproduce(a) => cmd_reproduce(a),
        Command::GenData(a) => cmd_gen_data(a).map(|_| true),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) if e.is::<Usage>() => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
