//! Acceptance suite: one line per criterion, non-zero exit if any fails.

use std::time::Instant;

use gsfa::builders::{
    build_clustered_graph, build_ell_graph, build_linear_graph, build_serial_graph, clustered_graph_from_ids,
    compact_binary_labels, decorrelate_labels, eliminate_negative_weights, normalize_labels, EigenvalueSchedule,
    EllOptions, LinearVariant, RemainderPolicy,
};
use gsfa::datagen::{gen_classification, gen_regression, SyntheticClassificationSpec, SyntheticRegressionSpec};
use gsfa::estimators::{chance_rmse, fit_linear_scaling, rmse};
use gsfa::experiments::{
    ell_label_set, graph_for_labels, reproduce, same_subspace_correlations, LabelGraphKind, Pipeline,
};
use gsfa::graph::TrainingGraph;
use gsfa::nalgebra::{DMatrix, DVector};
use gsfa::solver::{derivative_covariance, train_gsfa, CovariancePath, TrainOptions};
use gsfa::spectrum::{expected_noise_delta, monte_carlo_noise_delta, optimal_free_responses, SpectrumOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

type Outcome = (bool, String);
type Criterion = (&'static str, fn() -> Outcome);

fn spectrum(g: &TrainingGraph) -> gsfa::spectrum::FreeResponseSpectrum {
    optimal_free_responses(g, &SpectrumOptions::default()).expect("spectrum")
}

/// Δ < 2 count by direct inspection of the feasible Δ values.
fn count_below_two(g: &TrainingGraph) -> usize {
    let s = spectrum(g);
    s.feasible_indices().into_iter().filter(|&j| s.deltas[j] < 2.0 - 1e-9).count()
}

fn normal(rng: &mut ChaCha20Rng) -> f64 {
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

fn ramp(n: usize) -> Vec<f64> {
    (0..n).map(|i| i as f64).collect()
}

fn ell4(n: usize) -> TrainingGraph {
    let ls = ell_label_set(&ramp(n), 4, &DVector::from_element(n, 1.0)).unwrap();
    build_ell_graph(&ls, &EllOptions::default()).unwrap()
}

fn c1_reference_counts() -> Outcome {
    let start = Instant::now();
    let reorder = count_below_two(&build_linear_graph(30, LinearVariant::SelfLoopExtended).unwrap());
    let serial = count_below_two(&build_serial_graph(&ramp(30), 15, RemainderPolicy::Strict).unwrap().graph);
    let ell = count_below_two(&ell4(30));
    let secs = start.elapsed().as_secs_f64();
    let ok = (reorder, serial, ell) == (14, 6, 4) && secs < 5.0;
    (ok, format!("reordering {reorder} (14), serial {serial} (6), ELL-4 {ell} (4), {secs:.2} s (< 5 s)"))
}

fn c2_count_formulas() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for n in [10, 20, 30] {
        let got = count_below_two(&build_linear_graph(n, LinearVariant::SelfLoopExtended).unwrap());
        let want = (n - 1) / 2;
        ok &= got == want;
        parts.push(format!("N={n}: {got}/{want}"));
    }
    for k in [5, 10, 15] {
        let got = count_below_two(&build_serial_graph(&ramp(2 * k), k, RemainderPolicy::Strict).unwrap().graph);
        let want = (k - 1) / 2;
        ok &= got == want;
        parts.push(format!("K={k}: {got}/{want}"));
    }
    (ok, format!("got/expected {}", parts.join(", ")))
}

fn c3_ell_round_trip() -> Outcome {
    let mut rng = ChaCha20Rng::seed_from_u64(2024);
    let (mut resp, mut delta, mut min_w, mut r_change, mut map_err) =
        (0.0_f64, 0.0_f64, f64::INFINITY, 0.0_f64, 0.0_f64);
    let mut order_ok = true;
    for _ in 0..20 {
        let n = rng.random_range(8..=64);
        let l = rng.random_range(1..=5);
        let v = DVector::from_fn(n, |_, _| rng.random_range(0.5..2.0));
        let raw = DMatrix::from_fn(l, n, |_, _| normal(&mut rng));
        let mut eig: Vec<f64> = (0..l).map(|_| rng.random_range(0.05..0.95)).collect();
        eig.sort_by(|a, b| b.total_cmp(a));
        for j in 1..l {
            if eig[j - 1] - eig[j] < 0.01 {
                eig[j] = eig[j - 1] - 0.01;
            }
        }
        let ls =
            decorrelate_labels(&normalize_labels(&raw, &v).unwrap()).unwrap().with_eigenvalues(eig.clone()).unwrap();
        let g = build_ell_graph(&ls, &EllOptions { schedule: EigenvalueSchedule::FromLabels, ..Default::default() })
            .unwrap();
        let (q, r) = (g.q_sum(), g.r_sum());
        let s = spectrum(&g);
        let f = s.feasible_indices();
        let elim = eliminate_negative_weights(&g).unwrap();
        let s2 = spectrum(&elim.graph);
        let f2 = s2.feasible_indices();
        for j in 0..l {
            let label = ls.label(j);
            let y = s.responses.column(f[j]);
            resp = resp.max((y - &label).amax().min((y + &label).amax()));
            let want = 2.0 - 2.0 * q * eig[j] / r;
            delta = delta.max((s.deltas[f[j]] - want).abs());
            delta = delta.max((g.weighted_delta(&label).unwrap() - want).abs());
            let y2 = s2.responses.column(f2[j]);
            order_ok &= (y2 - &label).amax().min((y2 + &label).amax()) <= 1e-8;
            let mapped = (want + 2.0 * elim.c * q * q / r) / (1.0 + elim.c * q * q / r);
            map_err = map_err.max((s2.deltas[f2[j]] - mapped).abs());
            map_err = map_err.max((elim.graph.weighted_delta(&label).unwrap() - mapped).abs());
        }
        min_w = min_w.min(elim.graph.min_edge_weight());
        r_change = r_change.max((elim.graph.r_sum() - r).abs() / r);
    }
    let ok = resp <= 1e-8 && delta <= 1e-10 && min_w >= -1e-12 && r_change <= 1e-9 && order_ok && map_err <= 1e-9;
    (
        ok,
        format!(
            "response err {resp:.1e} (1e-8), Δ err {delta:.1e} (1e-10), min γ' {min_w:.1e} (-1e-12), |R'-R|/R {r_change:.1e} (1e-9), order kept {order_ok}, Δ map err {map_err:.1e} (1e-9)"
        ),
    )
}

fn c4_noise_delta() -> Outcome {
    let clustered = build_clustered_graph(&[5; 6]).unwrap();
    let serial = build_serial_graph(&ramp(30), 15, RemainderPolicy::Strict).unwrap().graph;
    let ls = ell_label_set(&ramp(30), 4, &DVector::from_element(30, 1.0)).unwrap();
    let ell_nn =
        build_ell_graph(&ls, &EllOptions { nonnegative: true, ..Default::default() }).unwrap().remove_self_loops();
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, g) in [("clustered", clustered), ("serial", serial), ("ELL-nn", ell_nn)] {
        let exact = expected_noise_delta(&g).unwrap();
        let mc = monte_carlo_noise_delta(&g, 10_000, 11).unwrap();
        ok &= exact == 2.0 && (mc.mean - 2.0).abs() <= 0.05;
        parts.push(format!("{name}: exact {exact}, MC {:.4}", mc.mean));
    }
    (ok, format!("{} (2 ± 0.05)", parts.join(", ")))
}

/// Largest deviation of the first `j` one-hot GSFA features from the free
/// responses; tied responses are compared by projection onto their block.
fn one_hot_agreement(g: &TrainingGraph, j: usize) -> (f64, f64) {
    let n = g.n_samples();
    let s = spectrum(g);
    let f = s.feasible_indices();
    let x = DMatrix::<f64>::identity(n, n);
    let model = train_gsfa(&x, g, &TrainOptions::new(j)).unwrap();
    let y = gsfa::solver::extract_features(&model, &x).unwrap();
    let v = g.vertex_weights();
    let q = g.q_sum();
    let (mut d_err, mut y_err) = (0.0_f64, 0.0_f64);
    for (k, &fk) in f.iter().enumerate().take(j) {
        d_err = d_err.max((model.deltas[k] - s.deltas[fk]).abs());
        let yk = y.row(k).transpose();
        let block: Vec<usize> = match s.block_of(fk) {
            Some(b) => b.filter(|i| s.feasible[*i]).collect(),
            None => vec![fk],
        };
        let mut proj = DVector::zeros(n);
        for &b in &block {
            let r = s.responses.column(b);
            let c = r.component_mul(v).dot(&yk) / q;
            proj += r * c;
        }
        let err = if block.len() == 1 { (&yk - &proj).amax().min((&yk + &proj).amax()) } else { (&yk - &proj).amax() };
        y_err = y_err.max(err);
    }
    (d_err, y_err)
}

fn c5_solver_oracle() -> Outcome {
    let labels: Vec<f64> = (0..24).map(|k| ((k * 5) % 24) as f64).collect();
    let ell = ell_label_set(&labels, 3, &DVector::from_element(24, 1.0)).unwrap();
    let compact = compact_binary_labels(8, 7).unwrap().expand_consecutive(4).unwrap();
    let graphs: Vec<(&str, TrainingGraph, usize)> = vec![
        ("linear", build_linear_graph(40, LinearVariant::SelfLoopExtended).unwrap(), 5),
        ("linear-endpoint", build_linear_graph(33, LinearVariant::EndpointHalvedVertexWeights).unwrap(), 5),
        ("clustered", build_clustered_graph(&[4, 6, 5, 3]).unwrap(), 3),
        ("serial", build_serial_graph(&labels, 8, RemainderPolicy::Strict).unwrap().graph, 3),
        ("ell", build_ell_graph(&ell, &EllOptions::default()).unwrap(), 3),
        ("ell-nn", build_ell_graph(&ell, &EllOptions { nonnegative: true, ..Default::default() }).unwrap(), 3),
        ("compact", build_ell_graph(&compact, &EllOptions::default()).unwrap(), 7),
    ];
    let (mut d_max, mut y_max) = (0.0_f64, 0.0_f64);
    for (_, g, j) in &graphs {
        let (d, y) = one_hot_agreement(g, *j);
        d_max = d_max.max(d);
        y_max = y_max.max(y);
    }
    (
        d_max <= 1e-6 && y_max <= 1e-6,
        format!("{} graphs, max Δ err {d_max:.1e}, max feature err {y_max:.1e} (1e-6)", graphs.len()),
    )
}

fn c6_clustered_structure() -> Outcome {
    let mut rng = ChaCha20Rng::seed_from_u64(6);
    let mut ok = true;
    let (mut worst_delta, mut worst_spread) = (0.0_f64, 0.0_f64);
    for c in 2..=8 {
        let sizes: Vec<usize> = (0..c).map(|_| rng.random_range(2..=6)).collect();
        let g = build_clustered_graph(&sizes).unwrap();
        let s = spectrum(&g);
        let f = s.feasible_indices();
        let zero: Vec<usize> = f.iter().copied().filter(|&j| s.deltas[j] <= 1e-10).collect();
        ok &= zero.len() == c - 1;
        for &j in &zero {
            worst_delta = worst_delta.max(s.deltas[j]);
            let mut start = 0;
            for &m in &sizes {
                let block = s.responses.column(j).rows(start, m).clone_owned();
                worst_spread = worst_spread.max(block.max() - block.min());
                start += m;
            }
        }
    }
    ok &= worst_spread <= 1e-8;
    (ok, format!("C=2..8: C-1 responses with Δ <= 1e-10 each; max Δ {worst_delta:.1e}, within-class spread {worst_spread:.1e} (1e-8)"))
}

fn c7_compact_equivalence() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for c in [2, 4, 8] {
        let per = 3;
        let ls = compact_binary_labels(c, c - 1).unwrap().expand_consecutive(per).unwrap();
        let lam = 1.0 / (c - 1) as f64;
        let q = ls.vertex_weights.sum();
        let opts = EllOptions { nonnegative: false, r_total: Some(q * lam), schedule: EigenvalueSchedule::Equal };
        let ell = build_ell_graph(&ls, &opts).unwrap().remove_self_loops();
        let clustered = build_clustered_graph(&vec![per; c]).unwrap();
        let a = ell.gamma_dense() / ell.r_sum();
        let b = clustered.gamma_dense() / clustered.r_sum();
        let diff = (&a - &b).amax() * (c * per) as f64;
        let mut inter = 0.0_f64;
        for i in 0..c * per {
            for k in 0..c * per {
                if i / per != k / per {
                    inter = inter.max(a[(i, k)].abs() * (c * per) as f64);
                }
            }
        }
        ok &= diff <= 1e-10 && inter <= 1e-12;
        parts.push(format!("C={c}: diff {diff:.1e}, inter {inter:.1e}"));
    }
    (ok, format!("{} (1e-10, 1e-12)", parts.join(", ")))
}

fn canonical(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let qa = a.clone().qr().q();
    let qb = b.clone().qr().q();
    (qa.transpose() * qb).singular_values().min()
}

fn c8_same_subspace() -> Outcome {
    let data =
        gen_classification(&SyntheticClassificationSpec { n_classes: 8, per_class: 6, seed: 8, ..Default::default() })
            .unwrap();
    let ids = data.class_ids.unwrap();
    let compact = compact_binary_labels(8, 7).unwrap().expand(&ids).unwrap();
    let ell = build_ell_graph(&compact, &EllOptions::default()).unwrap();
    let clustered = clustered_graph_from_ids(&ids).unwrap();
    let responses = canonical(&spectrum(&ell).slowest(7), &spectrum(&clustered).slowest(7));
    let features = same_subspace_correlations(8, 6, 8).unwrap().into_iter().fold(1.0, f64::min);
    let ok = responses >= 1.0 - 1e-8 && features >= 1.0 - 1e-8;
    (
        ok,
        format!(
            "min canonical correlation: responses {responses:.12}, one-hot GSFA features {features:.12} (>= 1-1e-8)"
        ),
    )
}

fn c9_covariance_paths() -> Outcome {
    let mut rng = ChaCha20Rng::seed_from_u64(9);
    let mut worst = 0.0_f64;
    for trial in 0..6 {
        let n = rng.random_range(20..=200);
        let i = rng.random_range(1..=16);
        let x = DMatrix::from_fn(i, n, |_, _| normal(&mut rng) * 3.0 + 1.0);
        let g = if trial % 2 == 0 {
            let labels: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            let k = rng.random_range(2..=10);
            build_serial_graph(&labels, k, RemainderPolicy::Truncate).unwrap().graph
        } else {
            let ids: Vec<usize> = (0..n).map(|k| k % rng.random_range(2..=6).min(n / 2)).collect();
            clustered_graph_from_ids(&ids).unwrap()
        };
        let x = x.columns(0, g.n_samples()).clone_owned();
        let pair = derivative_covariance(&x, &g, CovariancePath::Pairwise).unwrap();
        let scale = pair.amax();
        for path in [CovariancePath::ConsistentForm, CovariancePath::Structured] {
            let other = derivative_covariance(&x, &g, path).unwrap();
            worst = worst.max((&other - &pair).amax() / scale);
        }
    }
    (worst <= 1e-9, format!("6 random serial/clustered cases, max relative diff {worst:.1e} (1e-9)"))
}

fn c10_end_to_end() -> Outcome {
    let start = Instant::now();
    let ds = gen_regression(&SyntheticRegressionSpec { n_values: 60, per_value: 10, ..Default::default() }).unwrap();
    let x = &ds.data.values;
    let n_train = 480;
    let train: Vec<usize> = (0..n_train).collect();
    let test: Vec<usize> = (n_train..600).collect();
    let train_labels: Vec<f64> = train.iter().map(|&k| ds.labels[k]).collect();
    let lg = graph_for_labels(LabelGraphKind::Ell { n_labels: 4, nonnegative: false }, &train_labels).unwrap();
    let model = train_gsfa(&x.select_columns(&train), &lg.graph, &TrainOptions::new(4)).unwrap();
    let y_train = gsfa::solver::extract_features(&model, &x.select_columns(&train)).unwrap();
    let y_test = gsfa::solver::extract_features(&model, &x.select_columns(&test)).unwrap();
    let est = fit_linear_scaling(&y_train.row(0).transpose(), &train_labels, lg.graph.vertex_weights()).unwrap();
    let truth = DVector::from_iterator(test.len(), test.iter().map(|&k| ds.labels[k]));
    let err = rmse(&est.predict(&y_test).unwrap(), &truth).unwrap();
    let chance = chance_rmse(&truth, None).unwrap();
    let secs = start.elapsed().as_secs_f64();
    (
        err <= 0.25 * chance && secs < 30.0,
        format!("test RMSE {err:.4} vs 0.25 x chance {:.4}, {secs:.2} s (< 30 s)", 0.25 * chance),
    )
}

fn dir_bytes(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

fn c11_determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let mut ok = true;
    let mut files = 0;
    for p in Pipeline::ALL {
        let a = tmp.path().join(format!("{}-a", p.name()));
        let b = tmp.path().join(format!("{}-b", p.name()));
        reproduce(p, &a, 5).unwrap();
        reproduce(p, &b, 5).unwrap();
        let (fa, fb) = (dir_bytes(&a), dir_bytes(&b));
        files += fa.len();
        ok &= fa == fb;
    }
    (ok, format!("3 bundles, {files} files compared byte for byte"))
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("reference Δ<2 counts", c1_reference_counts),
        ("count formulas", c2_count_formulas),
        ("ELL round trip", c3_ell_round_trip),
        ("noise-Δ theorem", c4_noise_delta),
        ("solver-oracle equivalence", c5_solver_oracle),
        ("clustered FDA-step structure", c6_clustered_structure),
        ("clustered = compact+(C-1)", c7_compact_equivalence),
        ("same subspace", c8_same_subspace),
        ("derivative-covariance paths", c9_covariance_paths),
        ("end-to-end regression", c10_end_to_end),
        ("determinism", c11_determinism),
    ];
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let (ok, detail) = run();
        if !ok {
            failed += 1;
        }
        println!("criterion {:>2} {} {name}: {detail}", k + 1, if ok { "PASS" } else { "FAIL" });
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
