//! Optimal free responses: the eigenvectors of `M = Diag(v^{-1/2}) Γ Diag(v^{-1/2})`
//! rescaled to features, their Δ values and the noise-Δ diagnostic.

use std::ops::Range;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{GsfaError, Result};
use crate::graph::{TrainingGraph, CONSISTENCY_TOL};
use crate::linalg::{self, first_entry_negative};
use crate::{matrix_io, parallel, rng};

pub const DEFAULT_DENSE_CAP: usize = 4096;

/// Relative eigenvalue gap below which neighbouring eigenpairs form one block.
pub const TIE_TOL: f64 = 1e-9;

/// Free responses with `Δ < 2 − DELTA2_MARGIN` count as slower than noise.
pub const DELTA2_MARGIN: f64 = 1e-9;

const U0_COSINE: f64 = 1.0 - 1e-6;

/// Polarity convention for responses and features.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SignRule {
    /// The first entry of non-negligible magnitude is negative.
    #[default]
    FirstSample,
    /// The first sample carrying the minimal label is negative.
    MinLabel { labels: Vec<f64> },
}

impl SignRule {
    pub fn apply(&self, y: &mut DVector<f64>) {
        match self {
            SignRule::FirstSample => first_entry_negative(y),
            SignRule::MinLabel { labels } => match linalg::first_min_index(labels) {
                Some(i) if y[i].abs() > 1e-12 * y.amax() => {
                    if y[i] > 0.0 {
                        y.neg_mut();
                    }
                }
                _ => first_entry_negative(y),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumOptions {
    pub dense_cap: usize,
    /// Reject graphs that fail the consistency test.
    pub require_consistent: bool,
    pub sign_rule: SignRule,
}

impl Default for SpectrumOptions {
    fn default() -> Self {
        SpectrumOptions { dense_cap: DEFAULT_DENSE_CAP, require_consistent: true, sign_rule: SignRule::FirstSample }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FreeResponseSpectrum {
    /// Eigenvalues of `M`, descending.
    pub eigenvalues: DVector<f64>,
    /// `Δⱼ = 2 − (2Q/R) λⱼ`.
    pub deltas: DVector<f64>,
    /// `N×N`, column `j` is `yⱼ = Q^{1/2} Diag(v^{-1/2}) uⱼ`.
    pub responses: DMatrix<f64>,
    /// `false` for the constant pseudo-response.
    pub feasible: Vec<bool>,
    /// Index ranges of eigenvalue groups equal within [`TIE_TOL`]; length ≥ 2 only.
    pub degenerate_blocks: Vec<Range<usize>>,
    pub q: f64,
    pub r: f64,
}

impl FreeResponseSpectrum {
    pub fn n(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn feasible_indices(&self) -> Vec<usize> {
        (0..self.n()).filter(|&j| self.feasible[j]).collect()
    }

    /// The `k` slowest feasible responses as columns.
    pub fn slowest(&self, k: usize) -> DMatrix<f64> {
        let idx: Vec<usize> = self.feasible_indices().into_iter().take(k).collect();
        self.responses.select_columns(&idx)
    }

    pub fn slowest_deltas(&self, k: usize) -> Vec<f64> {
        self.feasible_indices().into_iter().take(k).map(|j| self.deltas[j]).collect()
    }

    /// Number of feasible responses with `Δ < 2` (strictly, by [`DELTA2_MARGIN`]).
    pub fn count_delta_below_two(&self) -> usize {
        self.feasible_indices().into_iter().filter(|&j| self.deltas[j] < 2.0 - DELTA2_MARGIN).count()
    }

    /// Degenerate block containing index `j`, if any.
    pub fn block_of(&self, j: usize) -> Option<Range<usize>> {
        self.degenerate_blocks.iter().find(|b| b.contains(&j)).cloned()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("j,lambda,delta,feasible\n");
        for j in 0..self.n() {
            out.push_str(&format!("{j},{},{},{}\n", self.eigenvalues[j], self.deltas[j], self.feasible[j]));
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    /// Response matrix as CSV: one row per sample, columns `y0 … y{N−1}`.
    pub fn write_responses_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let header: Vec<String> = (0..self.n()).map(|j| format!("y{j}")).collect();
        matrix_io::write_csv(path, &header, &self.responses)
    }
}

/// `M = Diag(v^{-1/2}) Γ Diag(v^{-1/2})`.
pub fn build_m_matrix(g: &TrainingGraph) -> Result<DMatrix<f64>> {
    let v = g.vertex_weights();
    if v.iter().any(|&w| !(w > 0.0)) {
        return Err(GsfaError::Contract("vertex weights must be positive".into()));
    }
    let s = v.map(|w| w.sqrt().recip());
    let gamma = g.gamma_dense();
    let n = g.n_samples();
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for k in i..n {
            let x = gamma[(i, k)] * s[i] * s[k];
            m[(i, k)] = x;
            m[(k, i)] = x;
        }
    }
    Ok(m)
}

fn tie_blocks(values: &DVector<f64>) -> Vec<Range<usize>> {
    let scale = values.amax().max(f64::MIN_POSITIVE);
    let mut blocks = Vec::new();
    let mut start = 0;
    for j in 1..=values.len() {
        if j == values.len() || (values[j - 1] - values[j]).abs() > TIE_TOL * scale {
            if j - start > 1 {
                blocks.push(start..j);
            }
            start = j;
        }
    }
    blocks
}

/// Makes `target` the first basis vector of the block by Gram-Schmidt.
fn rotate_block(vectors: &mut DMatrix<f64>, block: Range<usize>, target: &DVector<f64>) {
    let mut basis: Vec<DVector<f64>> = vec![target.clone()];
    for j in block.clone() {
        let mut w = vectors.column(j).clone_owned();
        for b in &basis {
            let p = b.dot(&w);
            w -= b * p;
        }
        let norm = w.norm();
        if norm > 1e-6 && basis.len() < block.len() {
            basis.push(w / norm);
        }
    }
    for (k, j) in block.enumerate() {
        vectors.set_column(j, &basis[k]);
    }
}

/// Full spectrum of `M` with responses ordered by descending eigenvalue.
pub fn optimal_free_responses(g: &TrainingGraph, opts: &SpectrumOptions) -> Result<FreeResponseSpectrum> {
    let n = g.n_samples();
    if n > opts.dense_cap {
        return Err(GsfaError::Parameter(format!("dense spectrum limited to N <= {}, got {n}", opts.dense_cap)));
    }
    let report = g.check_consistency(CONSISTENCY_TOL)?;
    if !report.consistent {
        if opts.require_consistent {
            return Err(GsfaError::Inconsistent { residual: report.max_residual });
        }
        log::warn!("spectrum of an inconsistent graph (residual {:e})", report.max_residual);
    }
    let m = build_m_matrix(g)?;
    let (values, mut vectors) = linalg::sym_eigen_desc(&m);
    let blocks = tie_blocks(&values);
    let (q, r) = (g.q_sum(), g.r_sum());
    let v = g.vertex_weights();
    let u0 = v.map(|w| (w / q).sqrt());

    let mut pseudo = None;
    let cosines: Vec<f64> = (0..n).map(|j| vectors.column(j).dot(&u0).abs()).collect();
    if let Some(j) = (0..n).find(|&j| cosines[j] > U0_COSINE) {
        pseudo = Some(j);
    } else {
        for b in &blocks {
            let proj: f64 = b.clone().map(|j| cosines[j].powi(2)).sum::<f64>().sqrt();
            if proj > U0_COSINE {
                rotate_block(&mut vectors, b.clone(), &u0);
                pseudo = Some(b.start);
                break;
            }
        }
    }
    if pseudo.is_none() {
        log::warn!("constant pseudo-response not found among eigenvectors of M");
    }

    let scale = v.map(|w| (q / w).sqrt());
    let mut responses = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut y = vectors.column(j).component_mul(&scale);
        opts.sign_rule.apply(&mut y);
        responses.set_column(j, &y);
    }
    let deltas = values.map(|l| 2.0 - 2.0 * q / r * l);
    let feasible = (0..n).map(|j| Some(j) != pseudo).collect();
    Ok(FreeResponseSpectrum { eigenvalues: values, deltas, responses, feasible, degenerate_blocks: blocks, q, r })
}

/// Expected Δ of an i.i.d. unit-variance noise feature: `2 (R − Σ γₙ,ₙ) / R`.
pub fn expected_noise_delta(g: &TrainingGraph) -> Result<f64> {
    let r = g.r_sum();
    if r == 0.0 || !r.is_finite() {
        return Err(GsfaError::DegenerateGraph(format!("R = {r}")));
    }
    Ok(2.0 * (r - g.edges().diagonal().sum()) / r)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloSummary {
    pub trials: usize,
    pub mean: f64,
    pub std_error: f64,
}

/// Mean Δ of `trials` standard-normal features; trial `t` uses stream `t` of `seed`.
pub fn monte_carlo_noise_delta(g: &TrainingGraph, trials: usize, seed: u64) -> Result<MonteCarloSummary> {
    if trials < 2 {
        return Err(GsfaError::Parameter("at least two trials are required".into()));
    }
    let n = g.n_samples();
    let r = g.r_sum();
    if r == 0.0 || !r.is_finite() {
        return Err(GsfaError::DegenerateGraph(format!("R = {r}")));
    }
    let deltas = parallel::map_indexed(trials, |t| {
        let mut rng = rng::stream(seed, t as u64);
        let y = DVector::from_fn(n, |_, _| rng::standard_normal(&mut rng));
        g.edges().pairwise_squared_differences(&y) / r
    });
    let mean = deltas.iter().sum::<f64>() / trials as f64;
    let var = deltas.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (trials - 1) as f64;
    Ok(MonteCarloSummary { trials, mean, std_error: (var / trials as f64).sqrt() })
}

/// Upper-triangular edges `(i, j, γ)`, optionally keeping only the strongest
/// fraction by `|γ|`; ties at the cut are kept.
pub fn edge_list(g: &TrainingGraph, keep_fraction: Option<f64>) -> Result<Vec<(usize, usize, f64)>> {
    let mut edges = Vec::new();
    g.edges().for_each_upper(|i, j, w| edges.push((i, j, w)));
    if let Some(f) = keep_fraction {
        if !(f > 0.0 && f <= 1.0) {
            return Err(GsfaError::Parameter(format!("keep fraction {f} must lie in (0, 1]")));
        }
        if !edges.is_empty() {
            let mut mags: Vec<f64> = edges.iter().map(|e| e.2.abs()).collect();
            mags.sort_by(|a, b| b.total_cmp(a));
            let keep = ((f * mags.len() as f64).ceil() as usize).clamp(1, mags.len());
            let cut = mags[keep - 1];
            edges.retain(|e| e.2.abs() >= cut);
        }
    }
    Ok(edges)
}

pub fn write_edges_csv(path: impl AsRef<Path>, edges: &[(usize, usize, f64)]) -> Result<()> {
    let mut out = String::from("i,j,gamma\n");
    for (i, j, w) in edges {
        out.push_str(&format!("{i},{j},{w}\n"));
    }
    std::fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builders::{
        build_clustered_graph, build_linear_graph, build_serial_graph, LinearVariant, RemainderPolicy,
    };
    use approx::assert_abs_diff_eq;

    fn spectrum(g: &TrainingGraph) -> FreeResponseSpectrum {
        optimal_free_responses(g, &SpectrumOptions::default()).unwrap()
    }

    #[test]
    fn m_matrix_examples() {
        let g =
            TrainingGraph::from_dense(DVector::from_element(2, 4.0), &DMatrix::from_row_slice(2, 2, &[0., 2., 2., 0.]))
                .unwrap();
        assert_eq!(build_m_matrix(&g).unwrap(), DMatrix::from_row_slice(2, 2, &[0., 0.5, 0.5, 0.]));
        let c = build_clustered_graph(&[2, 3]).unwrap();
        assert_eq!(build_m_matrix(&c).unwrap(), c.gamma_dense());
    }

    #[test]
    fn clustered_two_by_two() {
        let s = spectrum(&build_clustered_graph(&[2, 2]).unwrap());
        assert!(!s.feasible[0]);
        let j = s.feasible_indices()[0];
        assert_abs_diff_eq!(s.deltas[j], 0.0, epsilon = 1e-12);
        let y = s.responses.column(j);
        let expect = [-1.0, -1.0, 1.0, 1.0];
        for i in 0..4 {
            assert_abs_diff_eq!(y[i], expect[i], epsilon = 1e-12);
        }
    }

    #[test]
    fn responses_are_normalized_and_decorrelated() {
        for g in [
            build_linear_graph(9, LinearVariant::EndpointHalvedVertexWeights).unwrap(),
            build_serial_graph(&(0..12).map(|i| i as f64).collect::<Vec<_>>(), 4, RemainderPolicy::Strict)
                .unwrap()
                .graph,
            build_clustered_graph(&[3, 3, 4]).unwrap(),
        ] {
            let s = spectrum(&g);
            let v = g.vertex_weights();
            let feas = s.feasible_indices();
            assert_eq!(feas.len(), g.n_samples() - 1);
            for &a in &feas {
                let ya = s.responses.column(a).clone_owned();
                assert!(linalg::weighted_mean(&ya, v).abs() < 1e-8);
                assert_abs_diff_eq!(linalg::weighted_inner(&ya, &ya, v), 1.0, epsilon = 1e-8);
                assert_abs_diff_eq!(g.weighted_delta(&ya).unwrap(), s.deltas[a], epsilon = 1e-9);
                for &b in feas.iter().filter(|&&b| b < a) {
                    let yb = s.responses.column(b).clone_owned();
                    assert!(linalg::weighted_inner(&ya, &yb, v).abs() < 1e-8);
                }
            }
            for w in feas.windows(2) {
                assert!(s.deltas[w[0]] <= s.deltas[w[1]] + 1e-12);
            }
        }
    }

    #[test]
    fn pseudo_response_found_inside_tied_block() {
        // single label λ₁ = 1 ties with λ₀ = 1
        let raw = DMatrix::from_row_slice(1, 6, &[0., 1., 2., 3., 4., 6.]);
        let mut ls = crate::builders::normalize_labels(&raw, &DVector::from_element(6, 1.0)).unwrap();
        ls.eigenvalues = vec![1.0];
        let g = crate::builders::build_ell_graph(&ls, &Default::default()).unwrap();
        let s = spectrum(&g);
        assert_eq!(s.degenerate_blocks.first(), Some(&(0..2)));
        assert!(!s.feasible[0] && s.feasible[1]);
        let y = s.responses.column(1).clone_owned();
        let l = ls.label(0);
        let err = (&y - &l).amax().min((&y + &l).amax());
        assert!(err < 1e-9, "{err}");
    }

    #[test]
    fn inconsistent_graph_rejected() {
        let g = TrainingGraph::from_dense(
            DVector::from_element(3, 1.0),
            &DMatrix::from_row_slice(3, 3, &[0., 1., 0., 1., 0., 1., 0., 1., 0.]),
        )
        .unwrap();
        assert!(matches!(optimal_free_responses(&g, &SpectrumOptions::default()), Err(GsfaError::Inconsistent { .. })));
        let opts = SpectrumOptions { dense_cap: 2, ..Default::default() };
        assert!(matches!(optimal_free_responses(&g, &opts), Err(GsfaError::Parameter(_))));
    }

    #[test]
    fn reordering_count() {
        for n in [10, 20, 30] {
            let s = spectrum(&build_linear_graph(n, LinearVariant::SelfLoopExtended).unwrap());
            assert_eq!(s.count_delta_below_two(), (n - 1) / 2);
        }
    }

    #[test]
    fn noise_delta_closed_form() {
        let g = build_clustered_graph(&[3, 3]).unwrap();
        assert_eq!(expected_noise_delta(&g).unwrap(), 2.0);
        let g = TrainingGraph::from_dense(DVector::from_element(2, 1.0), &DMatrix::from_element(2, 2, 1.0)).unwrap();
        assert_eq!(expected_noise_delta(&g).unwrap(), 1.0);
        let mc = monte_carlo_noise_delta(&g, 4000, 3).unwrap();
        assert!((mc.mean - 1.0).abs() < 0.1);
    }

    #[test]
    fn monte_carlo_is_deterministic() {
        let g = build_clustered_graph(&[4, 4]).unwrap();
        let a = monte_carlo_noise_delta(&g, 500, 11).unwrap();
        let b = monte_carlo_noise_delta(&g, 500, 11).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn self_loop_removal_keeps_responses_when_diagonal_tracks_v() {
        let ls = crate::builders::compact_binary_labels(8, 5).unwrap().expand_consecutive(2).unwrap();
        let g = crate::builders::build_ell_graph(&ls, &Default::default()).unwrap();
        let stripped = g.remove_self_loops();
        let a = spectrum(&g);
        let b = optimal_free_responses(&stripped, &SpectrumOptions { require_consistent: false, ..Default::default() })
            .unwrap();
        // equal eigenvalues form one block, so compare spanned subspaces
        let basis = b.slowest(5);
        for k in 0..5 {
            let ya = a.slowest(5).column(k).clone_owned();
            let proj = basis.transpose() * &ya / ls.n_samples() as f64;
            assert_abs_diff_eq!(proj.norm(), 1.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn strongest_edges_filter() {
        let g = build_linear_graph(5, LinearVariant::EndpointHalvedVertexWeights).unwrap();
        assert_eq!(edge_list(&g, None).unwrap().len(), 4);
        let ls = crate::builders::compact_binary_labels(4, 2).unwrap().expand_consecutive(3).unwrap();
        let e = crate::builders::build_ell_graph(&ls, &Default::default()).unwrap();
        let all = edge_list(&e, None).unwrap();
        let top = edge_list(&e, Some(0.3)).unwrap();
        assert!(top.len() < all.len() && top.len() >= (0.3 * all.len() as f64).ceil() as usize);
        assert!(edge_list(&e, Some(0.0)).is_err());
    }

    #[test]
    fn spectrum_csv_layout() {
        let s = spectrum(&build_clustered_graph(&[2, 2]).unwrap());
        let csv = s.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("j,lambda,delta,feasible"));
        assert_eq!(lines.count(), 4);
    }
}
