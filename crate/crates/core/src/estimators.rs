//! Post-processing from slow features to labels and classes.

use std::path::Path;

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{GsfaError, Result};
use crate::linalg::sym_eigen_desc;
use crate::matrix_io::{from_rows, to_rows};

pub const ESTIMATOR_FORMAT_VERSION: u32 = 1;
/// Ridge factor for Gaussian class covariances, relative to `trace / dim`.
pub const GC_RIDGE: f64 = 1e-6;
const SINGULAR_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Priors {
    #[default]
    Equal,
    Empirical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianClass {
    pub label: f64,
    pub prior: f64,
    pub mean: Vec<f64>,
    /// Row-major, ridge already added.
    pub covariance: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EstimatorParams {
    /// `ℓ̂ = sign · y₁ · σ + μ`.
    LinearScaling { sign: f64, mu: f64, sigma: f64 },
    /// `ℓ̂ = aᵀy + b` on the first `a.len()` features.
    LinearRegression { weights: Vec<f64>, bias: f64, regularized: bool },
    /// Posterior-weighted mean of class labels.
    SoftGc { classes: Vec<GaussianClass> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelEstimator {
    pub params: EstimatorParams,
    pub clip_range: (f64, f64),
}

#[derive(Serialize, Deserialize)]
struct EstimatorFile {
    format_version: u32,
    #[serde(flatten)]
    estimator: LabelEstimator,
}

fn check_len(a: usize, b: usize, what: &str) -> Result<()> {
    if a != b {
        return Err(GsfaError::Dimension(format!("{what}: {a} vs {b} entries")));
    }
    Ok(())
}

fn label_range(labels: &[f64]) -> (f64, f64) {
    labels.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &l| (lo.min(l), hi.max(l)))
}

impl LabelEstimator {
    pub fn kind(&self) -> &'static str {
        match self.params {
            EstimatorParams::LinearScaling { .. } => "linear_scaling",
            EstimatorParams::LinearRegression { .. } => "linear_regression",
            EstimatorParams::SoftGc { .. } => "soft_gc",
        }
    }

    /// Number of leading feature rows the estimator reads.
    pub fn features_used(&self) -> usize {
        match &self.params {
            EstimatorParams::LinearScaling { .. } => 1,
            EstimatorParams::LinearRegression { weights, .. } => weights.len(),
            EstimatorParams::SoftGc { classes } => classes.first().map_or(0, |c| c.mean.len()),
        }
    }

    pub fn with_clip_range(mut self, lo: f64, hi: f64) -> Result<Self> {
        if !(lo <= hi) {
            return Err(GsfaError::Parameter(format!("invalid clip range [{lo}, {hi}]")));
        }
        self.clip_range = (lo, hi);
        Ok(self)
    }

    /// Predicts labels from a `J×N` feature matrix with `J ≥ features_used()`.
    pub fn predict(&self, y: &DMatrix<f64>) -> Result<DVector<f64>> {
        let (lo, hi) = self.clip_range;
        Ok(self.predict_raw(y)?.map(|x| x.clamp(lo, hi)))
    }

    /// Predictions before clipping.
    pub fn predict_raw(&self, y: &DMatrix<f64>) -> Result<DVector<f64>> {
        let d = self.features_used();
        if y.nrows() < d {
            return Err(GsfaError::Dimension(format!("estimator needs {d} features, got {}", y.nrows())));
        }
        Ok(match &self.params {
            EstimatorParams::LinearScaling { sign, mu, sigma } => y.row(0).transpose().map(|x| sign * x * sigma + mu),
            EstimatorParams::LinearRegression { weights, bias, .. } => {
                let a = DVector::from_column_slice(weights);
                (y.rows(0, d).transpose() * a).add_scalar(*bias)
            }
            EstimatorParams::SoftGc { classes } => {
                let p = soft_gc_posteriors(classes, &y.rows(0, d).clone_owned())?;
                let labels = DVector::from_iterator(classes.len(), classes.iter().map(|c| c.label));
                p.transpose() * labels
            }
        })
    }

    /// Class posteriors `C×N`; only defined for soft GC estimators.
    pub fn class_probabilities(&self, y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        match &self.params {
            EstimatorParams::SoftGc { classes } => {
                let d = self.features_used();
                if y.nrows() < d {
                    return Err(GsfaError::Dimension(format!("estimator needs {d} features, got {}", y.nrows())));
                }
                soft_gc_posteriors(classes, &y.rows(0, d).clone_owned())
            }
            _ => Err(GsfaError::Contract(format!("{} has no class probabilities", self.kind()))),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&EstimatorFile {
            format_version: ESTIMATOR_FORMAT_VERSION,
            estimator: self.clone(),
        })?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: EstimatorFile = serde_json::from_str(text)?;
        if file.format_version != ESTIMATOR_FORMAT_VERSION {
            return Err(GsfaError::FormatVersion { found: file.format_version, expected: ESTIMATOR_FORMAT_VERSION });
        }
        Ok(file.estimator)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Inverts label normalization, choosing the sign with the lower training RMSE.
pub fn fit_linear_scaling(y1: &DVector<f64>, labels: &[f64], v: &DVector<f64>) -> Result<LabelEstimator> {
    check_len(y1.len(), labels.len(), "feature and labels")?;
    check_len(v.len(), labels.len(), "vertex weights and labels")?;
    let q = v.sum();
    if !(q > 0.0) {
        return Err(GsfaError::Parameter("vertex weights must have a positive sum".into()));
    }
    let mu = labels.iter().zip(v.iter()).map(|(l, w)| l * w).sum::<f64>() / q;
    let var = labels.iter().zip(v.iter()).map(|(l, w)| w * (l - mu).powi(2)).sum::<f64>() / q;
    if !(var > 1e-24 * (1.0 + mu * mu)) {
        return Err(GsfaError::DegenerateLabel { index: 0, variance: var });
    }
    let sigma = var.sqrt();
    let clip_range = label_range(labels);
    let truth = DVector::from_column_slice(labels);
    let y = DMatrix::from_row_slice(1, y1.len(), y1.as_slice());
    let mut best: Option<(f64, LabelEstimator)> = None;
    for sign in [1.0, -1.0] {
        let est = LabelEstimator { params: EstimatorParams::LinearScaling { sign, mu, sigma }, clip_range };
        let err = rmse(&est.predict(&y)?, &truth)?;
        if best.as_ref().is_none_or(|(e, _)| err < *e) {
            best = Some((err, est));
        }
    }
    Ok(best.expect("two candidates").1)
}

/// Least squares on all rows of `y` (`J×N`, `N > J`).
pub fn fit_linear_regression(y: &DMatrix<f64>, labels: &[f64]) -> Result<LabelEstimator> {
    let (j, n) = y.shape();
    check_len(n, labels.len(), "features and labels")?;
    if j == 0 || n <= j {
        return Err(GsfaError::Parameter(format!("linear regression needs N > J ≥ 1, got N = {n}, J = {j}")));
    }
    let mean_y = y.column_mean();
    let mean_l = labels.iter().sum::<f64>() / n as f64;
    let mut yc = y.clone();
    for mut col in yc.column_iter_mut() {
        col -= &mean_y;
    }
    let lc = DVector::from_iterator(n, labels.iter().map(|l| l - mean_l));
    let mut gram = &yc * yc.transpose();
    let rhs = &yc * lc;
    let (vals, _) = sym_eigen_desc(&gram);
    let (max, min) = (vals.max(), vals.min());
    let regularized = !(max > 0.0) || min <= SINGULAR_TOL * max;
    if regularized {
        let ridge = (gram.trace() / j as f64).max(1.0) * 1e-10;
        log::warn!("singular normal equations in linear regression; adding ridge {ridge:e}");
        for k in 0..j {
            gram[(k, k)] += ridge;
        }
    }
    let a = Cholesky::new(gram).ok_or(GsfaError::Singular { null_dim: j, rank: 0, requested: j })?.solve(&rhs);
    let bias = mean_l - a.dot(&mean_y);
    Ok(LabelEstimator {
        params: EstimatorParams::LinearRegression { weights: a.iter().copied().collect(), bias, regularized },
        clip_range: label_range(labels),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SoftGcOptions {
    pub ridge: f64,
    pub priors: Priors,
}

impl Default for SoftGcOptions {
    fn default() -> Self {
        SoftGcOptions { ridge: GC_RIDGE, priors: Priors::Equal }
    }
}

/// Number of distinct label values, capped at `N / 10` (at least 2).
pub fn default_soft_gc_classes(labels: &[f64]) -> usize {
    let mut sorted = labels.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    sorted.len().min((labels.len() / 10).max(2))
}

/// Equal-frequency bins over label-sorted samples; returns a class id per sample.
pub fn equal_frequency_bins(labels: &[f64], n_classes: usize) -> Result<Vec<usize>> {
    let n = labels.len();
    if n_classes == 0 || n < 2 * n_classes {
        return Err(GsfaError::Parameter(format!(
            "cannot bin {n} samples into {n_classes} classes of at least 2 samples"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| labels[a].total_cmp(&labels[b]).then(a.cmp(&b)));
    let mut ids = vec![0; n];
    for (pos, &k) in order.iter().enumerate() {
        ids[k] = pos * n_classes / n;
    }
    Ok(ids)
}

pub fn fit_soft_gc(y: &DMatrix<f64>, labels: &[f64], n_classes: usize) -> Result<LabelEstimator> {
    fit_soft_gc_with(y, labels, n_classes, SoftGcOptions::default())
}

pub fn fit_soft_gc_with(
    y: &DMatrix<f64>,
    labels: &[f64],
    n_classes: usize,
    opts: SoftGcOptions,
) -> Result<LabelEstimator> {
    let (dim, n) = y.shape();
    check_len(n, labels.len(), "features and labels")?;
    if dim == 0 {
        return Err(GsfaError::Parameter("soft GC needs at least one feature".into()));
    }
    let ids = equal_frequency_bins(labels, n_classes)?;
    let mut classes = Vec::with_capacity(n_classes);
    for c in 0..n_classes {
        let members: Vec<usize> = (0..n).filter(|&k| ids[k] == c).collect();
        let yc = y.select_columns(&members);
        let m = members.len() as f64;
        let mean = yc.column_mean();
        let mut centered = yc;
        for mut col in centered.column_iter_mut() {
            col -= &mean;
        }
        let mut cov = &centered * centered.transpose() / m;
        let scale = cov.trace() / dim as f64;
        let ridge = opts.ridge * if scale > 0.0 { scale } else { 1.0 };
        for k in 0..dim {
            cov[(k, k)] += ridge;
        }
        let prior = match opts.priors {
            Priors::Equal => 1.0 / n_classes as f64,
            Priors::Empirical => m / n as f64,
        };
        classes.push(GaussianClass {
            label: members.iter().map(|&k| labels[k]).sum::<f64>() / m,
            prior,
            mean: mean.iter().copied().collect(),
            covariance: to_rows(&cov),
        });
    }
    Ok(LabelEstimator { params: EstimatorParams::SoftGc { classes }, clip_range: label_range(labels) })
}

fn soft_gc_posteriors(classes: &[GaussianClass], y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (dim, n) = y.shape();
    let mut logp = DMatrix::zeros(classes.len(), n);
    for (c, class) in classes.iter().enumerate() {
        let cov = from_rows(&class.covariance, dim)?;
        let chol = Cholesky::new(cov)
            .ok_or_else(|| GsfaError::Contract(format!("class {c} covariance is not positive definite")))?;
        let log_det: f64 = 2.0 * chol.l().diagonal().iter().map(|x| x.ln()).sum::<f64>();
        let mean = DVector::from_column_slice(&class.mean);
        for k in 0..n {
            let d = y.column(k) - &mean;
            let z = chol.l().solve_lower_triangular(&d).expect("nonsingular factor");
            logp[(c, k)] = -0.5 * z.norm_squared() - 0.5 * log_det + class.prior.ln();
        }
    }
    for mut col in logp.column_iter_mut() {
        let m = col.max();
        col.apply(|x| *x = (*x - m).exp());
        let s = col.sum();
        col /= s;
    }
    Ok(logp)
}

/// Nearest-centroid classifier; ties go to the smallest class id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentroidClassifier {
    /// Ascending.
    pub class_ids: Vec<usize>,
    /// `dim × C`.
    pub centroids: DMatrix<f64>,
}

pub fn fit_nearest_centroid(y: &DMatrix<f64>, class_ids: &[usize]) -> Result<CentroidClassifier> {
    check_len(y.ncols(), class_ids.len(), "features and class ids")?;
    if y.ncols() == 0 {
        return Err(GsfaError::Parameter("no training samples".into()));
    }
    let mut ids = class_ids.to_vec();
    ids.sort_unstable();
    ids.dedup();
    let mut centroids = DMatrix::zeros(y.nrows(), ids.len());
    for (c, &id) in ids.iter().enumerate() {
        let members: Vec<usize> = (0..class_ids.len()).filter(|&k| class_ids[k] == id).collect();
        centroids.set_column(c, &y.select_columns(&members).column_mean());
    }
    if centroids.iter().any(|x| !x.is_finite()) {
        return Err(GsfaError::Contract("non-finite centroid".into()));
    }
    Ok(CentroidClassifier { class_ids: ids, centroids })
}

impl CentroidClassifier {
    pub fn classify(&self, y: &DVector<f64>) -> Result<usize> {
        check_len(y.len(), self.centroids.nrows(), "query and centroid dimension")?;
        let mut best = (f64::INFINITY, self.class_ids[0]);
        for (c, &id) in self.class_ids.iter().enumerate() {
            let d = (self.centroids.column(c) - y).norm_squared();
            if d < best.0 {
                best = (d, id);
            }
        }
        Ok(best.1)
    }

    pub fn predict(&self, y: &DMatrix<f64>) -> Result<Vec<usize>> {
        y.column_iter().map(|c| self.classify(&c.clone_owned())).collect()
    }
}

pub fn rmse(pred: &DVector<f64>, truth: &DVector<f64>) -> Result<f64> {
    check_len(pred.len(), truth.len(), "predictions and truth")?;
    if truth.is_empty() {
        return Err(GsfaError::Parameter("empty label vector".into()));
    }
    Ok(((pred - truth).norm_squared() / truth.len() as f64).sqrt())
}

/// RMSE of the constant predictor equal to the (optionally weighted) mean label.
pub fn chance_rmse(truth: &DVector<f64>, weights: Option<&DVector<f64>>) -> Result<f64> {
    if truth.is_empty() {
        return Err(GsfaError::Parameter("empty label vector".into()));
    }
    let mean = match weights {
        Some(w) => {
            check_len(w.len(), truth.len(), "weights and truth")?;
            truth.dot(w) / w.sum()
        }
        None => truth.mean(),
    };
    rmse(&DVector::from_element(truth.len(), mean), truth)
}

pub fn error_rate(pred: &[usize], truth: &[usize]) -> Result<f64> {
    check_len(pred.len(), truth.len(), "predictions and truth")?;
    if truth.is_empty() {
        return Err(GsfaError::Parameter("empty class vector".into()));
    }
    Ok(pred.iter().zip(truth).filter(|(a, b)| a != b).count() as f64 / truth.len() as f64)
}

/// One metrics CSV row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub estimator: String,
    pub features_used: usize,
    pub metric: String,
    pub value: f64,
}

pub fn metrics_to_csv(rows: &[MetricRow]) -> String {
    let mut out = String::from("estimator,d,metric,value\n");
    for r in rows {
        out.push_str(&format!("{},{},{},{}\n", r.estimator, r.features_used, r.metric, r.value));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn normalized(labels: &[f64]) -> DVector<f64> {
        let n = labels.len() as f64;
        let mu = labels.iter().sum::<f64>() / n;
        let sd = (labels.iter().map(|l| (l - mu).powi(2)).sum::<f64>() / n).sqrt();
        DVector::from_iterator(labels.len(), labels.iter().map(|l| (l - mu) / sd))
    }

    #[test]
    fn linear_scaling_inverts_and_searches_sign() {
        let labels: Vec<f64> = (0..12).map(|k| (k as f64) * 0.5 - 1.0).collect();
        let v = DVector::from_element(12, 1.0);
        let y = normalized(&labels);
        let truth = DVector::from_column_slice(&labels);
        for (feature, sign) in [(y.clone(), 1.0), (-y.clone(), -1.0)] {
            let est = fit_linear_scaling(&feature, &labels, &v).unwrap();
            assert!(matches!(est.params, EstimatorParams::LinearScaling { sign: s, .. } if s == sign));
            let m = DMatrix::from_row_slice(1, 12, feature.as_slice());
            assert!(rmse(&est.predict(&m).unwrap(), &truth).unwrap() < 1e-12);
        }
        let est = fit_linear_scaling(&y, &labels, &v).unwrap();
        let far = DMatrix::from_row_slice(1, 2, &[100.0, -100.0]);
        assert_eq!(est.predict(&far).unwrap().as_slice(), &[4.5, -1.0]);
        assert!(matches!(fit_linear_scaling(&y, &[2.0; 12], &v), Err(GsfaError::DegenerateLabel { .. })));
    }

    #[test]
    fn linear_regression_properties() {
        let mut rng = crate::rng::stream(3, 0);
        let y1: Vec<f64> = (0..40).map(|_| crate::rng::standard_normal(&mut rng)).collect();
        let labels: Vec<f64> = y1.iter().map(|x| 2.0 * x - 0.5).collect();
        let y = DMatrix::from_row_slice(1, 40, &y1);
        let est = fit_linear_regression(&y, &labels).unwrap();
        let truth = DVector::from_column_slice(&labels);
        assert!(rmse(&est.predict(&y).unwrap(), &truth).unwrap() < 1e-12);

        let noisy: Vec<f64> = labels.iter().map(|l| l + 0.3 * crate::rng::standard_normal(&mut rng)).collect();
        let noisy_t = DVector::from_column_slice(&noisy);
        let one = fit_linear_regression(&y, &noisy).unwrap();
        let e1 = rmse(&one.predict_raw(&y).unwrap(), &noisy_t).unwrap();
        let extra = DMatrix::from_fn(2, 40, |r, n| if r == 0 { y1[n] } else { crate::rng::standard_normal(&mut rng) });
        let two = fit_linear_regression(&extra, &noisy).unwrap();
        let e2 = rmse(&two.predict_raw(&extra).unwrap(), &noisy_t).unwrap();
        assert!(e2 <= e1 + 1e-12);
        assert!(e1 <= chance_rmse(&noisy_t, None).unwrap());

        let constant = DMatrix::from_fn(2, 40, |r, n| if r == 0 { y1[n] } else { 1.0 });
        let reg = fit_linear_regression(&constant, &labels).unwrap();
        assert!(matches!(reg.params, EstimatorParams::LinearRegression { regularized: true, .. }));
        assert!(rmse(&reg.predict(&constant).unwrap(), &truth).unwrap() < 1e-6);
        assert!(fit_linear_regression(&DMatrix::zeros(3, 3), &[0.0; 3]).is_err());
    }

    #[test]
    fn soft_gc_examples() {
        let y = DMatrix::from_row_slice(1, 8, &[-10.1, -10.0, -9.9, -10.0, 9.9, 10.0, 10.1, 10.0]);
        let labels = [1.0, 1.0, 1.0, 1.0, 3.0, 3.0, 3.0, 3.0];
        let est = fit_soft_gc(&y, &labels, 2).unwrap();
        let q = DMatrix::from_row_slice(1, 3, &[-10.0, 10.0, 0.0]);
        let p = est.predict(&q).unwrap();
        assert!((p[0] - 1.0).abs() < 1e-6);
        assert!((p[1] - 3.0).abs() < 1e-6);
        assert!((p[2] - 2.0).abs() < 1e-9);
        let probs = est.class_probabilities(&q).unwrap();
        assert!((probs.column(2).sum() - 1.0).abs() < 1e-12);
        assert!(matches!(fit_soft_gc(&y, &labels, 5), Err(GsfaError::Parameter(_))));
        assert_eq!(default_soft_gc_classes(&[1.0; 40]), 1);
    }

    #[test]
    fn soft_gc_bins_are_equal_frequency() {
        let labels: Vec<f64> = (0..12).rev().map(|k| k as f64).collect();
        let ids = equal_frequency_bins(&labels, 3).unwrap();
        assert_eq!(ids, vec![2, 2, 2, 2, 1, 1, 1, 1, 0, 0, 0, 0]);
    }

    #[test]
    fn nearest_centroid_examples() {
        let y = DMatrix::from_row_slice(1, 4, &[-1.0, -1.0, 1.0, 1.0]);
        let clf = fit_nearest_centroid(&y, &[1, 1, 2, 2]).unwrap();
        assert_eq!(clf.classify(&DVector::from_element(1, 0.2)).unwrap(), 2);
        assert_eq!(clf.classify(&DVector::from_element(1, 0.0)).unwrap(), 1);
        assert_eq!(clf.classify(&DVector::from_element(1, -1.0)).unwrap(), 1);
        assert_eq!(clf.predict(&y).unwrap(), vec![1, 1, 2, 2]);
    }

    #[test]
    fn metric_examples() {
        let t = DVector::from_vec(vec![-1.0, 1.0]);
        assert_eq!(rmse(&t, &t).unwrap(), 0.0);
        assert!((chance_rmse(&t, None).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(error_rate(&[1, 0], &[0, 1]).unwrap(), 1.0);
        assert!(rmse(&t, &DVector::zeros(3)).is_err());
        let csv = metrics_to_csv(&[MetricRow {
            estimator: "soft_gc".into(),
            features_used: 3,
            metric: "rmse".into(),
            value: 0.5,
        }]);
        assert_eq!(csv, "estimator,d,metric,value\nsoft_gc,3,rmse,0.5\n");
    }

    #[test]
    fn estimator_file_round_trip() {
        let y = DMatrix::from_row_slice(2, 6, &[0., 1., 2., 3., 4., 5., 1., 0., 1., 0., 1., 1.]);
        let labels = [0., 0., 1., 1., 2., 2.];
        for est in [fit_linear_regression(&y, &labels).unwrap(), fit_soft_gc(&y, &labels, 3).unwrap()] {
            let back = LabelEstimator::from_json(&est.to_json().unwrap()).unwrap();
            assert_eq!(back, est);
        }
        let bad = fit_linear_regression(&y, &labels)
            .unwrap()
            .to_json()
            .unwrap()
            .replace("\"format_version\": 1", "\"format_version\": 9");
        assert!(matches!(LabelEstimator::from_json(&bad), Err(GsfaError::FormatVersion { .. })));
    }
}
