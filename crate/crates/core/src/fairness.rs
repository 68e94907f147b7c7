//! Logistic scoring models, per-individual counterfactual score
//! decompositions, and counterfactual demographic parity.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use nalgebra::{DMatrix, DVector};

use crate::dataset::Dataset;
use crate::linalg;
use crate::seqtransport::CounterfactualResult;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FairnessError {
    #[error("target must take values 0 and 1 only, found {0}")]
    NonBinaryTarget(f64),
    #[error("need at least one feature")]
    NoFeatures,
    #[error("every feature is constant")]
    AllFeaturesConstant,
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("model feature `{0}` is not among the counterfactual variables")]
    UnknownFeature(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("empty audit group")]
    EmptyGroup,
    #[error("non-finite model parameter")]
    NonFinite,
}

pub type Result<T, E = FairnessError> = std::result::Result<T, E>;

/// Linear predictors are clipped to this magnitude before the sigmoid, so
/// scores stay strictly inside (0, 1).
pub const ETA_CLIP: f64 = 30.0;

pub fn sigmoid(eta: f64) -> f64 {
    1.0 / (1.0 + (-eta.clamp(-ETA_CLIP, ETA_CLIP)).exp())
}

/// `sigma(intercept + w . x [+ w_s s])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub feature_names: Vec<String>,
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    /// Present for a model that uses the sensitive attribute ("aware").
    pub sensitive_coefficient: Option<f64>,
    #[serde(default = "default_true")]
    pub converged: bool,
    #[serde(default)]
    pub iterations: usize,
}

fn default_true() -> bool {
    true
}

/// Whether a model reads the sensitive attribute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Aware,
    Unaware,
}

impl LogisticModel {
    pub fn new(
        feature_names: Vec<String>,
        coefficients: Vec<f64>,
        intercept: f64,
        sensitive_coefficient: Option<f64>,
    ) -> Result<Self> {
        let model = Self {
            feature_names,
            coefficients,
            intercept,
            sensitive_coefficient,
            converged: true,
            iterations: 0,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        if self.feature_names.len() != self.coefficients.len() {
            return Err(FairnessError::DimensionMismatch {
                expected: self.feature_names.len(),
                got: self.coefficients.len(),
            });
        }
        let finite = self.coefficients.iter().all(|c| c.is_finite())
            && self.intercept.is_finite()
            && self.sensitive_coefficient.map_or(true, f64::is_finite);
        if !finite {
            return Err(FairnessError::NonFinite);
        }
        Ok(())
    }

    pub fn includes_sensitive(&self) -> bool {
        self.sensitive_coefficient.is_some()
    }

    pub fn kind(&self) -> ModelKind {
        if self.includes_sensitive() {
            ModelKind::Aware
        } else {
            ModelKind::Unaware
        }
    }

    /// Score of features `x` (in `feature_names` order) with sensitive value `s`.
    pub fn score(&self, x: &[f64], s: f64) -> Result<f64> {
        if x.len() != self.coefficients.len() {
            return Err(FairnessError::DimensionMismatch {
                expected: self.coefficients.len(),
                got: x.len(),
            });
        }
        let eta = self.intercept
            + self.coefficients.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
            + self.sensitive_coefficient.unwrap_or(0.0) * s;
        Ok(sigmoid(eta))
    }

    /// Positions of the model's features within `variables`.
    pub fn feature_indices(&self, variables: &[String]) -> Result<Vec<usize>> {
        self.feature_names
            .iter()
            .map(|f| {
                variables
                    .iter()
                    .position(|v| v == f)
                    .ok_or_else(|| FairnessError::UnknownFeature(f.clone()))
            })
            .collect()
    }

    fn score_at(&self, idx: &[usize], values: &[f64], s: f64) -> f64 {
        let x: Vec<f64> = idx.iter().map(|&i| values[i]).collect();
        self.score(&x, s).expect("indices match the feature count")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogisticOptions {
    pub max_iter: usize,
    /// Convergence threshold on the largest absolute score-equation component.
    pub tol: f64,
}

impl Default for LogisticOptions {
    fn default() -> Self {
        Self {
            max_iter: 100,
            tol: 1e-8,
        }
    }
}

/// A fitted model plus anything noteworthy about the fit.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticFit {
    pub model: LogisticModel,
    pub warnings: Vec<String>,
}

/// Maximum-likelihood logistic regression by Newton's method (IRLS).
///
/// Features are standardized internally and the coefficients mapped back to
/// raw units. Constant features are dropped with a warning. Convergence
/// needs both the gradient of the mean log-likelihood below `tol` and a
/// vanishing Newton step; separable data never satisfy the latter, so such
/// fits stop at `max_iter` with `converged == false`.
pub fn fit_logistic(
    dataset: &Dataset,
    target: &[f64],
    features: &[&str],
    include_sensitive: bool,
    opts: LogisticOptions,
) -> Result<LogisticFit> {
    if features.is_empty() {
        return Err(FairnessError::NoFeatures);
    }
    let n = dataset.len();
    if target.len() != n {
        return Err(FairnessError::DimensionMismatch {
            expected: n,
            got: target.len(),
        });
    }
    if let Some(&bad) = target.iter().find(|&&t| t != 0.0 && t != 1.0) {
        return Err(FairnessError::NonBinaryTarget(bad));
    }
    let mut warnings = Vec::new();
    let mut cols: Vec<(String, &[f64])> = Vec::new();
    for &f in features {
        let col = dataset
            .column(f)
            .map_err(|_| FairnessError::MissingColumn(f.to_string()))?;
        cols.push((f.to_string(), col));
    }
    if include_sensitive {
        cols.push((dataset.sensitive_name().to_string(), dataset.sensitive()));
    }
    let mut kept = Vec::new();
    for (name, col) in cols {
        let (m, sd) = mean_sd(col);
        if sd > 0.0 {
            kept.push((name, col, m, sd));
        } else {
            warnings.push(format!("feature `{name}` is constant and was dropped"));
        }
    }
    if kept.is_empty() {
        return Err(FairnessError::AllFeaturesConstant);
    }
    let p = kept.len() + 1;
    let x = DMatrix::from_fn(n, p, |i, j| {
        if j == 0 {
            1.0
        } else {
            let (_, col, m, sd) = &kept[j - 1];
            (col[i] - m) / sd
        }
    });
    let y = DVector::from_column_slice(target);
    let (beta, converged, iterations) = irls(&x, &y, opts);
    if !converged {
        warnings.push(format!("logistic fit did not converge in {iterations} iterations"));
    }

    let mut intercept = beta[0];
    let mut coefficients = vec![0.0; features.len()];
    let mut sensitive_coefficient = include_sensitive.then_some(0.0);
    for (k, (name, _, m, sd)) in kept.iter().enumerate() {
        let w = beta[k + 1] / sd;
        intercept -= w * m;
        match features.iter().position(|f| f == name) {
            Some(pos) => coefficients[pos] = w,
            None => sensitive_coefficient = Some(w),
        }
    }
    let model = LogisticModel {
        feature_names: features.iter().map(|f| f.to_string()).collect(),
        coefficients,
        intercept,
        sensitive_coefficient,
        converged,
        iterations,
    };
    model.validate()?;
    Ok(LogisticFit { model, warnings })
}

fn mean_sd(col: &[f64]) -> (f64, f64) {
    let n = col.len() as f64;
    let m = col.iter().sum::<f64>() / n;
    let v = col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
    (m, v.sqrt())
}

fn irls(x: &DMatrix<f64>, y: &DVector<f64>, opts: LogisticOptions) -> (DVector<f64>, bool, usize) {
    let (n, p) = x.shape();
    let mut beta = DVector::zeros(p);
    for iter in 1..=opts.max_iter {
        let eta = x * &beta;
        let mu = eta.map(sigmoid);
        let w = mu.map(|m| m * (1.0 - m));
        let grad = x.transpose() * (y - &mu) / n as f64;
        let mut h = DMatrix::zeros(p, p);
        for i in 0..n {
            let row = x.row(i);
            h += row.transpose() * row * w[i];
        }
        h /= n as f64;
        let step = solve_with_ridge(&h, &grad);
        beta += &step;
        let gmax = grad.amax();
        if gmax <= opts.tol && step.amax() <= 1e-6 {
            return (beta, true, iter);
        }
    }
    (beta, false, opts.max_iter)
}

/// Solves `h s = g`, adding a growing ridge when `h` is numerically singular.
fn solve_with_ridge(h: &DMatrix<f64>, g: &DVector<f64>) -> DVector<f64> {
    let p = h.nrows();
    let scale = h.diagonal().amax().max(f64::MIN_POSITIVE);
    let mut ridge = 0.0;
    for _ in 0..20 {
        let m = h + DMatrix::identity(p, p) * ridge;
        if let Ok(l) = linalg::cholesky_lower(&m) {
            let s = linalg::cholesky_solve(&l, g);
            if s.iter().all(|v| v.is_finite()) {
                return s;
            }
        }
        ridge = if ridge == 0.0 { 1e-10 * scale } else { ridge * 10.0 };
    }
    DVector::zeros(p)
}

/// One term of a score decomposition.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecompositionStep {
    pub label: String,
    pub before: f64,
    pub after: f64,
    pub delta: f64,
}

/// Path from `m(s_source, x)` to `m(s_target, x*)`: first the sensitive
/// attribute alone, then each transported variable in transport order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecompositionPath {
    pub steps: Vec<DecompositionStep>,
}

pub const CETERIS_PARIBUS_LABEL: &str = "ceteris paribus s-flip";

impl DecompositionPath {
    pub fn initial(&self) -> f64 {
        self.steps[0].before
    }

    pub fn last(&self) -> f64 {
        self.steps[self.steps.len() - 1].after
    }

    /// `m(s_target, x*) - m(s_source, x)`.
    pub fn total(&self) -> f64 {
        self.last() - self.initial()
    }

    pub fn delta_sum(&self) -> f64 {
        self.steps.iter().map(|s| s.delta).sum()
    }
}

/// Decomposes an individual's counterfactual score change. `source_level`
/// and `target_level` are the sensitive values before and after.
pub fn decompose_individual(
    model: &LogisticModel,
    result: &CounterfactualResult,
    source_level: f64,
    target_level: f64,
) -> Result<DecompositionPath> {
    let idx = model.feature_indices(&result.variables)?;
    let d = result.variables.len();
    if result.original.len() != d || result.transported.len() != d || result.steps.len() != d {
        return Err(FairnessError::DimensionMismatch {
            expected: d,
            got: result.steps.len(),
        });
    }
    let mut current = result.original.clone();
    let mut before = model.score_at(&idx, &current, source_level);
    let mut after = model.score_at(&idx, &current, target_level);
    let mut steps = vec![DecompositionStep {
        label: CETERIS_PARIBUS_LABEL.to_string(),
        before,
        after,
        delta: after - before,
    }];
    for step in &result.steps {
        let j = result
            .variables
            .iter()
            .position(|v| *v == step.variable)
            .ok_or_else(|| FairnessError::UnknownFeature(step.variable.clone()))?;
        current[j] = result.transported[j];
        before = after;
        after = model.score_at(&idx, &current, target_level);
        steps.push(DecompositionStep {
            label: step.variable.clone(),
            before,
            after,
            delta: after - before,
        });
    }
    Ok(DecompositionPath { steps })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IndividualScore {
    pub score0: f64,
    pub score1: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairnessReport {
    pub cdp: f64,
    pub n0: usize,
    pub n1: usize,
    pub model: ModelKind,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub individuals: Option<Vec<IndividualScore>>,
}

/// Levels and sizes of the two groups of an audit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuditGroups {
    pub source_level: f64,
    pub target_level: f64,
    pub target_size: usize,
}

impl Default for AuditGroups {
    fn default() -> Self {
        Self {
            source_level: 0.0,
            target_level: 1.0,
            target_size: 0,
        }
    }
}

/// `CDP = mean_i m(s_target, x*_i) - m(s_source, x_i)` over matched rows.
pub fn cdp(
    model: &LogisticModel,
    variables: &[String],
    originals: &[Vec<f64>],
    counterfactuals: &[Vec<f64>],
    groups: AuditGroups,
    keep_individuals: bool,
) -> Result<FairnessReport> {
    if originals.len() != counterfactuals.len() {
        return Err(FairnessError::DimensionMismatch {
            expected: originals.len(),
            got: counterfactuals.len(),
        });
    }
    if originals.is_empty() {
        return Err(FairnessError::EmptyGroup);
    }
    let idx = model.feature_indices(variables)?;
    let d = variables.len();
    if let Some(bad) = originals.iter().chain(counterfactuals).find(|r| r.len() != d) {
        return Err(FairnessError::DimensionMismatch {
            expected: d,
            got: bad.len(),
        });
    }
    let individuals: Vec<IndividualScore> = originals
        .iter()
        .zip(counterfactuals)
        .map(|(x, xs)| {
            let score0 = model.score_at(&idx, x, groups.source_level);
            let score1 = model.score_at(&idx, xs, groups.target_level);
            IndividualScore {
                score0,
                score1,
                delta: score1 - score0,
            }
        })
        .collect();
    let cdp = individuals.iter().map(|i| i.delta).sum::<f64>() / individuals.len() as f64;
    Ok(FairnessReport {
        cdp,
        n0: originals.len(),
        n1: groups.target_size,
        model: model.kind(),
        individuals: keep_individuals.then_some(individuals),
    })
}

/// `1` where the value exceeds the median of `values`, else `0`.
pub fn median_indicator(values: &[f64]) -> Vec<f64> {
    let Some(m) = crate::stats::median(values) else {
        return Vec::new();
    };
    values.iter().map(|&v| if v > m { 1.0 } else { 0.0 }).collect()
}

/// Leaves 0/1 targets alone and binarizes anything else at its median.
pub fn binary_target(values: &[f64]) -> (Vec<f64>, bool) {
    if values.iter().all(|&v| v == 0.0 || v == 1.0) {
        (values.to_vec(), false)
    } else {
        (median_indicator(values), true)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seqtransport::StepRecord;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn demo_model() -> LogisticModel {
        LogisticModel::new(vec!["x1".into(), "x2".into()], vec![0.5, 0.5], 0.0, Some(-1.0)).unwrap()
    }

    fn result(original: Vec<f64>, transported: Vec<f64>) -> CounterfactualResult {
        let variables = vec!["x1".to_string(), "x2".to_string()];
        let steps = variables
            .iter()
            .enumerate()
            .map(|(j, v)| StepRecord {
                variable: v.clone(),
                parents: vec![],
                source_parents: vec![],
                target_parents: vec![],
                level: 0.5,
                value: original[j],
                transported: transported[j],
                widenings: 0,
            })
            .collect();
        CounterfactualResult {
            variables,
            original,
            transported,
            steps,
            warnings: vec![],
        }
    }

    #[test]
    fn demo_scores() {
        let m = demo_model();
        let s0 = m.score(&[-2.0, -1.0], 0.0).unwrap();
        let s1 = m.score(&[-2.0, -1.0], 1.0).unwrap();
        assert!((s0 - 1.0 / (1.0 + 1.5f64.exp())).abs() < 1e-15);
        assert_eq!(format!("{:.4}", s0), "0.1824");
        assert_eq!(format!("{:.5}", s1), "0.07586");
        assert!(((s1 - s0) * 100.0 + 10.66).abs() < 0.01);
        let zero = LogisticModel::new(vec!["a".into()], vec![0.0], 0.0, None).unwrap();
        assert_eq!(zero.score(&[123.0], 1.0).unwrap(), 0.5);
        assert!(m.score(&[1.0], 0.0).is_err());
        let huge = LogisticModel::new(vec!["a".into()], vec![1e6], 0.0, None).unwrap();
        let s = huge.score(&[1.0], 0.0).unwrap();
        assert!(s > 0.0 && s < 1.0);
    }

    #[test]
    fn decomposition_telescopes() {
        let m = demo_model();
        let r = result(vec![-2.0, -1.0], vec![-0.4, 0.9]);
        let path = decompose_individual(&m, &r, 0.0, 1.0).unwrap();
        assert_eq!(path.steps.len(), 3);
        assert_eq!(path.steps[0].label, CETERIS_PARIBUS_LABEL);
        assert_eq!(path.steps[1].label, "x1");
        assert!((path.initial() - 0.18242552380635635).abs() < 1e-15);
        assert!((path.delta_sum() - path.total()).abs() <= 4.0 * f64::EPSILON);
        for w in path.steps.windows(2) {
            assert_eq!(w[0].after, w[1].before);
        }

        let same = result(vec![-2.0, -1.0], vec![-2.0, -1.0]);
        let path = decompose_individual(&m, &same, 0.0, 1.0).unwrap();
        assert!(path.steps[0].delta != 0.0);
        assert!(path.steps[1..].iter().all(|s| s.delta == 0.0));

        let unaware = LogisticModel::new(vec!["x2".into()], vec![1.3], -0.2, None).unwrap();
        let path = decompose_individual(&unaware, &r, 0.0, 1.0).unwrap();
        assert_eq!(path.steps[0].delta, 0.0);
        assert_eq!(path.steps[1].delta, 0.0);

        let stranger = LogisticModel::new(vec!["z".into()], vec![1.0], 0.0, None).unwrap();
        assert!(decompose_individual(&stranger, &r, 0.0, 1.0).is_err());
    }

    #[test]
    fn cdp_basics() {
        let vars = vec!["x1".to_string(), "x2".to_string()];
        let rows = vec![vec![0.1, 0.2], vec![-1.0, 2.0], vec![0.5, 0.5]];
        let unaware = LogisticModel::new(vars.clone(), vec![0.7, -0.3], 0.1, None).unwrap();
        let r = cdp(&unaware, &vars, &rows, &rows, AuditGroups::default(), true).unwrap();
        assert_eq!(r.cdp, 0.0);
        assert_eq!(r.n0, 3);
        assert_eq!(r.model, ModelKind::Unaware);
        assert_eq!(r.individuals.as_ref().unwrap().len(), 3);

        let m = demo_model();
        let moved: Vec<Vec<f64>> = rows.iter().map(|r| vec![r[0] + 1.0, r[1] + 0.5]).collect();
        let all = cdp(&m, &vars, &rows, &moved, AuditGroups::default(), true).unwrap();
        let mean = all.individuals.as_ref().unwrap().iter().map(|i| i.delta).sum::<f64>() / 3.0;
        assert!((all.cdp - mean).abs() < 1e-15);
        let a = cdp(&m, &vars, &rows[..1], &moved[..1], AuditGroups::default(), false).unwrap();
        let b = cdp(&m, &vars, &rows[1..], &moved[1..], AuditGroups::default(), false).unwrap();
        assert!(((a.cdp + 2.0 * b.cdp) / 3.0 - all.cdp).abs() < 1e-15);
        assert!(a.individuals.is_none());

        assert!(cdp(&m, &vars, &rows, &moved[..2], AuditGroups::default(), false).is_err());
        assert!(matches!(
            cdp(&m, &vars, &[], &[], AuditGroups::default(), false),
            Err(FairnessError::EmptyGroup)
        ));
    }

    #[test]
    fn report_json_shape() {
        let r = FairnessReport {
            cdp: 0.25,
            n0: 2,
            n1: 3,
            model: ModelKind::Aware,
            individuals: None,
        };
        let v = serde_json::to_value(&r).unwrap();
        assert_eq!(v, serde_json::json!({"cdp": 0.25, "n0": 2, "n1": 3, "model": "aware"}));
    }

    fn logistic_data(n: usize, beta: &[f64], seed: u64) -> (Dataset, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::with_capacity(n);
        let mut y = Vec::with_capacity(n);
        let mut s = Vec::with_capacity(n);
        for _ in 0..n {
            let x1: f64 = rng.sample(StandardNormal);
            let x2: f64 = 3.0 + 2.0 * rng.sample::<f64, _>(StandardNormal);
            let si = if rng.gen_bool(0.5) { 1.0 } else { 0.0 };
            let eta = beta[0] + beta[1] * x1 + beta[2] * x2 + beta[3] * si;
            y.push(if rng.gen::<f64>() < sigmoid(eta) { 1.0 } else { 0.0 });
            rows.push(vec![x1, x2]);
            s.push(si);
        }
        (Dataset::from_rows(&["x1", "x2"], &rows, "s", s).unwrap(), y)
    }

    #[test]
    fn recovers_known_coefficients() {
        let beta = [-0.5, 1.2, -0.4, 0.8];
        let (d, y) = logistic_data(10_000, &beta, 1);
        let fit = fit_logistic(&d, &y, &["x1", "x2"], true, LogisticOptions::default()).unwrap();
        let m = &fit.model;
        assert!(m.converged);
        assert!((m.intercept - beta[0]).abs() < 0.1, "{m:?}");
        assert!((m.coefficients[0] - beta[1]).abs() < 0.1, "{m:?}");
        assert!((m.coefficients[1] - beta[2]).abs() < 0.1, "{m:?}");
        assert!((m.sensitive_coefficient.unwrap() - beta[3]).abs() < 0.1, "{m:?}");
    }

    #[test]
    fn null_model_and_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 4000;
        let rows: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.sample(StandardNormal), 7.0]).collect();
        let y: Vec<f64> = (0..n).map(|i| (i % 2) as f64).collect();
        let s = vec![0.0; n];
        let d = Dataset::from_rows(&["noise", "flat"], &rows, "s", s).unwrap();
        let fit = fit_logistic(&d, &y, &["noise", "flat"], true, LogisticOptions::default()).unwrap();
        assert!(fit.model.intercept.abs() < 0.1);
        assert!(fit.model.coefficients[0].abs() < 0.1);
        assert_eq!(fit.model.coefficients[1], 0.0);
        assert_eq!(fit.warnings.len(), 2, "{:?}", fit.warnings);

        let bad = vec![0.5; n];
        assert!(matches!(
            fit_logistic(&d, &bad, &["noise"], false, LogisticOptions::default()),
            Err(FairnessError::NonBinaryTarget(_))
        ));
        assert!(fit_logistic(&d, &y, &[], false, LogisticOptions::default()).is_err());
        assert!(fit_logistic(&d, &y, &["flat"], false, LogisticOptions::default()).is_err());
        assert!(fit_logistic(&d, &y, &["nope"], false, LogisticOptions::default()).is_err());
    }

    #[test]
    fn separable_data_does_not_converge() {
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64]).collect();
        let y: Vec<f64> = (0..20).map(|i| if i < 10 { 0.0 } else { 1.0 }).collect();
        let d = Dataset::from_rows(&["x"], &rows, "s", vec![0.0; 20]).unwrap();
        let fit = fit_logistic(&d, &y, &["x"], false, LogisticOptions::default()).unwrap();
        assert!(!fit.model.converged);
        assert_eq!(fit.model.iterations, 100);
        assert!(fit.model.coefficients[0].is_finite() && fit.model.coefficients[0] > 0.0);
        let s = fit.model.score(&[100.0], 0.0).unwrap();
        assert!(s > 0.0 && s < 1.0);
    }

    #[test]
    fn target_binarization() {
        assert_eq!(median_indicator(&[1.0, 5.0, 3.0, 2.0]), vec![0.0, 1.0, 1.0, 0.0]);
        assert_eq!(binary_target(&[0.0, 1.0]), (vec![0.0, 1.0], false));
        assert_eq!(binary_target(&[0.2, 0.9, 0.5]).0, vec![0.0, 1.0, 0.0]);
    }
}
