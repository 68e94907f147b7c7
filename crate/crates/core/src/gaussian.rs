//! Closed-form Gaussian transports.
//!
//! These are features in their own right (the `oracle` CLI exposes them) and
//! the reference values against which the kernel-based estimators are tested:
//!
//! * univariate OT `x -> mu1 + (s1/s0)(x - mu0)`;
//! * multivariate OT `x -> mu1 + A(x - mu0)` with `A Sigma0 A = Sigma1`;
//! * lower-triangular (Cholesky / Knothe) maps and conditional 2D transport;
//! * sequential conditional transport along a DAG;
//! * rotated directional transports;
//! * the precision-matrix Markov check;
//! * a seedable sampler.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dag::{topological_order, CausalDag, DagError};
use crate::linalg::{self, LinalgError};

pub use crate::linalg::{cholesky_lower, sqrt_psd};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GaussianError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Dag(#[from] DagError),
    #[error("standard deviation must be positive, got {0}")]
    NonPositiveSigma(f64),
    #[error("correlation must lie in (-1, 1), got {0}")]
    InvalidCorrelation(f64),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("covariance is not positive definite")]
    NotPositiveDefinite,
    #[error("sample count must be at least 1")]
    EmptySample,
    #[error("cannot parse 2d parameters `{0}`: expected mu_x,mu_y,sigma_x,sigma_y,r")]
    Parse(String),
}

pub type Result<T, E = GaussianError> = std::result::Result<T, E>;

/// Mean vector and symmetric positive definite covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GaussianSpecDef", into = "GaussianSpecDef")]
pub struct GaussianSpec {
    mean: DVector<f64>,
    covariance: DMatrix<f64>,
}

#[derive(Serialize, Deserialize)]
struct GaussianSpecDef {
    mean: Vec<f64>,
    covariance: Vec<Vec<f64>>,
}

impl TryFrom<GaussianSpecDef> for GaussianSpec {
    type Error = GaussianError;

    fn try_from(def: GaussianSpecDef) -> Result<Self> {
        let d = def.mean.len();
        if def.covariance.len() != d {
            return Err(GaussianError::DimensionMismatch {
                expected: d,
                got: def.covariance.len(),
            });
        }
        if let Some(row) = def.covariance.iter().find(|r| r.len() != d) {
            return Err(GaussianError::DimensionMismatch {
                expected: d,
                got: row.len(),
            });
        }
        let cov = DMatrix::from_fn(d, d, |i, j| def.covariance[i][j]);
        GaussianSpec::new(DVector::from_vec(def.mean), cov)
    }
}

impl From<GaussianSpec> for GaussianSpecDef {
    fn from(spec: GaussianSpec) -> Self {
        let d = spec.dim();
        GaussianSpecDef {
            mean: spec.mean.iter().copied().collect(),
            covariance: (0..d)
                .map(|i| (0..d).map(|j| spec.covariance[(i, j)]).collect())
                .collect(),
        }
    }
}

impl GaussianSpec {
    pub fn new(mean: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if covariance.nrows() != d || covariance.ncols() != d {
            return Err(GaussianError::DimensionMismatch {
                expected: d,
                got: covariance.nrows(),
            });
        }
        let (values, _) = linalg::symmetric_eigen(&covariance)?;
        if values.iter().any(|&l| !(l > 0.0)) {
            return Err(GaussianError::NotPositiveDefinite);
        }
        Ok(Self { mean, covariance })
    }

    pub fn from_slices(mean: &[f64], covariance_rows: &[&[f64]]) -> Result<Self> {
        let d = mean.len();
        if covariance_rows.len() != d || covariance_rows.iter().any(|r| r.len() != d) {
            return Err(GaussianError::DimensionMismatch {
                expected: d,
                got: covariance_rows.len(),
            });
        }
        Self::new(
            DVector::from_column_slice(mean),
            DMatrix::from_fn(d, d, |i, j| covariance_rows[i][j]),
        )
    }

    /// Standard normal in `d` dimensions.
    pub fn standard(d: usize) -> Self {
        Self {
            mean: DVector::zeros(d),
            covariance: DMatrix::identity(d, d),
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    /// `B = Sigma^{-1}`.
    pub fn precision(&self) -> Result<DMatrix<f64>> {
        Ok(linalg::inverse_pd(&self.covariance)?)
    }

    /// Mean and variance of component `target` given `x[given[k]] = values[k]`.
    pub fn conditional(&self, target: usize, given: &[usize], values: &[f64]) -> Result<(f64, f64)> {
        if given.len() != values.len() {
            return Err(GaussianError::DimensionMismatch {
                expected: given.len(),
                got: values.len(),
            });
        }
        let mu = self.mean[target];
        let var = self.covariance[(target, target)];
        if given.is_empty() {
            return Ok((mu, var));
        }
        let k = given.len();
        let s_pp = DMatrix::from_fn(k, k, |a, b| self.covariance[(given[a], given[b])]);
        let s_jp = DVector::from_fn(k, |a, _| self.covariance[(target, given[a])]);
        let dev = DVector::from_fn(k, |a, _| values[a] - self.mean[given[a]]);
        let l = linalg::cholesky_lower(&s_pp)?;
        let alpha = linalg::cholesky_solve(&l, &dev);
        let beta = linalg::cholesky_solve(&l, &s_jp);
        Ok((mu + s_jp.dot(&alpha), var - s_jp.dot(&beta)))
    }
}

/// Parameters of a bivariate normal: means, standard deviations and correlation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gaussian2dParams {
    pub mu_x: f64,
    pub mu_y: f64,
    pub sigma_x: f64,
    pub sigma_y: f64,
    pub r: f64,
}

impl Gaussian2dParams {
    pub fn new(mu_x: f64, mu_y: f64, sigma_x: f64, sigma_y: f64, r: f64) -> Result<Self> {
        let p = Self {
            mu_x,
            mu_y,
            sigma_x,
            sigma_y,
            r,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn standardized(r: f64) -> Result<Self> {
        Self::new(0.0, 0.0, 1.0, 1.0, r)
    }

    pub fn validate(&self) -> Result<()> {
        for s in [self.sigma_x, self.sigma_y] {
            if !(s > 0.0 && s.is_finite()) {
                return Err(GaussianError::NonPositiveSigma(s));
            }
        }
        if !(self.r > -1.0 && self.r < 1.0) {
            return Err(GaussianError::InvalidCorrelation(self.r));
        }
        Ok(())
    }

    /// Same law with the coordinates exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            mu_x: self.mu_y,
            mu_y: self.mu_x,
            sigma_x: self.sigma_y,
            sigma_y: self.sigma_x,
            r: self.r,
        }
    }

    fn moments(&self) -> Moments2 {
        let c = self.r * self.sigma_x * self.sigma_y;
        Moments2 {
            mean: [self.mu_x, self.mu_y],
            cov: [
                [self.sigma_x * self.sigma_x, c],
                [c, self.sigma_y * self.sigma_y],
            ],
        }
    }

    pub fn to_spec(&self) -> GaussianSpec {
        let m = self.moments();
        GaussianSpec {
            mean: DVector::from_column_slice(&m.mean),
            covariance: DMatrix::from_fn(2, 2, |i, j| m.cov[i][j]),
        }
    }

    pub fn from_spec(spec: &GaussianSpec) -> Result<Self> {
        if spec.dim() != 2 {
            return Err(GaussianError::DimensionMismatch {
                expected: 2,
                got: spec.dim(),
            });
        }
        let c = spec.covariance();
        let (sx, sy) = (c[(0, 0)].sqrt(), c[(1, 1)].sqrt());
        Self::new(spec.mean()[0], spec.mean()[1], sx, sy, c[(0, 1)] / (sx * sy))
    }
}

impl fmt::Display for Gaussian2dParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{},{},{},{},{}",
            self.mu_x, self.mu_y, self.sigma_x, self.sigma_y, self.r
        )
    }
}

impl FromStr for Gaussian2dParams {
    type Err = GaussianError;

    /// `mu_x,mu_y,sigma_x,sigma_y,r`
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<f64> = s
            .split(',')
            .map(|t| t.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| GaussianError::Parse(s.to_string()))?;
        match parts.as_slice() {
            &[mx, my, sx, sy, r] => Self::new(mx, my, sx, sy, r),
            _ => Err(GaussianError::Parse(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Moments2 {
    mean: [f64; 2],
    cov: [[f64; 2]; 2],
}

impl Moments2 {
    /// Law of `R X` for the rotation by `angle`.
    fn rotated(&self, angle: f64) -> Self {
        let r = rotation(angle);
        let mean = apply2(&r, self.mean);
        let mut rc = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                rc[i][j] = r[i][0] * self.cov[0][j] + r[i][1] * self.cov[1][j];
            }
        }
        let mut cov = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                cov[i][j] = rc[i][0] * r[j][0] + rc[i][1] * r[j][1];
            }
        }
        Self { mean, cov }
    }
}

fn rotation(angle: f64) -> [[f64; 2]; 2] {
    let (s, c) = angle.sin_cos();
    [[c, -s], [s, c]]
}

fn apply2(r: &[[f64; 2]; 2], v: [f64; 2]) -> [f64; 2] {
    [r[0][0] * v[0] + r[0][1] * v[1], r[1][0] * v[0] + r[1][1] * v[1]]
}

/// x first, then y given x.
fn lower_triangular_2d(m0: &Moments2, m1: &Moments2, (x, y): (f64, f64)) -> (f64, f64) {
    let [mx0, my0] = m0.mean;
    let [mx1, my1] = m1.mean;
    let (vx0, vx1) = (m0.cov[0][0], m1.cov[0][0]);
    let x_star = mx1 + (vx1 / vx0).sqrt() * (x - mx0);
    let cond_mean0 = my0 + m0.cov[0][1] / vx0 * (x - mx0);
    let cond_var0 = m0.cov[1][1] - m0.cov[0][1] * m0.cov[0][1] / vx0;
    let cond_mean1 = my1 + m1.cov[0][1] / vx1 * (x_star - mx1);
    let cond_var1 = m1.cov[1][1] - m1.cov[0][1] * m1.cov[0][1] / vx1;
    let y_star = cond_mean1 + (cond_var1 / cond_var0).sqrt() * (y - cond_mean0);
    (x_star, y_star)
}

/// `T(x) = mu1 + (sigma1/sigma0)(x - mu0)`.
pub fn univariate_gaussian_ot(mu0: f64, sigma0: f64, mu1: f64, sigma1: f64, x: f64) -> Result<f64> {
    for s in [sigma0, sigma1] {
        if !(s > 0.0 && s.is_finite()) {
            return Err(GaussianError::NonPositiveSigma(s));
        }
    }
    Ok(mu1 + sigma1 / sigma0 * (x - mu0))
}

/// Affine optimal transport map `x -> mean1 + A (x - mean0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianOtMap {
    pub matrix: DMatrix<f64>,
    pub mean0: DVector<f64>,
    pub mean1: DVector<f64>,
}

impl GaussianOtMap {
    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.mean1 + &self.matrix * (x - &self.mean0)
    }

    /// `b` in the form `x -> A x + b`.
    pub fn translation(&self) -> DVector<f64> {
        &self.mean1 - &self.matrix * &self.mean0
    }
}

/// `A = S0^{-1/2} (S0^{1/2} S1 S0^{1/2})^{1/2} S0^{-1/2}`.
pub fn gaussian_ot_map(spec0: &GaussianSpec, spec1: &GaussianSpec) -> Result<GaussianOtMap> {
    if spec0.dim() != spec1.dim() {
        return Err(GaussianError::DimensionMismatch {
            expected: spec0.dim(),
            got: spec1.dim(),
        });
    }
    let root0 = linalg::sqrt_psd(&spec0.covariance)?;
    let inv_root0 = linalg::inv_sqrt_pd(&spec0.covariance)?;
    let middle = &root0 * &spec1.covariance * &root0;
    let middle = (&middle + middle.transpose()) * 0.5;
    let a = &inv_root0 * linalg::sqrt_psd(&middle)? * &inv_root0;
    Ok(GaussianOtMap {
        matrix: (&a + a.transpose()) * 0.5,
        mean0: spec0.mean.clone(),
        mean1: spec1.mean.clone(),
    })
}

/// Lower-triangular conditional transport: `x` by univariate OT, then `y`
/// by univariate OT between the conditional laws `Y | X = x` (group 0) and
/// `Y | X = T_x(x)` (group 1).
pub fn conditional_gaussian_transport_2d(
    p0: &Gaussian2dParams,
    p1: &Gaussian2dParams,
    point: (f64, f64),
) -> Result<(f64, f64)> {
    p0.validate()?;
    p1.validate()?;
    Ok(lower_triangular_2d(&p0.moments(), &p1.moments(), point))
}

/// Upper-triangular variant: `y` first, then `x` given `y`.
pub fn upper_triangular_transport_2d(
    p0: &Gaussian2dParams,
    p1: &Gaussian2dParams,
    (x, y): (f64, f64),
) -> Result<(f64, f64)> {
    let (ys, xs) = conditional_gaussian_transport_2d(&p0.swapped(), &p1.swapped(), (y, x))?;
    Ok((xs, ys))
}

/// Transport along direction `u = (cos t, sin t)` first, then along `u_perp`
/// conditionally. Computed by rotating laws and point by `-theta`, applying
/// the lower-triangular map, and rotating back.
pub fn rotated_transport_2d(
    p0: &Gaussian2dParams,
    p1: &Gaussian2dParams,
    theta: f64,
    point: (f64, f64),
) -> Result<(f64, f64)> {
    p0.validate()?;
    p1.validate()?;
    let m0 = p0.moments().rotated(-theta);
    let m1 = p1.moments().rotated(-theta);
    let q = apply2(&rotation(-theta), [point.0, point.1]);
    let (a, b) = lower_triangular_2d(&m0, &m1, (q[0], q[1]));
    let back = apply2(&rotation(theta), [a, b]);
    Ok((back[0], back[1]))
}

/// One row of a rotation sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepPoint {
    pub theta: f64,
    pub x_star: f64,
    pub y_star: f64,
}

/// Images of `point` for `n` equally spaced directions `theta = 2 pi i / n`.
pub fn rotation_sweep(
    p0: &Gaussian2dParams,
    p1: &Gaussian2dParams,
    point: (f64, f64),
    n: usize,
) -> Result<Vec<SweepPoint>> {
    (0..n)
        .map(|i| {
            let theta = 2.0 * PI * i as f64 / n as f64;
            let (x_star, y_star) = rotated_transport_2d(p0, p1, theta, point)?;
            Ok(SweepPoint {
                theta,
                x_star,
                y_star,
            })
        })
        .collect()
}

/// Sequential conditional Gaussian transport.
///
/// `order` lists coordinates in transport order; `parents[j]` are the
/// coordinates that `j` is conditioned on (all earlier in `order`). Each
/// coordinate moves by univariate OT between `X_j | X_P = x_P` under `spec0`
/// and `X_j | X_P = x*_P` under `spec1`.
pub fn sequential_gaussian_transport(
    spec0: &GaussianSpec,
    spec1: &GaussianSpec,
    order: &[usize],
    parents: &[Vec<usize>],
    x: &[f64],
) -> Result<Vec<f64>> {
    let d = spec0.dim();
    for got in [spec1.dim(), x.len(), parents.len()] {
        if got != d {
            return Err(GaussianError::DimensionMismatch { expected: d, got });
        }
    }
    let mut out = x.to_vec();
    for &j in order {
        let pa = &parents[j];
        let given0: Vec<f64> = pa.iter().map(|&p| x[p]).collect();
        let given1: Vec<f64> = pa.iter().map(|&p| out[p]).collect();
        let (m0, v0) = spec0.conditional(j, pa, &given0)?;
        let (m1, v1) = spec1.conditional(j, pa, &given1)?;
        out[j] = m1 + (v1 / v0).sqrt() * (x[j] - m0);
    }
    Ok(out)
}

/// [`sequential_gaussian_transport`] driven by a causal graph. The specs are
/// over the graph's transported nodes in declaration order; the sensitive
/// attribute is conditioned on implicitly through the choice of spec.
pub fn sequential_gaussian_on_dag(
    spec0: &GaussianSpec,
    spec1: &GaussianSpec,
    dag: &CausalDag,
    x: &[f64],
) -> Result<Vec<f64>> {
    let nodes = dag.transported_nodes();
    let slot = |node: usize| nodes.iter().position(|&n| n == node);
    let order = topological_order(dag)?;
    let order: Vec<usize> = order
        .variables().iter().filter_map(|&n| slot(n)).collect();
    let parents: Vec<Vec<usize>> = nodes
        .iter()
        .map(|&n| {
            dag.parents(n)
                .unwrap_or_default()
                .into_iter()
                .filter_map(slot)
                .collect()
        })
        .collect();
    sequential_gaussian_transport(spec0, spec1, &order, &parents, x)
}

/// Outcome of [`markov_precision_check`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarkovCheck {
    pub is_markov: bool,
    /// Node pairs `(i, j)`, `i < j`, with no edge but `|B_ij| > tol`.
    pub violations: Vec<(usize, usize)>,
    pub violation_names: Vec<(String, String)>,
}

/// Checks that the precision matrix vanishes (within `tol`) on every pair of
/// nodes not joined by an edge. The spec covers every node except the outcome,
/// in declaration order, or only the transported nodes (a within-group law).
pub fn markov_precision_check(spec: &GaussianSpec, dag: &CausalDag, tol: f64) -> Result<MarkovCheck> {
    let mut nodes: Vec<usize> = (0..dag.len()).filter(|&i| Some(i) != dag.outcome()).collect();
    if spec.dim() == dag.transported_nodes().len() {
        nodes = dag.transported_nodes();
    }
    if spec.dim() != nodes.len() {
        return Err(GaussianError::DimensionMismatch {
            expected: nodes.len(),
            got: spec.dim(),
        });
    }
    let b = spec.precision()?;
    let mut violations = Vec::new();
    for a in 0..nodes.len() {
        for c in (a + 1)..nodes.len() {
            let (i, j) = (nodes[a], nodes[c]);
            if !dag.has_edge(i, j) && !dag.has_edge(j, i) && !(b[(a, c)].abs() <= tol) {
                violations.push((i, j));
            }
        }
    }
    let violation_names = violations
        .iter()
        .map(|&(i, j)| (dag.name(i).to_string(), dag.name(j).to_string()))
        .collect();
    Ok(MarkovCheck {
        is_markov: violations.is_empty(),
        violations,
        violation_names,
    })
}

/// `n` draws from `spec`, one row per draw. Deterministic in `seed`.
pub fn sample_gaussian(spec: &GaussianSpec, n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    sample_gaussian_stream(spec, n, seed, 0)
}

/// As [`sample_gaussian`] on an independent ChaCha stream of the same seed.
pub fn sample_gaussian_stream(
    spec: &GaussianSpec,
    n: usize,
    seed: u64,
    stream: u64,
) -> Result<Vec<Vec<f64>>> {
    if n == 0 {
        return Err(GaussianError::EmptySample);
    }
    let l = linalg::cholesky_lower(&spec.covariance)?;
    let d = spec.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    Ok((0..n)
        .map(|_| {
            let z = DVector::from_iterator(d, (0..d).map(|_| StandardNormal.sample(&mut rng)));
            (&spec.mean + &l * z).iter().copied().collect()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dag::parse_dag;
    use rand::Rng;

    fn mat(rows: &[&[f64]]) -> DMatrix<f64> {
        DMatrix::from_fn(rows.len(), rows[0].len(), |i, j| rows[i][j])
    }

    fn random_pd(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        let w = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        &w * w.transpose() + DMatrix::identity(n, n) * 0.2
    }

    #[test]
    fn univariate_ot() {
        assert_eq!(univariate_gaussian_ot(0.0, 1.0, 0.0, 1.0, 0.7).unwrap(), 0.7);
        assert_eq!(univariate_gaussian_ot(0.0, 1.0, 1.0, 2.0, 0.0).unwrap(), 1.0);
        assert_eq!(univariate_gaussian_ot(0.0, 1.0, 1.0, 2.0, 1.0).unwrap(), 3.0);
        assert_eq!(univariate_gaussian_ot(-3.0, 0.4, 5.0, 9.0, -3.0).unwrap(), 5.0);
        assert!(univariate_gaussian_ot(0.0, 0.0, 0.0, 1.0, 1.0).is_err());
        assert!(univariate_gaussian_ot(0.0, 1.0, 0.0, -1.0, 1.0).is_err());
    }

    #[test]
    fn correlation_square_root_closed_form() {
        let r: f64 = 0.6;
        let s = sqrt_psd(&mat(&[&[1.0, r], &[r, 1.0]])).unwrap();
        let a = ((1.0 - (1.0 - r * r).sqrt()) / 2.0).sqrt();
        assert!((s[(0, 1)] - a).abs() < 1e-12);
        assert!((s[(0, 0)] - (1.0 - a * a).sqrt()).abs() < 1e-12);
        assert!((a - 0.1f64.sqrt()).abs() < 1e-12);
        assert!((s[(0, 1)] - 0.31623).abs() < 1e-5);
        assert!((s[(0, 0)] - 0.94868).abs() < 1e-5);
        let id = sqrt_psd(&DMatrix::identity(3, 3)).unwrap();
        assert!((id - DMatrix::identity(3, 3)).norm() < 1e-15);
    }

    #[test]
    fn ot_map_identities() {
        let sigma = mat(&[&[2.0, 0.5], &[0.5, 1.0]]);
        let spec1 = GaussianSpec::new(DVector::zeros(2), sigma.clone()).unwrap();
        let map = gaussian_ot_map(&GaussianSpec::standard(2), &spec1).unwrap();
        assert!((&map.matrix - sqrt_psd(&sigma).unwrap()).norm() < 1e-12);

        let same = gaussian_ot_map(&spec1, &spec1).unwrap();
        assert!((&same.matrix - DMatrix::identity(2, 2)).norm() < 1e-10);
        assert!(same.translation().norm() < 1e-10);

        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s0 = GaussianSpec::new(DVector::from_vec(vec![1.0, -1.0]), random_pd(2, &mut rng)).unwrap();
        let s1 = GaussianSpec::new(DVector::from_vec(vec![0.0, 3.0]), random_pd(2, &mut rng)).unwrap();
        let map = gaussian_ot_map(&s0, &s1).unwrap();
        let a = &map.matrix;
        assert!((a * s0.covariance() * a - s1.covariance()).norm() < 1e-8);
        assert!((a - a.transpose()).norm() < 1e-14);
        let (vals, _) = linalg::symmetric_eigen(a).unwrap();
        assert!(vals.iter().all(|&v| v >= -1e-10));
        // mean goes to mean
        assert!((map.apply(s0.mean()) - s1.mean()).norm() < 1e-12);
    }

    #[test]
    fn cholesky_of_correlation() {
        let r: f64 = -0.35;
        let l = cholesky_lower(&mat(&[&[1.0, r], &[r, 1.0]])).unwrap();
        assert!((l - mat(&[&[1.0, 0.0], &[r, (1.0 - r * r).sqrt()]])).norm() < 1e-15);
    }

    /// The lower-triangular display written in terms of (mu, sigma, r), valid
    /// as printed when sigma_x = 1 in both groups.
    fn printed_display(p0: &Gaussian2dParams, p1: &Gaussian2dParams, x0: f64, y0: f64) -> (f64, f64) {
        let tx = p1.mu_x + p1.sigma_x / p0.sigma_x * (x0 - p0.mu_x);
        let num = p0.sigma_x.powi(2) * (p1.sigma_y.powi(2) * p1.sigma_x.powi(2) - p1.r.powi(2) * p1.sigma_y.powi(2));
        let den = (p0.sigma_y.powi(2) * p0.sigma_x.powi(2) - p0.r.powi(2) * p0.sigma_y.powi(2)) * p1.sigma_x.powi(2);
        let ty = p1.mu_y
            + p1.r * p1.sigma_y / p1.sigma_x * (tx - p1.mu_x)
            + (num / den).sqrt() * (y0 - p0.mu_y - p0.r * p0.sigma_y / p0.sigma_x * (x0 - p0.mu_x));
        (tx, ty)
    }

    #[test]
    fn conditional_2d_matches_display_for_unit_sigma_x() {
        let p0 = Gaussian2dParams::new(0.5, -1.0, 1.0, 1.7, 0.3).unwrap();
        let p1 = Gaussian2dParams::new(2.0, 0.5, 1.0, 0.6, -0.55).unwrap();
        for &(x, y) in &[(0.0, 0.0), (1.0, 1.0), (-2.0, 0.4), (3.1, -2.2)] {
            let got = conditional_gaussian_transport_2d(&p0, &p1, (x, y)).unwrap();
            let want = printed_display(&p0, &p1, x, y);
            assert!((got.0 - want.0).abs() < 1e-12 && (got.1 - want.1).abs() < 1e-12);
        }
        let p0 = Gaussian2dParams::standardized(0.3).unwrap();
        let p1 = Gaussian2dParams::standardized(0.7).unwrap();
        let (xs, ys) = conditional_gaussian_transport_2d(&p0, &p1, (1.0, 1.0)).unwrap();
        let want = printed_display(&p0, &p1, 1.0, 1.0);
        assert!((xs - want.0).abs() < 1e-14 && (ys - want.1).abs() < 1e-14);
        // hand evaluation: x* = 1, y* = 0.7 + sqrt(0.51/0.91) * 0.7
        assert!((ys - (0.7 + (0.51f64 / 0.91).sqrt() * 0.7)).abs() < 1e-14);
    }

    #[test]
    fn conditional_2d_special_cases() {
        let p = Gaussian2dParams::new(1.0, 2.0, 0.5, 3.0, 0.8).unwrap();
        let (x, y) = conditional_gaussian_transport_2d(&p, &p, (0.3, -4.0)).unwrap();
        assert!((x - 0.3).abs() < 1e-14 && (y + 4.0).abs() < 1e-13);

        let p0 = Gaussian2dParams::new(0.0, 1.0, 2.0, 0.5, 0.0).unwrap();
        let p1 = Gaussian2dParams::new(3.0, -1.0, 1.0, 1.5, 0.0).unwrap();
        let (x, y) = conditional_gaussian_transport_2d(&p0, &p1, (1.0, 2.0)).unwrap();
        assert!((x - univariate_gaussian_ot(0.0, 2.0, 3.0, 1.0, 1.0).unwrap()).abs() < 1e-14);
        assert!((y - univariate_gaussian_ot(1.0, 0.5, -1.0, 1.5, 2.0).unwrap()).abs() < 1e-14);

        assert!(Gaussian2dParams::new(0.0, 0.0, 1.0, 1.0, 1.0).is_err());
        assert!(Gaussian2dParams::new(0.0, 0.0, 0.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn cholesky_map_is_sequential_transport() {
        let sigma = mat(&[&[2.5, -0.9], &[-0.9, 0.8]]);
        let l = cholesky_lower(&sigma).unwrap();
        let spec = GaussianSpec::new(DVector::zeros(2), sigma).unwrap();
        let p0 = Gaussian2dParams::standardized(0.0).unwrap();
        let p1 = Gaussian2dParams::from_spec(&spec).unwrap();
        for i in 0..10 {
            for j in 0..10 {
                let (x, y) = (-3.0 + 0.6 * i as f64, -2.5 + 0.55 * j as f64);
                let lx = &l * DVector::from_vec(vec![x, y]);
                let (a, b) = conditional_gaussian_transport_2d(&p0, &p1, (x, y)).unwrap();
                assert!((a - lx[0]).abs() < 1e-10 && (b - lx[1]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn rotated_endpoints() {
        let p0 = Gaussian2dParams::new(-1.0, -1.0, 1.0, 1.2, 0.5).unwrap();
        let p1 = Gaussian2dParams::new(1.5, 1.0, 0.7, 1.4, -0.3).unwrap();
        let pt = (-2.0, -1.0);
        assert_eq!(
            rotated_transport_2d(&p0, &p1, 0.0, pt).unwrap(),
            conditional_gaussian_transport_2d(&p0, &p1, pt).unwrap()
        );
        let up = upper_triangular_transport_2d(&p0, &p1, pt).unwrap();
        let rot = rotated_transport_2d(&p0, &p1, PI / 2.0, pt).unwrap();
        assert!((up.0 - rot.0).abs() < 1e-12 && (up.1 - rot.1).abs() < 1e-12);
        for k in 0..16 {
            let t = k as f64 * 0.4;
            let (x, y) = rotated_transport_2d(&p0, &p0, t, (0.3, 0.9)).unwrap();
            assert!((x - 0.3).abs() < 1e-12 && (y - 0.9).abs() < 1e-12);
        }
        let sweep = rotation_sweep(&p0, &p1, pt, 64).unwrap();
        assert_eq!(sweep.len(), 64);
        assert_eq!(sweep[0].theta, 0.0);
        assert!((sweep[16].theta - PI / 2.0).abs() < 1e-15);
        assert!((sweep[16].x_star - up.0).abs() < 1e-12);
    }

    #[test]
    fn rotated_frame_consistency() {
        // Rotating, transporting with the general sequential map in the rotated
        // frame, and rotating back equals rotated_transport_2d.
        let p0 = Gaussian2dParams::new(0.2, -0.4, 1.3, 0.8, 0.45).unwrap();
        let p1 = Gaussian2dParams::new(2.0, 1.0, 0.9, 1.6, -0.2).unwrap();
        for k in 0..12 {
            let theta = k as f64 * PI / 6.0 + 0.1;
            let rot = |spec: &GaussianSpec| {
                let r = DMatrix::from_fn(2, 2, |i, j| rotation(-theta)[i][j]);
                GaussianSpec::new(&r * spec.mean(), &r * spec.covariance() * r.transpose()).unwrap()
            };
            let (s0, s1) = (rot(&p0.to_spec()), rot(&p1.to_spec()));
            let q = apply2(&rotation(-theta), [0.7, -1.1]);
            let moved = sequential_gaussian_transport(&s0, &s1, &[0, 1], &[vec![], vec![0]], &q).unwrap();
            let back = apply2(&rotation(theta), [moved[0], moved[1]]);
            let direct = rotated_transport_2d(&p0, &p1, theta, (0.7, -1.1)).unwrap();
            assert!((back[0] - direct.0).abs() < 1e-10 && (back[1] - direct.1).abs() < 1e-10);
        }
    }

    #[test]
    fn sequential_matches_2d_and_dag() {
        let p0 = Gaussian2dParams::new(0.0, 0.0, 1.0, 1.5, 0.4).unwrap();
        let p1 = Gaussian2dParams::new(1.0, -0.5, 2.0, 0.7, 0.8).unwrap();
        let (s0, s1) = (p0.to_spec(), p1.to_spec());
        let a = sequential_gaussian_transport(&s0, &s1, &[0, 1], &[vec![], vec![0]], &[0.4, -0.2]).unwrap();
        let b = conditional_gaussian_transport_2d(&p0, &p1, (0.4, -0.2)).unwrap();
        assert!((a[0] - b.0).abs() < 1e-12 && (a[1] - b.1).abs() < 1e-12);

        let dag_a = parse_dag("s -> x1\nx1 -> x2\ns -> x2\n@sensitive s").unwrap();
        let c = sequential_gaussian_on_dag(&s0, &s1, &dag_a, &[0.4, -0.2]).unwrap();
        assert!((c[0] - a[0]).abs() < 1e-15 && (c[1] - a[1]).abs() < 1e-15);

        let dag_b = parse_dag("s -> x1\ns -> x2\nx2 -> x1\n@sensitive s").unwrap();
        let d = sequential_gaussian_on_dag(&s0, &s1, &dag_b, &[0.4, -0.2]).unwrap();
        let u = upper_triangular_transport_2d(&p0, &p1, (0.4, -0.2)).unwrap();
        assert!((d[0] - u.0).abs() < 1e-12 && (d[1] - u.1).abs() < 1e-12);
    }

    #[test]
    fn markov_check_on_chain_scm() {
        // x1 = e1, x2 = 0.8 x1 + e2, x3 = -0.5 x2 + e3 with unit noise.
        let mut coef = DMatrix::<f64>::zeros(3, 3);
        coef[(1, 0)] = 0.8;
        coef[(2, 1)] = -0.5;
        let inv = (DMatrix::identity(3, 3) - coef).try_inverse().unwrap();
        let sigma = &inv * inv.transpose();
        let spec = GaussianSpec::new(DVector::zeros(3), sigma).unwrap();

        let chain = parse_dag("x1 -> x2\nx2 -> x3\n@sensitive x1").unwrap();
        let res = markov_precision_check(&spec, &chain, 1e-9).unwrap();
        assert!(res.is_markov, "{res:?}");

        let edgeless = CausalDag::new(vec!["x1".into(), "x2".into(), "x3".into()], &[], 0, None).unwrap();
        let res = markov_precision_check(&spec, &edgeless, 1e-9).unwrap();
        assert!(!res.is_markov);
        assert_eq!(res.violations, vec![(0, 1), (1, 2)]);
        assert_eq!(res.violation_names[0], ("x1".to_string(), "x2".to_string()));

        let diag = GaussianSpec::from_slices(&[0.0; 3], &[&[1.0, 0.0, 0.0], &[0.0, 2.0, 0.0], &[0.0, 0.0, 3.0]]).unwrap();
        assert!(markov_precision_check(&diag, &edgeless, 0.0).unwrap().is_markov);
        assert!(markov_precision_check(&GaussianSpec::standard(1), &edgeless, 1e-9).is_err());

        let with_s = parse_dag("s -> x1\nx1 -> x2\nx2 -> x3\ns -> x3\n@sensitive s").unwrap();
        assert!(markov_precision_check(&spec, &with_s, 1e-9).unwrap().is_markov);
    }

    #[test]
    fn sampler_properties() {
        let spec = GaussianSpec::standard(2);
        let xs = sample_gaussian(&spec, 100_000, 1).unwrap();
        for k in 0..2 {
            let m = xs.iter().map(|r| r[k]).sum::<f64>() / xs.len() as f64;
            assert!(m.abs() < 0.013, "mean {m}");
        }
        let again = sample_gaussian(&spec, 100_000, 1).unwrap();
        assert!(xs.iter().zip(&again).all(|(a, b)| a.iter().zip(b).all(|(u, v)| u.to_bits() == v.to_bits())));
        let other = sample_gaussian_stream(&spec, 10, 1, 1).unwrap();
        assert_ne!(other[0], xs[0]);
        let one = sample_gaussian(&spec, 1, 3).unwrap();
        assert_eq!(one.len(), 1);
        assert!(one[0].iter().all(|v| v.is_finite()));
        assert!(sample_gaussian(&spec, 0, 3).is_err());
    }

    #[test]
    fn spec_validation_and_serde() {
        assert!(GaussianSpec::from_slices(&[0.0, 0.0], &[&[1.0, 2.0], &[2.0, 1.0]]).is_err());
        assert!(GaussianSpec::from_slices(&[0.0, 0.0], &[&[1.0, 0.2], &[0.3, 1.0]]).is_err());
        let spec = GaussianSpec::from_slices(&[1.0, 2.0], &[&[1.0, 0.2], &[0.2, 1.0]]).unwrap();
        let back = GaussianSpec::try_from(GaussianSpecDef::from(spec.clone())).unwrap();
        assert_eq!(back, spec);
        let p: Gaussian2dParams = "0,1,2,3,0.5".parse().unwrap();
        assert_eq!(p, Gaussian2dParams::new(0.0, 1.0, 2.0, 3.0, 0.5).unwrap());
        assert!("1,2,3".parse::<Gaussian2dParams>().is_err());
    }
}
