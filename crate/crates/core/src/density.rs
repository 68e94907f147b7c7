//! Weighted univariate kernel density estimation, numerical CDFs,
//! generalized-inverse quantiles and the univariate transport map
//! `x -> Q1(F0(x))`.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DensityError {
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("weights must be finite and nonnegative with a positive sum")]
    InvalidWeights,
    #[error("degenerate sample: every value equals {value}")]
    DegenerateSample { value: f64 },
    #[error("bandwidth must be positive and finite, got {0}")]
    NonPositiveBandwidth(f64),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("negative density {value} at grid index {index}")]
    NegativeDensity { index: usize, value: f64 },
    #[error("density integrates to zero")]
    ZeroMass,
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("probability {0} outside (0, 1)")]
    ProbabilityOutOfRange(f64),
    #[error("non-finite input value {0}")]
    NonFinite(f64),
    #[error("kernel weights vanish even after widening parent bandwidths to {bandwidths:?}")]
    VanishingWeights { bandwidths: Vec<f64> },
}

pub type Result<T, E = DensityError> = std::result::Result<T, E>;

/// Number of grid points used by the per-individual engine.
pub const DEFAULT_GRID_POINTS: usize = 512;
/// Grid padding beyond the sample range, in bandwidths.
pub const GRID_PADDING_BANDWIDTHS: f64 = 3.0;
/// Conditional fits below this effective sample size trigger bandwidth widening.
pub const MIN_EFFECTIVE_SAMPLE_SIZE: f64 = 5.0;
pub const WIDENING_FACTOR: f64 = 1.5;
pub const MAX_WIDENINGS: usize = 5;

// Kernel contributions beyond this many bandwidths are below 1e-15 relative.
const KERNEL_CUTOFF: f64 = 8.5;
// Samples whose weight is below this fraction of the largest weight are skipped.
const WEIGHT_CUTOFF: f64 = 1e-14;

fn inv_sqrt_2pi() -> f64 {
    1.0 / (2.0 * std::f64::consts::PI).sqrt()
}

/// Strictly increasing evaluation abscissae, at least two points.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid(Vec<f64>);

impl Grid {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.len() < 2 {
            return Err(DensityError::InvalidGrid(format!(
                "need at least 2 points, got {}",
                points.len()
            )));
        }
        if let Some(bad) = points.iter().find(|p| !p.is_finite()) {
            return Err(DensityError::InvalidGrid(format!("non-finite point {bad}")));
        }
        if points.windows(2).any(|w| w[1] <= w[0]) {
            return Err(DensityError::InvalidGrid("points must be strictly increasing".into()));
        }
        Ok(Self(points))
    }

    /// `m` equally spaced points from `lo` to `hi` inclusive.
    pub fn linspace(lo: f64, hi: f64, m: usize) -> Result<Self> {
        if m < 2 || !(hi > lo) {
            return Err(DensityError::InvalidGrid(format!(
                "linspace({lo}, {hi}, {m}) is not a valid grid"
            )));
        }
        let step = (hi - lo) / (m - 1) as f64;
        let mut points: Vec<f64> = (0..m).map(|i| lo + step * i as f64).collect();
        points[m - 1] = hi;
        Self::new(points)
    }

    /// `m` points spanning `[min - 3h, max + 3h]` of the samples that carry weight.
    pub fn spanning(samples: &[f64], weights: &[f64], h: f64, m: usize) -> Result<Self> {
        check_bandwidth(h)?;
        let cutoff = max_weight(weights) * WEIGHT_CUTOFF;
        let (lo, hi) = samples
            .iter()
            .zip(weights)
            .filter(|(_, w)| **w > cutoff)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (x, _)| {
                (lo.min(*x), hi.max(*x))
            });
        if !lo.is_finite() {
            return Err(DensityError::InvalidWeights);
        }
        let pad = GRID_PADDING_BANDWIDTHS * h;
        Self::linspace(lo - pad, hi + pad, m)
    }

    pub fn points(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn min(&self) -> f64 {
        self.0[0]
    }

    pub fn max(&self) -> f64 {
        self.0[self.0.len() - 1]
    }

    /// Largest gap between consecutive points.
    pub fn max_spacing(&self) -> f64 {
        self.0.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }

    /// Index of the nearest grid point; values outside the grid clamp to the ends.
    pub fn nearest_index(&self, x: f64) -> usize {
        let pts = &self.0;
        let i = pts.partition_point(|&g| g < x);
        if i == 0 {
            0
        } else if i == pts.len() {
            pts.len() - 1
        } else if x - pts[i - 1] <= pts[i] - x {
            i - 1
        } else {
            i
        }
    }
}

fn check_bandwidth(h: f64) -> Result<()> {
    if h > 0.0 && h.is_finite() {
        Ok(())
    } else {
        Err(DensityError::NonPositiveBandwidth(h))
    }
}

fn max_weight(weights: &[f64]) -> f64 {
    weights.iter().copied().fold(0.0, f64::max)
}

fn check_weights(samples: &[f64], weights: &[f64]) -> Result<f64> {
    if samples.len() != weights.len() {
        return Err(DensityError::DimensionMismatch {
            expected: samples.len(),
            got: weights.len(),
        });
    }
    if let Some(bad) = samples.iter().find(|x| !x.is_finite()) {
        return Err(DensityError::NonFinite(*bad));
    }
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(DensityError::InvalidWeights);
    }
    let total: f64 = weights.iter().sum();
    if total > 0.0 {
        Ok(total)
    } else {
        Err(DensityError::InvalidWeights)
    }
}

/// Kish effective sample size `(sum w)^2 / sum w^2`.
pub fn effective_sample_size(weights: &[f64]) -> f64 {
    let s: f64 = weights.iter().sum();
    let s2: f64 = weights.iter().map(|w| w * w).sum();
    if s2 > 0.0 {
        s * s / s2
    } else {
        0.0
    }
}

/// Silverman's rule of thumb, weighted: `1.06 * sigma_w * n_eff^(-1/5)`.
pub fn silverman_bandwidth(samples: &[f64], weights: &[f64]) -> Result<f64> {
    if samples.len() < 2 {
        return Err(DensityError::TooFewSamples {
            needed: 2,
            got: samples.len(),
        });
    }
    let total = check_weights(samples, weights)?;
    let mut carried = samples.iter().zip(weights).filter(|(_, w)| **w > 0.0);
    let (first, _) = carried.next().expect("positive total weight");
    if carried.all(|(x, _)| x == first) {
        return Err(DensityError::DegenerateSample { value: *first });
    }
    let mean = samples.iter().zip(weights).map(|(x, w)| x * w).sum::<f64>() / total;
    let var = samples
        .iter()
        .zip(weights)
        .map(|(x, w)| w * (x - mean).powi(2))
        .sum::<f64>()
        / total;
    let n_eff = effective_sample_size(weights);
    Ok(1.06 * var.sqrt() * n_eff.powf(-0.2))
}

/// Product Gaussian kernel weights `w_i = prod_k exp(-(x_ik - c_k)^2 / (2 b_k^2))`.
///
/// `points` holds one row per sample; with zero columns every weight is 1.
pub fn gaussian_kernel_weights(
    points: &[Vec<f64>],
    center: &[f64],
    bandwidths: &[f64],
) -> Result<Vec<f64>> {
    let p = center.len();
    if bandwidths.len() != p {
        return Err(DensityError::DimensionMismatch {
            expected: p,
            got: bandwidths.len(),
        });
    }
    for &b in bandwidths {
        check_bandwidth(b)?;
    }
    points
        .iter()
        .map(|row| {
            if row.len() != p {
                return Err(DensityError::DimensionMismatch {
                    expected: p,
                    got: row.len(),
                });
            }
            let q: f64 = row
                .iter()
                .zip(center)
                .zip(bandwidths)
                .map(|((x, c), b)| ((x - c) / b).powi(2))
                .sum();
            Ok((-0.5 * q).exp())
        })
        .collect()
}

/// Kernel weights after the effective-sample-size guard.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelWeights {
    pub weights: Vec<f64>,
    /// Bandwidths actually used, after any widening.
    pub bandwidths: Vec<f64>,
    pub widenings: usize,
    pub effective_size: f64,
}

/// [`gaussian_kernel_weights`], widening every bandwidth by 1.5 (at most five
/// times) while the effective sample size stays below 5.
pub fn guarded_kernel_weights(
    points: &[Vec<f64>],
    center: &[f64],
    bandwidths: &[f64],
) -> Result<KernelWeights> {
    let mut bw = bandwidths.to_vec();
    let mut widenings = 0;
    loop {
        let weights = gaussian_kernel_weights(points, center, &bw)?;
        let ess = effective_sample_size(&weights);
        let sparse = !center.is_empty() && ess < MIN_EFFECTIVE_SAMPLE_SIZE;
        if !sparse || widenings == MAX_WIDENINGS {
            if ess == 0.0 {
                return Err(DensityError::VanishingWeights { bandwidths: bw });
            }
            return Ok(KernelWeights {
                weights,
                bandwidths: bw,
                widenings,
                effective_size: ess,
            });
        }
        bw.iter_mut().for_each(|b| *b *= WIDENING_FACTOR);
        widenings += 1;
    }
}

/// Weighted Gaussian KDE `f(g) = sum_i w_i phi((g - x_i)/h) / (h sum_i w_i)`
/// evaluated on `grid`.
pub fn weighted_kde(samples: &[f64], weights: &[f64], h: f64, grid: &Grid) -> Result<Vec<f64>> {
    check_bandwidth(h)?;
    let total = check_weights(samples, weights)?;
    let cutoff = max_weight(weights) * WEIGHT_CUTOFF;
    let g = grid.points();
    let mut dens = vec![0.0; g.len()];
    let reach = KERNEL_CUTOFF * h;
    let inv_h = 1.0 / h;
    for (&x, &w) in samples.iter().zip(weights) {
        if w <= cutoff {
            continue;
        }
        let lo = g.partition_point(|&t| t < x - reach);
        let hi = g.partition_point(|&t| t <= x + reach);
        for (d, &t) in dens[lo..hi].iter_mut().zip(&g[lo..hi]) {
            let u = (t - x) * inv_h;
            *d += w * (-0.5 * u * u).exp();
        }
    }
    let norm = inv_sqrt_2pi() / (h * total);
    dens.iter_mut().for_each(|d| *d *= norm);
    Ok(dens)
}

/// CDF tabulated on a grid; piecewise linear between grid points.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatedCdf {
    grid: Grid,
    values: Vec<f64>,
}

impl EstimatedCdf {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `F(x)`; 0 below the grid (well, `values[0]`) and 1 above it.
    pub fn eval(&self, x: f64) -> f64 {
        let g = self.grid.points();
        let i = g.partition_point(|&t| t <= x);
        if i == 0 {
            self.values[0]
        } else if i == g.len() {
            self.values[g.len() - 1]
        } else {
            let t = (x - g[i - 1]) / (g[i] - g[i - 1]);
            self.values[i - 1] + t * (self.values[i] - self.values[i - 1])
        }
    }
}

/// Trapezoidal cumulative integral renormalized to end at exactly 1.
pub fn cdf_from_density(grid: &Grid, density: &[f64]) -> Result<EstimatedCdf> {
    let g = grid.points();
    if density.len() != g.len() {
        return Err(DensityError::DimensionMismatch {
            expected: g.len(),
            got: density.len(),
        });
    }
    for (index, &value) in density.iter().enumerate() {
        if !value.is_finite() {
            return Err(DensityError::NonFinite(value));
        }
        if value < 0.0 {
            return Err(DensityError::NegativeDensity { index, value });
        }
    }
    let mut values = Vec::with_capacity(g.len());
    let mut acc = 0.0;
    values.push(0.0);
    for i in 1..g.len() {
        acc += 0.5 * (density[i] + density[i - 1]) * (g[i] - g[i - 1]);
        values.push(acc);
    }
    if !(acc > 0.0) {
        return Err(DensityError::ZeroMass);
    }
    values.iter_mut().for_each(|v| *v /= acc);
    let last = values.len() - 1;
    values[last] = 1.0;
    Ok(EstimatedCdf {
        grid: grid.clone(),
        values,
    })
}

/// Anything that can be evaluated as a quantile function.
pub trait QuantileFunction {
    /// Quantile at `p`, clamping to the support ends for `p` outside the
    /// realized probability range (including 0 and 1).
    fn quantile_clamped(&self, p: f64) -> f64;
}

impl QuantileFunction for EstimatedCdf {
    /// Generalized inverse `inf{x : F(x) >= p}` with linear interpolation
    /// inside the bracketing grid cell.
    fn quantile_clamped(&self, p: f64) -> f64 {
        let g = self.grid.points();
        let f = &self.values;
        let i = f.partition_point(|&v| v < p);
        if i == 0 {
            g[0]
        } else if i == f.len() {
            g[g.len() - 1]
        } else {
            let t = (p - f[i - 1]) / (f[i] - f[i - 1]);
            g[i - 1] + t * (g[i] - g[i - 1])
        }
    }
}

/// `F^{-1}(p)` for `p` in the open unit interval.
pub fn quantile_from_cdf(cdf: &EstimatedCdf, p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(DensityError::ProbabilityOutOfRange(p));
    }
    Ok(cdf.quantile_clamped(p))
}

/// Quantile function tabulated on a probability grid.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatedQuantile {
    levels: Grid,
    values: Vec<f64>,
}

impl EstimatedQuantile {
    pub fn from_cdf(cdf: &EstimatedCdf, levels: &Grid) -> Result<Self> {
        if levels.min() <= 0.0 || levels.max() >= 1.0 {
            return Err(DensityError::InvalidGrid(
                "probability levels must lie in (0, 1)".into(),
            ));
        }
        let values = levels
            .points()
            .iter()
            .map(|&p| cdf.quantile_clamped(p))
            .collect();
        Ok(Self {
            levels: levels.clone(),
            values,
        })
    }

    pub fn levels(&self) -> &Grid {
        &self.levels
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

impl QuantileFunction for EstimatedQuantile {
    fn quantile_clamped(&self, p: f64) -> f64 {
        let u = self.levels.points();
        let i = u.partition_point(|&t| t <= p);
        if i == 0 {
            self.values[0]
        } else if i == u.len() {
            self.values[u.len() - 1]
        } else {
            let t = (p - u[i - 1]) / (u[i] - u[i - 1]);
            self.values[i - 1] + t * (self.values[i] - self.values[i - 1])
        }
    }
}

/// Monotone transport `x -> Q1(F0(x))`.
pub fn univariate_transport<Q: QuantileFunction + ?Sized>(
    f0: &EstimatedCdf,
    q1: &Q,
    x: f64,
) -> Result<f64> {
    if !x.is_finite() {
        return Err(DensityError::NonFinite(x));
    }
    Ok(q1.quantile_clamped(f0.eval(x)))
}

/// Fits a weighted KDE on a padded grid of `m` points and integrates it.
pub fn fit_cdf(samples: &[f64], weights: &[f64], h: f64, m: usize) -> Result<EstimatedCdf> {
    let grid = Grid::spanning(samples, weights, h, m)?;
    let dens = weighted_kde(samples, weights, h, &grid)?;
    cdf_from_density(&grid, &dens)
}
