//! Sequential conditional transport of one individual along the topological
//! order of a causal graph.
//!
//! For each variable `j` (in order), the source-group law of `x_j` given its
//! parents at the individual's original values is matched by quantiles to the
//! target-group law of `x_j` given its parents at their already transported
//! values:
//!
//! ```text
//! a*_j = Q_{j|target}( F_{j|source}(a_j | a_pa) | a*_pa )
//! ```
//!
//! Conditioning is done with product Gaussian kernel weights on the parent
//! columns; the sensitive attribute is never part of the kernel, since it is
//! fixed by the group split.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dag::{topological_order, CausalDag, DagError, TopologicalOrder};
use crate::dataset::Dataset;
use crate::density::{
    cdf_from_density, guarded_kernel_weights, silverman_bandwidth, weighted_kde, DensityError,
    EstimatedCdf, Grid, QuantileFunction, DEFAULT_GRID_POINTS,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TransportError {
    #[error(transparent)]
    Dag(#[from] DagError),
    #[error("variable `{variable}`: {source}")]
    Density {
        variable: String,
        #[source]
        source: DensityError,
    },
    #[error("dataset has no column for graph node `{0}`")]
    MissingColumn(String),
    #[error("sensitive attribute must be 0 or 1, found {0}")]
    NonBinarySensitive(f64),
    #[error("group {0} has no rows")]
    EmptyGroup(u8),
    #[error("source group must be 0 or 1, got {0}")]
    InvalidDirection(u8),
    #[error("bandwidth scale must be positive and finite, got {0}")]
    InvalidBandwidthScale(f64),
    #[error("grid size must be at least 2, got {0}")]
    InvalidGridSize(usize),
    #[error("expected {expected} values (one per transported variable), got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite value for `{variable}`")]
    NonFinite { variable: String },
}

pub type Result<T, E = TransportError> = std::result::Result<T, E>;

/// Which side of the transport a fit refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Source,
    Target,
}

impl Side {
    pub const BOTH: [Side; 2] = [Side::Source, Side::Target];
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub bandwidth_scale: f64,
    /// Evaluation points of every KDE.
    pub grid_points: usize,
    /// Level of the sensitive attribute that is transported from.
    pub source: u8,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            bandwidth_scale: 1.0,
            grid_points: DEFAULT_GRID_POINTS,
            source: 0,
        }
    }
}

/// Bandwidths resolved at fit time for one variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableBandwidths {
    pub variable: String,
    pub kde_source: f64,
    pub kde_target: f64,
    pub parents: Vec<String>,
    pub parents_source: Vec<f64>,
    pub parents_target: Vec<f64>,
}

#[derive(Debug, Clone)]
struct GroupSample {
    level: u8,
    /// Dataset row index of each member, in input order.
    rows: Vec<usize>,
    /// One column per transported variable, layout order.
    columns: Vec<Vec<f64>>,
    /// Silverman bandwidth per column, scaled.
    bandwidths: Vec<f64>,
    /// Per variable, the member rows restricted to that variable's parents.
    parent_points: Vec<Vec<Vec<f64>>>,
    /// Unconditional fits of parentless variables.
    root_fits: Vec<Option<ConditionalFit>>,
}

/// Weighted KDE on its grid together with the integrated CDF.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalFit {
    pub density: Vec<f64>,
    pub cdf: EstimatedCdf,
    /// Times the parent bandwidths were widened by the sparsity guard.
    pub widenings: usize,
    pub effective_size: f64,
}

impl ConditionalFit {
    pub fn grid(&self) -> &Grid {
        self.cdf.grid()
    }
}

/// Everything the sequential transport needs, fitted once per dataset.
#[derive(Debug, Clone)]
pub struct TransportContext {
    dag: CausalDag,
    order: TopologicalOrder,
    /// Graph node of each transported variable, declaration order.
    layout: Vec<usize>,
    names: Vec<String>,
    /// Parents of each variable as layout slots (sensitive excluded).
    parents: Vec<Vec<usize>>,
    /// Transport order as layout slots.
    slot_order: Vec<usize>,
    source: GroupSample,
    target: GroupSample,
    options: FitOptions,
    data_hash: String,
}

/// One step of a transport: the variable, the conditioning values used on
/// each side, and the probability level matched.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRecord {
    pub variable: String,
    pub parents: Vec<String>,
    pub source_parents: Vec<f64>,
    pub target_parents: Vec<f64>,
    pub level: f64,
    pub value: f64,
    pub transported: f64,
    pub widenings: usize,
}

/// Counterfactual of one individual.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CounterfactualResult {
    pub variables: Vec<String>,
    pub original: Vec<f64>,
    pub transported: Vec<f64>,
    /// Steps in transport order.
    pub steps: Vec<StepRecord>,
    pub warnings: Vec<String>,
}

/// Fitted source and target densities behind one step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepTrace {
    pub variable: String,
    pub source: ConditionalFit,
    pub target: ConditionalFit,
}

fn density_err(variable: &str) -> impl Fn(DensityError) -> TransportError + '_ {
    move |source| TransportError::Density {
        variable: variable.to_string(),
        source,
    }
}

fn fit_weighted(samples: &[f64], weights: &[f64], h: f64, m: usize) -> Result<(Vec<f64>, EstimatedCdf), DensityError> {
    let grid = Grid::spanning(samples, weights, h, m)?;
    let density = weighted_kde(samples, weights, h, &grid)?;
    let cdf = cdf_from_density(&grid, &density)?;
    Ok((density, cdf))
}

/// Splits the data by group, orders the graph and resolves bandwidths.
pub fn fit_context(dataset: &Dataset, dag: &CausalDag, options: FitOptions) -> Result<TransportContext> {
    if options.source > 1 {
        return Err(TransportError::InvalidDirection(options.source));
    }
    if !(options.bandwidth_scale > 0.0 && options.bandwidth_scale.is_finite()) {
        return Err(TransportError::InvalidBandwidthScale(options.bandwidth_scale));
    }
    if options.grid_points < 2 {
        return Err(TransportError::InvalidGridSize(options.grid_points));
    }
    dag.validate()?;
    let order = topological_order(dag)?;
    let layout = dag.transported_nodes();
    let names: Vec<String> = layout.iter().map(|&n| dag.name(n).to_string()).collect();
    let data_cols = names
        .iter()
        .map(|n| {
            dataset
                .column_index(n)
                .ok_or_else(|| TransportError::MissingColumn(n.clone()))
        })
        .collect::<Result<Vec<_>>>()?;
    if let Some(&bad) = dataset.sensitive().iter().find(|&&s| s != 0.0 && s != 1.0) {
        return Err(TransportError::NonBinarySensitive(bad));
    }
    let slot = |node: usize| layout.iter().position(|&n| n == node);
    let parents: Vec<Vec<usize>> = layout
        .iter()
        .map(|&n| Ok(dag.parents(n)?.into_iter().filter_map(slot).collect()))
        .collect::<Result<_>>()?;
    let slot_order: Vec<usize> = order.variables().iter().filter_map(|&n| slot(n)).collect();

    let build = |level: u8| -> Result<GroupSample> {
        let rows = dataset.group_rows(level as f64);
        if rows.is_empty() {
            return Err(TransportError::EmptyGroup(level));
        }
        let columns: Vec<Vec<f64>> = data_cols
            .iter()
            .map(|&c| rows.iter().map(|&r| dataset.columns()[c][r]).collect())
            .collect();
        let ones = vec![1.0; rows.len()];
        let bandwidths = columns
            .iter()
            .zip(&names)
            .map(|(col, name)| {
                silverman_bandwidth(col, &ones)
                    .map(|h| h * options.bandwidth_scale)
                    .map_err(density_err(name))
            })
            .collect::<Result<Vec<_>>>()?;
        let parent_points = parents
            .iter()
            .map(|pa| {
                (0..rows.len())
                    .map(|i| pa.iter().map(|&p| columns[p][i]).collect())
                    .collect()
            })
            .collect();
        let root_fits = parents
            .iter()
            .enumerate()
            .map(|(j, pa)| {
                if !pa.is_empty() {
                    return Ok(None);
                }
                let (density, cdf) = fit_weighted(&columns[j], &ones, bandwidths[j], options.grid_points)
                    .map_err(density_err(&names[j]))?;
                Ok(Some(ConditionalFit {
                    density,
                    cdf,
                    widenings: 0,
                    effective_size: rows.len() as f64,
                }))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(GroupSample {
            level,
            rows,
            columns,
            bandwidths,
            parent_points,
            root_fits,
        })
    };
    let source = build(options.source)?;
    let target = build(1 - options.source)?;
    Ok(TransportContext {
        dag: dag.clone(),
        order,
        layout,
        names,
        parents,
        slot_order,
        source,
        target,
        options,
        data_hash: dataset.content_hash(),
    })
}

impl TransportContext {
    pub fn dag(&self) -> &CausalDag {
        &self.dag
    }

    pub fn order(&self) -> &TopologicalOrder {
        &self.order
    }

    pub fn options(&self) -> &FitOptions {
        &self.options
    }

    /// Content hash of the dataset the context was fitted on.
    pub fn data_hash(&self) -> &str {
        &self.data_hash
    }

    /// Names of the transported variables; the layout of every vector.
    pub fn variables(&self) -> &[String] {
        &self.names
    }

    /// Graph node of each transported variable.
    pub fn layout(&self) -> &[usize] {
        &self.layout
    }

    /// Transport order as positions in [`Self::variables`].
    pub fn slot_order(&self) -> &[usize] {
        &self.slot_order
    }

    /// Parents of variable `slot`, as positions in [`Self::variables`].
    pub fn parents(&self, slot: usize) -> &[usize] {
        &self.parents[slot]
    }

    fn group(&self, side: Side) -> &GroupSample {
        match side {
            Side::Source => &self.source,
            Side::Target => &self.target,
        }
    }

    /// Sensitive level of a side.
    pub fn level(&self, side: Side) -> u8 {
        self.group(side).level
    }

    /// Dataset row indices of a side's members, in input order.
    pub fn group_indices(&self, side: Side) -> &[usize] {
        &self.group(side).rows
    }

    pub fn group_size(&self, side: Side) -> usize {
        self.group(side).rows.len()
    }

    /// Column of variable `slot` within a side.
    pub fn column(&self, side: Side, slot: usize) -> &[f64] {
        &self.group(side).columns[slot]
    }

    /// Members of a side as rows in layout order.
    pub fn rows(&self, side: Side) -> Vec<Vec<f64>> {
        let g = self.group(side);
        (0..g.rows.len())
            .map(|i| g.columns.iter().map(|c| c[i]).collect())
            .collect()
    }

    /// KDE bandwidth of variable `slot` on a side.
    pub fn kde_bandwidth(&self, side: Side, slot: usize) -> f64 {
        self.group(side).bandwidths[slot]
    }

    pub fn parent_bandwidths(&self, side: Side, slot: usize) -> Vec<f64> {
        let g = self.group(side);
        self.parents[slot].iter().map(|&p| g.bandwidths[p]).collect()
    }

    pub fn bandwidths(&self) -> Vec<VariableBandwidths> {
        (0..self.names.len())
            .map(|j| VariableBandwidths {
                variable: self.names[j].clone(),
                kde_source: self.kde_bandwidth(Side::Source, j),
                kde_target: self.kde_bandwidth(Side::Target, j),
                parents: self.parents[j].iter().map(|&p| self.names[p].clone()).collect(),
                parents_source: self.parent_bandwidths(Side::Source, j),
                parents_target: self.parent_bandwidths(Side::Target, j),
            })
            .collect()
    }

    /// Law of variable `slot` on a side given its parents at `center`
    /// (ignored for parentless variables), fitted on `grid_points` points.
    pub fn conditional_fit(&self, side: Side, slot: usize, center: &[f64], grid_points: usize) -> Result<ConditionalFit> {
        let g = self.group(side);
        let name = &self.names[slot];
        if self.parents[slot].is_empty() {
            if grid_points == self.options.grid_points {
                if let Some(fit) = &g.root_fits[slot] {
                    return Ok(fit.clone());
                }
            }
            let ones = vec![1.0; g.rows.len()];
            let (density, cdf) = fit_weighted(&g.columns[slot], &ones, g.bandwidths[slot], grid_points)
                .map_err(density_err(name))?;
            return Ok(ConditionalFit {
                density,
                cdf,
                widenings: 0,
                effective_size: g.rows.len() as f64,
            });
        }
        let kw = guarded_kernel_weights(&g.parent_points[slot], center, &self.parent_bandwidths(side, slot))
            .map_err(density_err(name))?;
        let (density, cdf) = fit_weighted(&g.columns[slot], &kw.weights, g.bandwidths[slot], grid_points)
            .map_err(density_err(name))?;
        Ok(ConditionalFit {
            density,
            cdf,
            widenings: kw.widenings,
            effective_size: kw.effective_size,
        })
    }

    fn check_input(&self, a: &[f64]) -> Result<()> {
        if a.len() != self.names.len() {
            return Err(TransportError::DimensionMismatch {
                expected: self.names.len(),
                got: a.len(),
            });
        }
        if let Some(j) = a.iter().position(|v| !v.is_finite()) {
            return Err(TransportError::NonFinite {
                variable: self.names[j].clone(),
            });
        }
        Ok(())
    }

    fn run(&self, a: &[f64], mut trace: Option<&mut Vec<StepTrace>>) -> Result<CounterfactualResult> {
        self.check_input(a)?;
        let m = self.options.grid_points;
        let mut out = a.to_vec();
        let mut steps = Vec::with_capacity(a.len());
        let mut warnings = Vec::new();
        for &j in &self.slot_order {
            let pa = &self.parents[j];
            let source_parents: Vec<f64> = pa.iter().map(|&p| a[p]).collect();
            let target_parents: Vec<f64> = pa.iter().map(|&p| out[p]).collect();
            let fit0 = self.conditional_fit(Side::Source, j, &source_parents, m)?;
            let fit1 = self.conditional_fit(Side::Target, j, &target_parents, m)?;
            let level = fit0.cdf.eval(a[j]);
            out[j] = fit1.cdf.quantile_clamped(level);
            let widenings = fit0.widenings.max(fit1.widenings);
            if widenings > 0 {
                warnings.push(format!(
                    "`{}`: sparse conditioning region, parent bandwidths widened {}x (source) / {}x (target)",
                    self.names[j], fit0.widenings, fit1.widenings
                ));
            }
            steps.push(StepRecord {
                variable: self.names[j].clone(),
                parents: pa.iter().map(|&p| self.names[p].clone()).collect(),
                source_parents,
                target_parents,
                level,
                value: a[j],
                transported: out[j],
                widenings,
            });
            if let Some(t) = trace.as_deref_mut() {
                t.push(StepTrace {
                    variable: self.names[j].clone(),
                    source: fit0,
                    target: fit1,
                });
            }
        }
        Ok(CounterfactualResult {
            variables: self.names.clone(),
            original: a.to_vec(),
            transported: out,
            steps,
            warnings,
        })
    }
}

/// Counterfactual of one source-group individual `a` (layout order).
pub fn transport_individual(ctx: &TransportContext, a: &[f64]) -> Result<CounterfactualResult> {
    ctx.run(a, None)
}

/// As [`transport_individual`], also returning the fitted densities of every step.
pub fn transport_with_trace(ctx: &TransportContext, a: &[f64]) -> Result<(CounterfactualResult, Vec<StepTrace>)> {
    let mut trace = Vec::new();
    let result = ctx.run(a, Some(&mut trace))?;
    Ok((result, trace))
}

/// [`transport_individual`] over many rows, in parallel, results in input order.
pub fn transport_all(ctx: &TransportContext, rows: &[Vec<f64>]) -> Result<Vec<CounterfactualResult>> {
    rows.par_iter().map(|a| transport_individual(ctx, a)).collect()
}
