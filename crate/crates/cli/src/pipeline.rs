//! Shared steps of the data commands: read the graph and CSV, fit the
//! transport context and pick an engine.

use std::path::Path;

use seqtrans::dag::{parse_dag, CausalDag};
use seqtrans::dataset::{ingest_csv, Dataset, IngestOptions};
use seqtrans::gridtransport::{build_grid_tensors, build_or_load, CacheStatus, GridTensors};
use seqtrans::seqtransport::{fit_context, transport_all, CounterfactualResult, FitOptions, Side, TransportContext};

use crate::error::{CliError, Result};
use crate::manifest::{GridInfo, GroupInfo, Manifest};
use crate::{DataArgs, Engine};

pub const CACHE_ENV: &str = "SEQTRANS_CACHE_DIR";

/// Source-group size from which the grid engine becomes the default.
pub const GRID_ENGINE_MIN_ROWS: usize = 200;

pub struct Prepared {
    pub dag: CausalDag,
    /// Data as transported (jittered when requested).
    pub dataset: Dataset,
    pub ctx: TransportContext,
    pub engine: Engine,
    pub tensors: Option<GridTensors>,
    pub interpolate: bool,
}

pub fn read_dag(path: &Path, manifest: &mut Manifest) -> Result<CausalDag> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
    manifest.add_input(path)?;
    Ok(parse_dag(&text)?)
}

fn csv_header(path: &Path) -> Result<Vec<String>> {
    let mut rdr = csv::Reader::from_path(path)?;
    Ok(rdr.headers()?.iter().map(|h| h.trim().to_string()).collect())
}

pub fn validate_args(args: &DataArgs) -> Result<()> {
    if args.grid_size < 3 {
        return Err(CliError::validation(format!("--grid-size must be at least 3, got {}", args.grid_size)));
    }
    if !(args.bandwidth_scale.is_finite() && args.bandwidth_scale > 0.0) {
        return Err(CliError::validation(format!(
            "--bandwidth-scale must be positive, got {}",
            args.bandwidth_scale
        )));
    }
    Ok(())
}

/// Reads inputs and fits the context. `extra` names columns kept alongside
/// the graph variables when the file has them (outcome, audit target).
pub fn prepare(args: &DataArgs, extra: &[String], manifest: &mut Manifest) -> Result<Prepared> {
    validate_args(args)?;
    let dag = read_dag(&args.dag, manifest)?;
    manifest.add_input(&args.data)?;
    let sensitive = args
        .sensitive
        .clone()
        .unwrap_or_else(|| dag.name(dag.sensitive()).to_string());
    let header = csv_header(&args.data)?;
    let mut columns: Vec<String> = dag.transported_nodes().iter().map(|&i| dag.name(i).to_string()).collect();
    let mut wanted: Vec<String> = extra.to_vec();
    if let Some(o) = dag.outcome() {
        wanted.push(dag.name(o).to_string());
    }
    for name in wanted {
        if header.contains(&name) && !columns.contains(&name) && name != sensitive {
            columns.push(name);
        }
    }
    let opts = IngestOptions::new(&sensitive)
        .levels(&args.source_level, &args.target_level)
        .columns(columns);
    let ingested = ingest_csv(&args.data, &opts)?;
    if ingested.dropped_rows > 0 {
        manifest.warn(format!(
            "dropped {} rows whose `{sensitive}` matched neither level",
            ingested.dropped_rows
        ));
    }
    let dataset = if args.jitter {
        ingested.dataset.jittered(args.seed)
    } else {
        ingested.dataset
    };

    let ctx = fit_context(
        &dataset,
        &dag,
        FitOptions {
            bandwidth_scale: args.bandwidth_scale,
            ..FitOptions::default()
        },
    )?;
    manifest.order = ctx.slot_order().iter().map(|&s| ctx.variables()[s].clone()).collect();
    manifest.bandwidths = ctx.bandwidths();
    manifest.groups = Some(GroupInfo {
        sensitive,
        source_level: args.source_level.clone(),
        target_level: args.target_level.clone(),
        source_rows: ctx.group_size(Side::Source),
        target_rows: ctx.group_size(Side::Target),
        dropped_rows: ingested.dropped_rows,
    });

    let engine = args.engine.unwrap_or(if ctx.group_size(Side::Source) >= GRID_ENGINE_MIN_ROWS {
        Engine::Grid
    } else {
        Engine::Individual
    });
    manifest.engine = Some(engine.name().to_string());

    let tensors = match engine {
        Engine::Individual => None,
        Engine::Grid => Some(grid_tensors(&ctx, args.grid_size, args.interp_grid, manifest)?),
    };

    Ok(Prepared {
        dag,
        dataset,
        ctx,
        engine,
        tensors,
        interpolate: args.interp_grid,
    })
}

fn grid_tensors(ctx: &TransportContext, k: usize, interpolated: bool, manifest: &mut Manifest) -> Result<GridTensors> {
    let (tensors, cache) = match std::env::var_os(CACHE_ENV) {
        Some(dir) if !dir.is_empty() => {
            std::fs::create_dir_all(&dir)?;
            let (t, status) = build_or_load(ctx, k, &dir)?;
            let label = match status {
                CacheStatus::Hit => "hit",
                CacheStatus::Miss => "miss",
                CacheStatus::Stale => "stale",
            };
            (t, Some(label.to_string()))
        }
        _ => (build_grid_tensors(ctx, k)?, None),
    };
    manifest.warnings.extend(tensors.warnings().iter().cloned());
    manifest.grid = Some(GridInfo { k, interpolated, cache });
    Ok(tensors)
}

impl Prepared {
    pub fn source_rows(&self) -> Vec<Vec<f64>> {
        self.ctx.rows(Side::Source)
    }

    pub fn counterfactuals(&self, rows: &[Vec<f64>]) -> Result<Vec<CounterfactualResult>> {
        Ok(match &self.tensors {
            Some(t) => t.counterfactual_all(rows, self.interpolate)?,
            None => transport_all(&self.ctx, rows)?,
        })
    }
}

/// Per-row warnings, deduplicated, in first-seen order.
pub fn collect_warnings(results: &[CounterfactualResult], manifest: &mut Manifest) {
    let mut seen = std::collections::HashSet::new();
    for w in results.iter().flat_map(|r| &r.warnings) {
        if seen.insert(w.as_str()) {
            manifest.warn(w.clone());
        }
    }
}

/// Parses `a,b,c` into one value per transported variable.
pub fn parse_point(text: &str, expected: usize) -> Result<Vec<f64>> {
    let values = text
        .split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| CliError::validation(format!("not a number: `{}`", t.trim())))
        })
        .collect::<Result<Vec<f64>>>()?;
    if values.len() != expected {
        return Err(CliError::validation(format!(
            "expected {expected} comma-separated values, got {}",
            values.len()
        )));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(CliError::validation("point has non-finite values"));
    }
    Ok(values)
}
