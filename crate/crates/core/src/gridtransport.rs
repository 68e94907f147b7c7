//! Precomputed conditional CDF and quantile tensors on grids, and
//! counterfactual lookup by index.
//!
//! For every variable `j` and group `s`, `F_{j|s}` has one column per point of
//! the Cartesian product of the parents' value grids and one row per point of
//! `g_{j|s}`; `Q_{j|s}` has one row per probability level
//! `u = (1, ..., k) / (k + 1)`. Parentless variables have a single column.
//! Storage is column-major: entry `(r, i)` lives at `i * k + r`.

use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dag::CausalDag;
use crate::dataset::{hex, Dataset};
use crate::density::{Grid, QuantileFunction};
use crate::seqtransport::{
    fit_context, CounterfactualResult, FitOptions, Side, StepRecord, TransportContext, TransportError,
};

#[derive(Debug, Error)]
pub enum GridError {
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("grid size must be at least 3, got {0}")]
    GridTooSmall(usize),
    #[error(
        "variable `{variable}` has {parents} parents; grid tensors support at most {max}, \
         use the individual engine instead"
    )]
    TooManyParents {
        variable: String,
        parents: usize,
        max: usize,
    },
    #[error(
        "variable `{variable}` would need {elements} tensor entries (limit {limit}); \
         lower the grid size or use the individual engine"
    )]
    TensorTooLarge {
        variable: String,
        elements: u128,
        limit: u128,
    },
    #[error("expected {expected} values, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("not a grid tensor cache file")]
    BadMagic,
    #[error("unsupported cache format version {0}")]
    UnsupportedVersion(u32),
    #[error("corrupt cache file: {0}")]
    Corrupt(String),
    #[error("io: {0}")]
    Io(#[from] io::Error),
}

pub type Result<T, E = GridError> = std::result::Result<T, E>;

/// Most parents a variable may have.
pub const MAX_PARENTS: usize = 4;
/// Largest `k^(d_j + 1)` accepted for one tensor.
pub const MAX_TENSOR_ELEMENTS: u128 = 50_000_000;
pub const CACHE_MAGIC: &[u8; 4] = b"STGT";
pub const CACHE_VERSION: u32 = 1;

/// Grids and tensors of one variable in one group.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupTensors {
    /// `g_{j|s}`, `k` points spanning the group's observed range.
    pub value_grid: Vec<f64>,
    /// `F_{j|s}`, `k x k^{d_j}`.
    pub cdf: Vec<f64>,
    /// `Q_{j|s}`, `k x k^{d_j}`.
    pub quantile: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariableTensors {
    pub name: String,
    /// Parents as positions in the variable layout.
    pub parents: Vec<usize>,
    pub source: GroupTensors,
    pub target: GroupTensors,
}

impl VariableTensors {
    pub fn group(&self, side: Side) -> &GroupTensors {
        match side {
            Side::Source => &self.source,
            Side::Target => &self.target,
        }
    }
}

/// All tensors needed to answer counterfactual queries by lookup.
#[derive(Debug, Clone, PartialEq)]
pub struct GridTensors {
    k: usize,
    levels: Vec<f64>,
    variables: Vec<VariableTensors>,
    slot_order: Vec<usize>,
    source_level: u8,
    bandwidth_scale: f64,
    data_hash: String,
    dag_hash: String,
    warnings: Vec<String>,
}

/// SHA-256 of the canonical text form of a graph.
pub fn dag_hash(dag: &CausalDag) -> String {
    hex(&Sha256::digest(dag.to_text().as_bytes()))
}

fn probability_levels(k: usize) -> Vec<f64> {
    (1..=k).map(|i| i as f64 / (k as f64 + 1.0)).collect()
}

/// Convenience wrapper fitting the context first.
pub fn build_grid_tensors_from(dataset: &Dataset, dag: &CausalDag, k: usize, bandwidth_scale: f64) -> Result<GridTensors> {
    let ctx = fit_context(
        dataset,
        dag,
        FitOptions {
            bandwidth_scale,
            ..FitOptions::default()
        },
    )?;
    build_grid_tensors(&ctx, k)
}

/// Builds `F` and `Q` for every variable and group. Each column comes from a
/// fine conditional fit (the context's grid resolution) sampled at the
/// coarse grid points; quantiles are clamped to the value grid's range.
pub fn build_grid_tensors(ctx: &TransportContext, k: usize) -> Result<GridTensors> {
    if k < 3 {
        return Err(GridError::GridTooSmall(k));
    }
    let names = ctx.variables();
    for (j, name) in names.iter().enumerate() {
        let d = ctx.parents(j).len();
        if d > MAX_PARENTS {
            return Err(GridError::TooManyParents {
                variable: name.clone(),
                parents: d,
                max: MAX_PARENTS,
            });
        }
        let elements = (k as u128).pow(d as u32 + 1);
        if elements > MAX_TENSOR_ELEMENTS {
            return Err(GridError::TensorTooLarge {
                variable: name.clone(),
                elements,
                limit: MAX_TENSOR_ELEMENTS,
            });
        }
    }
    let levels = probability_levels(k);
    let mut warnings = Vec::new();
    let value_grids: Vec<[Vec<f64>; 2]> = (0..names.len())
        .map(|j| {
            Side::BOTH.map(|side| {
                let col = ctx.column(side, j);
                let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let spacing = (hi - lo) / (k - 1) as f64;
                let h = ctx.kde_bandwidth(side, j);
                if spacing > h {
                    warnings.push(format!(
                        "`{}` ({:?}): grid spacing {spacing:.4} exceeds the KDE bandwidth {h:.4}; consider a larger grid",
                        names[j], side
                    ));
                }
                if hi > lo {
                    Grid::linspace(lo, hi, k).map(|g| g.points().to_vec()).unwrap_or_else(|_| vec![lo; k])
                } else {
                    vec![lo; k]
                }
            })
        })
        .collect();

    let fine = ctx.options().grid_points;
    let mut variables = Vec::with_capacity(names.len());
    for (j, name) in names.iter().enumerate() {
        let parents = ctx.parents(j).to_vec();
        let [source, target] = [0, 1].map(|g| {
            let side = Side::BOTH[g];
            let parent_grids: Vec<&[f64]> = parents.iter().map(|&p| value_grids[p][g].as_slice()).collect();
            let value_grid = value_grids[j][g].clone();
            let columns = k.pow(parents.len() as u32);
            let (lo, hi) = (value_grid[0], value_grid[k - 1]);
            let cols: Vec<(Vec<f64>, Vec<f64>)> = (0..columns)
                .into_par_iter()
                .map(|i| {
                    let center = unflatten(i, k, parents.len())
                        .iter()
                        .zip(&parent_grids)
                        .map(|(&r, grid)| grid[r])
                        .collect::<Vec<_>>();
                    let fit = ctx.conditional_fit(side, j, &center, fine)?;
                    let f = value_grid
                        .iter()
                        .map(|&x| fit.cdf.eval(x).clamp(levels[0], levels[k - 1]))
                        .collect();
                    let q = levels
                        .iter()
                        .map(|&p| fit.cdf.quantile_clamped(p).clamp(lo, hi))
                        .collect();
                    Ok((f, q))
                })
                .collect::<Result<_, TransportError>>()?;
            let (cdf, quantile): (Vec<Vec<f64>>, Vec<Vec<f64>>) = cols.into_iter().unzip();
            Ok::<_, GridError>(GroupTensors {
                value_grid,
                cdf: cdf.concat(),
                quantile: quantile.concat(),
            })
        });
        variables.push(VariableTensors {
            name: name.clone(),
            parents,
            source: source?,
            target: target?,
        });
    }
    Ok(GridTensors {
        k,
        levels,
        variables,
        slot_order: ctx.slot_order().to_vec(),
        source_level: ctx.level(Side::Source),
        bandwidth_scale: ctx.options().bandwidth_scale,
        data_hash: ctx.data_hash().to_string(),
        dag_hash: dag_hash(ctx.dag()),
        warnings,
    })
}

/// Multi-index (first parent varies slowest) of a flat column index.
fn unflatten(mut i: usize, k: usize, d: usize) -> Vec<usize> {
    let mut idx = vec![0; d];
    for slot in idx.iter_mut().rev() {
        *slot = i % k;
        i /= k;
    }
    idx
}

fn flatten(idx: &[usize], k: usize) -> usize {
    idx.iter().fold(0, |acc, &r| acc * k + r)
}

fn nearest(grid: &[f64], x: f64) -> usize {
    let i = grid.partition_point(|&t| t < x);
    if i == 0 {
        0
    } else if i == grid.len() {
        grid.len() - 1
    } else if x - grid[i - 1] <= grid[i] - x {
        i - 1
    } else {
        i
    }
}

/// Lower cell index and weight of the upper neighbour, clamped to the grid.
fn bracket(grid: &[f64], x: f64) -> (usize, f64) {
    let n = grid.len();
    if !(x > grid[0]) {
        return (0, 0.0);
    }
    if x >= grid[n - 1] {
        return (n - 2, 1.0);
    }
    let i = grid.partition_point(|&t| t <= x) - 1;
    let width = grid[i + 1] - grid[i];
    let t = if width > 0.0 { (x - grid[i]) / width } else { 0.0 };
    (i, t)
}

impl GridTensors {
    pub fn k(&self) -> usize {
        self.k
    }

    /// Probability grid `u`.
    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn variables(&self) -> &[VariableTensors] {
        &self.variables
    }

    pub fn slot_order(&self) -> &[usize] {
        &self.slot_order
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn data_hash(&self) -> &str {
        &self.data_hash
    }

    pub fn dag_hash(&self) -> &str {
        &self.dag_hash
    }

    pub fn source_level(&self) -> u8 {
        self.source_level
    }

    pub fn bandwidth_scale(&self) -> f64 {
        self.bandwidth_scale
    }

    /// Entries of `F_{j|s}` plus `Q_{j|s}`: `2 k^(d_j + 1)`.
    pub fn element_count(&self, slot: usize, side: Side) -> usize {
        let g = self.variables[slot].group(side);
        g.cdf.len() + g.quantile.len()
    }

    /// Column `i` of a tensor, `k` entries.
    pub fn column<'a>(&self, tensor: &'a [f64], i: usize) -> &'a [f64] {
        &tensor[i * self.k..(i + 1) * self.k]
    }

    /// Index-lookup counterfactual: every value is snapped to its nearest
    /// grid point, out-of-range values clamp to the boundary cell.
    pub fn lookup_counterfactual(&self, a: &[f64]) -> Result<Vec<f64>> {
        Ok(self.counterfactual(a, false)?.transported)
    }

    /// As [`Self::lookup_counterfactual`] with multilinear interpolation in
    /// every tensor dimension instead of nearest-point snapping.
    pub fn lookup_interpolated(&self, a: &[f64]) -> Result<Vec<f64>> {
        Ok(self.counterfactual(a, true)?.transported)
    }

    /// Lookup with the per-step record of levels and conditioning values.
    pub fn counterfactual(&self, a: &[f64], interpolate: bool) -> Result<CounterfactualResult> {
        self.check(a)?;
        let k = self.k;
        let mut b = a.to_vec();
        let mut steps = Vec::with_capacity(a.len());
        for &j in &self.slot_order {
            let var = &self.variables[j];
            let (level, value) = if interpolate {
                let src: Vec<(usize, f64)> = var
                    .parents
                    .iter()
                    .map(|&p| bracket(&self.variables[p].source.value_grid, a[p]))
                    .collect();
                let p = self.interpolate(&var.source.cdf, &src, bracket(&var.source.value_grid, a[j]));
                let tgt: Vec<(usize, f64)> = var
                    .parents
                    .iter()
                    .map(|&q| bracket(&self.variables[q].target.value_grid, b[q]))
                    .collect();
                (p, self.interpolate(&var.target.quantile, &tgt, bracket(&self.levels, p)))
            } else {
                let snap = |side: Side, values: &[f64]| {
                    let idx: Vec<usize> = var
                        .parents
                        .iter()
                        .map(|&p| nearest(&self.variables[p].group(side).value_grid, values[p]))
                        .collect();
                    flatten(&idx, k)
                };
                let i0 = snap(Side::Source, a);
                let k0 = nearest(&var.source.value_grid, a[j]);
                let p = var.source.cdf[i0 * k + k0];
                let i1 = snap(Side::Target, &b);
                let k1 = nearest(&self.levels, p);
                (p, var.target.quantile[i1 * k + k1])
            };
            b[j] = value;
            steps.push(StepRecord {
                variable: var.name.clone(),
                parents: var.parents.iter().map(|&p| self.variables[p].name.clone()).collect(),
                source_parents: var.parents.iter().map(|&p| a[p]).collect(),
                target_parents: var.parents.iter().map(|&p| b[p]).collect(),
                level,
                value: a[j],
                transported: value,
                widenings: 0,
            });
        }
        Ok(CounterfactualResult {
            variables: self.variables.iter().map(|v| v.name.clone()).collect(),
            original: a.to_vec(),
            transported: b,
            steps,
            warnings: Vec::new(),
        })
    }

    /// [`Self::counterfactual`] over many rows, in parallel, in input order.
    pub fn counterfactual_all(&self, rows: &[Vec<f64>], interpolate: bool) -> Result<Vec<CounterfactualResult>> {
        rows.par_iter().map(|a| self.counterfactual(a, interpolate)).collect()
    }

    fn interpolate(&self, tensor: &[f64], parents: &[(usize, f64)], (r, tr): (usize, f64)) -> f64 {
        let k = self.k;
        let d = parents.len();
        let mut acc = 0.0;
        for corner in 0..(1usize << d) {
            let mut weight = 1.0;
            let mut idx = Vec::with_capacity(d);
            for (bit, &(i, t)) in parents.iter().enumerate() {
                if corner >> (d - 1 - bit) & 1 == 1 {
                    weight *= t;
                    idx.push(i + 1);
                } else {
                    weight *= 1.0 - t;
                    idx.push(i);
                }
            }
            if weight == 0.0 {
                continue;
            }
            let col = self.column(tensor, flatten(&idx, k));
            acc += weight * ((1.0 - tr) * col[r] + tr * col[r + 1]);
        }
        acc
    }

    fn check(&self, a: &[f64]) -> Result<()> {
        if a.len() != self.variables.len() {
            return Err(GridError::DimensionMismatch {
                expected: self.variables.len(),
                got: a.len(),
            });
        }
        Ok(())
    }

    /// Whether a cached tensor set matches the given inputs.
    pub fn matches(&self, ctx: &TransportContext, k: usize) -> bool {
        self.k == k
            && self.data_hash == ctx.data_hash()
            && self.dag_hash == dag_hash(ctx.dag())
            && self.bandwidth_scale.to_bits() == ctx.options().bandwidth_scale.to_bits()
            && self.source_level == ctx.level(Side::Source)
            && self.variables.iter().map(|v| &v.name).eq(ctx.variables().iter())
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(CACHE_MAGIC)?;
        put_u32(&mut w, CACHE_VERSION)?;
        put_u32(&mut w, self.k as u32)?;
        put_str(&mut w, &self.data_hash)?;
        put_str(&mut w, &self.dag_hash)?;
        w.write_all(&self.bandwidth_scale.to_le_bytes())?;
        w.write_all(&[self.source_level])?;
        put_u32(&mut w, self.variables.len() as u32)?;
        for &j in &self.slot_order {
            put_u32(&mut w, j as u32)?;
        }
        for v in &self.variables {
            put_str(&mut w, &v.name)?;
            put_u32(&mut w, v.parents.len() as u32)?;
            for &p in &v.parents {
                put_u32(&mut w, p as u32)?;
            }
        }
        for v in &self.variables {
            for g in [&v.source, &v.target] {
                for x in g.value_grid.iter().chain(&g.cdf).chain(&g.quantile) {
                    w.write_all(&x.to_le_bytes())?;
                }
            }
        }
        put_u32(&mut w, self.warnings.len() as u32)?;
        for s in &self.warnings {
            put_str(&mut w, s)?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != CACHE_MAGIC {
            return Err(GridError::BadMagic);
        }
        let version = get_u32(&mut r)?;
        if version != CACHE_VERSION {
            return Err(GridError::UnsupportedVersion(version));
        }
        let k = get_u32(&mut r)? as usize;
        if k < 3 {
            return Err(GridError::Corrupt(format!("grid size {k}")));
        }
        let data_hash = get_str(&mut r)?;
        let dag_hash = get_str(&mut r)?;
        let bandwidth_scale = get_f64(&mut r)?;
        let mut level = [0u8; 1];
        r.read_exact(&mut level)?;
        let n = get_u32(&mut r)? as usize;
        let slot_order = (0..n).map(|_| Ok(get_u32(&mut r)? as usize)).collect::<Result<Vec<_>>>()?;
        if slot_order.iter().any(|&j| j >= n) {
            return Err(GridError::Corrupt("variable index out of range".into()));
        }
        let mut layout = Vec::with_capacity(n);
        for _ in 0..n {
            let name = get_str(&mut r)?;
            let d = get_u32(&mut r)? as usize;
            if d > MAX_PARENTS {
                return Err(GridError::Corrupt(format!("{d} parents")));
            }
            let parents = (0..d).map(|_| Ok(get_u32(&mut r)? as usize)).collect::<Result<Vec<_>>>()?;
            if parents.iter().any(|&p| p >= n) {
                return Err(GridError::Corrupt("parent index out of range".into()));
            }
            layout.push((name, parents));
        }
        let mut variables = Vec::with_capacity(n);
        for (name, parents) in layout {
            let size = k.pow(parents.len() as u32 + 1);
            let mut read_group = || -> Result<GroupTensors> {
                Ok(GroupTensors {
                    value_grid: get_f64s(&mut r, k)?,
                    cdf: get_f64s(&mut r, size)?,
                    quantile: get_f64s(&mut r, size)?,
                })
            };
            let source = read_group()?;
            let target = read_group()?;
            variables.push(VariableTensors {
                name,
                parents,
                source,
                target,
            });
        }
        let nw = get_u32(&mut r)? as usize;
        let warnings = (0..nw).map(|_| get_str(&mut r)).collect::<Result<Vec<_>>>()?;
        Ok(Self {
            k,
            levels: probability_levels(k),
            variables,
            slot_order,
            source_level: level[0],
            bandwidth_scale,
            data_hash,
            dag_hash,
            warnings,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        fs::write(path, buf)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(io::BufReader::new(fs::File::open(path)?))
    }
}

/// Where a cache lookup found its tensors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CacheStatus {
    Hit,
    Miss,
    /// A file existed but did not match the inputs, or could not be read.
    Stale,
}

/// Cache file name for a context and grid size.
pub fn cache_path(dir: impl AsRef<Path>, ctx: &TransportContext, k: usize) -> PathBuf {
    let mut h = Sha256::new();
    h.update(ctx.data_hash().as_bytes());
    h.update(dag_hash(ctx.dag()).as_bytes());
    h.update((k as u64).to_le_bytes());
    h.update(ctx.options().bandwidth_scale.to_le_bytes());
    h.update([ctx.level(Side::Source)]);
    let key = hex(&h.finalize());
    dir.as_ref().join(format!("stgt-{}.bin", &key[..16]))
}

/// Loads tensors from `dir` when a matching cache file exists, otherwise
/// builds them and writes the cache.
pub fn build_or_load(ctx: &TransportContext, k: usize, dir: impl AsRef<Path>) -> Result<(GridTensors, CacheStatus)> {
    let path = cache_path(&dir, ctx, k);
    let status = if path.exists() {
        match GridTensors::load(&path) {
            Ok(t) if t.matches(ctx, k) => return Ok((t, CacheStatus::Hit)),
            _ => CacheStatus::Stale,
        }
    } else {
        CacheStatus::Miss
    };
    let tensors = build_grid_tensors(ctx, k)?;
    fs::create_dir_all(&dir)?;
    tensors.save(&path)?;
    Ok((tensors, status))
}

fn put_u32<W: Write>(w: &mut W, v: u32) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn put_str<W: Write>(w: &mut W, s: &str) -> io::Result<()> {
    put_u32(w, s.len() as u32)?;
    w.write_all(s.as_bytes())
}

fn get_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn get_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

fn get_f64s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; n * 8];
    r.read_exact(&mut buf)?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect())
}

fn get_str<R: Read>(r: &mut R) -> Result<String> {
    let n = get_u32(r)? as usize;
    if n > 1 << 20 {
        return Err(GridError::Corrupt(format!("string of {n} bytes")));
    }
    let mut buf = vec![0u8; n];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|e| GridError::Corrupt(e.to_string()))
}
