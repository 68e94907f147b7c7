use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use seqtrans::fairness::{
    binary_target, cdp, decompose_individual, fit_logistic, AuditGroups, FairnessReport, LogisticModel,
    LogisticOptions, ModelKind,
};
use seqtrans::gaussian::{sample_gaussian_stream, GaussianSpec};
use seqtrans::gridtransport::MAX_PARENTS;
use seqtrans::seqtransport::{transport_with_trace, CounterfactualResult, Side};

use crate::error::{CliError, Result};
use crate::manifest::Manifest;
use crate::output::{num, svg_curves, write_csv, write_json, write_matrix};
use crate::pipeline::{collect_warnings, parse_point, prepare, Prepared};
use crate::{AuditArgs, DataArgs, PlotArgs, SynthArgs};

pub const FIT_FILE: &str = "fit.json";
pub const TENSOR_FILE: &str = "tensors.stgt";
pub const COUNTERFACTUAL_FILE: &str = "counterfactuals.csv";
pub const AUDIT_FILE: &str = "audit.json";
pub const MODELS_FILE: &str = "models.json";
pub const DECOMPOSITION_FILE: &str = "decomposition.csv";
pub const STEPS_FILE: &str = "steps.csv";

#[derive(Serialize)]
struct FitSummary<'a> {
    engine: &'a str,
    variables: &'a [String],
    order: &'a [String],
    parents: BTreeMap<&'a str, Vec<&'a str>>,
    source_rows: usize,
    target_rows: usize,
    grid: Option<GridSummary>,
}

#[derive(Serialize)]
struct GridSummary {
    k: usize,
    elements: BTreeMap<String, usize>,
}

pub fn fit(args: &DataArgs, manifest: &mut Manifest) -> Result<()> {
    let p = prepare(args, &[], manifest)?;
    let names = p.ctx.variables();
    let parents = (0..names.len())
        .map(|slot| {
            let ps = p.ctx.parents(slot).iter().map(|&q| names[q].as_str()).collect();
            (names[slot].as_str(), ps)
        })
        .collect();
    let grid = p.tensors.as_ref().map(|t| GridSummary {
        k: t.k(),
        elements: (0..names.len())
            .map(|slot| {
                (
                    names[slot].clone(),
                    t.element_count(slot, Side::Source) + t.element_count(slot, Side::Target),
                )
            })
            .collect(),
    });
    let summary = FitSummary {
        engine: p.engine.name(),
        variables: names,
        order: manifest.order.as_slice(),
        parents,
        source_rows: p.ctx.group_size(Side::Source),
        target_rows: p.ctx.group_size(Side::Target),
        grid,
    };
    std::fs::create_dir_all(&args.out)?;
    write_json(&args.out.join(FIT_FILE), &summary)?;
    manifest.output(FIT_FILE);
    if let Some(t) = &p.tensors {
        t.save(args.out.join(TENSOR_FILE))?;
        manifest.output(TENSOR_FILE);
    }
    Ok(())
}

pub fn transport(args: &DataArgs, manifest: &mut Manifest) -> Result<()> {
    let p = prepare(args, &[], manifest)?;
    let results = p.counterfactuals(&p.source_rows())?;
    collect_warnings(&results, manifest);

    let ds = &p.dataset;
    let mut header = vec![ds.sensitive_name().to_string()];
    header.extend(ds.names().iter().cloned());
    header.extend(p.ctx.variables().iter().map(|v| format!("{v}_star")));
    let rows = p
        .ctx
        .group_indices(Side::Source)
        .iter()
        .zip(&results)
        .map(|(&i, r)| {
            let mut row = vec![args.source_level.clone()];
            row.extend(ds.columns().iter().map(|c| num(c[i])));
            row.extend(r.transported.iter().map(|&v| num(v)));
            row
        });
    std::fs::create_dir_all(&args.out)?;
    write_csv(&args.out.join(COUNTERFACTUAL_FILE), &header, rows)?;
    manifest.output(COUNTERFACTUAL_FILE);
    Ok(())
}

fn audit_target(args: &AuditArgs, p: &Prepared) -> Result<Option<String>> {
    let name = args
        .target
        .clone()
        .or_else(|| p.dag.outcome().map(|o| p.dag.name(o).to_string()));
    match name {
        Some(n) if p.dataset.column_index(&n).is_some() => Ok(Some(n)),
        Some(n) => Err(CliError::validation(format!("target column `{n}` not found in data"))),
        None => Ok(None),
    }
}

fn fit_models(args: &AuditArgs, p: &Prepared, manifest: &mut Manifest) -> Result<Vec<LogisticModel>> {
    if let Some(path) = &args.model {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
        manifest.add_input(path)?;
        let model: LogisticModel = serde_json::from_str(&text)?;
        model.validate()?;
        return Ok(vec![model]);
    }
    let Some(target) = audit_target(args, p)? else {
        return Err(CliError::validation(
            "audit needs --target, an outcome node in the graph, or --model",
        ));
    };
    let (y, binarized) = binary_target(p.dataset.column(&target)?);
    if binarized {
        manifest.warn(format!("target `{target}` binarized at its median"));
    }
    let features: Vec<String> = match &args.features {
        Some(f) => f.clone(),
        None => p.ctx.variables().to_vec(),
    };
    let features: Vec<&str> = features.iter().map(String::as_str).collect();
    let mut models = Vec::new();
    for aware in [true, false] {
        let fit = fit_logistic(&p.dataset, &y, &features, aware, LogisticOptions::default())?;
        let kind = if aware { "aware" } else { "unaware" };
        for w in fit.warnings {
            manifest.warn(format!("{kind} model: {w}"));
        }
        if !fit.model.converged {
            manifest.warn(format!(
                "{kind} model: IRLS did not converge after {} iterations",
                fit.model.iterations
            ));
        }
        models.push(fit.model);
    }
    Ok(models)
}

fn kind_name(kind: ModelKind) -> &'static str {
    match kind {
        ModelKind::Aware => "aware",
        ModelKind::Unaware => "unaware",
    }
}

pub fn audit(args: &AuditArgs, manifest: &mut Manifest) -> Result<()> {
    let extra: Vec<String> = args.target.iter().cloned().collect();
    let p = prepare(&args.data, &extra, manifest)?;
    let models = fit_models(args, &p, manifest)?;

    let originals = p.source_rows();
    let results = p.counterfactuals(&originals)?;
    collect_warnings(&results, manifest);
    let counterfactuals: Vec<Vec<f64>> = results.iter().map(|r| r.transported.clone()).collect();
    let groups = AuditGroups {
        target_size: p.ctx.group_size(Side::Target),
        ..AuditGroups::default()
    };
    let variables = p.ctx.variables();

    let mut reports: BTreeMap<&str, FairnessReport> = BTreeMap::new();
    let mut model_map: BTreeMap<&str, &LogisticModel> = BTreeMap::new();
    for m in &models {
        let report = cdp(m, variables, &originals, &counterfactuals, groups, args.per_individual)?;
        let key = kind_name(m.kind());
        println!("{key} CDP {}", num(report.cdp));
        reports.insert(key, report);
        model_map.insert(key, m);
    }

    let decomposition = if args.decompose || args.individual.is_some() {
        let subjects: Vec<(String, CounterfactualResult)> = match &args.individual {
            Some(text) => {
                let a = parse_point(text, variables.len())?;
                let r = p.counterfactuals(&[a])?.remove(0);
                vec![("individual".to_string(), r)]
            }
            None => results
                .iter()
                .zip(p.ctx.group_indices(Side::Source))
                .map(|(r, &i)| (i.to_string(), r.clone()))
                .collect(),
        };
        let mut rows = Vec::new();
        for m in &models {
            for (id, r) in &subjects {
                let path = decompose_individual(m, r, groups.source_level, groups.target_level)?;
                if args.individual.is_some() {
                    println!(
                        "{} path: {}",
                        kind_name(m.kind()),
                        path.steps
                            .iter()
                            .map(|s| format!("{} {:.2}%", s.label, 100.0 * s.after))
                            .collect::<Vec<_>>()
                            .join(" -> ")
                    );
                }
                for (step, s) in path.steps.iter().enumerate() {
                    rows.push(vec![
                        kind_name(m.kind()).to_string(),
                        id.clone(),
                        step.to_string(),
                        s.label.clone(),
                        num(s.before),
                        num(s.after),
                        num(s.delta),
                    ]);
                }
            }
        }
        Some(rows)
    } else {
        None
    };

    std::fs::create_dir_all(&args.data.out)?;
    write_json(&args.data.out.join(AUDIT_FILE), &reports)?;
    manifest.output(AUDIT_FILE);
    write_json(&args.data.out.join(MODELS_FILE), &model_map)?;
    manifest.output(MODELS_FILE);
    if let Some(rows) = decomposition {
        write_csv(
            &args.data.out.join(DECOMPOSITION_FILE),
            &["model", "row", "step", "label", "before", "after", "delta"],
            rows,
        )?;
        manifest.output(DECOMPOSITION_FILE);
    }
    Ok(())
}

/// Two-group Gaussian description read by `synth` and the oracles.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthSpec {
    pub variables: Vec<String>,
    #[serde(default = "default_sensitive")]
    pub sensitive: String,
    pub groups: BTreeMap<String, GaussianSpec>,
}

fn default_sensitive() -> String {
    "s".into()
}

impl SynthSpec {
    pub fn read(path: &Path, manifest: &mut Manifest) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
        manifest.add_input(path)?;
        let spec: SynthSpec = serde_json::from_str(&text)?;
        if spec.groups.is_empty() {
            return Err(CliError::validation("spec has no groups"));
        }
        for (label, g) in &spec.groups {
            if g.dim() != spec.variables.len() {
                return Err(CliError::validation(format!(
                    "group `{label}` has dimension {}, expected {}",
                    g.dim(),
                    spec.variables.len()
                )));
            }
        }
        Ok(spec)
    }

    /// The groups labelled `0` and `1`.
    pub fn pair(&self) -> Result<(&GaussianSpec, &GaussianSpec)> {
        let get = |l: &str| {
            self.groups
                .get(l)
                .ok_or_else(|| CliError::validation(format!("spec has no group `{l}`")))
        };
        Ok((get("0")?, get("1")?))
    }
}

pub const SYNTH_FILE: &str = "data.csv";

pub fn synth(args: &SynthArgs, manifest: &mut Manifest) -> Result<()> {
    let spec = SynthSpec::read(&args.spec, manifest)?;
    let mut header = vec![spec.sensitive.clone()];
    header.extend(spec.variables.iter().cloned());
    let mut rows = Vec::new();
    for (stream, (label, g)) in spec.groups.iter().enumerate() {
        let draws = sample_gaussian_stream(g, args.n, args.seed, stream as u64)?;
        for d in draws {
            let mut row = vec![label.clone()];
            row.extend(d.iter().map(|&v| num(v)));
            rows.push(row);
        }
    }
    std::fs::create_dir_all(&args.out)?;
    write_csv(&args.out.join(SYNTH_FILE), &header, rows)?;
    manifest.output(SYNTH_FILE);
    Ok(())
}

fn median(values: &[f64]) -> f64 {
    seqtrans::stats::median(values).unwrap_or(0.0)
}

pub fn plotdata(args: &PlotArgs, manifest: &mut Manifest) -> Result<()> {
    let p = prepare(&args.data, &[], manifest)?;
    let names = p.ctx.variables().to_vec();
    let point = match &args.individual {
        Some(text) => parse_point(text, names.len())?,
        None => (0..names.len())
            .map(|slot| median(p.ctx.column(Side::Source, slot)))
            .collect(),
    };
    let (result, trace) = transport_with_trace(&p.ctx, &point)?;
    manifest.warnings.extend(result.warnings.iter().cloned());

    let out = &args.data.out;
    std::fs::create_dir_all(out)?;
    let mut step_rows = Vec::new();
    for (i, (step, t)) in result.steps.iter().zip(&trace).enumerate() {
        let file = format!("step_{}_{}.csv", i + 1, step.variable);
        let src = t.source.grid().points();
        let tgt = t.target.grid().points();
        let src_cdf = t.source.cdf.values();
        let tgt_cdf = t.target.cdf.values();
        write_csv(
            &out.join(&file),
            &["x_source", "density_source", "cdf_source", "x_target", "density_target", "cdf_target"],
            (0..src.len()).map(|r| {
                vec![
                    num(src[r]),
                    num(t.source.density[r]),
                    num(src_cdf[r]),
                    num(tgt[r]),
                    num(t.target.density[r]),
                    num(tgt_cdf[r]),
                ]
            }),
        )?;
        manifest.output(file);
        if args.svg {
            let file = format!("step_{}_{}.svg", i + 1, step.variable);
            let svg = svg_curves(
                &step.variable,
                (src, &t.source.density),
                (tgt, &t.target.density),
                &[step.value, step.transported],
            );
            std::fs::write(out.join(&file), svg)?;
            manifest.output(file);
        }
        step_rows.push(vec![
            (i + 1).to_string(),
            step.variable.clone(),
            step.parents.join(";"),
            num(step.value),
            num(step.level),
            num(step.transported),
            step.widenings.to_string(),
        ]);
    }
    write_csv(
        &out.join(STEPS_FILE),
        &["step", "variable", "parents", "value", "level", "transported", "widenings"],
        step_rows,
    )?;
    manifest.output(STEPS_FILE);

    if let Some(t) = &p.tensors {
        let k = t.k();
        for v in t.variables() {
            if v.parents.len() > MAX_PARENTS {
                continue;
            }
            for (side, label) in [(Side::Source, "source"), (Side::Target, "target")] {
                let g = v.group(side);
                for (tensor, kind) in [(&g.cdf, "F"), (&g.quantile, "Q")] {
                    let file = format!("{kind}_{}_{label}.csv", v.name);
                    write_matrix(&out.join(&file), tensor, k)?;
                    manifest.output(file);
                }
                let file = format!("grid_{}_{label}.csv", v.name);
                write_csv(&out.join(&file), &["value"], g.value_grid.iter().map(|&x| vec![num(x)]))?;
                manifest.output(file);
            }
        }
    }
    Ok(())
}
