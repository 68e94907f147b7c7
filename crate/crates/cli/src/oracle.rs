//! Closed-form Gaussian values for scripted cross-checks.

use std::str::FromStr;

use serde::Serialize;
use seqtrans::gaussian::{
    cholesky_lower, conditional_gaussian_transport_2d, gaussian_ot_map, markov_precision_check, rotation_sweep,
    upper_triangular_transport_2d, Gaussian2dParams, GaussianSpec,
};
use seqtrans::nalgebra::DMatrix;

use crate::commands::SynthSpec;
use crate::error::{CliError, Result};
use crate::manifest::Manifest;
use crate::output::{num, write_csv, write_json};
use crate::pipeline::read_dag;
use crate::OracleCommand;

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn params(text: &str) -> Result<Gaussian2dParams> {
    Ok(Gaussian2dParams::from_str(text)?)
}

fn point(text: &str) -> Result<(f64, f64)> {
    let v = crate::pipeline::parse_point(text, 2)?;
    Ok((v[0], v[1]))
}

#[derive(Serialize)]
struct OtMapOut {
    matrix: Vec<Vec<f64>>,
    mean0: Vec<f64>,
    mean1: Vec<f64>,
    translation: Vec<f64>,
}

#[derive(Serialize)]
struct Transport2dOut {
    order: &'static str,
    x: f64,
    y: f64,
    x_star: f64,
    y_star: f64,
}

#[derive(Serialize)]
struct MarkovOut {
    is_markov: bool,
    tolerance: f64,
    violations: Vec<(String, String)>,
}

pub const OT_MAP_FILE: &str = "ot_map.json";
pub const CHOLESKY_FILE: &str = "cholesky.json";
pub const CONDITIONAL_FILE: &str = "conditional_2d.json";
pub const SWEEP_FILE: &str = "rotate_sweep.csv";
pub const MARKOV_FILE: &str = "markov_check.json";

pub fn run(cmd: &OracleCommand, manifest: &mut Manifest) -> Result<()> {
    let out = cmd.out();
    std::fs::create_dir_all(out)?;
    match cmd {
        OracleCommand::OtMap { spec, .. } => {
            let spec = SynthSpec::read(spec, manifest)?;
            let (g0, g1) = spec.pair()?;
            let map = gaussian_ot_map(g0, g1)?;
            let value = OtMapOut {
                matrix: rows(&map.matrix),
                mean0: map.mean0.iter().copied().collect(),
                mean1: map.mean1.iter().copied().collect(),
                translation: map.translation().iter().copied().collect(),
            };
            write_json(&out.join(OT_MAP_FILE), &value)?;
            manifest.output(OT_MAP_FILE);
        }
        OracleCommand::Cholesky { spec, .. } => {
            let spec = SynthSpec::read(spec, manifest)?;
            let mut factors = std::collections::BTreeMap::new();
            for (label, g) in &spec.groups {
                let l = cholesky_lower(g.covariance()).map_err(|e| CliError::Numeric(e.to_string()))?;
                factors.insert(label.clone(), rows(&l));
            }
            write_json(&out.join(CHOLESKY_FILE), &factors)?;
            manifest.output(CHOLESKY_FILE);
        }
        OracleCommand::Conditional2d {
            p0, p1, point: pt, upper, ..
        } => {
            let (p0, p1, (x, y)) = (params(p0)?, params(p1)?, point(pt)?);
            let (x_star, y_star) = if *upper {
                upper_triangular_transport_2d(&p0, &p1, (x, y))?
            } else {
                conditional_gaussian_transport_2d(&p0, &p1, (x, y))?
            };
            let value = Transport2dOut {
                order: if *upper { "y,x" } else { "x,y" },
                x,
                y,
                x_star,
                y_star,
            };
            println!("{} {}", num(x_star), num(y_star));
            write_json(&out.join(CONDITIONAL_FILE), &value)?;
            manifest.output(CONDITIONAL_FILE);
        }
        OracleCommand::RotateSweep {
            p0, p1, point: pt, angles, ..
        } => {
            if *angles == 0 {
                return Err(CliError::validation("--angles must be positive"));
            }
            let sweep = rotation_sweep(&params(p0)?, &params(p1)?, point(pt)?, *angles)?;
            write_csv(
                &out.join(SWEEP_FILE),
                &["theta", "x_star", "y_star"],
                sweep.iter().map(|s| vec![num(s.theta), num(s.x_star), num(s.y_star)]),
            )?;
            manifest.output(SWEEP_FILE);
        }
        OracleCommand::MarkovCheck { spec, dag, tol, .. } => {
            let text = std::fs::read_to_string(spec).map_err(|e| CliError::validation(format!("{}: {e}", spec.display())))?;
            manifest.add_input(spec)?;
            let g: GaussianSpec = serde_json::from_str(&text)?;
            let dag = read_dag(dag, manifest)?;
            let check = markov_precision_check(&g, &dag, *tol)?;
            println!("{}", check.is_markov);
            let value = MarkovOut {
                is_markov: check.is_markov,
                tolerance: *tol,
                violations: check.violation_names,
            };
            write_json(&out.join(MARKOV_FILE), &value)?;
            manifest.output(MARKOV_FILE);
        }
    }
    Ok(())
}
