//! `seqtrans` command line: fit, transport, audit, synth, oracle, plotdata.
//!
//! Every data command writes its results plus a `manifest.json` under
//! `--out`. The manifest is also written when a command fails, with an
//! error record, and can be replayed with `seqtrans rerun`.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

pub mod commands;
pub mod error;
pub mod manifest;
pub mod oracle;
pub mod output;
pub mod pipeline;

use error::{CliError, EXIT_OK, EXIT_VALIDATION};
use manifest::Manifest;

#[derive(Debug, Parser)]
#[command(name = "seqtrans", version, about = "Sequential transport counterfactuals and fairness audits")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Fit bandwidths (and grid tensors) and write a summary.
    Fit(DataArgs),
    /// Counterfactuals for every source-group row.
    Transport(DataArgs),
    /// Fit aware/unaware models and report counterfactual demographic parity.
    Audit(AuditArgs),
    /// Sample a two-group Gaussian dataset.
    Synth(SynthArgs),
    /// Closed-form Gaussian transports.
    #[command(subcommand)]
    Oracle(OracleCommand),
    /// Per-step densities and CDFs of one individual's transport.
    Plotdata(PlotArgs),
    /// Replay a run from its manifest.
    Rerun(RerunArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    /// Kernel-weighted conditional fits per individual.
    Individual,
    /// Precomputed CDF/quantile tensors.
    Grid,
}

impl Engine {
    pub fn name(self) -> &'static str {
        match self {
            Engine::Individual => "individual",
            Engine::Grid => "grid",
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DataArgs {
    /// Graph file.
    #[arg(long)]
    pub dag: PathBuf,
    /// CSV with a header row.
    #[arg(long)]
    pub data: PathBuf,
    /// Sensitive column; defaults to the graph's sensitive node.
    #[arg(long)]
    pub sensitive: Option<String>,
    /// Label of the group that is transported.
    #[arg(long, default_value = "0", allow_hyphen_values = true)]
    pub source_level: String,
    /// Label of the group transported to.
    #[arg(long, default_value = "1", allow_hyphen_values = true)]
    pub target_level: String,
    #[arg(long, default_value_t = 201)]
    pub grid_size: usize,
    #[arg(long, default_value_t = 1.0)]
    pub bandwidth_scale: f64,
    /// Defaults to `grid` from 200 source rows, `individual` below.
    #[arg(long, value_enum)]
    pub engine: Option<Engine>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Break ties by adding uniform noise below half the smallest gap.
    #[arg(long)]
    pub jitter: bool,
    /// Multilinear lookup in the grid tensors instead of nearest cells.
    #[arg(long)]
    pub interp_grid: bool,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct AuditArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Target column; defaults to the graph's outcome node. Non-binary
    /// targets are split at the median.
    #[arg(long)]
    pub target: Option<String>,
    /// Audit this model (JSON) instead of fitting aware/unaware models.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Model features; defaults to every transported variable.
    #[arg(long, value_delimiter = ',')]
    pub features: Option<Vec<String>>,
    /// Write per-step score changes to decomposition.csv.
    #[arg(long)]
    pub decompose: bool,
    /// Decompose only this point, e.g. `--individual=-2,-1`.
    #[arg(long, allow_hyphen_values = true)]
    pub individual: Option<String>,
    /// Keep per-individual scores in audit.json.
    #[arg(long)]
    pub per_individual: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PlotArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Point to trace, one value per variable; defaults to source-group medians.
    #[arg(long, allow_hyphen_values = true)]
    pub individual: Option<String>,
    /// Also write a minimal SVG per step.
    #[arg(long)]
    pub svg: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SynthArgs {
    /// JSON: {"variables": [...], "sensitive": "s", "groups": {"0": {mean, covariance}, "1": {...}}}
    #[arg(long)]
    pub spec: PathBuf,
    /// Rows per group.
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleCommand {
    /// Linear OT map between groups `0` and `1` of a synth spec.
    OtMap {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        #[serde(skip)]
        out: PathBuf,
    },
    /// Lower Cholesky factor of each group covariance.
    Cholesky {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        #[serde(skip)]
        out: PathBuf,
    },
    /// Conditional transport of one point between bivariate Gaussians.
    #[command(name = "conditional-2d")]
    Conditional2d {
        /// `mu_x,mu_y,sigma_x,sigma_y,r`
        #[arg(long, allow_hyphen_values = true)]
        p0: String,
        #[arg(long, allow_hyphen_values = true)]
        p1: String,
        /// `x,y`
        #[arg(long, allow_hyphen_values = true)]
        point: String,
        /// Transport y first, then x given y.
        #[arg(long)]
        upper: bool,
        #[arg(long)]
        #[serde(skip)]
        out: PathBuf,
    },
    /// Image of a point for equally spaced transport directions.
    RotateSweep {
        #[arg(long, allow_hyphen_values = true)]
        p0: String,
        #[arg(long, allow_hyphen_values = true)]
        p1: String,
        #[arg(long, allow_hyphen_values = true)]
        point: String,
        #[arg(long, default_value_t = 64)]
        angles: usize,
        #[arg(long)]
        #[serde(skip)]
        out: PathBuf,
    },
    /// Whether a Gaussian's precision matrix respects the graph.
    MarkovCheck {
        /// JSON {mean, covariance} over the non-outcome nodes in graph order.
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        dag: PathBuf,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        #[arg(long)]
        #[serde(skip)]
        out: PathBuf,
    },
}

impl OracleCommand {
    pub fn out(&self) -> &Path {
        match self {
            OracleCommand::OtMap { out, .. }
            | OracleCommand::Cholesky { out, .. }
            | OracleCommand::Conditional2d { out, .. }
            | OracleCommand::RotateSweep { out, .. }
            | OracleCommand::MarkovCheck { out, .. } => out,
        }
    }

    fn name(&self) -> &'static str {
        match self {
            OracleCommand::OtMap { .. } => "oracle ot-map",
            OracleCommand::Cholesky { .. } => "oracle cholesky",
            OracleCommand::Conditional2d { .. } => "oracle conditional-2d",
            OracleCommand::RotateSweep { .. } => "oracle rotate-sweep",
            OracleCommand::MarkovCheck { .. } => "oracle markov-check",
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct RerunArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Output directory; defaults to the manifest's directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Fit(_) => "fit",
            Command::Transport(_) => "transport",
            Command::Audit(_) => "audit",
            Command::Synth(_) => "synth",
            Command::Oracle(o) => o.name(),
            Command::Plotdata(_) => "plotdata",
            Command::Rerun(_) => "rerun",
        }
    }

    fn out(&self) -> Option<&Path> {
        match self {
            Command::Fit(a) | Command::Transport(a) => Some(&a.out),
            Command::Audit(a) => Some(&a.data.out),
            Command::Plotdata(a) => Some(&a.data.out),
            Command::Synth(a) => Some(&a.out),
            Command::Oracle(o) => Some(o.out()),
            Command::Rerun(_) => None,
        }
    }
}

/// Parses `args` (program name first) and runs the command. Returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
        }
    };
    let rest: Vec<String> = argv
        .iter()
        .skip(1)
        .map(|a| a.to_string_lossy().into_owned())
        .collect();
    execute(&cli.command, &rest)
}

fn execute(command: &Command, argv: &[String]) -> i32 {
    if let Command::Rerun(r) = command {
        return match rerun(r) {
            Ok(code) => code,
            Err(e) => {
                eprintln!("{e}");
                e.exit_code()
            }
        };
    }
    let config = serde_json::json!({ "command": command.name(), "args": command });
    let mut manifest = Manifest::new(command.name(), argv, config);
    let result = match command {
        Command::Fit(a) => commands::fit(a, &mut manifest),
        Command::Transport(a) => commands::transport(a, &mut manifest),
        Command::Audit(a) => commands::audit(a, &mut manifest),
        Command::Synth(a) => commands::synth(a, &mut manifest),
        Command::Oracle(o) => oracle::run(o, &mut manifest),
        Command::Plotdata(a) => commands::plotdata(a, &mut manifest),
        Command::Rerun(_) => unreachable!(),
    };
    for w in &manifest.warnings {
        eprintln!("warning: {w}");
    }
    let mut code = EXIT_OK;
    if let Err(e) = &result {
        eprintln!("{e}");
        manifest.fail(e);
        code = e.exit_code();
    }
    if let Some(out) = command.out() {
        if let Err(e) = manifest.write(out) {
            eprintln!("cannot write manifest: {e}");
            if code == EXIT_OK {
                code = e.exit_code();
            }
        }
    }
    code
}

fn rerun(args: &RerunArgs) -> Result<i32, CliError> {
    let m = Manifest::read(&args.manifest)?;
    if m.argv.first().map(String::as_str) == Some("rerun") {
        return Err(CliError::validation("manifest records a rerun"));
    }
    let here = std::env::current_dir()?;
    let out = match &args.out {
        Some(o) => here.join(o),
        None => here.join(args.manifest.parent().unwrap_or(Path::new("."))),
    };
    if !m.cwd.is_empty() {
        std::env::set_current_dir(&m.cwd).map_err(|e| CliError::validation(format!("{}: {e}", m.cwd)))?;
    }
    let mut argv: Vec<OsString> = vec!["seqtrans".into()];
    argv.extend(m.argv.iter().map(OsString::from));
    argv.push("--out".into());
    argv.push(out.into_os_string());
    Ok(run(argv))
}
