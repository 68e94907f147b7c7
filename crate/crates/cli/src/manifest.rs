//! Run manifest: everything needed to audit and reproduce a run.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use seqtrans::seqtransport::VariableBandwidths;
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct GroupInfo {
    pub sensitive: String,
    pub source_level: String,
    pub target_level: String,
    pub source_rows: usize,
    pub target_rows: usize,
    pub dropped_rows: usize,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct GridInfo {
    pub k: usize,
    pub interpolated: bool,
    pub cache: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub kind: String,
    pub exit_code: i32,
    pub message: String,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// Working directory the run was started from; relative paths in `argv`
    /// resolve against it.
    pub cwd: String,
    /// Arguments after the program name, without `--out`.
    pub argv: Vec<String>,
    pub config: serde_json::Value,
    pub config_hash: String,
    /// SHA-256 of every input file, keyed by the path as given.
    pub inputs: BTreeMap<String, String>,
    pub engine: Option<String>,
    pub order: Vec<String>,
    pub bandwidths: Vec<VariableBandwidths>,
    pub groups: Option<GroupInfo>,
    pub grid: Option<GridInfo>,
    pub warnings: Vec<String>,
    pub outputs: Vec<String>,
    pub error: Option<ErrorRecord>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn hash_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
    Ok(sha256_hex(&bytes))
}

/// Drops `--out <dir>` / `--out=<dir>` from an argument list.
pub fn strip_out(args: &[String]) -> Vec<String> {
    let mut out = Vec::with_capacity(args.len());
    let mut skip = false;
    for a in args {
        if skip {
            skip = false;
            continue;
        }
        if a == "--out" {
            skip = true;
            continue;
        }
        if a.starts_with("--out=") {
            continue;
        }
        out.push(a.clone());
    }
    out
}

impl Manifest {
    pub fn new(command: &str, argv: &[String], config: serde_json::Value) -> Self {
        let config_hash = sha256_hex(config.to_string().as_bytes());
        Self {
            tool: "seqtrans".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            cwd: std::env::current_dir()
                .map(|p| p.display().to_string())
                .unwrap_or_default(),
            argv: strip_out(argv),
            config,
            config_hash,
            ..Self::default()
        }
    }

    pub fn add_input(&mut self, path: &Path) -> Result<()> {
        let h = hash_file(path)?;
        self.inputs.insert(path.display().to_string(), h);
        Ok(())
    }

    pub fn warn(&mut self, w: impl Into<String>) {
        self.warnings.push(w.into());
    }

    pub fn output(&mut self, name: impl Into<String>) {
        self.outputs.push(name.into());
    }

    pub fn fail(&mut self, e: &CliError) {
        self.error = Some(ErrorRecord {
            kind: e.kind().into(),
            exit_code: e.exit_code(),
            message: e.message().into(),
        });
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(dir.join(MANIFEST_FILE), text)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
        Ok(serde_json::from_str(&text)?)
    }
}
