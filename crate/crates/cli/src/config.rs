//! Config-file merging, output metadata and exit codes.

use std::fmt;
use std::fs;
use std::path::Path;
use std::process::ExitCode;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(tvvar::Error),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<tvvar::Error> for CliError {
    fn from(e: tvvar::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        use tvvar::Error::*;
        ExitCode::from(match self {
            CliError::Usage(_) | CliError::Core(InvalidInput(_)) => 1,
            CliError::Core(Numerical(_)) => 3,
            CliError::Core(_) => 2,
        })
    }
}

pub fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Overlay flags given on the command line onto the config file (if any).
/// Unknown keys in the file are rejected.
pub fn resolve<T: Serialize + DeserializeOwned>(flags: &T, config: Option<&Path>) -> CliResult<T> {
    let mut merged = match config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
            match serde_json::from_str::<Value>(&text) {
                Ok(Value::Object(map)) => map,
                Ok(_) => return Err(usage("config file must hold a JSON object")),
                Err(e) => return Err(usage(format!("config {}: {e}", path.display()))),
            }
        }
        None => Map::new(),
    };
    serde_json::from_value::<T>(Value::Object(merged.clone())).map_err(|e| usage(format!("config: {e}")))?;
    if let Value::Object(cli) = serde_json::to_value(flags)? {
        for (k, v) in cli {
            if !v.is_null() {
                merged.insert(k, v);
            }
        }
    }
    serde_json::from_value(Value::Object(merged)).map_err(|e| usage(format!("config: {e}")))
}

/// Provenance attached to every output file.
#[derive(Debug, Clone, Serialize)]
pub struct Metadata {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub seed: Option<u64>,
    pub config_hash: String,
}

impl Metadata {
    pub fn new<T: Serialize>(command: &'static str, seed: Option<u64>, config: &T) -> CliResult<Self> {
        let canonical = serde_json::to_string(config)?;
        Ok(Metadata {
            tool: "tvvar",
            version: env!("CARGO_PKG_VERSION"),
            command,
            seed,
            config_hash: hex::encode(Sha256::digest(canonical.as_bytes())),
        })
    }

    pub fn comment_lines(&self) -> Vec<String> {
        vec![
            format!("tool: {} {}", self.tool, self.version),
            format!("command: {}", self.command),
            format!("seed: {}", self.seed.map_or_else(|| "none".into(), |s| s.to_string())),
            format!("config_hash: {}", self.config_hash),
        ]
    }
}

/// Write `{"metadata": ..., key: payload}` as pretty JSON.
pub fn write_json<T: Serialize>(path: &Path, meta: &Metadata, key: &str, payload: &T) -> CliResult<()> {
    let mut doc = Map::new();
    doc.insert("metadata".into(), serde_json::to_value(meta)?);
    doc.insert(key.into(), serde_json::to_value(payload)?);
    let mut text = serde_json::to_string_pretty(&Value::Object(doc))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| io_error(path, e))
}

/// Read the payload under `key`, accepting bare payloads too.
pub fn read_json<T: DeserializeOwned>(path: &Path, key: &str) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| {
        CliError::Core(tvvar::Error::Data(format!("cannot read {}: {e}", path.display())))
    })?;
    let mut v: Value = serde_json::from_str(&text)?;
    let wrapped = v.get("metadata").is_some() && v.get(key).is_some();
    let payload = if wrapped { v[key].take() } else { v };
    Ok(serde_json::from_value(payload)?)
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::Core(tvvar::Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

pub fn create_file(path: &Path) -> CliResult<fs::File> {
    fs::File::create(path).map_err(|e| io_error(path, e))
}
