//! Option resolution (flags over config file over defaults) and run
//! manifests.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::Failure;

/// Overlays the config file and then the explicitly given flags onto the
/// defaults of `R`.
///
/// The config file is a JSON object keyed by flag name (underscores for
/// dashes). A manifest written by an earlier run is accepted as well, which
/// makes `--config out.json.manifest.json` replay that run.
pub fn resolve<A, R>(command: &str, flags: &A, config: Option<&Path>) -> Result<R, Failure>
where
    A: Serialize,
    R: Serialize + DeserializeOwned + Default,
{
    let mut merged = to_object(&R::default());
    if let Some(path) = config {
        let file: Value = lipest::json::read_file(path)?;
        let file = match file {
            Value::Object(mut obj) if obj.contains_key("command") && obj.contains_key("config") => {
                if obj["command"] != command {
                    return Err(Failure::usage(format!(
                        "{} is a manifest of `{}`, not `{command}`",
                        path.display(),
                        obj["command"].as_str().unwrap_or("?")
                    )));
                }
                obj.remove("config").unwrap_or_default()
            }
            other => other,
        };
        let Value::Object(file) = file else {
            return Err(Failure::usage(format!(
                "{}: config must be a JSON object",
                path.display()
            )));
        };
        overlay(&mut merged, file);
    }
    overlay(&mut merged, to_object(flags));
    serde_json::from_value(Value::Object(merged))
        .map_err(|e| Failure::usage(format!("invalid configuration: {e}")))
}

fn to_object<T: Serialize>(value: &T) -> Map<String, Value> {
    match serde_json::to_value(value) {
        Ok(Value::Object(m)) => m,
        _ => Map::new(),
    }
}

fn overlay(base: &mut Map<String, Value>, top: Map<String, Value>) {
    for (k, v) in top {
        if !v.is_null() {
            base.insert(k, v);
        }
    }
}

/// Returns the value or a usage error naming the missing flag.
pub fn require<T: Clone>(value: &Option<T>, flag: &str) -> Result<T, Failure> {
    value.clone().ok_or_else(|| Failure::missing(flag))
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
    pub seed: Option<u64>,
    pub config: Value,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub results: Option<Value>,
}

impl RunManifest {
    pub fn new<C: Serialize>(command: &str, config: &C, seed: Option<u64>) -> Self {
        RunManifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map_or(0, |d| d.as_secs()),
            seed,
            config: serde_json::to_value(config).unwrap_or(Value::Null),
            inputs: Vec::new(),
            outputs: Vec::new(),
            results: None,
        }
    }

    /// Writes `<primary output>.manifest.json`.
    pub fn write(&self, primary: &Path) -> Result<PathBuf, Failure> {
        let path = manifest_path(primary);
        lipest::json::write_file(&path, self)?;
        Ok(path)
    }
}

pub fn manifest_path(primary: &Path) -> PathBuf {
    let mut name = primary.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}
