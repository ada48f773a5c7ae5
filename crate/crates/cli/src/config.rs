//! Layered run configuration: struct defaults, then `--config` file, then
//! `--set key=value` overrides, then dedicated flags. Every layer goes
//! through the same strict deserialization, so an unknown key anywhere is an
//! error.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use toml::{Table, Value};

use crate::CliError;

pub const SNAPSHOT_FILE: &str = "resolved-config.toml";

fn parse_override(raw: &str) -> Result<(String, Value), CliError> {
    let (key, value) = raw
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override `{raw}` is not key=value")))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(CliError::Config(format!(
            "override `{raw}` has an empty key"
        )));
    }
    // bare words such as `family=merging` are taken as strings
    let value = toml::from_str::<Table>(&format!("v = {value}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(value.trim().to_owned()));
    Ok((key.to_owned(), value))
}

/// Builds `T` from its defaults and the given layers.
pub fn resolve<T>(file: Option<&Path>, overrides: &[String], flags: Table) -> Result<T, CliError>
where
    T: Serialize + DeserializeOwned + Default,
{
    let mut table = Table::try_from(T::default())
        .map_err(|e| CliError::Config(format!("default configuration: {e}")))?;
    if let Some(path) = file {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let from_file: Table = toml::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        table.extend(from_file);
    }
    for raw in overrides {
        let (k, v) = parse_override(raw)?;
        table.insert(k, v);
    }
    table.extend(flags);
    table
        .try_into()
        .map_err(|e: toml::de::Error| CliError::Config(e.message().to_owned()))
}

/// Writes the resolved settings next to the command's outputs.
pub fn write_snapshot<T: Serialize>(
    dir: &Path,
    command: &str,
    settings: &T,
) -> Result<(), CliError> {
    let body = toml::to_string_pretty(settings)
        .map_err(|e| CliError::Runtime(anyhow::anyhow!("serializing configuration: {e}")))?;
    let text = format!("# encforge {command}\n{body}");
    let path = dir.join(SNAPSHOT_FILE);
    std::fs::write(&path, text)
        .map_err(|e| CliError::Runtime(anyhow::anyhow!("{}: {e}", path.display())))
}
