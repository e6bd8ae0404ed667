//! `key = value` config files and resolved-config snapshots.
//!
//! Keys are flag names without the leading dashes. A file value is used only
//! when the flag is absent from the command line.

use std::ffi::OsString;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Serialize;

/// Parses `key = value` lines; blank lines and `#` comments are skipped.
pub fn parse(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            bail!("line {}: expected `key = value`", i + 1);
        };
        let key = key.trim().trim_start_matches("--").replace('_', "-");
        out.push((key, value.trim().to_string()));
    }
    Ok(out)
}

/// Finds `--config PATH` (or `--config=PATH`) and splices the file's settings
/// in after the subcommand, skipping any flag already given.
pub fn merge_config_file(args: Vec<OsString>) -> Result<Vec<OsString>> {
    let strings: Vec<String> = args
        .iter()
        .map(|a| a.to_string_lossy().into_owned())
        .collect();
    let mut path = None;
    for (i, a) in strings.iter().enumerate() {
        if a == "--config" {
            path = strings.get(i + 1).cloned();
        } else if let Some(p) = a.strip_prefix("--config=") {
            path = Some(p.to_string());
        }
    }
    let Some(path) = path else {
        return Ok(args);
    };
    let text = fs::read_to_string(&path).with_context(|| format!("reading config file {path}"))?;
    let given = |key: &str| {
        let flag = format!("--{key}");
        strings
            .iter()
            .any(|a| *a == flag || a.starts_with(&format!("{flag}=")))
    };
    let mut extra = Vec::new();
    for (key, value) in parse(&text)? {
        if given(&key) {
            continue;
        }
        match value.as_str() {
            "true" => extra.push(format!("--{key}")),
            "false" => {}
            _ => {
                // list-valued flags may repeat; each item becomes its own occurrence
                for item in value.split(';') {
                    extra.push(format!("--{key}"));
                    extra.push(item.trim().to_string());
                }
            }
        }
    }
    // insert right after the subcommand name (first non-flag argument)
    let at = strings
        .iter()
        .skip(1)
        .position(|a| !a.starts_with('-'))
        .map_or(strings.len(), |p| p + 2);
    let mut out = args;
    let tail = out.split_off(at.min(out.len()));
    out.extend(extra.into_iter().map(OsString::from));
    out.extend(tail);
    Ok(out)
}

/// Writes every setting as `key = value`, sorted by key, in the format
/// accepted back through `--config`.
pub fn write_resolved(dir: &Path, command: &str, settings: &impl Serialize) -> Result<()> {
    let value = serde_json::to_value(settings)?;
    let mut text = format!("# resolved settings for `crowdclose {command}`\n");
    if let serde_json::Value::Object(map) = value {
        for (key, v) in map {
            let key = key.replace('_', "-");
            let rendered = match v {
                serde_json::Value::Null => continue,
                serde_json::Value::String(s) => s,
                serde_json::Value::Array(items) => items
                    .iter()
                    .map(|i| match i {
                        serde_json::Value::String(s) => s.clone(),
                        other => other.to_string(),
                    })
                    .collect::<Vec<_>>()
                    .join(";"),
                other => other.to_string(),
            };
            text.push_str(&format!("{key} = {rendered}\n"));
        }
    }
    fs::write(dir.join("resolved_config.txt"), text)?;
    Ok(())
}
