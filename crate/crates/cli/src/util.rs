use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::error::{CliError, CliResult};

pub fn require_file(path: &Path, flag: &str) -> CliResult<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::new("io", format!("{flag} {}: no such file", path.display())))
    }
}

pub fn require_dir(path: &Path, flag: &str) -> CliResult<()> {
    if path.is_dir() {
        Ok(())
    } else {
        Err(CliError::new("io", format!("{flag} {}: no such directory", path.display())))
    }
}

/// The directory an output file will be written into must already exist.
pub fn require_parent(path: &Path, flag: &str) -> CliResult<()> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => require_dir(p, flag),
        _ => Ok(()),
    }
}

pub fn write_json(path: &Path, value: &impl Serialize) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).expect("serializable") + "\n";
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}
