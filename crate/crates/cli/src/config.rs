//! `--config file.json` support: the file's keys become flag tokens placed
//! before the command-line flags, so explicit flags win.

use std::ffi::OsString;
use std::fs;
use std::path::PathBuf;

use clap::CommandFactory;
use serde_json::Value;

use crate::args::Cli;
use crate::error::{CliError, CliResult};

fn config_path(rest: &[OsString]) -> CliResult<Option<PathBuf>> {
    let mut found = None;
    let mut i = 0;
    while i < rest.len() {
        let arg = rest[i].to_string_lossy();
        if arg == "--" {
            break;
        }
        if arg == "--config" {
            let value = rest.get(i + 1).ok_or_else(|| CliError::usage("--config needs a file path"))?;
            found = Some(PathBuf::from(value));
            i += 1;
        } else if let Some(v) = arg.strip_prefix("--config=") {
            found = Some(PathBuf::from(v));
        }
        i += 1;
    }
    Ok(found)
}

fn scalar(key: &str, v: &Value) -> CliResult<String> {
    match v {
        Value::String(s) => Ok(s.clone()),
        Value::Number(n) => Ok(n.to_string()),
        Value::Bool(b) => Ok(b.to_string()),
        _ => Err(CliError::config(format!("key {key:?} holds a nested value"))),
    }
}

/// Expands the config file of the invoked subcommand into flag tokens.
pub fn merge(args: Vec<OsString>) -> CliResult<Vec<OsString>> {
    let root = Cli::command();
    let Some(pos) = args
        .iter()
        .enumerate()
        .skip(1)
        .find(|(_, a)| root.find_subcommand(a.to_string_lossy().as_ref()).is_some())
        .map(|(i, _)| i)
    else {
        return Ok(args);
    };
    let Some(path) = config_path(&args[pos + 1..])? else {
        return Ok(args);
    };
    let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
    let json: Value =
        serde_json::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    let Value::Object(map) = json else {
        return Err(CliError::config(format!("{}: top level must be an object", path.display())));
    };

    let name = args[pos].to_string_lossy().into_owned();
    let sub = root.find_subcommand(&name).expect("found above");
    let known: Vec<String> = sub
        .get_arguments()
        .chain(root.get_arguments())
        .filter_map(|a| a.get_long().map(str::to_string))
        .collect();

    let mut tokens: Vec<OsString> = Vec::new();
    for (raw_key, value) in &map {
        let key = raw_key.replace('_', "-");
        if key == "config" || key == "help" || key == "version" || !known.contains(&key) {
            return Err(CliError::config(format!("unknown key {raw_key:?} for {name}")));
        }
        let flag = OsString::from(format!("--{key}"));
        match value {
            Value::Null | Value::Bool(false) => {}
            Value::Bool(true) => tokens.push(flag),
            Value::Array(items) => {
                let joined: Vec<String> = items.iter().map(|v| scalar(raw_key, v)).collect::<CliResult<_>>()?;
                tokens.push(flag);
                tokens.push(joined.join(",").into());
            }
            other => {
                tokens.push(flag);
                tokens.push(scalar(raw_key, other)?.into());
            }
        }
    }
    let mut out = args[..=pos].to_vec();
    out.extend(tokens);
    out.extend_from_slice(&args[pos + 1..]);
    Ok(out)
}
