//! Flat `key=value` config files.
//!
//! Keys are the long option names of the subcommand (`bits`, `max-iters`,
//! `query-fraction`, ...; underscores are accepted too). Entries are spliced
//! into the argument list directly after the subcommand; keys also given on
//! the command line are skipped, so flags always win.

use std::ffi::OsString;
use std::fs;
use std::path::Path;

use crate::CliError;

pub fn parse(text: &str) -> Result<Vec<(String, String)>, CliError> {
    let mut out = Vec::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("line {}: expected key=value, got {raw:?}", no + 1)))?;
        let key = k.trim().replace('_', "-");
        if key.is_empty() || key == "config" {
            return Err(CliError::Config(format!("line {}: invalid key {:?}", no + 1, k.trim())));
        }
        out.push((key, v.trim().to_string()));
    }
    Ok(out)
}

/// Turns config entries into option tokens. Boolean switches are written
/// `key=true` / `key=false`; `false` drops the switch.
pub fn to_args(entries: &[(String, String)]) -> Vec<OsString> {
    let mut args = Vec::new();
    for (k, v) in entries {
        match v.as_str() {
            "true" => args.push(format!("--{k}").into()),
            "false" => {}
            _ => {
                args.push(format!("--{k}").into());
                // space-separated values (e.g. sweep specs) become separate tokens
                args.extend(v.split_whitespace().map(OsString::from));
            }
        }
    }
    args
}

fn config_path(args: &[OsString]) -> Option<OsString> {
    let mut it = args.iter();
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--" {
            break;
        }
        if s == "--config" {
            return it.next().cloned();
        }
        if let Some(p) = s.strip_prefix("--config=") {
            return Some(p.into());
        }
    }
    None
}

/// Long option names present in `args` (`-o` counts as `output`).
fn given_keys(args: &[OsString]) -> Vec<String> {
    let mut keys = Vec::new();
    for a in args {
        let s = a.to_string_lossy();
        if s == "--" {
            break;
        }
        if s.starts_with("-o") {
            keys.push("output".to_string());
        } else if let Some(k) = s.strip_prefix("--") {
            keys.push(k.split('=').next().unwrap_or(k).to_string());
        }
    }
    keys
}

/// Expands `--config FILE` in a raw argument vector.
pub fn expand(args: Vec<OsString>) -> Result<Vec<OsString>, CliError> {
    let Some(path) = config_path(&args) else {
        return Ok(args);
    };
    // the subcommand is the first token after the program name
    if args.len() < 2 || args[1].to_string_lossy().starts_with('-') {
        return Ok(args);
    }
    let text = fs::read_to_string(Path::new(&path))
        .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", Path::new(&path).display())))?;
    let given = given_keys(&args[2..]);
    let entries: Vec<_> = parse(&text)?.into_iter().filter(|(k, _)| !given.contains(k)).collect();
    let injected = to_args(&entries);
    let mut out = Vec::with_capacity(args.len() + injected.len());
    out.extend(args[..2].iter().cloned());
    out.extend(injected);
    out.extend(args[2..].iter().cloned());
    Ok(out)
}
