//! `key=value` config files merged into the command line.
//!
//! Precedence: explicit flags, then the config file, then built-in defaults.
//! Keys are flag names without the leading dashes; `_` and `-` are
//! interchangeable. Blank lines and lines starting with `#` are ignored.
//! `true`/`false` switch boolean flags on or off.

use std::path::Path;

pub fn parse(text: &str) -> Result<Vec<(String, String)>, String> {
    let mut pairs = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(format!("config line {}: expected key=value, got {raw:?}", i + 1));
        };
        let key = k.trim().trim_start_matches('-').replace('_', "-");
        if key.is_empty() || key == "config" {
            return Err(format!("config line {}: invalid key {:?}", i + 1, k.trim()));
        }
        pairs.push((key, v.trim().to_string()));
    }
    Ok(pairs)
}

/// Whether `--key` (or `--key=…`) already appears in `argv`.
fn has_flag(argv: &[String], key: &str) -> bool {
    let long = format!("--{key}");
    argv.iter()
        .any(|a| a == &long || a.strip_prefix(&long).is_some_and(|rest| rest.starts_with('=')))
}

/// Pulls `--config FILE` out of `argv` and appends the file's settings for
/// every flag not given explicitly.
pub fn merge(argv: Vec<String>) -> Result<Vec<String>, String> {
    let mut path = None;
    let mut rest = Vec::with_capacity(argv.len());
    let mut it = argv.into_iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            path = Some(it.next().ok_or("--config needs a file argument")?);
        } else if let Some(p) = a.strip_prefix("--config=") {
            path = Some(p.to_string());
        } else {
            rest.push(a);
        }
    }
    let Some(path) = path else {
        return Ok(rest);
    };
    let text = std::fs::read_to_string(Path::new(&path)).map_err(|e| format!("cannot read config {path}: {e}"))?;
    let mut out = rest.clone();
    for (key, value) in parse(&text)? {
        if has_flag(&rest, &key) {
            continue;
        }
        match value.as_str() {
            "true" => out.push(format!("--{key}")),
            "false" => {}
            _ => {
                out.push(format!("--{key}"));
                out.push(value);
            }
        }
    }
    Ok(out)
}
