//! `key = value` config files, spliced into the argument list ahead of the
//! command-line flags so that flags win.

use std::ffi::OsString;
use std::fs;

/// Values `true` / `false` toggle switches; anything else becomes
/// `--key value`.
pub fn parse(text: &str) -> Result<Vec<OsString>, String> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| format!("line {}: expected `key = value`", n + 1))?;
        let key = key.trim().replace('_', "-");
        let value = value.trim();
        if key.is_empty() {
            return Err(format!("line {}: empty key", n + 1));
        }
        match value {
            "true" => out.push(format!("--{key}").into()),
            "false" => {}
            _ => {
                out.push(format!("--{key}").into());
                out.push(value.into());
            }
        }
    }
    Ok(out)
}

fn config_path(args: &[OsString]) -> Option<Result<OsString, String>> {
    let mut it = args.iter();
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            return Some(it.next().cloned().ok_or_else(|| "--config needs a path".to_string()));
        }
        if let Some(p) = s.strip_prefix("--config=") {
            return Some(Ok(p.into()));
        }
    }
    None
}

/// Splices the file named by `--config` right after the subcommand.
pub fn expand(args: Vec<OsString>, commands: &[&str]) -> Result<Vec<OsString>, String> {
    let Some(path) = config_path(&args) else { return Ok(args) };
    let path = path?;
    let text = fs::read_to_string(&path).map_err(|e| format!("--config: cannot read {}: {e}", path.to_string_lossy()))?;
    let extra = parse(&text).map_err(|e| format!("--config {}: {e}", path.to_string_lossy()))?;
    let Some(at) = args.iter().position(|a| commands.contains(&a.to_string_lossy().as_ref())) else { return Ok(args) };
    let mut out = args[..=at].to_vec();
    out.extend(extra);
    out.extend_from_slice(&args[at + 1..]);
    Ok(out)
}
