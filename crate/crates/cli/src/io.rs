//! File access, atomic writes and config-file expansion.

use std::fs;
use std::path::{Path, PathBuf};

use clap::CommandFactory;

use crate::{Cli, CliError};

pub fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

/// Write to a temporary sibling, then rename over `path`.
pub fn write_atomic(path: &Path, contents: &str) -> Result<(), CliError> {
    let name = path
        .file_name()
        .ok_or_else(|| CliError::Usage(format!("not a file path: {}", path.display())))?
        .to_string_lossy();
    let tmp = path.with_file_name(format!(".{name}.tmp-{}", std::process::id()));
    fs::write(&tmp, contents).map_err(|e| CliError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        CliError::io(path, e)
    })
}

/// Output directory: explicit flag, then `TCSPC_OUT_DIR`, then the working
/// directory. Created if missing and returned in absolute form.
pub fn resolve_out_dir(flag: Option<&Path>) -> Result<PathBuf, CliError> {
    let dir = match flag {
        Some(p) => p.to_path_buf(),
        None => std::env::var_os(crate::OUT_DIR_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from(".")),
    };
    fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    dir.canonicalize().map_err(|e| CliError::io(&dir, e))
}

pub fn absolute(path: &Path) -> Result<PathBuf, CliError> {
    path.canonicalize().map_err(|e| CliError::io(path, e))
}

/// Labels become file names.
pub fn check_label(label: &str) -> Result<(), CliError> {
    let ok = !label.is_empty()
        && !label.starts_with('.')
        && label
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'));
    if ok {
        Ok(())
    } else {
        Err(CliError::Usage(format!(
            "label '{label}' must be ASCII letters, digits, '-', '_' or '.'"
        )))
    }
}

/// Replace `--config FILE` with the flags it lists.
///
/// Lines read `key = value` (or `key: value`); `#` starts a comment. Keys are
/// long flag names of the subcommand. `true` turns a switch on, `false`
/// leaves it off. Flags given on the command line after `--config` win.
pub fn expand_config(argv: Vec<String>) -> Result<Vec<String>, CliError> {
    let Some(pos) = argv
        .iter()
        .position(|a| a == "--config" || a.starts_with("--config="))
    else {
        return Ok(argv);
    };
    let (path, consumed) = match argv[pos].strip_prefix("--config=") {
        Some(p) => (PathBuf::from(p), 1),
        None => (
            PathBuf::from(
                argv.get(pos + 1)
                    .ok_or_else(|| CliError::Usage("--config needs a file".into()))?,
            ),
            2,
        ),
    };
    let sub = argv
        .iter()
        .skip(1)
        .take(pos.saturating_sub(1))
        .find(|a| !a.starts_with('-'))
        .ok_or_else(|| CliError::Usage("--config must follow a subcommand".into()))?
        .clone();
    let cmd = Cli::command();
    let sub_cmd = cmd
        .find_subcommand(&sub)
        .ok_or_else(|| CliError::Usage(format!("unknown subcommand '{sub}'")))?;

    let text = read_text(&path)?;
    let mut expanded = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let diag = |msg: String| CliError::Usage(format!("{}:{}: {msg}", path.display(), idx + 1));
        let (key, value) = line
            .split_once('=')
            .or_else(|| line.split_once(':'))
            .ok_or_else(|| diag(format!("expected 'key = value', got '{line}'")))?;
        let (key, value) = (key.trim(), value.trim());
        let arg = sub_cmd
            .get_arguments()
            .find(|a| a.get_long() == Some(key) && key != "config")
            .ok_or_else(|| diag(format!("unknown key '{key}' for '{sub}'")))?;
        if !arg.get_action().takes_values() {
            match value {
                "true" => expanded.push(format!("--{key}")),
                "false" => {}
                other => {
                    return Err(diag(format!(
                        "'{key}' is a switch, expected true or false, got '{other}'"
                    )))
                }
            }
        } else if value.is_empty() {
            return Err(diag(format!("'{key}' needs a value")));
        } else {
            expanded.push(format!("--{key}"));
            expanded.push(value.to_string());
        }
    }
    let mut out = argv[..pos].to_vec();
    out.extend(expanded);
    out.extend(argv[pos + consumed..].iter().cloned());
    Ok(out)
}
