//! CSV/JSON emission. Numbers use Rust's shortest round-trip formatting, so
//! identical runs give byte-identical files.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use crate::CliError;

pub struct Table {
    header: Vec<&'static str>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&'static str]) -> Self {
        Self {
            header: header.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn render(&self) -> String {
        let mut s = self.header.join(",");
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.join(","));
            s.push('\n');
        }
        s
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        write_text(path, &self.render())
    }
}

/// Shortest round-trip form; exponent notation outside `[1e-4, 1e15)`.
pub fn num(v: f64) -> String {
    let a = v.abs();
    if a == 0.0 || !v.is_finite() || (1e-4..1e15).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

/// Columns of equal length as a table, `x` first.
pub fn columns(header: &[&'static str], cols: &[&[f64]]) -> Table {
    let mut t = Table::new(header);
    for i in 0..cols[0].len() {
        t.push(cols.iter().map(|c| num(c[i])).collect());
    }
    t
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    fs::write(path, text)?;
    Ok(())
}

pub fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
    text.push('\n');
    write_text(path, &text)
}

/// `path` with its extension replaced by `json`.
pub fn sidecar(path: &Path) -> PathBuf {
    path.with_extension("json")
}

/// Directory that holds a file output.
pub fn dir_of(path: &Path) -> PathBuf {
    match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

/// `meta.json` echoing the command, the resolved config and the version.
pub fn write_meta(dir: &Path, command: &str, config: Value) -> Result<(), CliError> {
    write_json(
        &dir.join("meta.json"),
        &json!({
            "command": command,
            "version": env!("CARGO_PKG_VERSION"),
            "config": config,
        }),
    )
}

/// JSON number, or `null` for non-finite values.
pub fn jnum(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        Value::Null
    }
}
