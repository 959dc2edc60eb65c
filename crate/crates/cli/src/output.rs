//! CSV files with a `#` metadata header, and the JSON manifest written next to them.

use std::fs;
use std::path::{Path, PathBuf};

use brw_core::ModelSpec;
use serde::Serialize;

use crate::CliError;

/// Everything needed to reproduce one output file.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    /// The full command line, program name excluded.
    pub argv: Vec<String>,
    pub model_path: String,
    pub model: Option<ModelSpec>,
    /// Resolved parameters, defaults included.
    pub config: serde_json::Value,
    pub tool_version: String,
    pub master_seed: u64,
    pub timestamp: String,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(command: &str, model_path: &str, model: Option<&ModelSpec>, config: serde_json::Value, seed: u64) -> Self {
        Self {
            command: command.to_string(),
            argv: std::env::args().skip(1).collect(),
            model_path: model_path.to_string(),
            model: model.cloned(),
            config,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            master_seed: seed,
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            outputs: Vec::new(),
        }
    }
}

/// A table under construction: header comments plus rows of already formatted cells.
pub struct Table {
    meta: Vec<(String, String)>,
    columns: Vec<&'static str>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(columns: &[&'static str]) -> Self {
        Self {
            meta: Vec::new(),
            columns: columns.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn meta(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.meta.push((key.to_string(), value.to_string()));
        self
    }

    pub fn row(&mut self, cells: Vec<String>) {
        debug_assert_eq!(cells.len(), self.columns.len());
        self.rows.push(cells);
    }

    pub fn render(&self) -> Result<String, CliError> {
        let mut out = String::new();
        for (k, v) in &self.meta {
            out.push_str(&format!("# {k}: {v}\n"));
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns).map_err(csv_err)?;
        for r in &self.rows {
            w.write_record(r).map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Usage(format!("csv: {e}")))?;
        out.push_str(&String::from_utf8(bytes).expect("csv output is utf-8"));
        Ok(out)
    }
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::Usage(format!("csv: {e}"))
}

/// Shortest round-trip decimal form, so equal values always print identically.
pub fn num(x: f64) -> String {
    format!("{x}")
}

/// `label` reduced to characters safe in a file name.
pub fn file_stem(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' })
        .collect()
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

/// Writes `table` to `out_dir/name` and the manifest to `out_dir/name.manifest.json`.
pub fn emit(out_dir: &Path, name: &str, table: &Table, mut manifest: RunManifest) -> Result<PathBuf, CliError> {
    let path = out_dir.join(name);
    write(&path, &table.render()?)?;
    manifest.outputs.push(name.to_string());
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serialises");
    write(&out_dir.join(format!("{name}.manifest.json")), &(json + "\n"))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_then_csv() {
        let mut t = Table::new(&["n", "u"]);
        t.meta("rho", 2.0);
        t.row(vec!["1".into(), num(0.5)]);
        assert_eq!(t.render().unwrap(), "# rho: 2\nn,u\n1,0.5\n");
    }

    #[test]
    fn stems_are_filesystem_safe() {
        assert_eq!(file_stem("special binary m=0.8"), "special_binary_m_0.8");
    }
}
