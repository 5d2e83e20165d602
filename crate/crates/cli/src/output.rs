use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use oma_va_core::Histogram;

use crate::error::CliError;

/// Shortest round-trip-safe fixed format: 17 significant digits.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

/// Comma-separated table built in memory.
pub struct Table {
    text: String,
}

impl Table {
    pub fn new(header: &str) -> Table {
        Table {
            text: format!("{header}\n"),
        }
    }

    pub fn row(&mut self, fields: &[String]) {
        let _ = writeln!(self.text, "{}", fields.join(","));
    }

    pub fn line(&mut self, line: &str) {
        let _ = writeln!(self.text, "{line}");
    }

    pub fn text(&self) -> &str {
        &self.text
    }
}

pub struct OutputDir {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl OutputDir {
    pub fn create(dir: &Path) -> Result<OutputDir, CliError> {
        std::fs::create_dir_all(dir).map_err(|source| CliError::Io {
            path: dir.display().to_string(),
            source,
        })?;
        Ok(OutputDir {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<(), CliError> {
        let path = self.dir.join(name);
        std::fs::write(&path, contents).map_err(|source| CliError::Io {
            path: path.display().to_string(),
            source,
        })?;
        self.written.push(path);
        Ok(())
    }

    pub fn table(&mut self, name: &str, table: &Table) -> Result<(), CliError> {
        self.write(name, table.text())
    }

    pub fn json<T: serde::Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(value).expect("serialisable output");
        self.write(name, &(text + "\n"))
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }
}

/// One row per bin: `prefix..., bin, lower, upper, count`.
pub fn histogram_rows(table: &mut Table, prefix: &[String], h: &Histogram) {
    for (i, &count) in h.counts.iter().enumerate() {
        let mut fields = prefix.to_vec();
        fields.extend([i.to_string(), num(h.edges[i]), num(h.edges[i + 1]), count.to_string()]);
        table.row(&fields);
    }
}
