//! CSV emission. Every file opens with `#` comment lines carrying the tool
//! version, the fully resolved configuration, and per-column descriptions,
//! followed by a plain CSV header row.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::config::{CliError, ResolvedConfig};

pub struct RunContext {
    /// Tool name and version, embedded into every output.
    pub version: String,
}

pub struct TableWriter {
    writer: BufWriter<File>,
    path: PathBuf,
    columns: usize,
}

impl TableWriter {
    pub fn create(
        path: PathBuf,
        ctx: &RunContext,
        cfg: &ResolvedConfig,
        columns: &[(&str, &str)],
    ) -> Result<TableWriter, CliError> {
        let mut writer = BufWriter::new(File::create(&path)?);
        writeln!(writer, "# {}", ctx.version)?;
        for line in cfg.resolved_lines() {
            writeln!(writer, "# {line}")?;
        }
        for (name, desc) in columns {
            writeln!(writer, "# column {name}: {desc}")?;
        }
        let header: Vec<&str> = columns.iter().map(|c| c.0).collect();
        writeln!(writer, "{}", header.join(","))?;
        Ok(TableWriter {
            writer,
            path,
            columns: columns.len(),
        })
    }

    pub fn row(&mut self, cells: &[String]) -> Result<(), CliError> {
        assert_eq!(
            cells.len(),
            self.columns,
            "row width must match the declared columns"
        );
        writeln!(self.writer, "{}", cells.join(","))?;
        Ok(())
    }

    /// Flushes and reports the written path for run summaries.
    pub fn finish(mut self) -> Result<PathBuf, CliError> {
        self.writer.flush()?;
        Ok(self.path)
    }
}

/// Shortest-roundtrip decimal form; keeps files compact and exactly
/// reproducible.
pub fn num(x: f64) -> String {
    format!("{x}")
}

pub fn join_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}
