//! Result serialization: CSV tables, a flat key=value summary and the run manifest.

use super::config::{ExperimentConfig, ExperimentKind};
use crate::params::DeviceConfig;
use crate::Result;
use serde::Serialize;
use std::fmt::{Display, Write as _};
use std::path::{Path, PathBuf};
use std::time::Duration;

/// In-memory result of one experiment, written out in one go.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Report {
    pub summary: Vec<(String, String)>,
    /// (file name, contents)
    pub files: Vec<(String, String)>,
}

impl Report {
    pub fn kv(&mut self, key: impl Into<String>, value: impl Display) {
        self.summary.push((key.into(), value.to_string()));
    }

    pub fn file(&mut self, name: impl Into<String>, contents: String) {
        self.files.push((name.into(), contents));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.summary.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn summary_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.summary {
            let _ = writeln!(s, "{k}={v}");
        }
        s
    }
}

/// Builds a CSV from a header and rows of already-formatted cells.
pub fn csv<I, R>(header: &[&str], rows: I) -> String
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut s = header.join(",");
    s.push('\n');
    for row in rows {
        let cells: Vec<String> = row.into_iter().collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}

#[derive(Serialize)]
struct OutputEntry<'a> {
    name: &'a str,
    bytes: usize,
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    experiment: ExperimentKind,
    config: &'a ExperimentConfig,
    device: &'a DeviceConfig,
    outputs: Vec<OutputEntry<'a>>,
}

/// Writes every file of `report`, `summary.txt` and `manifest.json` into `dir`.
///
/// The manifest snapshots the resolved config and device, which is enough to
/// regenerate the outputs bit for bit. Wall-clock time only goes to a separate
/// `timing.json` when `elapsed` is given, so the other files stay reproducible.
pub fn write_report(
    dir: &Path,
    cfg: &ExperimentConfig,
    dev: &DeviceConfig,
    report: &Report,
    elapsed: Option<Duration>,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut put = |name: &str, contents: &str| -> Result<()> {
        let p = dir.join(name);
        std::fs::write(&p, contents)?;
        written.push(p);
        Ok(())
    };
    for (name, contents) in &report.files {
        put(name, contents)?;
    }
    let summary = report.summary_text();
    put("summary.txt", &summary)?;
    let mut outputs: Vec<OutputEntry> = report
        .files
        .iter()
        .map(|(n, c)| OutputEntry { name: n, bytes: c.len() })
        .collect();
    outputs.push(OutputEntry {
        name: "summary.txt",
        bytes: summary.len(),
    });
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        experiment: cfg.experiment,
        config: cfg,
        device: dev,
        outputs,
    };
    put("manifest.json", &(serde_json::to_string_pretty(&manifest)? + "\n"))?;
    if let Some(t) = elapsed {
        put("timing.json", &format!("{{\n  \"wall_clock_seconds\": {}\n}}\n", t.as_secs_f64()))?;
    }
    Ok(written)
}
