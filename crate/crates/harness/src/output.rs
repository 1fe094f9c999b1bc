//! Result tables and the run manifest.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use percolab_core::stats::TwoSampleReport;
use serde::Serialize;

use crate::config::ExperimentConfig;

/// One CSV file's worth of rows, all values already formatted.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Self {
            name: name.into(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len(), "row width in table {}", self.name);
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.into_inner().context("flushing csv buffer")
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()?).with_context(|| format!("writing {}", path.display()))
    }
}

/// Shortest round-trip decimal, so reruns give identical bytes.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}

/// What an experiment hands back before anything touches the disk.
#[derive(Clone, Debug, Default, Serialize)]
pub struct ExperimentOutput {
    pub tables: Vec<Table>,
    pub reports: Vec<(String, TwoSampleReport)>,
    /// Free-form headline numbers.
    pub summary: serde_json::Map<String, serde_json::Value>,
}

impl ExperimentOutput {
    pub fn note(&mut self, key: &str, value: impl Serialize) {
        self.summary.insert(key.into(), serde_json::to_value(value).expect("serializable"));
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Manifest<'a> {
    pub experiment: &'a str,
    pub config_hash: String,
    pub config: &'a ExperimentConfig,
    pub versions: Versions,
    pub seed: u64,
    pub seeds: usize,
    pub files: Vec<String>,
    pub reports: &'a [(String, TwoSampleReport)],
    pub summary: &'a serde_json::Map<String, serde_json::Value>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Versions {
    pub percolab: &'static str,
}

impl Default for Versions {
    fn default() -> Self {
        Self {
            percolab: env!("CARGO_PKG_VERSION"),
        }
    }
}

/// Writes tables, `manifest.json` and, separately, `timing.json`, which
/// holds the only field that varies between identical runs.
pub fn write_bundle(config: &ExperimentConfig, out: &ExperimentOutput, dir: &Path, wall_seconds: f64) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut written = Vec::new();
    let mut files = Vec::new();
    if config.wants("csv") {
        for t in &out.tables {
            let name = format!("{}.csv", t.name);
            let path = dir.join(&name);
            t.write_csv(&path)?;
            files.push(name);
            written.push(path);
        }
    }
    if config.wants("json") {
        let manifest = Manifest {
            experiment: &config.experiment,
            config_hash: config.hash(),
            config,
            versions: Versions::default(),
            seed: config.seed,
            seeds: config.seeds,
            files,
            reports: &out.reports,
            summary: &out.summary,
        };
        let path = dir.join("manifest.json");
        std::fs::write(&path, serde_json::to_vec_pretty(&manifest)?)
            .with_context(|| format!("writing {}", path.display()))?;
        written.push(path);
        let timing = dir.join("timing.json");
        std::fs::write(&timing, serde_json::to_vec_pretty(&serde_json::json!({ "wall_seconds": wall_seconds }))?)?;
        written.push(timing);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_quotes_awkward_fields() {
        let mut t = Table::new("t", &["a", "b"]);
        t.push(vec!["x,y".into(), "say \"hi\"".into()]);
        let s = String::from_utf8(t.to_csv().unwrap()).unwrap();
        assert_eq!(s, "a,b\n\"x,y\",\"say \"\"hi\"\"\"\n");
    }

    #[test]
    fn numbers_round_trip() {
        for x in [0.1, 1.0 / 3.0, 1e-300, 2.5e10] {
            assert_eq!(num(x).parse::<f64>().unwrap(), x);
        }
    }
}
