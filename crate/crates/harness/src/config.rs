//! Flat `key = value` experiment configuration.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

const KNOWN_KEYS: &[&str] = &[
    "experiment",
    "m",
    "lambda",
    "seed",
    "seeds",
    "budget",
    "kappa_samples",
    "n_perm",
    "top_k",
    "points",
    "n_pairs",
    "reps",
    "tau",
    "eps",
    "delta",
    "n_mc",
    "vertex_cap",
    "step",
    "out_dir",
    "formats",
];

/// Parsed configuration. Every key has a default so a config may be empty
/// apart from `experiment`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub experiment: String,
    pub m: Vec<usize>,
    pub lambda: Vec<f64>,
    pub seed: u64,
    /// Replicates per side.
    pub seeds: usize,
    /// Susceptibility samples per calibration probe.
    pub budget: usize,
    /// ER samples behind each `kappa` estimate.
    pub kappa_samples: usize,
    pub n_perm: usize,
    pub top_k: usize,
    /// Points per sampled distance matrix.
    pub points: usize,
    pub n_pairs: usize,
    pub reps: usize,
    pub tau: f64,
    pub eps: Vec<f64>,
    pub delta: f64,
    pub n_mc: usize,
    /// Vertices examined per long-thin scan.
    pub vertex_cap: usize,
    /// Grid step for Brownian paths.
    pub step: f64,
    pub out_dir: PathBuf,
    pub formats: Vec<String>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment: "noop".into(),
            m: vec![14],
            lambda: vec![0.0],
            seed: 1,
            seeds: 100,
            budget: 2000,
            kappa_samples: 400,
            n_perm: 2000,
            top_k: 5,
            points: 4,
            n_pairs: 200,
            reps: 5,
            tau: 0.1,
            eps: vec![0.01, 0.1],
            delta: 0.25,
            n_mc: 200,
            vertex_cap: 4096,
            step: 1e-3,
            out_dir: PathBuf::from("out"),
            formats: vec!["csv".into(), "json".into()],
        }
    }
}

fn list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().map_err(|e| anyhow!("{key}: bad entry {s:?}: {e}")))
        .collect()
}

fn one<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value.trim().parse::<T>().map_err(|e| anyhow!("{key}: bad value {value:?}: {e}"))
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut raw = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {}: expected key = value", n + 1))?;
            let k = k.trim();
            if !KNOWN_KEYS.contains(&k) {
                bail!("line {}: unknown key {k:?}", n + 1);
            }
            if raw.insert(k.to_string(), v.trim().to_string()).is_some() {
                bail!("line {}: duplicate key {k:?}", n + 1);
            }
        }
        Self::from_map(&raw)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text)
    }

    /// Applies `key = value` pairs on top of the defaults.
    pub fn from_map(raw: &BTreeMap<String, String>) -> Result<Self> {
        let mut c = Self::default();
        for (k, v) in raw {
            match k.as_str() {
                "experiment" => c.experiment = v.clone(),
                "m" => c.m = list(k, v)?,
                "lambda" => c.lambda = list(k, v)?,
                "seed" => c.seed = one(k, v)?,
                "seeds" => c.seeds = one(k, v)?,
                "budget" => c.budget = one(k, v)?,
                "kappa_samples" => c.kappa_samples = one(k, v)?,
                "n_perm" => c.n_perm = one(k, v)?,
                "top_k" => c.top_k = one(k, v)?,
                "points" => c.points = one(k, v)?,
                "n_pairs" => c.n_pairs = one(k, v)?,
                "reps" => c.reps = one(k, v)?,
                "tau" => c.tau = one(k, v)?,
                "eps" => c.eps = list(k, v)?,
                "delta" => c.delta = one(k, v)?,
                "n_mc" => c.n_mc = one(k, v)?,
                "vertex_cap" => c.vertex_cap = one(k, v)?,
                "step" => c.step = one(k, v)?,
                "out_dir" => c.out_dir = PathBuf::from(v),
                "formats" => c.formats = list(k, v)?,
                other => bail!("unknown key {other:?}"),
            }
        }
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m.iter().any(|&m| !(2..=30).contains(&m)) {
            bail!("m must lie in 2..=30");
        }
        if self.lambda.iter().any(|l| !l.is_finite()) {
            bail!("lambda values must be finite");
        }
        if self.top_k == 0 || self.points < 2 {
            bail!("top_k must be positive and points at least 2");
        }
        for f in &self.formats {
            if f != "csv" && f != "json" {
                bail!("unknown format {f:?} (csv, json)");
            }
        }
        Ok(())
    }

    /// Canonical text: one `key = value` per line in key order, output
    /// directory excluded so relocated runs hash the same.
    pub fn canonical(&self) -> String {
        let join = |xs: &[String]| xs.join(",");
        let nums = |xs: &[f64]| join(&xs.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>());
        let mut out = BTreeMap::new();
        out.insert("experiment", self.experiment.clone());
        out.insert("m", join(&self.m.iter().map(|x| x.to_string()).collect::<Vec<_>>()));
        out.insert("lambda", nums(&self.lambda));
        out.insert("seed", self.seed.to_string());
        out.insert("seeds", self.seeds.to_string());
        out.insert("budget", self.budget.to_string());
        out.insert("kappa_samples", self.kappa_samples.to_string());
        out.insert("n_perm", self.n_perm.to_string());
        out.insert("top_k", self.top_k.to_string());
        out.insert("points", self.points.to_string());
        out.insert("n_pairs", self.n_pairs.to_string());
        out.insert("reps", self.reps.to_string());
        out.insert("tau", format!("{:?}", self.tau));
        out.insert("eps", nums(&self.eps));
        out.insert("delta", format!("{:?}", self.delta));
        out.insert("n_mc", self.n_mc.to_string());
        out.insert("vertex_cap", self.vertex_cap.to_string());
        out.insert("step", format!("{:?}", self.step));
        out.insert("formats", join(&self.formats));
        out.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn hash(&self) -> String {
        Sha256::digest(self.canonical().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn wants(&self, format: &str) -> bool {
        self.formats.iter().any(|f| f == format)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_lists_and_comments() {
        let c = ExperimentConfig::parse("experiment = sizes-vs-er\n# note\nm = 14, 16\nlambda = -1,0,1 # trailing\nseeds=5\n").unwrap();
        assert_eq!(c.experiment, "sizes-vs-er");
        assert_eq!(c.m, vec![14, 16]);
        assert_eq!(c.lambda, vec![-1.0, 0.0, 1.0]);
        assert_eq!(c.seeds, 5);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(ExperimentConfig::parse("mm = 3").is_err());
        assert!(ExperimentConfig::parse("m = 3\nm = 4").is_err());
        assert!(ExperimentConfig::parse("m = x").is_err());
        assert!(ExperimentConfig::parse("no equals sign").is_err());
        assert!(ExperimentConfig::parse("formats = xml").is_err());
    }

    #[test]
    fn hash_ignores_layout_and_output_dir() {
        let a = ExperimentConfig::parse("m = 14,16\nseed = 3\nout_dir = a").unwrap();
        let b = ExperimentConfig::parse("seed=3\n\nm=14, 16\nout_dir = b").unwrap();
        assert_eq!(a.hash(), b.hash());
        let c = ExperimentConfig::parse("seed = 4\nm = 14,16").unwrap();
        assert_ne!(a.hash(), c.hash());
    }
}
