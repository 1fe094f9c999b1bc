//! Reference samplers for the scaling limit.
//!
//! `W^lambda_t = W_t + lambda t - t^2/2` is simulated on a grid; the lengths
//! of its excursions above the running minimum, sorted, approximate the limit
//! law of rescaled critical component sizes. The Erdős–Rényi sampler gives the
//! same law at finite `n`.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::dsu::DisjointSets;
use crate::error::{invalid, Result};
use crate::percolation::{replicate_seed, Partition};
use crate::rng::{open_closed_uniform, stream};
use crate::stats::Estimate;

pub const DEFAULT_STEP: f64 = 1e-4;

/// Default horizon `4 max(|lambda|, 1) + 16`.
pub fn default_horizon(lambda: f64) -> f64 {
    4.0 * lambda.abs().max(1.0) + 16.0
}

fn check_grid(horizon: f64, step: f64) -> Result<usize> {
    if !(horizon > 0.0) || !(step > 0.0) || step > horizon / 100.0 {
        return invalid(format!("need T > 0, h > 0 and h <= T/100, got T={horizon}, h={step}"));
    }
    Ok((horizon / step).round() as usize)
}

/// A grid path of `W^lambda`.
#[derive(Clone, Debug)]
pub struct DriftPath {
    pub lambda: f64,
    pub horizon: f64,
    pub step: f64,
    pub values: Vec<f64>,
    pub noise: bool,
}

impl DriftPath {
    pub fn simulate(lambda: f64, horizon: f64, step: f64, seed: u64) -> Result<Self> {
        let n = check_grid(horizon, step)?;
        let mut rng = stream(seed);
        let sd = step.sqrt();
        let mut w = 0.0;
        let mut values = Vec::with_capacity(n + 1);
        values.push(0.0);
        for k in 1..=n {
            let z: f64 = rng.sample(StandardNormal);
            w += sd * z;
            let t = k as f64 * step;
            values.push(w + lambda * t - 0.5 * t * t);
        }
        Ok(Self {
            lambda,
            horizon,
            step,
            values,
            noise: true,
        })
    }

    /// The deterministic path `lambda t - t^2/2`.
    pub fn zero_noise(lambda: f64, horizon: f64, step: f64) -> Result<Self> {
        let n = check_grid(horizon, step)?;
        let values = (0..=n)
            .map(|k| {
                let t = k as f64 * step;
                lambda * t - 0.5 * t * t
            })
            .collect();
        Ok(Self {
            lambda,
            horizon,
            step,
            values,
            noise: false,
        })
    }

    pub fn excursions(&self) -> ExcursionLengths {
        let mut tracker = RunTracker::new(self.step);
        for &x in &self.values {
            tracker.push(x);
        }
        tracker.finish(self.horizon)
    }
}

/// Maximal runs `[start, end)` of grid indices where `X = W - min W > 0`.
pub fn positive_runs(values: &[f64]) -> Vec<(usize, usize)> {
    let mut runs = Vec::new();
    let mut min = f64::INFINITY;
    let mut open: Option<usize> = None;
    for (k, &x) in values.iter().enumerate() {
        min = min.min(x);
        let positive = x - min > 0.0;
        match (positive, open) {
            (true, None) => open = Some(k),
            (false, Some(s)) => {
                runs.push((s, k));
                open = None;
            }
            _ => {}
        }
    }
    if let Some(s) = open {
        runs.push((s, values.len()));
    }
    runs
}

/// Streaming excursion extractor.
///
/// A run of `c` positive grid points bounded by zeros of `X` at both ends
/// spans `c + 1` grid steps; that span times `h` is the recorded length. A run
/// cut off by the horizon records `c` steps. Runs of fewer than 2 points are
/// discarded and counted.
struct RunTracker {
    step: f64,
    k: usize,
    min: f64,
    run: usize,
    lengths: Vec<f64>,
    discarded: usize,
}

impl RunTracker {
    fn new(step: f64) -> Self {
        Self {
            step,
            k: 0,
            min: f64::INFINITY,
            run: 0,
            lengths: Vec::new(),
            discarded: 0,
        }
    }

    #[inline]
    fn push(&mut self, x: f64) {
        self.min = self.min.min(x);
        if x - self.min > 0.0 {
            self.run += 1;
        } else if self.run > 0 {
            self.close(self.run + 1);
        }
        self.k += 1;
    }

    fn close(&mut self, span: usize) {
        if self.run < 2 {
            self.discarded += 1;
        } else {
            self.lengths.push(span as f64 * self.step);
        }
        self.run = 0;
    }

    fn finish(mut self, horizon: f64) -> ExcursionLengths {
        if self.run > 0 {
            self.close(self.run);
        }
        self.lengths.sort_by(|a, b| b.total_cmp(a));
        ExcursionLengths {
            lengths: self.lengths,
            horizon,
            step: self.step,
            discarded: self.discarded,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExcursionLengths {
    /// Weakly decreasing.
    pub lengths: Vec<f64>,
    pub horizon: f64,
    pub step: f64,
    /// Runs shorter than two grid points.
    pub discarded: usize,
}

impl ExcursionLengths {
    pub fn sum_sq(&self) -> f64 {
        self.lengths.iter().map(|l| l * l).sum()
    }

    /// First `k` lengths, zero-padded.
    pub fn top_k(&self, k: usize) -> Vec<f64> {
        let mut v: Vec<f64> = self.lengths.iter().take(k).copied().collect();
        v.resize(k, 0.0);
        v
    }
}

/// Excursion lengths of one simulated path, without storing the path.
pub fn sample_excursions(lambda: f64, horizon: f64, step: f64, seed: u64) -> Result<ExcursionLengths> {
    let n = check_grid(horizon, step)?;
    let mut rng = stream(seed);
    let sd = step.sqrt();
    let mut tracker = RunTracker::new(step);
    let mut w = 0.0;
    tracker.push(0.0);
    for k in 1..=n {
        let z: f64 = rng.sample(StandardNormal);
        w += sd * z;
        let t = k as f64 * step;
        tracker.push(w + lambda * t - 0.5 * t * t);
    }
    Ok(tracker.finish(horizon))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct KappaEstimate {
    pub estimate: Estimate,
    pub n_samples: usize,
    /// Total discarded microscopic runs over all samples.
    pub discarded: usize,
}

/// Monte Carlo estimate of `kappa(lambda) = E sum_i |gamma_i|^2`.
pub fn kappa_brownian(lambda: f64, horizon: f64, step: f64, n_samples: usize, seed: u64) -> Result<KappaEstimate> {
    check_grid(horizon, step)?;
    if n_samples == 0 {
        return invalid("n_samples must be at least 1");
    }
    let runs: Vec<ExcursionLengths> = (0..n_samples)
        .into_par_iter()
        .map(|k| sample_excursions(lambda, horizon, step, replicate_seed(seed, k)))
        .collect::<Result<_>>()?;
    let xs: Vec<f64> = runs.iter().map(ExcursionLengths::sum_sq).collect();
    Ok(KappaEstimate {
        estimate: Estimate::from_samples(&xs),
        n_samples,
        discarded: runs.iter().map(|r| r.discarded).sum(),
    })
}

/// Edge probability `(1 + lambda n^{-1/3}) / n` of the critical window.
pub fn er_window_probability(n: usize, lambda: f64) -> Result<f64> {
    if n == 0 {
        return invalid("n must be positive");
    }
    let nf = n as f64;
    let factor = 1.0 + lambda * nf.powf(-1.0 / 3.0);
    if !(factor > 0.0) || factor > nf.powf(2.0 / 3.0) {
        return invalid(format!(
            "1 + lambda n^(-1/3) = {factor} must lie in (0, n^(2/3)] (lambda = {lambda}, n = {n})"
        ));
    }
    Ok((factor / nf).min(1.0))
}

/// Edges of `G(n, p)` by geometric skipping over the pairs `w < v`.
pub fn er_edges(n: usize, p: f64, seed: u64) -> Result<Vec<(u32, u32)>> {
    crate::percolation::check_probability(p)?;
    if n > u32::MAX as usize {
        return invalid("n too large");
    }
    let mut edges = Vec::new();
    if p == 0.0 || n < 2 {
        return Ok(edges);
    }
    if p == 1.0 {
        for v in 1..n as u32 {
            for w in 0..v {
                edges.push((w, v));
            }
        }
        return Ok(edges);
    }
    let mut rng = stream(seed);
    let log_q = (-p).ln_1p();
    let (mut v, mut w) = (1usize, -1i64);
    loop {
        let r = open_closed_uniform(&mut rng);
        let skip = (r.ln() / log_q).floor();
        w += 1 + if skip >= 1e18 { 1e18 as i64 } else { skip as i64 };
        while w >= v as i64 && v < n {
            w -= v as i64;
            v += 1;
        }
        if v >= n {
            break;
        }
        edges.push((w as u32, v as u32));
    }
    Ok(edges)
}

/// Ranked components of `G(n, p)`.
pub fn er_partition(n: usize, p: f64, seed: u64) -> Result<Partition> {
    let edges = er_edges(n, p, seed)?;
    let mut dsu = DisjointSets::new(n);
    for (a, b) in edges {
        dsu.union(a, b);
    }
    Ok(Partition::from_dsu(&mut dsu))
}

/// Top-`k` rescaled sizes `n^{-2/3}(|C_1|, ..., |C_k|)` at an explicit `p`, zero-padded.
pub fn er_size_vector_at(n: usize, p: f64, seed: u64, k: usize) -> Result<Vec<f64>> {
    if k == 0 {
        return invalid("k must be at least 1");
    }
    let part = er_partition(n, p, seed)?;
    let s = (n as f64).powf(-2.0 / 3.0);
    let mut v: Vec<f64> = part.sizes().iter().take(k).map(|&x| x as f64 * s).collect();
    v.resize(k, 0.0);
    Ok(v)
}

/// Top-`k` rescaled sizes of `G(n, (1 + lambda n^{-1/3})/n)`.
pub fn er_size_vector(n: usize, lambda: f64, seed: u64, k: usize) -> Result<Vec<f64>> {
    er_size_vector_at(n, er_window_probability(n, lambda)?, seed, k)
}

/// Monte Carlo estimate of `n^{-4/3} E sum_i |C_i|^2 = E|C(v)| / n^{1/3}`.
pub fn kappa_er(lambda: f64, n: usize, n_samples: usize, seed: u64) -> Result<Estimate> {
    if n < 1000 {
        return invalid(format!("n must be at least 1000, got {n}"));
    }
    if n_samples == 0 {
        return invalid("n_samples must be at least 1");
    }
    let p = er_window_probability(n, lambda)?;
    let scale = (n as f64).powf(-4.0 / 3.0);
    let xs: Vec<f64> = (0..n_samples)
        .into_par_iter()
        .map(|k| {
            let part = er_partition(n, p, replicate_seed(seed, k))?;
            Ok(part.sizes().iter().map(|&s| (s as f64).powi(2)).sum::<f64>() * scale)
        })
        .collect::<Result<_>>()?;
    Ok(Estimate::from_samples(&xs))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_noise_excursions() {
        for lambda in [0.5, 1.0, 2.0] {
            let ex = DriftPath::zero_noise(lambda, default_horizon(lambda), DEFAULT_STEP)
                .unwrap()
                .excursions();
            assert_eq!(ex.lengths.len(), 1);
            assert!((ex.lengths[0] - 2.0 * lambda).abs() <= DEFAULT_STEP + 1e-12);
        }
        let ex = DriftPath::zero_noise(-1.0, 20.0, DEFAULT_STEP).unwrap().excursions();
        assert!(ex.lengths.is_empty());
        let ex = DriftPath::zero_noise(1.0, 20.0, DEFAULT_STEP).unwrap().excursions();
        assert!((ex.sum_sq() - 4.0).abs() < 1e-3);
    }

    #[test]
    fn grid_preconditions() {
        assert!(sample_excursions(0.0, 1.0, 0.1, 0).is_err());
        assert!(sample_excursions(0.0, 0.0, 0.001, 0).is_err());
        assert!(sample_excursions(0.0, 1.0, 0.01, 0).is_ok());
    }

    #[test]
    fn streaming_matches_stored_path() {
        let a = DriftPath::simulate(0.3, 10.0, 1e-3, 17).unwrap().excursions();
        let b = sample_excursions(0.3, 10.0, 1e-3, 17).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn er_domain_and_extremes() {
        let n = 1000;
        let lam = -(n as f64).powf(1.0 / 3.0);
        assert!(kappa_er(lam, n, 1, 0).is_err());
        let v = er_size_vector_at(8, 1.0, 0, 3).unwrap();
        assert!((v[0] - 2.0).abs() < 1e-12 && v[1] == 0.0 && v[2] == 0.0);
        let v = er_size_vector_at(8, 0.0, 0, 3).unwrap();
        assert!(v.iter().all(|&x| (x - 0.25).abs() < 1e-12));
    }

    #[test]
    fn er_edge_count_is_binomial() {
        let n = 2000;
        let p = 0.002;
        let pairs = (n * (n - 1) / 2) as f64;
        let mut counts = Vec::new();
        for s in 0..40 {
            let e = er_edges(n, p, s).unwrap();
            assert!(e.iter().all(|&(a, b)| a < b && (b as usize) < n));
            counts.push(e.len() as f64);
        }
        let est = Estimate::from_samples(&counts);
        assert!((est.mean - pairs * p).abs() < 4.0 * est.se.max(1.0));
    }
}
