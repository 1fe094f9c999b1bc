//! Estimators and nonparametric tests shared by the Monte Carlo code.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{invalid, Result};
use crate::rng::stream;

/// A Monte Carlo estimate with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Self { mean: value, se: 0.0 }
    }

    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return Self { mean: f64::NAN, se: f64::NAN };
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        if n == 1 {
            return Self { mean, se: 0.0 };
        }
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        Self {
            mean,
            se: (var / n as f64).sqrt(),
        }
    }

    pub fn lower(&self, z: f64) -> f64 {
        self.mean - z * self.se
    }

    pub fn upper(&self, z: f64) -> f64 {
        self.mean + z * self.se
    }

    /// `|a - b| <= z * sqrt(se_a^2 + se_b^2)`.
    pub fn agrees_with(&self, other: &Estimate, z: f64) -> bool {
        (self.mean - other.mean).abs() <= z * self.se.hypot(other.se)
    }
}

pub fn median(xs: &[f64]) -> f64 {
    quantile(xs, 0.5)
}

/// Linear-interpolation quantile; NaN for an empty slice.
pub fn quantile(xs: &[f64], q: f64) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoSampleReport {
    pub statistic_name: String,
    pub n_x: usize,
    pub n_y: usize,
    pub statistic: f64,
    pub p_value: f64,
    pub n_perm: usize,
    pub alpha: f64,
    pub rejected: bool,
}

pub const DEFAULT_ALPHA: f64 = 0.01;
pub const DEFAULT_PERMUTATIONS: usize = 2000;

/// Two-sided Kolmogorov–Smirnov distance between empirical distributions.
pub fn ks_statistic(xs: &[f64], ys: &[f64]) -> f64 {
    let mut a = xs.to_vec();
    let mut b = ys.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

fn permutation_p(obs: f64, perms: impl Iterator<Item = f64>, n_perm: usize) -> f64 {
    let tol = 1e-12 * obs.abs().max(1.0);
    let hits = perms.filter(|&s| s >= obs - tol).count();
    (1 + hits) as f64 / (1 + n_perm) as f64
}

/// KS two-sample test with a permutation p-value `(1 + #{perm >= obs}) / (1 + n_perm)`.
pub fn ks_two_sample(xs: &[f64], ys: &[f64], n_perm: usize, seed: u64) -> Result<TwoSampleReport> {
    if xs.is_empty() || ys.is_empty() {
        return invalid("two-sample test needs nonempty samples");
    }
    let obs = ks_statistic(xs, ys);
    let mut pooled: Vec<f64> = xs.iter().chain(ys).copied().collect();
    let mut rng = stream(seed);
    let nx = xs.len();
    let perms = (0..n_perm).map(|_| {
        pooled.shuffle(&mut rng);
        ks_statistic(&pooled[..nx], &pooled[nx..])
    });
    let p_value = permutation_p(obs, perms.collect::<Vec<_>>().into_iter(), n_perm);
    Ok(report("ks", xs.len(), ys.len(), obs, p_value, n_perm))
}

fn report(name: &str, n_x: usize, n_y: usize, statistic: f64, p_value: f64, n_perm: usize) -> TwoSampleReport {
    TwoSampleReport {
        statistic_name: name.to_string(),
        n_x,
        n_y,
        statistic,
        p_value,
        n_perm,
        alpha: DEFAULT_ALPHA,
        rejected: p_value < DEFAULT_ALPHA,
    }
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Energy statistic `nm/(n+m) (2 E|X-Y| - E|X-X'| - E|Y-Y'|)` (V-statistic form)
/// for the split `labels[i] == true` versus false, given the pooled distance matrix.
fn energy_from_matrix(d: &[f64], n: usize, in_x: &[bool]) -> f64 {
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let row = &d[i * n..(i + 1) * n];
        for j in (i + 1)..n {
            match (in_x[i], in_x[j]) {
                (true, true) => sxx += row[j],
                (false, false) => syy += row[j],
                _ => sxy += row[j],
            }
        }
    }
    let nx = in_x.iter().filter(|&&b| b).count() as f64;
    let ny = n as f64 - nx;
    let e = 2.0 * sxy / (nx * ny) - 2.0 * sxx / (nx * nx) - 2.0 * syy / (ny * ny);
    e * nx * ny / (nx + ny)
}

/// Energy-distance two-sample test on vectors of equal dimension.
pub fn energy_test(xs: &[Vec<f64>], ys: &[Vec<f64>], n_perm: usize, seed: u64) -> Result<TwoSampleReport> {
    if xs.is_empty() || ys.is_empty() {
        return invalid("two-sample test needs nonempty samples");
    }
    let dim = xs[0].len();
    if xs.iter().chain(ys).any(|v| v.len() != dim) {
        return invalid("all vectors must have the same dimension");
    }
    let pooled: Vec<&Vec<f64>> = xs.iter().chain(ys).collect();
    let n = pooled.len();
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let v = euclid(pooled[i], pooled[j]);
            d[i * n + j] = v;
            d[j * n + i] = v;
        }
    }
    let mut labels: Vec<bool> = (0..n).map(|i| i < xs.len()).collect();
    let obs = energy_from_matrix(&d, n, &labels);
    let mut rng = stream(seed);
    let mut stats = Vec::with_capacity(n_perm);
    for _ in 0..n_perm {
        labels.shuffle(&mut rng);
        stats.push(energy_from_matrix(&d, n, &labels));
    }
    let p_value = permutation_p(obs, stats.into_iter(), n_perm);
    Ok(report("energy", xs.len(), ys.len(), obs, p_value, n_perm))
}

/// Energy test on the upper triangles of `k x k` distance matrices (row-major).
pub fn distance_matrix_test(
    a: &[Vec<f64>],
    b: &[Vec<f64>],
    k: usize,
    n_perm: usize,
    seed: u64,
) -> Result<TwoSampleReport> {
    if a.iter().chain(b).any(|m| m.len() != k * k) {
        return invalid(format!("every matrix must be {k}x{k}"));
    }
    let upper = |m: &Vec<f64>| {
        let mut v = Vec::with_capacity(k * (k - 1) / 2);
        for i in 0..k {
            for j in (i + 1)..k {
                v.push(m[i * k + j]);
            }
        }
        v
    };
    let xa: Vec<Vec<f64>> = a.iter().map(upper).collect();
    let xb: Vec<Vec<f64>> = b.iter().map(upper).collect();
    let mut r = energy_test(&xa, &xb, n_perm, seed)?;
    r.statistic_name = "energy-distance-matrix".into();
    Ok(r)
}

/// Pearson goodness of fit against known cell probabilities. Returns
/// `(statistic, degrees of freedom, p-value)`.
pub fn chi_square_gof(counts: &[u64], probs: &[f64]) -> Result<(f64, usize, f64)> {
    if counts.len() != probs.len() || counts.len() < 2 {
        return invalid("need at least two cells with matching probabilities");
    }
    let n: u64 = counts.iter().sum();
    let stat: f64 = counts
        .iter()
        .zip(probs)
        .filter(|(_, &p)| p > 0.0)
        .map(|(&c, &p)| {
            let e = n as f64 * p;
            (c as f64 - e).powi(2) / e
        })
        .sum();
    let df = probs.iter().filter(|&&p| p > 0.0).count() - 1;
    Ok((stat, df, chi_square_sf(stat, df)))
}

/// Pearson test of homogeneity for a table of counts (rows are samples).
pub fn chi_square_homogeneity(table: &[Vec<u64>]) -> Result<(f64, usize, f64)> {
    if table.len() < 2 || table.iter().any(|r| r.len() != table[0].len()) {
        return invalid("need at least two rows of equal length");
    }
    let cols = table[0].len();
    let row_tot: Vec<f64> = table.iter().map(|r| r.iter().sum::<u64>() as f64).collect();
    let col_tot: Vec<f64> = (0..cols).map(|j| table.iter().map(|r| r[j]).sum::<u64>() as f64).collect();
    let total: f64 = row_tot.iter().sum();
    let live: Vec<usize> = (0..cols).filter(|&j| col_tot[j] > 0.0).collect();
    let mut stat = 0.0;
    for (i, r) in table.iter().enumerate() {
        for &j in &live {
            let e = row_tot[i] * col_tot[j] / total;
            stat += (r[j] as f64 - e).powi(2) / e;
        }
    }
    let df = (table.len() - 1) * live.len().saturating_sub(1);
    Ok((stat, df, chi_square_sf(stat, df)))
}

fn chi_square_sf(stat: f64, df: usize) -> f64 {
    if df == 0 {
        return 1.0;
    }
    ChiSquared::new(df as f64).map_or(f64::NAN, |c| c.sf(stat))
}

/// Asymptotic Kolmogorov tail `P(K > x)`.
pub fn kolmogorov_sf(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < 0.2 {
        return 1.0;
    }
    let mut s = 0.0;
    for k in 1..=100 {
        let term = (-2.0 * (k * k) as f64 * x * x).exp();
        s += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}

/// One-sample KS test against a continuous CDF. Returns `(D, p-value)`.
pub fn ks_one_sample(xs: &[f64], cdf: impl Fn(f64) -> f64) -> Result<(f64, f64)> {
    if xs.is_empty() {
        return invalid("empty sample");
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let d = v
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0f64, f64::max);
    let sn = n.sqrt();
    Ok((d, kolmogorov_sf((sn + 0.12 + 0.11 / sn) * d)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_samples_never_reject() {
        let xs: Vec<f64> = (0..50).map(|i| (i as f64).sin()).collect();
        let r = ks_two_sample(&xs, &xs, 200, 1).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, 1.0);
        let vs: Vec<Vec<f64>> = xs.iter().map(|&x| vec![x, 2.0 * x]).collect();
        let e = energy_test(&vs, &vs, 200, 1).unwrap();
        assert!(e.statistic.abs() < 1e-12);
        assert_eq!(e.p_value, 1.0);
    }

    #[test]
    fn separated_samples() {
        let xs = vec![0.0; 40];
        let ys = vec![1.0; 40];
        let r = ks_two_sample(&xs, &ys, 500, 2).unwrap();
        assert_eq!(r.statistic, 1.0);
        assert!(r.rejected);
        assert!(ks_two_sample(&[], &ys, 10, 0).is_err());
    }

    #[test]
    fn matrix_size_mismatch_is_rejected() {
        let a = vec![vec![0.0; 4]];
        let b = vec![vec![0.0; 9]];
        assert!(distance_matrix_test(&a, &b, 2, 10, 0).is_err());
    }

    #[test]
    fn chi_square_and_kolmogorov() {
        let (s, df, p) = chi_square_gof(&[50, 50], &[0.5, 0.5]).unwrap();
        assert_eq!((s, df), (0.0, 1));
        assert!((p - 1.0).abs() < 1e-12);
        // Known value: P(K > 1.36) is about 0.0495.
        assert!((kolmogorov_sf(1.36) - 0.0495).abs() < 1e-3);
    }

    #[test]
    fn quantiles() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[1.0, 2.0, 3.0, 4.0]), 2.5);
        let e = Estimate::from_samples(&[1.0, 3.0]);
        assert_eq!(e.mean, 2.0);
        assert!((e.se - 1.0).abs() < 1e-12);
    }
}
