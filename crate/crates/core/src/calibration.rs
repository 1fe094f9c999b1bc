//! Scaling-window arithmetic.
//!
//! `p_c(lambda)` is the root of `chi(p) = kappa(lambda) V^{1/3}`. It is found by
//! bisection on the Monte Carlo estimator evaluated with one fixed set of
//! replicate seeds at every probe level. With shared seeds the empirical
//! `chi` is nondecreasing in `p`, so the bisection is exact for that estimator
//! and all the noise sits in the choice of seed set, which the reported CI
//! quantifies.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::percolation::{replicate_seed, BfsScratch};
use crate::rng::CounterRng;
use crate::stats::Estimate;
use crate::substrate::{default_alpha, TransitiveGraph};

/// Normal quantile used for reported intervals.
pub const Z95: f64 = 1.959_963_984_540_054;

/// A value with a standard error and an interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WithCi {
    pub value: f64,
    pub se: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl WithCi {
    pub fn exact(value: f64) -> Self {
        Self {
            value,
            se: 0.0,
            ci_low: value,
            ci_high: value,
        }
    }

    pub fn from_estimate(e: Estimate) -> Self {
        Self {
            value: e.mean,
            se: e.se,
            ci_low: e.lower(Z95),
            ci_high: e.upper(Z95),
        }
    }

    pub fn half_width(&self) -> f64 {
        0.5 * (self.ci_high - self.ci_low)
    }
}

/// Samples per chunk before the early-exit test of a probe.
const PROBE_CHUNK: usize = 32;

enum Probe {
    Estimate(Estimate),
    /// The partial sum already exceeded twice the target total.
    ClearlyAbove,
}

fn probe_chi(g: &TransitiveGraph, p: f64, n: usize, seed: u64, stop_above: Option<f64>) -> Probe {
    let v = g.vertex_count();
    let mut sizes: Vec<f64> = Vec::with_capacity(n);
    let mut sum = 0.0;
    let chunk = PROBE_CHUNK * rayon::current_num_threads().max(1);
    let mut start = 0;
    while start < n {
        let end = (start + chunk).min(n);
        let part: Vec<f64> = (start..end)
            .into_par_iter()
            .map_init(
                || BfsScratch::new(v),
                |scratch, k| {
                    let rng = CounterRng::new(replicate_seed(seed, k));
                    scratch.run(g, &rng, p, 0, u32::MAX, usize::MAX).visited as f64
                },
            )
            .collect();
        sum += part.iter().sum::<f64>();
        sizes.extend(part);
        if let Some(t) = stop_above {
            if sum > 2.0 * t * n as f64 {
                return Probe::ClearlyAbove;
            }
        }
        start = end;
    }
    Probe::Estimate(Estimate::from_samples(&sizes))
}

fn full_probe(g: &TransitiveGraph, p: f64, n: usize, seed: u64) -> Estimate {
    match probe_chi(g, p, n, seed, None) {
        Probe::Estimate(e) => e,
        Probe::ClearlyAbove => unreachable!("no early exit requested"),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationOptions {
    /// Susceptibility samples per probe before any doubling.
    pub budget: usize,
    pub seed: u64,
    pub max_doublings: u32,
}

impl CalibrationOptions {
    pub fn new(budget: usize, seed: u64) -> Self {
        Self {
            budget,
            seed,
            max_doublings: 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PcCalibration {
    pub lambda: f64,
    pub kappa: f64,
    /// `kappa V^{1/3}`.
    pub target: f64,
    pub p_c_hat: WithCi,
    pub bracket: (f64, f64),
    pub probes: usize,
    pub final_budget: usize,
    /// Some probe's CI still contained the target after all doublings.
    pub ambiguous: bool,
    /// The root was not found below the upper end of the search interval.
    pub at_upper_endpoint: bool,
    /// `chi` estimate at `p_c_hat`.
    pub chi_at_estimate: Estimate,
}

/// Upper end `min(1, 2/(m-1))` of the search interval.
pub fn search_upper(m: usize) -> f64 {
    if m <= 1 {
        1.0
    } else {
        (2.0 / (m - 1) as f64).min(1.0)
    }
}

/// Bracket width at which bisection stops: `1 / (10 m V^{1/3})`.
pub fn bracket_tolerance(g: &TransitiveGraph) -> f64 {
    1.0 / (10.0 * g.degree() as f64 * (g.vertex_count() as f64).cbrt())
}

/// Finds `p` with `chi(p) = kappa V^{1/3}`.
pub fn calibrate_pc(g: &TransitiveGraph, lambda: f64, kappa_hat: f64, opts: CalibrationOptions) -> Result<PcCalibration> {
    if !(kappa_hat > 0.0) {
        return invalid(format!("kappa must be positive, got {kappa_hat}"));
    }
    if opts.budget < 1000 {
        return invalid(format!("budget must be at least 1000 samples per probe, got {}", opts.budget));
    }
    let vf = g.vertex_count() as f64;
    let target = kappa_hat * vf.cbrt();
    if target > vf {
        return invalid(format!("target chi = {target} exceeds V = {vf}"));
    }
    let mut out = PcCalibration {
        lambda,
        kappa: kappa_hat,
        target,
        p_c_hat: WithCi::exact(0.0),
        bracket: (0.0, 0.0),
        probes: 0,
        final_budget: opts.budget,
        ambiguous: false,
        at_upper_endpoint: false,
        chi_at_estimate: Estimate::exact(1.0),
    };
    if target <= 1.0 {
        return Ok(out);
    }
    let upper = search_upper(g.degree());
    let tol = bracket_tolerance(g);
    let (mut lo, mut hi) = (0.0f64, upper);
    let mut budget = opts.budget;
    let mut doublings = 0;
    while hi - lo >= tol {
        let mid = 0.5 * (lo + hi);
        loop {
            out.probes += 1;
            match probe_chi(g, mid, budget, opts.seed, Some(target)) {
                Probe::ClearlyAbove => {
                    hi = mid;
                    break;
                }
                Probe::Estimate(e) => {
                    let straddles = (e.mean - target).abs() <= Z95 * e.se;
                    if straddles && doublings < opts.max_doublings {
                        budget *= 2;
                        doublings += 1;
                        continue;
                    }
                    out.ambiguous |= straddles;
                    if e.mean >= target {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                    break;
                }
            }
        }
    }
    out.final_budget = budget;
    out.bracket = (lo, hi);
    if hi == upper {
        out.probes += 1;
        if let Probe::Estimate(e) = probe_chi(g, upper, budget, opts.seed, Some(target)) {
            if e.mean < target {
                out.at_upper_endpoint = true;
                out.p_c_hat = WithCi::exact(upper);
                out.chi_at_estimate = e;
                return Ok(out);
            }
        }
    }
    let p_hat = 0.5 * (lo + hi);
    let at = full_probe(g, p_hat, budget, opts.seed);
    // Local slope over a window-sized step, for converting chi noise into p noise.
    let h = (p_hat * vf.powf(-1.0 / 3.0)).max(hi - lo).min(p_hat);
    let below = full_probe(g, p_hat - h, budget, opts.seed);
    let above = full_probe(g, (p_hat + h).min(1.0), budget, opts.seed);
    out.probes += 3;
    let slope = (above.mean - below.mean) / ((p_hat + h).min(1.0) - (p_hat - h));
    let stat = if slope > 0.0 { Z95 * at.se / slope } else { f64::INFINITY };
    let half = 0.5 * (hi - lo) + stat;
    out.p_c_hat = WithCi {
        value: p_hat,
        se: if slope > 0.0 { at.se / slope } else { f64::INFINITY },
        ci_low: (p_hat - half).max(0.0),
        ci_high: (p_hat + half).min(1.0),
    };
    out.chi_at_estimate = at;
    Ok(out)
}

/// Every derived quantity of the scaling window at one `lambda`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowParams {
    pub m: usize,
    #[serde(rename = "V")]
    pub v: u64,
    pub lambda: f64,
    pub alpha_m: f64,
    pub p_c_hat: WithCi,
    pub p_s: f64,
    #[serde(rename = "M_s")]
    pub m_s: u64,
    pub chi_ps_hat: WithCi,
    pub q_lambda: f64,
    pub p_c_prime: f64,
    pub kappa_hat: WithCi,
}

/// `p_c (1 - V^{-1/3} alpha^{-1/3})`.
pub fn subcritical_anchor(p_c: f64, v: f64, alpha: f64) -> f64 {
    p_c * (1.0 - v.powf(-1.0 / 3.0) * alpha.powf(-1.0 / 3.0))
}

/// `max(1, floor(V^{2/3} alpha^4))`.
pub fn size_cutoff(v: f64, alpha: f64) -> u64 {
    ((v.powf(2.0 / 3.0) * alpha.powi(4)).floor() as u64).max(1)
}

/// `1 - (1 - p_s) exp(-q / (m V^{1/3}))`.
pub fn sprinkled_probability(p_s: f64, q: f64, m: usize, v: f64) -> f64 {
    1.0 - (1.0 - p_s) * (-q / (m as f64 * v.cbrt())).exp()
}

/// Completes the window from a calibrated `p_c`, measuring `chi(p_s)`.
pub fn derive_window(
    g: &TransitiveGraph,
    lambda: f64,
    p_c_hat: WithCi,
    kappa_hat: WithCi,
    alpha: Option<f64>,
    budget: usize,
    seed: u64,
) -> Result<WindowParams> {
    let chi_ps = |p_s: f64| -> Result<Estimate> {
        if budget == 0 {
            return invalid("budget must be positive");
        }
        Ok(full_probe(g, p_s, budget, seed))
    };
    window_from_parts(g, lambda, p_c_hat, kappa_hat, alpha, chi_ps)
}

/// Window arithmetic with a caller-supplied `chi(p_s)` measurement.
pub fn window_from_parts(
    g: &TransitiveGraph,
    lambda: f64,
    p_c_hat: WithCi,
    kappa_hat: WithCi,
    alpha: Option<f64>,
    chi_at: impl FnOnce(f64) -> Result<Estimate>,
) -> Result<WindowParams> {
    let p_c = p_c_hat.value;
    if !(p_c > 0.0 && p_c < 1.0) {
        return invalid(format!("p_c_hat must lie in (0, 1), got {p_c}"));
    }
    let m = g.degree();
    let v = g.vertex_count() as f64;
    let alpha_m = alpha.unwrap_or_else(|| default_alpha(m));
    if !(alpha_m > 0.0) {
        return invalid(format!("alpha_m must be positive, got {alpha_m} (m = {m})"));
    }
    let p_s = subcritical_anchor(p_c, v, alpha_m);
    if !(p_s > 0.0) {
        return invalid(format!(
            "p_s = {p_s} is not positive: V^(-1/3) alpha_m^(-1/3) >= 1, so m = {m} is too small for the window"
        ));
    }
    let chi = chi_at(p_s)?;
    let q = v.cbrt() / chi.mean + lambda;
    if !(q > 0.0) {
        return invalid(format!("q_lambda = {q} is not positive; lambda = {lambda} is below the window"));
    }
    Ok(WindowParams {
        m,
        v: g.vertex_count() as u64,
        lambda,
        alpha_m,
        p_c_hat,
        p_s,
        m_s: size_cutoff(v, alpha_m),
        chi_ps_hat: WithCi::from_estimate(chi),
        q_lambda: q,
        p_c_prime: sprinkled_probability(p_s, q, m, v),
        kappa_hat,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FirstOrderCheck {
    /// `|p'_c - p_s - (1/m)((1 - p_s)/chi(p_s) + lambda V^{-1/3})|`.
    pub residual: f64,
    /// `10 (q / (m V^{1/3}))^2`.
    pub tolerance: f64,
    pub pass: bool,
}

pub fn first_order_check(w: &WindowParams) -> FirstOrderCheck {
    let v = w.v as f64;
    let m = w.m as f64;
    let approx = w.p_s + ((1.0 - w.p_s) / w.chi_ps_hat.value + w.lambda * v.powf(-1.0 / 3.0)) / m;
    let residual = (w.p_c_prime - approx).abs();
    let tolerance = 10.0 * (w.q_lambda / (m * v.cbrt())).powi(2);
    FirstOrderCheck {
        residual,
        tolerance,
        pass: residual <= tolerance,
    }
}

/// Largest violation of the exact window identities; zero up to rounding.
pub fn window_invariant_error(w: &WindowParams) -> f64 {
    let v = w.v as f64;
    let e1 = (w.p_s - subcritical_anchor(w.p_c_hat.value, v, w.alpha_m)).abs();
    let e2 = (w.q_lambda - (v.cbrt() / w.chi_ps_hat.value + w.lambda)).abs();
    let e3 = (w.p_c_prime - sprinkled_probability(w.p_s, w.q_lambda, w.m, v)).abs();
    let e4 = if w.m_s == size_cutoff(v, w.alpha_m) { 0.0 } else { 1.0 };
    let order = 0.0 < w.p_s && w.p_s < w.p_c_prime && w.p_c_prime < 1.0 && w.p_s < w.p_c_hat.value && w.p_c_hat.value < 1.0;
    let e5 = if order { 0.0 } else { 1.0 };
    [e1, e2 / w.q_lambda.abs().max(1.0), e3, e4, e5].into_iter().fold(0.0, f64::max)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WindowWidth {
    /// `(p_c(l2) - p_c(l1)) m V^{1/3} / (l2 - l1)`.
    pub ratio: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub low: PcCalibration,
    pub high: PcCalibration,
}

/// Calibrates at two `lambda` values with the same seed set and reports the
/// rescaled separation, which tends to 1.
pub fn window_width_check(
    g: &TransitiveGraph,
    lambda1: f64,
    kappa1: f64,
    lambda2: f64,
    kappa2: f64,
    opts: CalibrationOptions,
) -> Result<WindowWidth> {
    if !(lambda2 > lambda1) {
        return invalid(format!("need lambda2 > lambda1, got {lambda1} and {lambda2}"));
    }
    let low = calibrate_pc(g, lambda1, kappa1, opts)?;
    let high = calibrate_pc(g, lambda2, kappa2, opts)?;
    let scale = g.degree() as f64 * (g.vertex_count() as f64).cbrt() / (lambda2 - lambda1);
    let ratio = (high.p_c_hat.value - low.p_c_hat.value) * scale;
    let half = low.p_c_hat.half_width().hypot(high.p_c_hat.half_width()) * scale;
    Ok(WindowWidth {
        ratio,
        ci_low: ratio - half,
        ci_high: ratio + half,
        low,
        high,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trivial_targets() {
        let g = TransitiveGraph::hypercube(6).unwrap();
        let one = 1.0 / 4.0; // kappa V^{1/3} = 1
        let c = calibrate_pc(&g, 0.0, one, CalibrationOptions::new(1000, 1)).unwrap();
        assert_eq!(c.p_c_hat.value, 0.0);
        assert!(calibrate_pc(&g, 0.0, 17.0, CalibrationOptions::new(1000, 1)).is_err());
        assert!(calibrate_pc(&g, 0.0, 1.0, CalibrationOptions::new(999, 1)).is_err());
        // chi = V is out of reach below 2/(m-1) on this cube.
        let c = calibrate_pc(&g, 0.0, 16.0, CalibrationOptions::new(1000, 1)).unwrap();
        assert!(c.at_upper_endpoint);
        assert_eq!(c.p_c_hat.value, search_upper(6));
    }

    #[test]
    fn window_formulas() {
        let g = TransitiveGraph::hypercube(20).unwrap();
        let w = window_from_parts(&g, 0.0, WithCi::exact(1.0 / 19.0), WithCi::exact(1.0), None, |_| {
            Ok(Estimate { mean: 50.0, se: 1.0 })
        })
        .unwrap();
        let v = 2f64.powi(20);
        let a = 20f64.ln() / 20.0;
        let p_s = (1.0 / 19.0) * (1.0 - 2f64.powf(-20.0 / 3.0) * a.powf(-1.0 / 3.0));
        assert!((w.p_s - p_s).abs() < 1e-15);
        assert_eq!(w.m_s, 5);
        assert!((w.q_lambda - v.cbrt() / 50.0).abs() < 1e-12);
        assert!(window_invariant_error(&w) < 1e-12);
        assert!(first_order_check(&w).pass);
    }

    #[test]
    fn window_rejections() {
        let g = TransitiveGraph::hypercube(10).unwrap();
        let chi = |_| Ok(Estimate { mean: 10.0, se: 0.0 });
        assert!(window_from_parts(&g, 0.0, WithCi::exact(0.0), WithCi::exact(1.0), None, chi).is_err());
        assert!(window_from_parts(&g, -100.0, WithCi::exact(0.1), WithCi::exact(1.0), None, chi).is_err());
        assert!(window_width_check(&g, 1.0, 1.0, 1.0, 1.0, CalibrationOptions::new(1000, 0)).is_err());
    }
}
