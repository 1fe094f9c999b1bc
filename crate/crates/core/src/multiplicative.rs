//! Multiplicative random graphs: pair `{i, j}` is an edge with probability
//! `1 - exp(-q w_i w_j)`, independently.
//!
//! Two samplers are provided. The direct sampler draws the edges. The
//! exploration sampler runs Limic's process `Y_t = -t + sum_i w_i 1(E_i <= t)`
//! with `E_i ~ Exp(q w_i)`; its excursions above the running infimum have the
//! law of the component weights, and the infimum level during an excursion is
//! the local time of that component.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::dsu::DisjointSets;
use crate::error::{invalid, Result};
use crate::percolation::replicate_seed;
use crate::rng::{open_closed_uniform, stream, CounterRng};
use crate::stats::Estimate;

/// Above this many vertices the direct sampler switches to bucketed skipping.
pub const QUADRATIC_LIMIT: usize = 10_000;

fn neumaier_sum(xs: impl Iterator<Item = f64>) -> f64 {
    let (mut s, mut c) = (0.0f64, 0.0f64);
    for x in xs {
        let t = s + x;
        if s.abs() >= x.abs() {
            c += (s - t) + x;
        } else {
            c += (x - t) + s;
        }
        s = t;
    }
    s + c
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WeightVector {
    weights: Vec<f64>,
    q: f64,
    sigma: [f64; 3],
}

impl WeightVector {
    pub fn new(weights: Vec<f64>, q: f64) -> Result<Self> {
        if weights.is_empty() {
            return invalid("weight vector is empty");
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return invalid(format!("weights must be positive and finite, found {w}"));
        }
        if !(q.is_finite() && q >= 0.0) {
            return invalid(format!("q must be finite and nonnegative, got {q}"));
        }
        let sigma = [1, 2, 3].map(|r| neumaier_sum(weights.iter().map(|w| w.powi(r))));
        Ok(Self { weights, q, sigma })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    /// `sigma_r = sum_i w_i^r` for `r` in 1..=3.
    pub fn sigma(&self, r: usize) -> f64 {
        self.sigma[r - 1]
    }

    pub fn max_weight(&self) -> f64 {
        self.weights.iter().copied().fold(0.0, f64::max)
    }

    pub fn min_weight(&self) -> f64 {
        self.weights.iter().copied().fold(f64::INFINITY, f64::min)
    }

    #[inline]
    pub fn edge_probability(&self, i: usize, j: usize) -> f64 {
        -(-self.q * self.weights[i] * self.weights[j]).exp_m1()
    }
}

/// One component of a realization.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WeightedClass {
    pub weight: f64,
    /// Vertex indices: ascending for the direct sampler, discovery order for exploration.
    pub members: Vec<u32>,
}

/// Components sorted by weight, largest first.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MultPartition {
    pub classes: Vec<WeightedClass>,
}

impl MultPartition {
    pub fn weights(&self) -> Vec<f64> {
        self.classes.iter().map(|c| c.weight).collect()
    }

    /// `sum_i w(C_i)^2`.
    pub fn sum_sq(&self) -> f64 {
        self.classes.iter().map(|c| c.weight * c.weight).sum()
    }

    /// Sorted class sizes (member counts), largest first.
    pub fn shape(&self) -> Vec<usize> {
        let mut s: Vec<usize> = self.classes.iter().map(|c| c.members.len()).collect();
        s.sort_unstable_by(|a, b| b.cmp(a));
        s
    }

    fn from_dsu(dsu: &mut DisjointSets, w: &[f64]) -> Self {
        let (labels, sizes) = dsu.labels();
        let mut classes: Vec<WeightedClass> = sizes
            .iter()
            .map(|&s| WeightedClass {
                weight: 0.0,
                members: Vec::with_capacity(s as usize),
            })
            .collect();
        for (v, &l) in labels.iter().enumerate() {
            classes[l as usize].members.push(v as u32);
        }
        for c in &mut classes {
            c.weight = neumaier_sum(c.members.iter().map(|&v| w[v as usize]));
        }
        // Labels follow first appearance, i.e. minimum member; the sort is stable.
        classes.sort_by(|a, b| b.weight.total_cmp(&a.weight));
        Self { classes }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum DirectMethod {
    #[default]
    Auto,
    Quadratic,
    Bucketed,
}

/// Samples the graph edge by edge and returns its components.
pub fn sample_direct(wv: &WeightVector, seed: u64) -> MultPartition {
    sample_direct_with(wv, seed, DirectMethod::Auto)
}

pub fn sample_direct_with(wv: &WeightVector, seed: u64, method: DirectMethod) -> MultPartition {
    let n = wv.len();
    let mut dsu = DisjointSets::new(n);
    let bucketed = match method {
        DirectMethod::Auto => n > QUADRATIC_LIMIT,
        DirectMethod::Quadratic => false,
        DirectMethod::Bucketed => true,
    };
    if wv.q() > 0.0 {
        let mut add = |i: usize, j: usize| {
            dsu.union(i as u32, j as u32);
        };
        if bucketed {
            bucketed_edges(wv, seed, &mut add);
        } else {
            let rng = CounterRng::new(seed);
            let mut c = 0u64;
            for i in 0..n {
                for j in (i + 1)..n {
                    if rng.uniform(c) <= wv.edge_probability(i, j) {
                        add(i, j);
                    }
                    c += 1;
                }
            }
        }
    }
    MultPartition::from_dsu(&mut dsu, wv.weights())
}

/// Number of trials until the first success of a Bernoulli(p) sequence, minus one.
#[inline]
fn geometric_skip<R: Rng>(rng: &mut R, log_q: f64) -> u64 {
    if log_q == f64::NEG_INFINITY {
        return 0;
    }
    let g = (open_closed_uniform(rng).ln() / log_q).floor();
    if g >= 9.0e18 {
        u64::MAX / 2
    } else {
        g as u64
    }
}

/// Groups vertices by `floor(log2 w)` and, within each pair of groups, jumps
/// between candidate pairs with the group-pair maximum probability, then
/// thins each candidate to its true probability.
pub(crate) fn bucketed_edges(wv: &WeightVector, seed: u64, add: &mut impl FnMut(usize, usize)) {
    let w = wv.weights();
    let mut groups: std::collections::BTreeMap<i32, Vec<usize>> = std::collections::BTreeMap::new();
    for (i, &x) in w.iter().enumerate() {
        groups.entry(x.log2().floor() as i32).or_default().push(i);
    }
    let groups: Vec<Vec<usize>> = groups.into_values().collect();
    let gmax: Vec<f64> = groups.iter().map(|g| g.iter().map(|&i| w[i]).fold(0.0, f64::max)).collect();
    let mut rng = stream(seed);
    for a in 0..groups.len() {
        for b in a..groups.len() {
            let pmax = -(-wv.q() * gmax[a] * gmax[b]).exp_m1();
            if pmax <= 0.0 {
                continue;
            }
            let log_q = (-pmax).ln_1p();
            let (ga, gb) = (&groups[a], &groups[b]);
            let total: u64 = if a == b {
                (ga.len() as u64) * (ga.len() as u64 - 1) / 2
            } else {
                ga.len() as u64 * gb.len() as u64
            };
            let mut idx = geometric_skip(&mut rng, log_q);
            // Row/column cursor for the triangular enumeration within one group.
            let (mut row, mut col_base) = (1u64, 0u64);
            while idx < total {
                let (i, j) = if a == b {
                    while idx >= col_base + row {
                        col_base += row;
                        row += 1;
                    }
                    (ga[(idx - col_base) as usize], ga[row as usize])
                } else {
                    let nb = gb.len() as u64;
                    (ga[(idx / nb) as usize], gb[(idx % nb) as usize])
                };
                let p = wv.edge_probability(i, j);
                if open_closed_uniform(&mut rng) * pmax <= p {
                    add(i, j);
                }
                idx = idx.saturating_add(1).saturating_add(geometric_skip(&mut rng, log_q));
            }
        }
    }
}

/// One excursion of the exploration process.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Excursion {
    pub start: f64,
    pub end: f64,
    /// Vertices in clock order.
    pub members: Vec<u32>,
    /// Sum of jump sizes, equal to `end - start`.
    pub weight: f64,
    /// `|inf Y|` during the excursion.
    pub local_time: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExplorationTrace {
    pub clocks: Vec<f64>,
    /// Excursions in discovery order.
    pub excursions: Vec<Excursion>,
}

impl ExplorationTrace {
    /// Excursions as components, by weight with ties by smallest member,
    /// together with their local times. Breaking ties by discovery order
    /// instead would bias the local times.
    pub fn components(&self) -> (MultPartition, Vec<f64>) {
        let mut order: Vec<usize> = (0..self.excursions.len()).collect();
        let min_member = |k: usize| self.excursions[k].members.iter().min().copied();
        order.sort_by(|&a, &b| {
            self.excursions[b]
                .weight
                .total_cmp(&self.excursions[a].weight)
                .then(min_member(a).cmp(&min_member(b)))
        });
        let classes = order
            .iter()
            .map(|&k| WeightedClass {
                weight: self.excursions[k].weight,
                members: self.excursions[k].members.clone(),
            })
            .collect();
        let local = order.iter().map(|&k| self.excursions[k].local_time).collect();
        (MultPartition { classes }, local)
    }

    /// Total jump mass.
    pub fn jump_mass(&self) -> f64 {
        neumaier_sum(self.excursions.iter().map(|e| e.weight))
    }

    /// Time of the last jump.
    pub fn last_jump(&self) -> f64 {
        self.clocks.iter().copied().fold(0.0, f64::max)
    }

    /// `Y` just after the last jump, `sigma_1 - T_end`.
    pub fn final_value(&self) -> f64 {
        self.jump_mass() - self.last_jump()
    }
}

pub fn sample_exploration(wv: &WeightVector, seed: u64) -> Result<ExplorationTrace> {
    if !(wv.q() > 0.0) {
        return invalid("exploration needs q > 0; with q = 0 no clock ever rings");
    }
    let rng = CounterRng::new(seed);
    let w = wv.weights();
    let clocks: Vec<f64> = (0..w.len()).map(|i| rng.exponential(i as u64, wv.q() * w[i])).collect();
    let mut order: Vec<u32> = (0..w.len() as u32).collect();
    order.sort_by(|&a, &b| clocks[a as usize].total_cmp(&clocks[b as usize]).then(a.cmp(&b)));
    let mut excursions: Vec<Excursion> = Vec::new();
    let mut completed = 0.0;
    for &i in &order {
        let t = clocks[i as usize];
        let wi = w[i as usize];
        match excursions.last_mut() {
            Some(cur) if t < cur.end => {
                cur.members.push(i);
                cur.weight += wi;
                cur.end += wi;
            }
            _ => {
                if let Some(prev) = excursions.last() {
                    completed += prev.weight;
                }
                excursions.push(Excursion {
                    start: t,
                    end: t + wi,
                    members: vec![i],
                    weight: wi,
                    local_time: t - completed,
                });
            }
        }
    }
    Ok(ExplorationTrace { clocks, excursions })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ConditionReport {
    pub sigma3_over_sigma2_cubed: f64,
    pub q_minus_inv_sigma2: f64,
    pub max_w_over_sigma2: f64,
    pub max_w_over_sigma2_pow: f64,
    pub sigma2_pow_r0_over_min_w: f64,
    pub eta0: f64,
    pub r0: f64,
}

pub const DEFAULT_ETA0: f64 = 0.1;
pub const DEFAULT_R0: f64 = 13.0;

/// Ratios whose limits the scaling theorems for multiplicative graphs require.
pub fn check_conditions(wv: &WeightVector, eta0: f64, r0: f64) -> Result<ConditionReport> {
    if !(eta0 > 0.0 && eta0 <= 1.0 / 6.0) {
        return invalid(format!("eta0 must lie in (0, 1/6], got {eta0}"));
    }
    if !(r0 > 12.0) {
        return invalid(format!("r0 must exceed 12, got {r0}"));
    }
    let s2 = wv.sigma(2);
    let s3 = wv.sigma(3);
    let wmax = wv.max_weight();
    Ok(ConditionReport {
        sigma3_over_sigma2_cubed: s3 / s2.powi(3),
        q_minus_inv_sigma2: wv.q() - 1.0 / s2,
        max_w_over_sigma2: wmax / s2,
        max_w_over_sigma2_pow: wmax / s2.powf(1.5 + eta0),
        sigma2_pow_r0_over_min_w: s2.powf(r0) / wv.min_weight(),
        eta0,
        r0,
    })
}

/// Monte Carlo estimate of `E sum_i w(C_i)^2`.
pub fn susceptibility_mult(wv: &WeightVector, n_samples: usize, seed: u64) -> Result<Estimate> {
    if n_samples == 0 {
        return invalid("n_samples must be at least 1");
    }
    if wv.q() == 0.0 {
        return Ok(Estimate::exact(wv.sigma(2)));
    }
    let xs: Vec<f64> = (0..n_samples)
        .into_par_iter()
        .map(|k| sample_direct(wv, replicate_seed(seed, k)).sum_sq())
        .collect();
    Ok(Estimate::from_samples(&xs))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trivial_cases() {
        let wv = WeightVector::new(vec![0.5, 1.0, 2.0], 0.0).unwrap();
        assert_eq!(sample_direct(&wv, 1).classes.len(), 3);
        assert!(sample_exploration(&wv, 1).is_err());
        assert_eq!(susceptibility_mult(&wv, 5, 0).unwrap(), Estimate::exact(5.25));
        let one = WeightVector::new(vec![0.7], 2.0).unwrap();
        let t = sample_exploration(&one, 3).unwrap();
        assert_eq!(t.excursions.len(), 1);
        assert_eq!(t.excursions[0].members, vec![0]);
        assert_eq!(sample_direct(&one, 3).weights(), vec![0.7]);
        assert!(WeightVector::new(vec![1.0, 0.0], 1.0).is_err());
        assert!(WeightVector::new(vec![], 1.0).is_err());
    }

    #[test]
    fn exploration_bookkeeping() {
        let w: Vec<f64> = (1..=40).map(|i| 0.05 * i as f64).collect();
        let wv = WeightVector::new(w, 0.4).unwrap();
        let t = sample_exploration(&wv, 9).unwrap();
        assert!((t.jump_mass() - wv.sigma(1)).abs() < 1e-12);
        let mut seen: Vec<u32> = t.excursions.iter().flat_map(|e| e.members.clone()).collect();
        seen.sort_unstable();
        assert_eq!(seen, (0..40).collect::<Vec<u32>>());
        for e in &t.excursions {
            assert!((e.end - e.start - e.weight).abs() < 1e-9);
        }
        assert!(t.excursions.windows(2).all(|p| p[0].local_time <= p[1].local_time));
        assert!(t.excursions.windows(2).all(|p| p[0].end <= p[1].start));
    }

    #[test]
    fn condition_ratios_for_uniform_weights() {
        let n = 1000usize;
        let nf = n as f64;
        let wv = WeightVector::new(vec![nf.powf(-2.0 / 3.0); n], nf.cbrt()).unwrap();
        let r = check_conditions(&wv, DEFAULT_ETA0, DEFAULT_R0).unwrap();
        assert!((wv.sigma(2) - nf.powf(-1.0 / 3.0)).abs() < 1e-12);
        assert!((r.sigma3_over_sigma2_cubed - 1.0).abs() < 1e-9);
        assert!(r.q_minus_inv_sigma2.abs() < 1e-9);
        let single = WeightVector::new(vec![2.0], 1.0).unwrap();
        let r = check_conditions(&single, DEFAULT_ETA0, DEFAULT_R0).unwrap();
        assert!((r.sigma3_over_sigma2_cubed - 2f64.powi(-3)).abs() < 1e-15);
        assert!(check_conditions(&single, 0.5, 13.0).is_err());
        assert!(check_conditions(&single, 0.1, 12.0).is_err());
    }
}
