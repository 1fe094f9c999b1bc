//! Building blocks shared by experiments, the CLI and the acceptance suite.

use anyhow::{bail, Result};
use percolab_core::calibration::{calibrate_pc, derive_window, CalibrationOptions, PcCalibration, WindowParams, WithCi};
use percolab_core::component_graphs::{build_pair, ComponentGraphPair, discrepancy_mass, extract_weighted_components, PairInput};
use percolab_core::dsu::DisjointSets;
use percolab_core::limit_oracle::{er_edges, kappa_er};
use percolab_core::percolation::{replicate_seed, BfsScratch, PercolationSample};
use percolab_core::rng::{derive_seed, stream, CounterRng};
use percolab_core::stats::Estimate;
use percolab_core::substrate::{TransitiveGraph, Vertex};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

/// Runs `f` on replicate seeds `0..count` in parallel, keeping input order.
pub fn replicates<T: Send>(seed: u64, count: usize, f: impl Fn(u64) -> Result<T> + Sync) -> Result<Vec<T>> {
    (0..count).into_par_iter().map(|k| f(replicate_seed(seed, k))).collect()
}

/// A hypercube window calibrated against ER at `n = V`.
#[derive(Clone, Debug, Serialize)]
pub struct Calibrated {
    pub kappa: Estimate,
    pub calibration: PcCalibration,
    pub window: WindowParams,
}

/// `kappa` from ER at `n = V`, then `p_c(lambda)` on the hypercube.
pub fn calibrate_point(g: &TransitiveGraph, lambda: f64, budget: usize, kappa_samples: usize, seed: u64) -> Result<(Estimate, PcCalibration)> {
    let kappa = kappa_er(lambda, g.vertex_count(), kappa_samples, derive_seed(seed, &[1]))?;
    let calibration = calibrate_pc(g, lambda, kappa.mean, CalibrationOptions::new(budget, derive_seed(seed, &[2])))?;
    Ok((kappa, calibration))
}

pub fn calibrate_window(m: usize, lambda: f64, budget: usize, kappa_samples: usize, seed: u64) -> Result<Calibrated> {
    let g = TransitiveGraph::hypercube(m)?;
    let (kappa, calibration) = calibrate_point(&g, lambda, budget, kappa_samples, seed)?;
    let window = derive_window(
        &g,
        lambda,
        calibration.p_c_hat,
        WithCi::from_estimate(kappa),
        None,
        budget,
        derive_seed(seed, &[3]),
    )?;
    Ok(Calibrated {
        kappa,
        calibration,
        window,
    })
}

/// `V^{-2/3}(|C_1|, ..., |C_k|)` of one hypercube sample, zero-padded.
pub fn hypercube_top_k(g: &TransitiveGraph, p: f64, seed: u64, k: usize) -> Result<Vec<f64>> {
    let sample = PercolationSample::new(g.clone(), seed);
    let part = sample.partition(p)?;
    let s = (g.vertex_count() as f64).powf(-2.0 / 3.0);
    let mut v: Vec<f64> = part.sizes().iter().take(k).map(|&x| x as f64 * s).collect();
    v.resize(k, 0.0);
    Ok(v)
}

/// Row-major `k x k` matrix of scaled distances between `k` uniform points
/// of a component, given BFS from a source.
fn sampled_matrix(members: &[Vertex], k: usize, scale: f64, seed: u64, mut dist: impl FnMut(Vertex) -> Vec<(Vertex, u32)>) -> Vec<f64> {
    let mut rng = stream(seed);
    let pts: Vec<Vertex> = (0..k).map(|_| members[rng.random_range(0..members.len())]).collect();
    let mut out = vec![0.0; k * k];
    for a in 0..k {
        let row = dist(pts[a]);
        for b in 0..k {
            let d = row.iter().find(|(v, _)| *v == pts[b]).map(|&(_, d)| d).expect("same component");
            out[a * k + b] = d as f64 * scale;
        }
    }
    out
}

/// Distances between `k` uniform points of the largest component of `H_p`,
/// scaled by `V^{-1/3}`.
pub fn hypercube_m1_matrix(g: &TransitiveGraph, p: f64, seed: u64, k: usize) -> Result<Vec<f64>> {
    let sample = PercolationSample::new(g.clone(), seed);
    let part = sample.partition(p)?;
    let members = part.members(0);
    let scale = (g.vertex_count() as f64).powf(-1.0 / 3.0);
    let rng = CounterRng::new(seed);
    let mut scratch = BfsScratch::new(g.vertex_count());
    Ok(sampled_matrix(members, k, scale, derive_seed(seed, &[0x4d31]), |src| {
        scratch.run(g, &rng, p, src, u32::MAX, usize::MAX);
        scratch.visited().iter().map(|&v| (v, scratch.distance(v).expect("visited"))).collect()
    }))
}

/// The same for the largest component of `G(n, p)`, scaled by `n^{-1/3}`.
pub fn er_m1_matrix(n: usize, p: f64, seed: u64, k: usize) -> Result<Vec<f64>> {
    let edges = er_edges(n, p, seed)?;
    let mut deg = vec![0u32; n + 1];
    let mut dsu = DisjointSets::new(n);
    for &(a, b) in &edges {
        deg[a as usize + 1] += 1;
        deg[b as usize + 1] += 1;
        dsu.union(a, b);
    }
    for i in 0..n {
        deg[i + 1] += deg[i];
    }
    let mut fill = deg.clone();
    let mut adj = vec![0u32; 2 * edges.len()];
    for &(a, b) in &edges {
        adj[fill[a as usize] as usize] = b;
        fill[a as usize] += 1;
        adj[fill[b as usize] as usize] = a;
        fill[b as usize] += 1;
    }
    let root = (0..n as Vertex).max_by_key(|&v| (dsu.set_size(v), std::cmp::Reverse(v))).unwrap_or(0);
    let root = dsu.find(root);
    let members: Vec<Vertex> = (0..n as Vertex).filter(|&v| dsu.find(v) == root).collect();
    let scale = (n as f64).powf(-1.0 / 3.0);
    let mut dist = vec![u32::MAX; n];
    Ok(sampled_matrix(&members, k, scale, derive_seed(seed, &[0x4d31]), |src| {
        let mut seen = vec![src];
        dist[src as usize] = 0;
        let mut head = 0;
        while head < seen.len() {
            let x = seen[head] as usize;
            head += 1;
            for &y in &adj[deg[x] as usize..deg[x + 1] as usize] {
                if dist[y as usize] == u32::MAX {
                    dist[y as usize] = dist[x] + 1;
                    seen.push(y);
                }
            }
        }
        let row = seen.iter().map(|&v| (v, dist[v as usize])).collect();
        for &v in &seen {
            dist[v as usize] = u32::MAX;
        }
        row
    }))
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct DiscrepancySample {
    pub retained: usize,
    pub excluded_mass: u64,
    /// `sum_{|A| >= M_s} |A|^2 / (V chi(p_s))`.
    pub sigma2_ratio: f64,
    pub mult_edges: usize,
    pub sprinkled_edges: usize,
    pub discrepancy: f64,
}

/// One outer `H_{p_s}` sample and one coupled pair on it.
pub fn coupled_pair(g: &TransitiveGraph, window: &WindowParams, seed: u64) -> Result<(DiscrepancySample, ComponentGraphPair)> {
    if g.degree() != window.m {
        bail!("window was calibrated for m = {}, graph has m = {}", window.m, g.degree());
    }
    let sample = PercolationSample::new(g.clone(), seed);
    let wc = extract_weighted_components(&sample, window)?;
    let input = PairInput::from_components(&sample, &wc, window.q_lambda);
    let pair = build_pair(&input, derive_seed(seed, &[0x50]));
    let summary = DiscrepancySample {
        retained: wc.len(),
        excluded_mass: wc.excluded_mass(),
        sigma2_ratio: wc.sum_sq() as f64 / (g.vertex_count() as f64 * window.chi_ps_hat.value),
        mult_edges: pair.mult_edges.len(),
        sprinkled_edges: pair.sprinkled_edges.len(),
        discrepancy: discrepancy_mass(&pair),
    };
    Ok((summary, pair))
}

pub fn discrepancy_sample(g: &TransitiveGraph, window: &WindowParams, seed: u64) -> Result<DiscrepancySample> {
    Ok(coupled_pair(g, window, seed)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrices_are_symmetric_with_zero_diagonal() {
        let g = TransitiveGraph::hypercube(8).unwrap();
        for m in [hypercube_m1_matrix(&g, 0.3, 1, 4).unwrap(), er_m1_matrix(500, 3.0 / 500.0, 2, 4).unwrap()] {
            for a in 0..4 {
                assert_eq!(m[a * 4 + a], 0.0);
                for b in 0..4 {
                    assert_eq!(m[a * 4 + b], m[b * 4 + a]);
                }
            }
        }
    }

    #[test]
    fn er_matrix_on_a_complete_graph() {
        let m = er_m1_matrix(20, 1.0, 3, 5).unwrap();
        let s = 20f64.powf(-1.0 / 3.0);
        assert!(m.iter().all(|&d| d == 0.0 || d == s));
    }
}
