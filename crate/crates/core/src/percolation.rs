//! Bond percolation under the simultaneous coupling.
//!
//! Edge `e` carries a uniform `U_e` in `(0, 1]` computed from the sample seed
//! and the canonical edge id; `e` is open at level `p` iff `U_e <= p`. The
//! uniforms are never stored, so the same sample can be queried at any `p`
//! and the open subgraphs are nested in `p`.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use rand::seq::index::sample as sample_indices;
use rayon::prelude::*;
use serde::Serialize;

use crate::dsu::DisjointSets;
use crate::error::{invalid, Result};
use crate::rng::{derive_seed, stream, CounterRng};
use crate::stats::Estimate;
use crate::substrate::{TransitiveGraph, Vertex};

pub(crate) fn check_probability(p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        invalid(format!("probability must lie in [0, 1], got {p}"))
    }
}

/// Components of one open subgraph, ranked by size (largest first, ties by
/// smallest vertex).
#[derive(Clone, Debug)]
pub struct Partition {
    labels: Vec<u32>,
    sizes: Vec<u32>,
    offsets: Vec<u32>,
    members: Vec<Vertex>,
}

impl Partition {
    /// Builds a ranked partition from union-find state.
    pub fn from_dsu(dsu: &mut DisjointSets) -> Self {
        let (raw, raw_sizes) = dsu.labels();
        Self::from_labels(&raw, &raw_sizes)
    }

    /// `raw` labels must be numbered in order of first appearance.
    pub fn from_labels(raw: &[u32], raw_sizes: &[u32]) -> Self {
        let mut order: Vec<u32> = (0..raw_sizes.len() as u32).collect();
        order.sort_by(|&a, &b| raw_sizes[b as usize].cmp(&raw_sizes[a as usize]).then(a.cmp(&b)));
        let mut rank_of = vec![0u32; raw_sizes.len()];
        for (rank, &l) in order.iter().enumerate() {
            rank_of[l as usize] = rank as u32;
        }
        let labels: Vec<u32> = raw.iter().map(|&l| rank_of[l as usize]).collect();
        let sizes: Vec<u32> = order.iter().map(|&l| raw_sizes[l as usize]).collect();
        let mut offsets = Vec::with_capacity(sizes.len() + 1);
        let mut acc = 0u32;
        offsets.push(0);
        for &s in &sizes {
            acc += s;
            offsets.push(acc);
        }
        let mut fill = offsets.clone();
        let mut members = vec![0; labels.len()];
        for (v, &l) in labels.iter().enumerate() {
            members[fill[l as usize] as usize] = v as Vertex;
            fill[l as usize] += 1;
        }
        Self {
            labels,
            sizes,
            offsets,
            members,
        }
    }

    pub fn component_count(&self) -> usize {
        self.sizes.len()
    }

    pub fn vertex_count(&self) -> usize {
        self.labels.len()
    }

    /// Rank of the component containing `v`.
    #[inline]
    pub fn component_of(&self, v: Vertex) -> usize {
        self.labels[v as usize] as usize
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn sizes(&self) -> &[u32] {
        &self.sizes
    }

    pub fn size(&self, rank: usize) -> usize {
        self.sizes[rank] as usize
    }

    /// Vertices of the component with the given rank, ascending.
    pub fn members(&self, rank: usize) -> &[Vertex] {
        &self.members[self.offsets[rank] as usize..self.offsets[rank + 1] as usize]
    }
}

/// A seeded realization of the coupled edge uniforms on a graph.
#[derive(Debug)]
pub struct PercolationSample {
    graph: TransitiveGraph,
    seed: u64,
    rng: CounterRng,
    cache: RwLock<HashMap<u64, Arc<Partition>>>,
}

impl PercolationSample {
    pub fn new(graph: TransitiveGraph, seed: u64) -> Self {
        Self {
            graph,
            seed,
            rng: CounterRng::new(seed),
            cache: RwLock::new(HashMap::new()),
        }
    }

    pub fn graph(&self) -> &TransitiveGraph {
        &self.graph
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn vertex_count(&self) -> usize {
        self.graph.vertex_count()
    }

    /// `U_e` for the `i`-th edge at `v`.
    #[inline]
    pub fn uniform(&self, v: Vertex, i: usize) -> f64 {
        self.rng.uniform(self.graph.edge_id(v, i))
    }

    #[inline]
    pub fn is_open(&self, v: Vertex, i: usize, p: f64) -> bool {
        self.uniform(v, i) <= p
    }

    /// Calls `f(v, i, w, U_e)` once per undirected edge, from its owner `v`.
    pub fn for_each_edge(&self, mut f: impl FnMut(Vertex, usize, Vertex, f64)) {
        let g = &self.graph;
        for v in 0..g.vertex_count() as Vertex {
            for i in 0..g.degree() {
                if g.owns_edge(v, i) {
                    f(v, i, g.neighbor(v, i), self.uniform(v, i));
                }
            }
        }
    }

    /// Exact components of the `p`-open subgraph, cached per `p`.
    pub fn partition(&self, p: f64) -> Result<Arc<Partition>> {
        check_probability(p)?;
        let key = p.to_bits();
        if let Some(hit) = self.cache.read().expect("cache lock").get(&key) {
            return Ok(hit.clone());
        }
        let mut dsu = DisjointSets::new(self.vertex_count());
        self.for_each_edge(|v, _, w, u| {
            if u <= p {
                dsu.union(v, w);
            }
        });
        let part = Arc::new(Partition::from_dsu(&mut dsu));
        self.cache
            .write()
            .expect("cache lock")
            .entry(key)
            .or_insert_with(|| part.clone());
        Ok(part)
    }

    /// Components of the `p`-open subgraph induced on `{v : keep[v]}`.
    /// Vertices outside the set stay as singletons.
    pub fn restricted_partition(&self, p: f64, keep: &[bool]) -> Result<Partition> {
        check_probability(p)?;
        if keep.len() != self.vertex_count() {
            return invalid("mask length differs from the vertex count");
        }
        let mut dsu = DisjointSets::new(self.vertex_count());
        self.for_each_edge(|v, _, w, u| {
            if u <= p && keep[v as usize] && keep[w as usize] {
                dsu.union(v, w);
            }
        });
        Ok(Partition::from_dsu(&mut dsu))
    }

    pub fn clear_cache(&self) {
        self.cache.write().expect("cache lock").clear();
    }
}

/// Reusable BFS scratch with stamped visitation, so no O(V) reset per search.
#[derive(Clone, Debug)]
pub struct BfsScratch {
    stamp: Vec<u32>,
    dist: Vec<u32>,
    queue: Vec<Vertex>,
    epoch: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BfsOutcome {
    pub visited: usize,
    pub eccentricity: u32,
    pub farthest: Vertex,
    /// True when the search was cut short by the size limit.
    pub truncated: bool,
}

impl BfsScratch {
    pub fn new(n: usize) -> Self {
        Self {
            stamp: vec![0; n],
            dist: vec![0; n],
            queue: Vec::new(),
            epoch: 0,
        }
    }

    fn next_epoch(&mut self) {
        self.epoch = self.epoch.wrapping_add(1);
        if self.epoch == 0 {
            self.stamp.iter_mut().for_each(|s| *s = 0);
            self.epoch = 1;
        }
        self.queue.clear();
    }

    /// BFS in the `p`-open subgraph from `src`, up to depth `max_depth` and
    /// stopping once more than `max_size` vertices are reached.
    pub fn run(
        &mut self,
        g: &TransitiveGraph,
        rng: &CounterRng,
        p: f64,
        src: Vertex,
        max_depth: u32,
        max_size: usize,
    ) -> BfsOutcome {
        self.next_epoch();
        let e = self.epoch;
        self.stamp[src as usize] = e;
        self.dist[src as usize] = 0;
        self.queue.push(src);
        let mut head = 0;
        let mut out = BfsOutcome {
            visited: 1,
            eccentricity: 0,
            farthest: src,
            truncated: false,
        };
        if max_size < 1 {
            out.truncated = true;
            return out;
        }
        while head < self.queue.len() {
            let v = self.queue[head];
            head += 1;
            let d = self.dist[v as usize];
            if d >= max_depth {
                continue;
            }
            for i in 0..g.degree() {
                let w = g.neighbor(v, i);
                if self.stamp[w as usize] == e || rng.uniform(g.edge_id(v, i)) > p {
                    continue;
                }
                self.stamp[w as usize] = e;
                self.dist[w as usize] = d + 1;
                self.queue.push(w);
                out.visited += 1;
                if d + 1 > out.eccentricity {
                    out.eccentricity = d + 1;
                    out.farthest = w;
                }
                if out.visited > max_size {
                    out.truncated = true;
                    return out;
                }
            }
        }
        out
    }

    /// Visited vertices of the last search, in BFS order.
    pub fn visited(&self) -> &[Vertex] {
        &self.queue
    }

    pub fn distance(&self, v: Vertex) -> Option<u32> {
        (self.stamp[v as usize] == self.epoch).then(|| self.dist[v as usize])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Diameter {
    pub value: u32,
    /// False for sweep lower bounds and for `size - 1` upper bounds.
    pub exact: bool,
    /// True when `value` is the `size - 1` upper bound.
    pub upper_bound: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct ComponentStats {
    pub vertex_count: usize,
    /// Sizes, weakly decreasing.
    pub sizes: Vec<u64>,
    /// Per-component diameters, same order as `sizes`, when computed.
    pub diameters: Option<Vec<Diameter>>,
}

impl ComponentStats {
    pub fn from_partition(part: &Partition) -> Self {
        Self {
            vertex_count: part.vertex_count(),
            sizes: part.sizes().iter().map(|&s| s as u64).collect(),
            diameters: None,
        }
    }

    /// `V^{-2/3} |C_i|` for every component.
    pub fn rescaled(&self) -> Vec<f64> {
        let s = (self.vertex_count as f64).powf(-2.0 / 3.0);
        self.sizes.iter().map(|&x| x as f64 * s).collect()
    }

    /// First `k` rescaled sizes, zero-padded.
    pub fn top_k(&self, k: usize) -> Vec<f64> {
        let mut r = self.rescaled();
        r.resize(k.max(r.len()), 0.0);
        r.truncate(k);
        r
    }

    /// `sum_{i < k} (V^{-2/3}|C_i|)^2`.
    pub fn l2_partial(&self, k: usize) -> f64 {
        self.rescaled().iter().take(k).map(|x| x * x).sum()
    }

    pub fn l4_partial(&self, k: usize) -> f64 {
        self.rescaled().iter().take(k).map(|x| x.powi(4)).sum()
    }

    /// `sum_i |C_i|^2`, the number of ordered connected pairs.
    pub fn sum_sq(&self) -> u128 {
        self.sizes.iter().map(|&s| s as u128 * s as u128).sum()
    }
}

pub fn percolate(sample: &PercolationSample, p: f64) -> Result<ComponentStats> {
    let part = sample.partition(p)?;
    Ok(ComponentStats::from_partition(&part))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DiameterOptions {
    /// Components smaller than this report the `size - 1` bound.
    pub compute_floor: usize,
    /// Components up to this size get an exact all-sources BFS.
    pub exact_cap: usize,
    /// Iterated far-vertex sweeps for larger components.
    pub sweeps: usize,
}

impl Default for DiameterOptions {
    fn default() -> Self {
        Self {
            compute_floor: 1,
            exact_cap: 256,
            sweeps: 32,
        }
    }
}

/// Diameter of one component of the `p`-open subgraph.
pub fn component_diameter(
    sample: &PercolationSample,
    part: &Partition,
    p: f64,
    rank: usize,
    opts: DiameterOptions,
    scratch: &mut BfsScratch,
) -> Diameter {
    let size = part.size(rank);
    if size <= 2 {
        return Diameter {
            value: size as u32 - 1,
            exact: true,
            upper_bound: false,
        };
    }
    if size < opts.compute_floor {
        return Diameter {
            value: size as u32 - 1,
            exact: false,
            upper_bound: true,
        };
    }
    let g = sample.graph();
    let rng = &sample.rng;
    let members = part.members(rank);
    if size <= opts.exact_cap {
        let value = members
            .iter()
            .map(|&s| scratch.run(g, rng, p, s, u32::MAX, usize::MAX).eccentricity)
            .max()
            .unwrap_or(0);
        return Diameter {
            value,
            exact: true,
            upper_bound: false,
        };
    }
    let mut src = members[0];
    let mut best = 0;
    for _ in 0..opts.sweeps.max(1) {
        let out = scratch.run(g, rng, p, src, u32::MAX, usize::MAX);
        if out.eccentricity <= best && best > 0 {
            break;
        }
        best = best.max(out.eccentricity);
        src = out.farthest;
    }
    Diameter {
        value: best,
        exact: false,
        upper_bound: false,
    }
}

/// Attaches diameters of every component to `stats`.
pub fn diameters(sample: &PercolationSample, p: f64, opts: DiameterOptions) -> Result<ComponentStats> {
    let part = sample.partition(p)?;
    let mut stats = ComponentStats::from_partition(&part);
    let mut scratch = BfsScratch::new(sample.vertex_count());
    let d = (0..part.component_count())
        .map(|r| component_diameter(sample, &part, p, r, opts, &mut scratch))
        .collect();
    stats.diameters = Some(d);
    Ok(stats)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TailStats {
    /// `sum_{i >= k} |C_i|^4 / V^{8/3}`.
    pub size_tail: f64,
    /// `sum_{i >= k} diam(C_i)^4 / V^{4/3}`.
    pub diam_tail: f64,
    /// Number of terms that used the `size - 1` bound.
    pub bounded_terms: usize,
}

/// Normalized fourth-power tails from rank `k` (1-based) on.
pub fn tail_and_l4_stats(stats: &ComponentStats, k: usize) -> TailStats {
    let v = stats.vertex_count as f64;
    let start = k.max(1) - 1;
    if start >= stats.sizes.len() {
        return TailStats {
            size_tail: 0.0,
            diam_tail: 0.0,
            bounded_terms: 0,
        };
    }
    let size_tail = stats.sizes[start..].iter().map(|&s| (s as f64).powi(4)).sum::<f64>() / v.powf(8.0 / 3.0);
    let mut bounded = 0;
    let diam_sum: f64 = stats.sizes[start..]
        .iter()
        .enumerate()
        .map(|(j, &s)| {
            let d = match &stats.diameters {
                Some(ds) => {
                    if ds[start + j].upper_bound {
                        bounded += 1;
                    }
                    ds[start + j].value as f64
                }
                None => {
                    if s > 2 {
                        bounded += 1;
                    }
                    (s - 1) as f64
                }
            };
            d.powi(4)
        })
        .sum();
    TailStats {
        size_tail,
        diam_tail: diam_sum / v.powf(4.0 / 3.0),
        bounded_terms: bounded,
    }
}

/// Seed of the `k`-th replicate of a Monte Carlo run.
pub fn replicate_seed(base: u64, k: usize) -> u64 {
    derive_seed(base, &[k as u64])
}

/// `|C(0)|` in replicates `0..n_samples`, each using the edge uniforms of
/// `PercolationSample::new(g, replicate_seed(seed, k))`. Searches are lazy,
/// so the cost is proportional to the cluster sizes.
pub fn origin_cluster_sizes(g: &TransitiveGraph, p: f64, n_samples: usize, seed: u64) -> Result<Vec<u32>> {
    check_probability(p)?;
    let n = g.vertex_count();
    Ok((0..n_samples)
        .into_par_iter()
        .map_init(
            || BfsScratch::new(n),
            |scratch, k| {
                let rng = CounterRng::new(replicate_seed(seed, k));
                scratch.run(g, &rng, p, 0, u32::MAX, usize::MAX).visited as u32
            },
        )
        .collect())
}

/// Monte Carlo estimate of `chi(p) = E_p |C(0)|`.
pub fn susceptibility(g: &TransitiveGraph, p: f64, n_samples: usize, seed: u64) -> Result<Estimate> {
    if n_samples == 0 {
        return invalid("n_samples must be at least 1");
    }
    let sizes = origin_cluster_sizes(g, p, n_samples, seed)?;
    let xs: Vec<f64> = sizes.iter().map(|&s| s as f64).collect();
    Ok(Estimate::from_samples(&xs))
}

/// Histogram `size -> count` of `|C(0)|`; dividing by `size` gives the
/// ordinary component-size law up to normalization.
pub fn size_biased_histogram(sizes: &[u32]) -> Vec<(u32, usize)> {
    let mut h = std::collections::BTreeMap::new();
    for &s in sizes {
        *h.entry(s).or_insert(0usize) += 1;
    }
    h.into_iter().collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Ball {
    pub size: usize,
    /// Some vertex lies at open-path distance exactly `r`.
    pub boundary_nonempty: bool,
}

pub fn ball(sample: &PercolationSample, p: f64, x: Vertex, r: u32) -> Result<Ball> {
    check_probability(p)?;
    sample.graph().check_vertex(x)?;
    let mut scratch = BfsScratch::new(sample.vertex_count());
    let out = scratch.run(sample.graph(), &sample.rng, p, x, r, usize::MAX);
    Ok(Ball {
        size: out.visited,
        boundary_nonempty: out.eccentricity == r,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct LongThinScan {
    pub count: usize,
    pub examined: usize,
    pub subsampled: bool,
}

/// Counts vertices whose radius-`r_max` ball has at most `m_max` vertices and
/// a nonempty boundary. All vertices are examined unless `V > vertex_cap`, in
/// which case a uniform subsample of `vertex_cap` distinct vertices is used.
pub fn long_thin_scan(
    sample: &PercolationSample,
    p: f64,
    r_max: u32,
    m_max: usize,
    vertex_cap: usize,
    seed: u64,
) -> Result<LongThinScan> {
    check_probability(p)?;
    if r_max < 1 || m_max < 1 {
        return invalid("R and M must be at least 1");
    }
    let n = sample.vertex_count();
    let vertices: Vec<Vertex> = if n > vertex_cap {
        let mut rng = stream(seed);
        let mut v: Vec<Vertex> = sample_indices(&mut rng, n, vertex_cap)
            .into_iter()
            .map(|i| i as Vertex)
            .collect();
        v.sort_unstable();
        v
    } else {
        (0..n as Vertex).collect()
    };
    let g = sample.graph();
    let count = vertices
        .par_iter()
        .map_init(
            || BfsScratch::new(n),
            |scratch, &v| {
                let out = scratch.run(g, &sample.rng, p, v, r_max, m_max);
                usize::from(!out.truncated && out.eccentricity == r_max)
            },
        )
        .sum();
    Ok(LongThinScan {
        count,
        examined: vertices.len(),
        subsampled: n > vertex_cap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cube(m: usize, seed: u64) -> PercolationSample {
        PercolationSample::new(TransitiveGraph::hypercube(m).unwrap(), seed)
    }

    #[test]
    fn extreme_probabilities() {
        assert_eq!(percolate(&cube(2, 1), 1.0).unwrap().sizes, vec![4]);
        assert_eq!(percolate(&cube(3, 1), 0.0).unwrap().sizes, vec![1; 8]);
        let g = TransitiveGraph::hypercube(3).unwrap();
        assert_eq!(susceptibility(&g, 0.0, 10, 3).unwrap(), Estimate::exact(1.0));
        assert_eq!(susceptibility(&g, 1.0, 10, 3).unwrap(), Estimate::exact(8.0));
        assert!(percolate(&cube(3, 1), 1.5).is_err());
    }

    #[test]
    fn partition_is_ranked_and_consistent() {
        let s = cube(10, 7);
        let part = s.partition(0.12).unwrap();
        let sizes = part.sizes();
        assert!(sizes.windows(2).all(|w| w[0] >= w[1]));
        assert_eq!(sizes.iter().map(|&x| x as usize).sum::<usize>(), 1024);
        for r in 0..part.component_count() {
            for &v in part.members(r) {
                assert_eq!(part.component_of(v), r);
            }
        }
    }

    #[test]
    fn origin_cluster_matches_full_partition() {
        let g = TransitiveGraph::hypercube(8).unwrap();
        let sizes = origin_cluster_sizes(&g, 0.2, 20, 99).unwrap();
        for (k, &sz) in sizes.iter().enumerate() {
            let s = PercolationSample::new(g.clone(), replicate_seed(99, k));
            let part = s.partition(0.2).unwrap();
            assert_eq!(part.size(part.component_of(0)), sz as usize);
        }
    }

    #[test]
    fn balls_on_the_full_cube() {
        let s = cube(3, 0);
        assert_eq!(ball(&s, 1.0, 0, 0).unwrap(), Ball { size: 1, boundary_nonempty: true });
        assert_eq!(ball(&s, 1.0, 0, 1).unwrap(), Ball { size: 4, boundary_nonempty: true });
        assert_eq!(ball(&s, 1.0, 0, 3).unwrap(), Ball { size: 8, boundary_nonempty: true });
        assert_eq!(ball(&s, 1.0, 0, 4).unwrap(), Ball { size: 8, boundary_nonempty: false });
    }

    #[test]
    fn long_thin_extremes() {
        let s = cube(4, 5);
        assert_eq!(long_thin_scan(&s, 1.0, 4, 16, 1 << 20, 0).unwrap().count, 16);
        assert_eq!(long_thin_scan(&s, 0.0, 1, 1, 1 << 20, 0).unwrap().count, 0);
    }

    #[test]
    fn tails_at_extremes() {
        let s = cube(6, 2);
        let v = 64f64;
        let t = tail_and_l4_stats(&diameters(&s, 0.0, DiameterOptions::default()).unwrap(), 1);
        assert!((t.size_tail - v.powf(-5.0 / 3.0)).abs() < 1e-15);
        assert_eq!(t.diam_tail, 0.0);
        let t = tail_and_l4_stats(&percolate(&s, 1.0).unwrap(), 2);
        assert_eq!((t.size_tail, t.diam_tail), (0.0, 0.0));
    }

    #[test]
    fn full_cube_diameter() {
        let s = cube(5, 2);
        let st = diameters(&s, 1.0, DiameterOptions::default()).unwrap();
        assert_eq!(st.diameters.unwrap()[0], Diameter { value: 5, exact: true, upper_bound: false });
        let st = diameters(&s, 1.0, DiameterOptions { exact_cap: 4, ..Default::default() }).unwrap();
        assert_eq!(st.diameters.unwrap()[0].value, 5);
    }
}
