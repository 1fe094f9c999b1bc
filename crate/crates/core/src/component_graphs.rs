//! Graphs whose vertices are the large components of a subcritical sample.
//!
//! Fix a realization `H_{p_s}` and keep its components of size at least
//! `M_s`, each with weight `w_A = |A| V^{-2/3}`. Two random graphs live on
//! these components:
//!
//! * the multiplicative graph `G_x`, with edge `{A, B}` present with
//!   probability `q_AB = 1 - exp(-q w_A w_B)`;
//! * the sprinkled graph `G_s`, with probability
//!   `p_AB = 1 - exp(-q Delta_AB / (m V^{1/3}))`, where `Delta_AB` counts host
//!   edges between `A` and `B`. Equivalently, `{A, B}` is an edge iff some host
//!   edge between them has `U_e` in `(p_s, p'_c]`.
//!
//! The two are coupled through one uniform per pair, so they differ only where
//! the thresholds differ.

use std::collections::{HashMap, VecDeque};
use std::sync::Arc;

use rand::Rng;
use serde::Serialize;

use crate::calibration::WindowParams;
use crate::dsu::DisjointSets;
use crate::error::{invalid, Error, Result};
use crate::multiplicative::{bucketed_edges, WeightVector};
use crate::percolation::{check_probability, BfsScratch, Partition, PercolationSample};
use crate::rng::{derive_seed, stream, CounterRng};
use crate::substrate::Vertex;

const NOT_RETAINED: u32 = u32::MAX;

/// Above this many retained components `Auto` stops drawing a keyed uniform
/// for every pair.
pub const EXHAUSTIVE_LIMIT: usize = 4000;

/// Cap on the component count for dense connection matrices.
pub const MATRIX_LIMIT: usize = 2000;

/// The retained components `{A : |A| >= M_s}` of `H_{p_s}`.
#[derive(Clone, Debug)]
pub struct WeightedComponents {
    vertex_count: usize,
    degree: usize,
    p_s: f64,
    m_s: u64,
    partition: Arc<Partition>,
    /// Partition rank of each retained component.
    ranks: Vec<usize>,
    sizes: Vec<u64>,
    weights: Vec<f64>,
    /// Retained index per vertex, or `NOT_RETAINED`.
    index_of: Vec<u32>,
    excluded_mass: u64,
}

impl WeightedComponents {
    pub fn len(&self) -> usize {
        self.sizes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sizes.is_empty()
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn p_s(&self) -> f64 {
        self.p_s
    }

    pub fn m_s(&self) -> u64 {
        self.m_s
    }

    pub fn sizes(&self) -> &[u64] {
        &self.sizes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Total size of the dropped components.
    pub fn excluded_mass(&self) -> u64 {
        self.excluded_mass
    }

    /// `|V_*|`.
    pub fn retained_mass(&self) -> u64 {
        self.sizes.iter().sum()
    }

    pub fn members(&self, a: usize) -> &[Vertex] {
        self.partition.members(self.ranks[a])
    }

    /// Smallest vertex of component `a`, its enumeration-independent key.
    pub fn key(&self, a: usize) -> Vertex {
        self.members(a)[0]
    }

    /// Retained index of the component containing `v`, if any.
    pub fn index_of(&self, v: Vertex) -> Option<usize> {
        let i = self.index_of[v as usize];
        (i != NOT_RETAINED).then_some(i as usize)
    }

    pub fn in_vstar(&self) -> Vec<bool> {
        self.index_of.iter().map(|&i| i != NOT_RETAINED).collect()
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    /// `sum_A |A|^2` over retained components.
    pub fn sum_sq(&self) -> u128 {
        self.sizes.iter().map(|&s| s as u128 * s as u128).sum()
    }

    /// Weight vector of the multiplicative graph at rate `q`.
    pub fn weight_vector(&self, q: f64) -> Result<WeightVector> {
        WeightVector::new(self.weights.clone(), q)
    }
}

/// Keeps the components of `H_{p_s}` with at least `m_s` vertices.
pub fn extract_at(sample: &PercolationSample, p_s: f64, m_s: u64) -> Result<WeightedComponents> {
    let partition = sample.partition(p_s)?;
    let v = sample.vertex_count();
    let scale = (v as f64).powf(-2.0 / 3.0);
    let mut ranks = Vec::new();
    let mut excluded = 0u64;
    for r in 0..partition.component_count() {
        let s = partition.size(r) as u64;
        if s >= m_s.max(1) {
            ranks.push(r);
        } else {
            excluded += s;
        }
    }
    let mut index_of = vec![NOT_RETAINED; v];
    for (a, &r) in ranks.iter().enumerate() {
        for &x in partition.members(r) {
            index_of[x as usize] = a as u32;
        }
    }
    let sizes: Vec<u64> = ranks.iter().map(|&r| partition.size(r) as u64).collect();
    Ok(WeightedComponents {
        vertex_count: v,
        degree: sample.graph().degree(),
        p_s,
        m_s: m_s.max(1),
        weights: sizes.iter().map(|&s| s as f64 * scale).collect(),
        partition,
        ranks,
        sizes,
        index_of,
        excluded_mass: excluded,
    })
}

pub fn extract_weighted_components(sample: &PercolationSample, window: &WindowParams) -> Result<WeightedComponents> {
    if window.v as usize != sample.vertex_count() || window.m != sample.graph().degree() {
        return invalid("window parameters belong to a different graph");
    }
    extract_at(sample, window.p_s, window.m_s)
}

/// Number of host edges between retained components `a` and `b`.
pub fn delta_ab(sample: &PercolationSample, wc: &WeightedComponents, a: usize, b: usize) -> Result<u64> {
    if a == b {
        return invalid("Delta needs two different components");
    }
    if a >= wc.len() || b >= wc.len() {
        return invalid("component index out of range");
    }
    let (small, large) = if wc.sizes[a] <= wc.sizes[b] { (a, b) } else { (b, a) };
    let g = sample.graph();
    let mut count = 0;
    for &x in wc.members(small) {
        for i in 0..g.degree() {
            if wc.index_of[g.neighbor(x, i) as usize] == large as u32 {
                count += 1;
            }
        }
    }
    Ok(count)
}

/// `(a, b, Delta_ab)` for every pair `a < b` with `Delta_ab > 0`, sorted, from
/// one pass over the host edges.
pub fn all_deltas(sample: &PercolationSample, wc: &WeightedComponents) -> Vec<(u32, u32, u32)> {
    let g = sample.graph();
    let mut keys: Vec<u64> = Vec::new();
    for v in 0..g.vertex_count() as Vertex {
        let a = wc.index_of[v as usize];
        if a == NOT_RETAINED {
            continue;
        }
        for i in 0..g.degree() {
            if !g.owns_edge(v, i) {
                continue;
            }
            let b = wc.index_of[g.neighbor(v, i) as usize];
            if b != NOT_RETAINED && b != a {
                let (lo, hi) = if a < b { (a, b) } else { (b, a) };
                keys.push(((lo as u64) << 32) | hi as u64);
            }
        }
    }
    keys.sort_unstable();
    let mut out: Vec<(u32, u32, u32)> = Vec::new();
    for k in keys {
        let (lo, hi) = ((k >> 32) as u32, k as u32);
        match out.last_mut() {
            Some(last) if last.0 == lo && last.1 == hi => last.2 += 1,
            _ => out.push((lo, hi, 1)),
        }
    }
    out
}

/// Everything needed to realize the coupled pair, independent of the host graph.
#[derive(Clone, Debug)]
pub struct PairInput {
    pub vertex_count: usize,
    pub degree: usize,
    pub q: f64,
    pub sizes: Vec<u64>,
    /// Enumeration-independent key of each component (its smallest vertex).
    pub keys: Vec<Vertex>,
    /// Sorted `(a, b, Delta_ab)` with `a < b` and `Delta_ab > 0`.
    pub deltas: Vec<(u32, u32, u32)>,
}

impl PairInput {
    pub fn from_components(sample: &PercolationSample, wc: &WeightedComponents, q: f64) -> Self {
        Self {
            vertex_count: wc.vertex_count,
            degree: wc.degree,
            q,
            sizes: wc.sizes.clone(),
            keys: (0..wc.len()).map(|a| wc.key(a)).collect(),
            deltas: all_deltas(sample, wc),
        }
    }

    fn weight(&self, a: usize) -> f64 {
        self.sizes[a] as f64 * (self.vertex_count as f64).powf(-2.0 / 3.0)
    }

    /// `q_AB = 1 - exp(-q w_A w_B)`.
    pub fn q_ab(&self, a: usize, b: usize) -> f64 {
        -(-self.q * self.weight(a) * self.weight(b)).exp_m1()
    }

    /// `p_AB = 1 - exp(-q Delta / (m V^{1/3}))`.
    pub fn p_of_delta(&self, delta: u64) -> f64 {
        -(-self.q * delta as f64 / (self.degree as f64 * (self.vertex_count as f64).cbrt())).exp_m1()
    }

    pub fn delta(&self, a: usize, b: usize) -> u64 {
        let (lo, hi) = if a < b { (a as u32, b as u32) } else { (b as u32, a as u32) };
        self.deltas
            .binary_search_by(|&(x, y, _)| (x, y).cmp(&(lo, hi)))
            .map_or(0, |i| self.deltas[i].2 as u64)
    }

    fn pair_counter(&self, a: usize, b: usize) -> u64 {
        let (x, y) = (self.keys[a] as u64, self.keys[b] as u64);
        let (lo, hi) = if x < y { (x, y) } else { (y, x) };
        lo * self.vertex_count as u64 + hi
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum PairMode {
    /// `Exhaustive` up to `EXHAUSTIVE_LIMIT` components, `Sparse` above.
    #[default]
    Auto,
    /// A keyed uniform for every pair.
    Exhaustive,
    /// Keyed uniforms for pairs with `Delta > 0`; the remaining `G_x` edges by
    /// bucketed skip sampling. Same joint law as `Exhaustive`.
    Sparse,
}

/// Coupled realizations of `G_x` and `G_s` on the same components.
#[derive(Clone, Debug, Serialize)]
pub struct ComponentGraphPair {
    pub vertex_count: usize,
    pub sizes: Vec<u64>,
    pub mult_edges: Vec<(u32, u32)>,
    pub sprinkled_edges: Vec<(u32, u32)>,
    /// Component-graph class of each retained component in `G_x`.
    pub mult_labels: Vec<u32>,
    pub sprinkled_labels: Vec<u32>,
}

fn labels_of(n: usize, edges: &[(u32, u32)]) -> Vec<u32> {
    let mut dsu = DisjointSets::new(n);
    for &(a, b) in edges {
        dsu.union(a, b);
    }
    dsu.labels().0
}

impl ComponentGraphPair {
    pub fn from_edges(vertex_count: usize, sizes: Vec<u64>, mut mult: Vec<(u32, u32)>, mut sprinkled: Vec<(u32, u32)>) -> Self {
        mult.sort_unstable();
        sprinkled.sort_unstable();
        let n = sizes.len();
        Self {
            vertex_count,
            mult_labels: labels_of(n, &mult),
            sprinkled_labels: labels_of(n, &sprinkled),
            sizes,
            mult_edges: mult,
            sprinkled_edges: sprinkled,
        }
    }

    pub fn len(&self) -> usize {
        self.sizes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sizes.is_empty()
    }

    /// Vertex masses of the classes of one graph, largest first.
    pub fn class_masses(&self, sprinkled: bool) -> Vec<u64> {
        let labels = if sprinkled { &self.sprinkled_labels } else { &self.mult_labels };
        let mut mass: HashMap<u32, u64> = HashMap::new();
        for (a, &l) in labels.iter().enumerate() {
            *mass.entry(l).or_insert(0) += self.sizes[a];
        }
        let mut v: Vec<u64> = mass.into_values().collect();
        v.sort_unstable_by(|a, b| b.cmp(a));
        v
    }

    pub fn graph(&self, sprinkled: bool) -> ComponentGraph {
        let edges = if sprinkled { &self.sprinkled_edges } else { &self.mult_edges };
        ComponentGraph::new(self.sizes.clone(), edges)
    }
}

pub fn build_pair(input: &PairInput, seed: u64) -> ComponentGraphPair {
    build_pair_with(input, seed, PairMode::Auto)
}

pub fn build_pair_with(input: &PairInput, seed: u64, mode: PairMode) -> ComponentGraphPair {
    let n = input.sizes.len();
    let exhaustive = match mode {
        PairMode::Auto => n <= EXHAUSTIVE_LIMIT,
        PairMode::Exhaustive => true,
        PairMode::Sparse => false,
    };
    let rng = CounterRng::new(derive_seed(seed, &[0x5041_4952]));
    let mut mult = Vec::new();
    let mut sprinkled = Vec::new();
    if input.q > 0.0 {
        if exhaustive {
            for a in 0..n {
                for b in (a + 1)..n {
                    let u = rng.uniform(input.pair_counter(a, b));
                    if u <= input.q_ab(a, b) {
                        mult.push((a as u32, b as u32));
                    }
                    let d = input.delta(a, b);
                    if d > 0 && u <= input.p_of_delta(d) {
                        sprinkled.push((a as u32, b as u32));
                    }
                }
            }
        } else {
            for &(a, b, d) in &input.deltas {
                let (a, b) = (a as usize, b as usize);
                let u = rng.uniform(input.pair_counter(a, b));
                if u <= input.q_ab(a, b) {
                    mult.push((a as u32, b as u32));
                }
                if u <= input.p_of_delta(d as u64) {
                    sprinkled.push((a as u32, b as u32));
                }
            }
            let scale = (input.vertex_count as f64).powf(-2.0 / 3.0);
            let wv = WeightVector::new(input.sizes.iter().map(|&s| s as f64 * scale).collect(), input.q)
                .expect("component sizes are positive");
            bucketed_edges(&wv, derive_seed(seed, &[0x5a45_524f]), &mut |i, j| {
                let (a, b) = if i < j { (i, j) } else { (j, i) };
                if input.delta(a, b) == 0 {
                    mult.push((a as u32, b as u32));
                }
            });
        }
    }
    ComponentGraphPair::from_edges(input.vertex_count, input.sizes.clone(), mult, sprinkled)
}

/// Where the sprinkle layer comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SprinkleSource {
    /// The sample's own uniforms: edge open iff `U_e` in `(p_s, p'_c]`.
    Sample,
    /// Fresh uniforms for the edges closed at `p_s`, keyed by this seed.
    Fresh(u64),
}

/// Edges `{A, B}` of retained components joined by at least one sprinkled
/// host edge, sorted and deduplicated.
pub fn sprinkled_component_edges(
    sample: &PercolationSample,
    wc: &WeightedComponents,
    p_prime: f64,
    source: SprinkleSource,
) -> Result<Vec<(u32, u32)>> {
    check_probability(p_prime)?;
    let p_s = wc.p_s;
    if p_prime < p_s {
        return invalid("p'_c must not be below p_s");
    }
    let fresh = match source {
        SprinkleSource::Fresh(s) => Some(CounterRng::new(derive_seed(s, &[0x5350_524b]))),
        SprinkleSource::Sample => None,
    };
    let threshold = if p_s < 1.0 { (p_prime - p_s) / (1.0 - p_s) } else { 0.0 };
    let g = sample.graph();
    let mut edges = Vec::new();
    sample.for_each_edge(|v, i, w, u| {
        let a = wc.index_of[v as usize];
        let b = wc.index_of[w as usize];
        if a == NOT_RETAINED || b == NOT_RETAINED || a == b {
            return;
        }
        let open = match &fresh {
            None => u > p_s && u <= p_prime,
            Some(r) => r.uniform(g.edge_id(v, i)) <= threshold,
        };
        if open {
            edges.push(if a < b { (a, b) } else { (b, a) });
        }
    });
    edges.sort_unstable();
    edges.dedup();
    Ok(edges)
}

/// `G_s` realized from host edges, with `G_x` drawn from the keyed pair
/// uniforms as in `build_pair`.
pub fn build_pair_sprinkled(
    sample: &PercolationSample,
    wc: &WeightedComponents,
    q: f64,
    p_prime: f64,
    seed: u64,
    source: SprinkleSource,
) -> Result<ComponentGraphPair> {
    let input = PairInput::from_components(sample, wc, q);
    let mult = build_pair(&input, seed).mult_edges;
    let sprinkled = sprinkled_component_edges(sample, wc, p_prime, source)?;
    Ok(ComponentGraphPair::from_edges(wc.vertex_count, wc.sizes.clone(), mult, sprinkled))
}

fn sum_sq_by_label(sizes: &[u64], labels: impl Iterator<Item = u64>) -> u128 {
    let mut mass: HashMap<u64, u128> = HashMap::new();
    for (a, l) in labels.enumerate() {
        *mass.entry(l).or_insert(0) += sizes[a] as u128;
    }
    mass.values().map(|m| m * m).sum()
}

/// `sum_{A != B} |A||B| 1(A, B joined in exactly one graph) / V^{4/3}`.
pub fn discrepancy_mass(pair: &ComponentGraphPair) -> f64 {
    let sx = sum_sq_by_label(&pair.sizes, pair.mult_labels.iter().map(|&l| l as u64));
    let ss = sum_sq_by_label(&pair.sizes, pair.sprinkled_labels.iter().map(|&l| l as u64));
    let joint = sum_sq_by_label(
        &pair.sizes,
        pair.mult_labels
            .iter()
            .zip(&pair.sprinkled_labels)
            .map(|(&x, &s)| ((x as u64) << 32) | s as u64),
    );
    (sx + ss - 2 * joint) as f64 / (pair.vertex_count as f64).powf(4.0 / 3.0)
}

/// Dense square matrix over component indices.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConnectionMatrix {
    pub n: usize,
    pub entries: Vec<f64>,
}

impl ConnectionMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            entries: vec![0.0; n * n],
        }
    }

    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.entries[a * self.n + b]
    }

    pub fn frobenius(&self) -> f64 {
        self.entries.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ConnectionMatrices {
    /// `P*(A <-> B in G_x)`.
    pub t_mult: ConnectionMatrix,
    /// `P*(A <-> B in G_s)`.
    pub t_sprinkled: ConnectionMatrix,
    /// `|q_AB - p_AB|`, exact.
    pub xi: ConnectionMatrix,
    /// `P*(A, B joined in exactly one graph)`.
    pub t_neq: ConnectionMatrix,
    pub n_mc: usize,
}

/// Quenched Monte Carlo estimates of the connection matrices for fixed components.
pub fn connection_matrices(input: &PairInput, n_mc: usize, seed: u64) -> Result<ConnectionMatrices> {
    let n = input.sizes.len();
    if n > MATRIX_LIMIT {
        return Err(Error::TooLarge {
            what: "retained component count",
            limit: MATRIX_LIMIT,
            hint: "subsample the components or raise M_s",
        });
    }
    if n_mc == 0 {
        return invalid("n_mc must be at least 1");
    }
    let mut xi = ConnectionMatrix::zeros(n);
    for a in 0..n {
        for b in 0..n {
            if a != b {
                xi.entries[a * n + b] = (input.q_ab(a, b) - input.p_of_delta(input.delta(a, b))).abs();
            }
        }
    }
    let mut tx = ConnectionMatrix::zeros(n);
    let mut ts = ConnectionMatrix::zeros(n);
    let mut tn = ConnectionMatrix::zeros(n);
    let inc = 1.0 / n_mc as f64;
    for k in 0..n_mc {
        let pair = build_pair_with(input, derive_seed(seed, &[k as u64]), PairMode::Exhaustive);
        for a in 0..n {
            for b in 0..n {
                if a == b {
                    continue;
                }
                let x = pair.mult_labels[a] == pair.mult_labels[b];
                let s = pair.sprinkled_labels[a] == pair.sprinkled_labels[b];
                if x {
                    tx.entries[a * n + b] += inc;
                }
                if s {
                    ts.entries[a * n + b] += inc;
                }
                if x != s {
                    tn.entries[a * n + b] += inc;
                }
            }
        }
    }
    Ok(ConnectionMatrices {
        t_mult: tx,
        t_sprinkled: ts,
        xi,
        t_neq: tn,
        n_mc,
    })
}

/// `N(p) = sum_i |C_i(H_p)|^2 - sum_j |D_j|^2`, with `D_j` the components of
/// `H_p` restricted to `V_*`. Returns `(N, N / V^{4/3})`.
pub fn bad_pair_count(sample: &PercolationSample, wc: &WeightedComponents, p: f64) -> Result<(u128, f64)> {
    if p < wc.p_s {
        return invalid("p must be at least p_s");
    }
    let full = sample.partition(p)?;
    let keep = wc.in_vstar();
    let restricted = sample.restricted_partition(p, &keep)?;
    let all: u128 = full.sizes().iter().map(|&s| s as u128 * s as u128).sum();
    let mut inner = 0u128;
    for r in 0..restricted.component_count() {
        if keep[restricted.members(r)[0] as usize] {
            let s = restricted.size(r) as u128;
            inner += s * s;
        }
    }
    let n = all - inner;
    Ok((n, n as f64 / (sample.vertex_count() as f64).powf(4.0 / 3.0)))
}

/// A simple graph on component indices with vertex masses.
#[derive(Clone, Debug)]
pub struct ComponentGraph {
    pub sizes: Vec<u64>,
    pub adjacency: Vec<Vec<u32>>,
}

impl ComponentGraph {
    pub fn new(sizes: Vec<u64>, edges: &[(u32, u32)]) -> Self {
        let mut adjacency = vec![Vec::new(); sizes.len()];
        for &(a, b) in edges {
            if a != b {
                adjacency[a as usize].push(b);
                adjacency[b as usize].push(a);
            }
        }
        for l in &mut adjacency {
            l.sort_unstable();
            l.dedup();
        }
        Self { sizes, adjacency }
    }

    pub fn len(&self) -> usize {
        self.sizes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sizes.is_empty()
    }

    /// Hop distances from `s`; `u32::MAX` when unreachable.
    pub fn distances_from(&self, s: usize) -> Vec<u32> {
        let mut dist = vec![u32::MAX; self.len()];
        dist[s] = 0;
        let mut queue = VecDeque::from([s]);
        while let Some(x) = queue.pop_front() {
            for &y in &self.adjacency[x] {
                if dist[y as usize] == u32::MAX {
                    dist[y as usize] = dist[x] + 1;
                    queue.push_back(y as usize);
                }
            }
        }
        dist
    }

    /// Labels of connected components (first-appearance numbering).
    pub fn component_labels(&self) -> Vec<u32> {
        let edges: Vec<(u32, u32)> = self
            .adjacency
            .iter()
            .enumerate()
            .flat_map(|(a, l)| l.iter().map(move |&b| (a as u32, b)))
            .collect();
        labels_of(self.len(), &edges)
    }
}

/// The full component graph over all components of `H_{p_s}` (no size
/// threshold), with edges from host edges whose uniform lies in `(p_s, p']`.
pub fn full_component_graph(sample: &PercolationSample, p_s: f64, p_prime: f64) -> Result<(ComponentGraph, Arc<Partition>)> {
    let all = extract_at(sample, p_s, 1)?;
    let edges = sprinkled_component_edges(sample, &all, p_prime, SprinkleSource::Sample)?;
    Ok((ComponentGraph::new(all.sizes.clone(), &edges), all.partition.clone()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct GirthReport {
    /// Shortest cycle length, `None` if the qualifying part is a forest.
    pub girth: Option<u32>,
    /// Number of qualifying connected components of the component graph.
    pub qualifying: usize,
}

/// Shortest cycle inside the connected components whose total vertex mass is
/// at least `tau V^{2/3}`.
pub fn girth_scan(graph: &ComponentGraph, vertex_count: usize, tau: f64) -> GirthReport {
    let labels = graph.component_labels();
    let mut mass: HashMap<u32, u64> = HashMap::new();
    for (a, &l) in labels.iter().enumerate() {
        *mass.entry(l).or_insert(0) += graph.sizes[a];
    }
    let floor = tau * (vertex_count as f64).powf(2.0 / 3.0);
    let qualifying: std::collections::HashSet<u32> =
        mass.iter().filter(|(_, &m)| m as f64 >= floor).map(|(&l, _)| l).collect();
    let n = graph.len();
    let mut best = u32::MAX;
    let mut dist = vec![u32::MAX; n];
    let mut parent = vec![u32::MAX; n];
    let mut touched = Vec::new();
    for s in 0..n {
        if !qualifying.contains(&labels[s]) || graph.adjacency[s].len() < 2 {
            continue;
        }
        for &t in &touched {
            dist[t] = u32::MAX;
        }
        touched.clear();
        dist[s] = 0;
        touched.push(s);
        let mut queue = VecDeque::from([s]);
        while let Some(x) = queue.pop_front() {
            // Cycles found from deeper levels cannot beat the current best.
            if 2 * dist[x] + 1 >= best {
                break;
            }
            for &y in &graph.adjacency[x] {
                let y = y as usize;
                if dist[y] == u32::MAX {
                    dist[y] = dist[x] + 1;
                    parent[y] = x as u32;
                    touched.push(y);
                    queue.push_back(y);
                } else if parent[x] != y as u32 {
                    best = best.min(dist[x] + dist[y] + 1);
                }
            }
        }
    }
    GirthReport {
        girth: (best != u32::MAX).then_some(best),
        qualifying: qualifying.len(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MetricPair {
    /// `d_cube(U, V) / V^{1/3}`.
    pub d_cube: f64,
    /// `chi(p_s) d_s(U, V) / V^{1/3}`; infinite when disconnected in `G_s`.
    pub d_comp: f64,
    /// U or V lies outside `V_*`, so `d_comp` is undefined (NaN).
    pub outside_vstar: bool,
}

/// Samples pairs `U, V` uniformly from the rank-`r` component (1-based) of
/// `H_{p'}` and compares the host distance with the rescaled distance of their
/// `p_s`-components in the sprinkled graph realized from the same sample.
pub fn metric_comparison(
    sample: &PercolationSample,
    wc: &WeightedComponents,
    chi_ps: f64,
    p_prime: f64,
    r: usize,
    n_pairs: usize,
    seed: u64,
) -> Result<Vec<MetricPair>> {
    let part = sample.partition(p_prime)?;
    if r == 0 || r > part.component_count() {
        return invalid(format!("component rank {r} does not exist at p = {p_prime}"));
    }
    let members = part.members(r - 1);
    let sprinkled = sprinkled_component_edges(sample, wc, p_prime, SprinkleSource::Sample)?;
    let cg = ComponentGraph::new(wc.sizes.clone(), &sprinkled);
    let scale = (sample.vertex_count() as f64).powf(-1.0 / 3.0);
    let mut rng = stream(seed);
    let mut scratch = BfsScratch::new(sample.vertex_count());
    let rng_edges = CounterRng::new(sample.seed());
    let mut comp_dist: HashMap<usize, Vec<u32>> = HashMap::new();
    let mut out = Vec::with_capacity(n_pairs);
    for _ in 0..n_pairs {
        let u = members[rng.random_range(0..members.len())];
        let v = members[rng.random_range(0..members.len())];
        scratch.run(sample.graph(), &rng_edges, p_prime, u, u32::MAX, usize::MAX);
        let d_cube = scratch.distance(v).expect("same component") as f64 * scale;
        let (d_comp, outside) = match (wc.index_of(u), wc.index_of(v)) {
            (Some(a), Some(b)) => {
                let d = comp_dist.entry(a).or_insert_with(|| cg.distances_from(a))[b];
                let val = if d == u32::MAX { f64::INFINITY } else { chi_ps * d as f64 * scale };
                (val, false)
            }
            _ => (f64::NAN, true),
        };
        out.push(MetricPair {
            d_cube,
            d_comp,
            outside_vstar: outside,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::substrate::TransitiveGraph;

    fn sample(m: usize, seed: u64) -> PercolationSample {
        PercolationSample::new(TransitiveGraph::hypercube(m).unwrap(), seed)
    }

    #[test]
    fn extraction_extremes() {
        let s = sample(4, 1);
        let all = extract_at(&s, 0.0, 1).unwrap();
        assert_eq!(all.len(), 16);
        assert_eq!(all.excluded_mass(), 0);
        let none = extract_at(&s, 0.0, 2).unwrap();
        assert!(none.is_empty());
        assert_eq!(none.excluded_mass(), 16);
    }

    #[test]
    fn delta_examples() {
        let s = sample(2, 0);
        let wc = extract_at(&s, 0.0, 1).unwrap();
        // Singletons: index a holds vertex a's component; find 00 and its neighbors.
        let idx = |v: Vertex| wc.index_of(v).unwrap();
        let d1 = delta_ab(&s, &wc, idx(0b00), idx(0b01)).unwrap();
        let d2 = delta_ab(&s, &wc, idx(0b00), idx(0b10)).unwrap();
        assert_eq!(d1 + d2, 2);
        let s3 = sample(3, 0);
        let wc3 = extract_at(&s3, 0.0, 1).unwrap();
        let a = wc3.index_of(0).unwrap();
        let b = wc3.index_of(7).unwrap();
        assert_eq!(delta_ab(&s3, &wc3, a, b).unwrap(), 0);
        assert!(delta_ab(&s3, &wc3, a, a).is_err());
    }

    #[test]
    fn zero_rate_gives_empty_graphs() {
        let s = sample(8, 3);
        let wc = extract_at(&s, 0.08, 2).unwrap();
        let input = PairInput::from_components(&s, &wc, 0.0);
        let pair = build_pair(&input, 1);
        assert!(pair.mult_edges.is_empty() && pair.sprinkled_edges.is_empty());
        assert_eq!(discrepancy_mass(&pair), 0.0);
    }

    #[test]
    fn single_discrepant_edge() {
        let pair = ComponentGraphPair::from_edges(64, vec![3, 5, 7], vec![], vec![(0, 2)]);
        let expected = 2.0 * 3.0 * 7.0 / 64f64.powf(4.0 / 3.0);
        assert!((discrepancy_mass(&pair) - expected).abs() < 1e-15);
    }

    #[test]
    fn equal_thresholds_give_equal_edges() {
        // |A||B| / V = Delta / m makes the two thresholds coincide.
        let input = PairInput {
            vertex_count: 64,
            degree: 6,
            q: 2.5,
            sizes: vec![8, 8],
            keys: vec![0, 1],
            deltas: vec![(0, 1, 6)],
        };
        assert!((input.q_ab(0, 1) - input.p_of_delta(6)).abs() < 1e-15);
        for seed in 0..200 {
            let pair = build_pair_with(&input, seed, PairMode::Exhaustive);
            assert_eq!(pair.mult_edges, pair.sprinkled_edges);
        }
    }

    #[test]
    fn girth_examples() {
        let tree = ComponentGraph::new(vec![10; 4], &[(0, 1), (1, 2), (1, 3)]);
        assert_eq!(girth_scan(&tree, 64, 0.1).girth, None);
        let tri = ComponentGraph::new(vec![10; 4], &[(0, 1), (1, 2), (2, 0), (2, 3)]);
        assert_eq!(girth_scan(&tri, 64, 0.1).girth, Some(3));
        let square = ComponentGraph::new(vec![10; 5], &[(0, 1), (1, 2), (2, 3), (3, 0), (3, 4)]);
        assert_eq!(girth_scan(&square, 64, 0.1).girth, Some(4));
        // The same cycle is ignored when its mass is below the floor.
        assert_eq!(girth_scan(&tri, 1 << 30, 0.1).girth, None);
    }

    #[test]
    fn bad_pairs_vanish_when_everything_is_retained() {
        let s = sample(8, 4);
        let wc = extract_at(&s, 0.1, 1).unwrap();
        assert_eq!(bad_pair_count(&s, &wc, 0.13).unwrap().0, 0);
        let wc = extract_at(&s, 0.1, 3).unwrap();
        let small: u128 = s
            .partition(0.1)
            .unwrap()
            .sizes()
            .iter()
            .filter(|&&x| x < 3)
            .map(|&x| (x as u128).pow(2))
            .sum();
        assert_eq!(bad_pair_count(&s, &wc, 0.1).unwrap().0, small);
    }
}
