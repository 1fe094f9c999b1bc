//! Implicit vertex-transitive graphs and non-backtracking random walks.
//!
//! The hypercube `{0,1}^m` is never materialized: vertex ids are bit strings
//! and the `i`-th neighbor of `v` is `v ^ (1 << i)`. Other transitive graphs
//! are given as regular adjacency lists.
//!
//! Two representations of the non-backtracking walk (NBRW) kernel are
//! provided. The directed-edge dynamic program works on any graph and tracks
//! the mass on every `(previous vertex -> current vertex)` pair. On the
//! hypercube, coordinate symmetry collapses the state to the Hamming weight of
//! the displacement and whether the last flipped coordinate is currently set,
//! which keeps mixing-time computations at `O(m)` work per step.

use crate::error::{invalid, Error, Result};

pub type Vertex = u32;

/// Largest hypercube dimension accepted.
pub const MAX_HYPERCUBE_DIM: usize = 30;

/// Cap on directed-edge states for the dense dynamic program.
pub const MAX_DIRECTED_STATES: usize = 100_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GraphKind {
    Hypercube,
    AdjacencyList,
}

#[derive(Clone, Debug)]
enum Repr {
    Hypercube,
    Lists {
        /// `neighbors[v * m + i]` is the `i`-th neighbor of `v`.
        neighbors: Vec<Vertex>,
        /// `reverse[v * m + i]` is the position of `v` in the list of its `i`-th neighbor.
        reverse: Vec<u32>,
    },
}

/// A regular graph with degree `m` on `V` vertices, assumed vertex-transitive.
#[derive(Clone, Debug)]
pub struct TransitiveGraph {
    degree: usize,
    vertex_count: usize,
    repr: Repr,
}

impl TransitiveGraph {
    pub fn hypercube(m: usize) -> Result<Self> {
        if m == 0 || m > MAX_HYPERCUBE_DIM {
            return invalid(format!("hypercube dimension must be in 1..={MAX_HYPERCUBE_DIM}, got {m}"));
        }
        Ok(Self {
            degree: m,
            vertex_count: 1usize << m,
            repr: Repr::Hypercube,
        })
    }

    /// Builds a graph from adjacency lists. Every list must have the same
    /// length, contain no duplicates or self-loops, and the relation must be
    /// symmetric. Transitivity itself is not checked.
    pub fn from_adjacency(lists: &[Vec<Vertex>]) -> Result<Self> {
        let n = lists.len();
        if n == 0 {
            return invalid("graph has no vertices");
        }
        let m = lists[0].len();
        if m == 0 {
            return invalid("graph has degree 0");
        }
        if n.saturating_mul(m) > MAX_DIRECTED_STATES {
            return Err(Error::TooLarge {
                what: "directed edge count",
                limit: MAX_DIRECTED_STATES,
                hint: "use the implicit hypercube or a smaller graph",
            });
        }
        let mut neighbors = Vec::with_capacity(n * m);
        for (v, list) in lists.iter().enumerate() {
            if list.len() != m {
                return invalid(format!("vertex {v} has degree {} but vertex 0 has {m}", list.len()));
            }
            let mut sorted = list.clone();
            sorted.sort_unstable();
            sorted.dedup();
            if sorted.len() != m {
                return invalid(format!("vertex {v} has a repeated neighbor"));
            }
            for &w in list {
                if w as usize >= n {
                    return invalid(format!("vertex {v} lists out-of-range neighbor {w}"));
                }
                if w as usize == v {
                    return invalid(format!("vertex {v} has a self-loop"));
                }
            }
            neighbors.extend_from_slice(list);
        }
        let mut reverse = vec![0u32; n * m];
        for v in 0..n {
            for i in 0..m {
                let w = neighbors[v * m + i] as usize;
                match neighbors[w * m..(w + 1) * m].iter().position(|&x| x as usize == v) {
                    Some(j) => reverse[v * m + i] = j as u32,
                    None => return invalid(format!("edge {v}->{w} has no reverse edge")),
                }
            }
        }
        Ok(Self {
            degree: m,
            vertex_count: n,
            repr: Repr::Lists { neighbors, reverse },
        })
    }

    pub fn kind(&self) -> GraphKind {
        match self.repr {
            Repr::Hypercube => GraphKind::Hypercube,
            Repr::Lists { .. } => GraphKind::AdjacencyList,
        }
    }

    pub fn is_hypercube(&self) -> bool {
        matches!(self.repr, Repr::Hypercube)
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    /// Number of undirected edges, `V m / 2`.
    pub fn edge_count(&self) -> usize {
        self.vertex_count * self.degree / 2
    }

    pub fn check_vertex(&self, v: Vertex) -> Result<()> {
        if (v as usize) < self.vertex_count {
            Ok(())
        } else {
            invalid(format!("vertex {v} out of range 0..{}", self.vertex_count))
        }
    }

    /// Neighbors of `v` in deterministic order (ascending bit index on the hypercube).
    pub fn neighbors(&self, v: Vertex) -> Result<Vec<Vertex>> {
        self.check_vertex(v)?;
        Ok((0..self.degree).map(|i| self.neighbor(v, i)).collect())
    }

    #[inline]
    pub fn neighbor(&self, v: Vertex, i: usize) -> Vertex {
        match &self.repr {
            Repr::Hypercube => v ^ (1 << i),
            Repr::Lists { neighbors, .. } => neighbors[v as usize * self.degree + i],
        }
    }

    /// Position of `v` in the neighbor list of `neighbor(v, i)`.
    #[inline]
    pub fn reverse_index(&self, v: Vertex, i: usize) -> usize {
        match &self.repr {
            Repr::Hypercube => i,
            Repr::Lists { reverse, .. } => reverse[v as usize * self.degree + i] as usize,
        }
    }

    /// Canonical id of the undirected edge `{v, neighbor(v, i)}`:
    /// `min endpoint * m + index of the edge in the min endpoint's list`.
    #[inline]
    pub fn edge_id(&self, v: Vertex, i: usize) -> u64 {
        let w = self.neighbor(v, i);
        let m = self.degree as u64;
        if v < w {
            v as u64 * m + i as u64
        } else {
            w as u64 * m + self.reverse_index(v, i) as u64
        }
    }

    /// True when `v` is the canonical owner (smaller endpoint) of its `i`-th edge.
    #[inline]
    pub fn owns_edge(&self, v: Vertex, i: usize) -> bool {
        match self.repr {
            Repr::Hypercube => v & (1 << i) == 0,
            Repr::Lists { .. } => v < self.neighbor(v, i),
        }
    }

    /// Graph distance in the unpercolated graph. Hamming distance on the hypercube.
    pub fn distance(&self, u: Vertex, v: Vertex) -> Result<usize> {
        self.check_vertex(u)?;
        self.check_vertex(v)?;
        if self.is_hypercube() {
            return Ok((u ^ v).count_ones() as usize);
        }
        let mut dist = vec![usize::MAX; self.vertex_count];
        let mut queue = std::collections::VecDeque::from([u]);
        dist[u as usize] = 0;
        while let Some(x) = queue.pop_front() {
            if x == v {
                return Ok(dist[x as usize]);
            }
            for i in 0..self.degree {
                let y = self.neighbor(x, i);
                if dist[y as usize] == usize::MAX {
                    dist[y as usize] = dist[x as usize] + 1;
                    queue.push_back(y);
                }
            }
        }
        Ok(usize::MAX)
    }

    /// Diameter of the unpercolated graph (`m` for the hypercube).
    pub fn diameter(&self) -> usize {
        if self.is_hypercube() {
            return self.degree;
        }
        // Transitive: the eccentricity of vertex 0 is the diameter.
        let mut dist = vec![usize::MAX; self.vertex_count];
        let mut queue = std::collections::VecDeque::from([0]);
        dist[0] = 0;
        let mut ecc = 0;
        while let Some(x) = queue.pop_front() {
            ecc = ecc.max(dist[x as usize]);
            for i in 0..self.degree {
                let y = self.neighbor(x, i);
                if dist[y as usize] == usize::MAX {
                    dist[y as usize] = dist[x as usize] + 1;
                    queue.push_back(y);
                }
            }
        }
        ecc
    }
}

/// Binomial coefficient as a float, exact for the ranges used here.
pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut c = 1.0f64;
    for j in 0..k {
        c = c * (n - j) as f64 / (j + 1) as f64;
    }
    c.round()
}

/// Directed-edge dynamic program for the NBRW, started from an arbitrary
/// nonnegative vertex vector (which need not be normalized).
#[derive(Clone, Debug)]
pub struct DirectedEdgeWalk<'g> {
    graph: &'g TransitiveGraph,
    t: usize,
    /// Mass sitting on vertices before the first step (`t == 0` only).
    start: Vec<f64>,
    /// `mass[v * m + j]`: at `v`, arrived from `neighbor(v, j)`.
    mass: Vec<f64>,
}

impl<'g> DirectedEdgeWalk<'g> {
    pub fn from_vertex(graph: &'g TransitiveGraph, u: Vertex) -> Result<Self> {
        graph.check_vertex(u)?;
        let mut start = vec![0.0; graph.vertex_count()];
        start[u as usize] = 1.0;
        Self::from_distribution(graph, start)
    }

    pub fn from_distribution(graph: &'g TransitiveGraph, start: Vec<f64>) -> Result<Self> {
        if start.len() != graph.vertex_count() {
            return invalid("start vector length differs from the vertex count");
        }
        if graph.vertex_count().saturating_mul(graph.degree()) > MAX_DIRECTED_STATES {
            return Err(Error::TooLarge {
                what: "directed edge count",
                limit: MAX_DIRECTED_STATES,
                hint: "use the symmetry-reduced hypercube kernel",
            });
        }
        Ok(Self {
            graph,
            t: 0,
            start,
            mass: Vec::new(),
        })
    }

    pub fn time(&self) -> usize {
        self.t
    }

    pub fn edge_mass(&self) -> &[f64] {
        &self.mass
    }

    /// Advances one step. From `t = 1` on, the walk never reverses its last edge.
    pub fn step(&mut self) -> Result<()> {
        let g = self.graph;
        let m = g.degree();
        let n = g.vertex_count();
        if self.t == 0 {
            let mut mass = vec![0.0; n * m];
            let share = 1.0 / m as f64;
            for u in 0..n as Vertex {
                let r = self.start[u as usize];
                if r == 0.0 {
                    continue;
                }
                for i in 0..m {
                    let w = g.neighbor(u, i);
                    mass[w as usize * m + g.reverse_index(u, i)] += r * share;
                }
            }
            self.mass = mass;
            self.t = 1;
            return Ok(());
        }
        if m < 2 {
            return Err(Error::UnsupportedGraph(
                "a non-backtracking walk on a degree-1 graph cannot take a second step".into(),
            ));
        }
        let share = 1.0 / (m - 1) as f64;
        let mut next = vec![0.0; n * m];
        for v in 0..n as Vertex {
            let base = v as usize * m;
            let total: f64 = self.mass[base..base + m].iter().sum();
            if total == 0.0 {
                continue;
            }
            for i in 0..m {
                // Mass that may leave through edge i: everything not arrived along i.
                let out = (total - self.mass[base + i]) * share;
                if out == 0.0 {
                    continue;
                }
                let w = g.neighbor(v, i);
                next[w as usize * m + g.reverse_index(v, i)] += out;
            }
        }
        self.mass = next;
        self.t += 1;
        Ok(())
    }

    /// Forgets the arrival edge, so that the next step is uniform over all `m`
    /// neighbors. This realizes the walk that may backtrack at one chosen time.
    /// The clock restarts at zero.
    pub fn allow_backtrack_once(&mut self) {
        if self.t == 0 {
            return;
        }
        self.start = self.vertex_marginal();
        self.mass.clear();
        self.t = 0;
    }

    pub fn vertex_marginal(&self) -> Vec<f64> {
        if self.t == 0 {
            return self.start.clone();
        }
        let m = self.graph.degree();
        self.mass.chunks_exact(m).map(|c| c.iter().sum()).collect()
    }
}

/// Symmetry-reduced NBRW on the hypercube started at any vertex.
///
/// State `(k, set)`: the walk is at Hamming distance `k` from its start and
/// the coordinate flipped last is (`set = true`) or is not part of the
/// displacement.
#[derive(Clone, Debug)]
pub struct HypercubeWalk {
    m: usize,
    t: usize,
    /// `in_support[k]` and `off_support[k]` for `k = 0..=m`.
    in_support: Vec<f64>,
    off_support: Vec<f64>,
}

impl HypercubeWalk {
    pub fn new(m: usize) -> Result<Self> {
        if m == 0 || m > 62 {
            return invalid(format!("hypercube dimension {m} out of range"));
        }
        let mut off = vec![0.0; m + 1];
        off[0] = 1.0;
        Ok(Self {
            m,
            t: 0,
            in_support: vec![0.0; m + 1],
            off_support: off,
        })
    }

    pub fn time(&self) -> usize {
        self.t
    }

    pub fn step(&mut self) -> Result<()> {
        let m = self.m;
        if self.t == 0 {
            self.in_support.iter_mut().for_each(|x| *x = 0.0);
            self.off_support.iter_mut().for_each(|x| *x = 0.0);
            self.in_support[1] = 1.0;
            self.t = 1;
            return Ok(());
        }
        if m < 2 {
            return Err(Error::UnsupportedGraph(
                "a non-backtracking walk on a degree-1 graph cannot take a second step".into(),
            ));
        }
        let share = 1.0 / (m - 1) as f64;
        let mut inn = vec![0.0; m + 1];
        let mut off = vec![0.0; m + 1];
        for k in 0..=m {
            let a = self.in_support[k];
            if a != 0.0 {
                // Last flip is one of the k set coordinates: k - 1 others can be unset.
                if k >= 1 {
                    off[k - 1] += a * (k - 1) as f64 * share;
                }
                if k < m {
                    inn[k + 1] += a * (m - k) as f64 * share;
                }
            }
            let b = self.off_support[k];
            if b != 0.0 {
                // Last flip is one of the m - k unset coordinates and is excluded.
                if k >= 1 {
                    off[k - 1] += b * k as f64 * share;
                }
                if k + 1 < m + 1 && m > k {
                    inn[k + 1] += b * (m - k - 1) as f64 * share;
                }
            }
        }
        self.in_support = inn;
        self.off_support = off;
        self.t += 1;
        Ok(())
    }

    /// `P(|X_t - X_0| = k)` for `k = 0..=m`.
    pub fn weight_distribution(&self) -> Vec<f64> {
        self.in_support
            .iter()
            .zip(&self.off_support)
            .map(|(a, b)| a + b)
            .collect()
    }

    /// `p^t(x, z)` for any `z` at Hamming distance `k` from `x`.
    pub fn vertex_prob(&self, k: usize) -> f64 {
        (self.in_support[k] + self.off_support[k]) / binomial(self.m, k)
    }

    /// Mass on one directed edge `(z ^ e_c) -> z` where `|z - x| = k` and
    /// coordinate `c` is (`set`) or is not part of the displacement.
    pub fn edge_prob(&self, k: usize, set: bool) -> f64 {
        let (mass, choices) = if set {
            (self.in_support[k], k)
        } else {
            (self.off_support[k], self.m - k)
        };
        if mass == 0.0 || choices == 0 {
            0.0
        } else {
            mass / (binomial(self.m, k) * choices as f64)
        }
    }
}

/// A slice `z -> p^t(u, z)` of the NBRW kernel.
#[derive(Clone, Debug)]
pub enum NbrwKernel {
    /// Hypercube: probabilities depend only on the Hamming distance to `u`.
    Reduced {
        m: usize,
        u: Vertex,
        t: usize,
        by_weight: Vec<f64>,
    },
    /// Dense vertex vector from the directed-edge program.
    Full { u: Vertex, t: usize, probs: Vec<f64> },
}

impl NbrwKernel {
    pub fn time(&self) -> usize {
        match self {
            NbrwKernel::Reduced { t, .. } | NbrwKernel::Full { t, .. } => *t,
        }
    }

    pub fn prob(&self, z: Vertex) -> f64 {
        match self {
            NbrwKernel::Reduced { m, u, by_weight, .. } => {
                let k = (u ^ z).count_ones() as usize;
                by_weight[k] / binomial(*m, k)
            }
            NbrwKernel::Full { probs, .. } => probs[z as usize],
        }
    }

    pub fn to_dense(&self) -> Vec<f64> {
        match self {
            NbrwKernel::Reduced { m, .. } => (0..1u64 << m).map(|z| self.prob(z as Vertex)).collect(),
            NbrwKernel::Full { probs, .. } => probs.clone(),
        }
    }

    /// Nonzero entries in ascending vertex order.
    pub fn support(&self) -> Vec<(Vertex, f64)> {
        self.to_dense()
            .into_iter()
            .enumerate()
            .filter(|(_, p)| *p != 0.0)
            .map(|(z, p)| (z as Vertex, p))
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum KernelRepr {
    /// Reduced on the hypercube, directed-edge elsewhere.
    #[default]
    Auto,
    Reduced,
    DirectedEdge,
}

/// `p^t(u, .)`, the law of the NBRW after `t` steps from `u`.
pub fn nbrw_distribution(g: &TransitiveGraph, u: Vertex, t: usize) -> Result<NbrwKernel> {
    nbrw_distribution_with(g, u, t, KernelRepr::Auto)
}

pub fn nbrw_distribution_with(
    g: &TransitiveGraph,
    u: Vertex,
    t: usize,
    repr: KernelRepr,
) -> Result<NbrwKernel> {
    g.check_vertex(u)?;
    if g.degree() < 2 && t >= 2 {
        return Err(Error::UnsupportedGraph(
            "a non-backtracking walk on a degree-1 graph cannot take a second step".into(),
        ));
    }
    let reduced = match repr {
        KernelRepr::Auto => g.is_hypercube(),
        KernelRepr::Reduced => {
            if !g.is_hypercube() {
                return Err(Error::UnsupportedGraph(
                    "the reduced kernel exists only for the hypercube".into(),
                ));
            }
            true
        }
        KernelRepr::DirectedEdge => false,
    };
    if reduced {
        let mut walk = HypercubeWalk::new(g.degree())?;
        for _ in 0..t {
            walk.step()?;
        }
        Ok(NbrwKernel::Reduced {
            m: g.degree(),
            u,
            t,
            by_weight: walk.weight_distribution(),
        })
    } else {
        let mut walk = DirectedEdgeWalk::from_vertex(g, u)?;
        for _ in 0..t {
            walk.step()?;
        }
        Ok(NbrwKernel::Full {
            u,
            t,
            probs: walk.vertex_marginal(),
        })
    }
}

/// `sum_z p^{t1}(u, z) p^{t2}(z, .)`: the law of a walk that may traverse back
/// an edge at time `t1`.
pub fn nbrw_with_backtrack_at(g: &TransitiveGraph, u: Vertex, t1: usize, t2: usize) -> Result<Vec<f64>> {
    let mut walk = DirectedEdgeWalk::from_vertex(g, u)?;
    for _ in 0..t1 {
        walk.step()?;
    }
    walk.allow_backtrack_once();
    for _ in 0..t2 {
        walk.step()?;
    }
    Ok(walk.vertex_marginal())
}

/// One row of the mixing profile.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MixingRow {
    pub t: usize,
    /// `V * max_y (p^t(x,y) + p^{t+1}(x,y)) / 2`.
    pub ratio: f64,
    /// `ratio - (1 + xi)`; nonpositive once mixed.
    pub max_violation: f64,
    pub mixed: bool,
}

/// Averaged two-step uniform closeness for `t = 0..=t_max`, computed from a
/// single start vertex (transitivity).
pub fn mixing_profile(g: &TransitiveGraph, xi: f64, t_max: usize, repr: KernelRepr) -> Result<Vec<MixingRow>> {
    if !(xi > 0.0) {
        return invalid(format!("xi must be positive, got {xi}"));
    }
    if t_max < 1 {
        return invalid("t_max must be at least 1");
    }
    if g.degree() < 2 {
        return Err(Error::UnsupportedGraph(
            "the mixing criterion needs p^2, which does not exist on a degree-1 graph".into(),
        ));
    }
    let v = g.vertex_count() as f64;
    let bound = 1.0 + xi;
    let use_reduced = match repr {
        KernelRepr::Auto => g.is_hypercube(),
        KernelRepr::Reduced => {
            if !g.is_hypercube() {
                return Err(Error::UnsupportedGraph(
                    "the reduced kernel exists only for the hypercube".into(),
                ));
            }
            true
        }
        KernelRepr::DirectedEdge => false,
    };
    let mut rows = Vec::with_capacity(t_max + 1);
    let mut push = |t: usize, cur: &[f64], next: &[f64]| {
        let worst = cur
            .iter()
            .zip(next)
            .map(|(a, b)| 0.5 * (a + b))
            .fold(0.0f64, f64::max);
        let ratio = worst * v;
        rows.push(MixingRow {
            t,
            ratio,
            max_violation: ratio - bound,
            mixed: ratio <= bound,
        });
    };
    if use_reduced {
        let m = g.degree();
        let per_vertex = |w: &HypercubeWalk| (0..=m).map(|k| w.vertex_prob(k)).collect::<Vec<_>>();
        let mut walk = HypercubeWalk::new(m)?;
        let mut cur = per_vertex(&walk);
        for t in 0..=t_max {
            walk.step()?;
            let next = per_vertex(&walk);
            push(t, &cur, &next);
            cur = next;
        }
    } else {
        let mut walk = DirectedEdgeWalk::from_vertex(g, 0)?;
        let mut cur = walk.vertex_marginal();
        for t in 0..=t_max {
            walk.step()?;
            let next = walk.vertex_marginal();
            push(t, &cur, &next);
            cur = next;
        }
    }
    Ok(rows)
}

/// The `xi`-uniform mixing time: the least `t <= t_max` with
/// `max_y (p^t(x,y) + p^{t+1}(x,y)) / 2 <= (1 + xi) / V`, or `t_max + 1` if
/// there is none.
///
/// Degree-1 graphs are excluded from the criterion (the walk has no second
/// step); for them the function returns the fixed value 1.
pub fn mixing_time(g: &TransitiveGraph, xi: f64, t_max: usize) -> Result<usize> {
    mixing_time_with(g, xi, t_max, KernelRepr::Auto)
}

pub fn mixing_time_with(g: &TransitiveGraph, xi: f64, t_max: usize, repr: KernelRepr) -> Result<usize> {
    if !(xi > 0.0) {
        return invalid(format!("xi must be positive, got {xi}"));
    }
    if t_max < 1 {
        return invalid("t_max must be at least 1");
    }
    if g.degree() == 1 {
        return Ok(1);
    }
    let rows = mixing_profile(g, xi, t_max, repr)?;
    Ok(rows.iter().find(|r| r.mixed).map_or(t_max + 1, |r| r.t))
}

/// Default `alpha_m = log(m) / m` for the hypercube.
pub fn default_alpha(m: usize) -> f64 {
    (m as f64).ln() / m as f64
}

/// `sum_{t=0}^{m0} r P^t` for a vertex vector `r`.
fn green_sum(g: &TransitiveGraph, r: Vec<f64>, m0: usize) -> Result<Vec<f64>> {
    let mut acc = r.clone();
    let mut walk = DirectedEdgeWalk::from_distribution(g, r)?;
    for _ in 0..m0 {
        walk.step()?;
        for (a, b) in acc.iter_mut().zip(walk.vertex_marginal()) {
            *a += b;
        }
    }
    Ok(acc)
}

fn apply_steps(g: &TransitiveGraph, r: Vec<f64>, t: usize) -> Result<Vec<f64>> {
    let mut walk = DirectedEdgeWalk::from_distribution(g, r)?;
    for _ in 0..t {
        walk.step()?;
    }
    Ok(walk.vertex_marginal())
}

/// The random-walk triangle diagram
/// `sum_{u,v} sum_{t1,t2,t3 <= m0, t1+t2+t3 >= 3} p^{t1}(x,u) p^{t2}(u,v) p^{t3}(v,y)`.
///
/// Computed as the full triple Green sum by three kernel applications, minus
/// the handful of terms with `t1 + t2 + t3 <= 2`.
pub fn triangle_diagram_rw(g: &TransitiveGraph, x: Vertex, y: Vertex, m0: usize) -> Result<f64> {
    if m0 < 1 {
        return invalid("m0 must be at least 1");
    }
    g.check_vertex(x)?;
    g.check_vertex(y)?;
    if g.degree() < 2 && m0 >= 2 {
        return Err(Error::UnsupportedGraph("degree-1 graph".into()));
    }
    let mut e_x = vec![0.0; g.vertex_count()];
    e_x[x as usize] = 1.0;
    let s1 = green_sum(g, e_x.clone(), m0)?;
    let s2 = green_sum(g, s1, m0)?;
    let s3 = green_sum(g, s2, m0)?;
    let mut total = s3[y as usize];
    let top = m0.min(2);
    for t1 in 0..=top {
        for t2 in 0..=top {
            for t3 in 0..=top {
                if t1 + t2 + t3 > 2 {
                    continue;
                }
                let r = apply_steps(g, e_x.clone(), t1)?;
                let r = apply_steps(g, r, t2)?;
                let r = apply_steps(g, r, t3)?;
                total -= r[y as usize];
            }
        }
    }
    // Cancellation can leave a tiny negative residue when the true value is 0.
    Ok(if total.abs() < 1e-14 { 0.0 } else { total })
}
