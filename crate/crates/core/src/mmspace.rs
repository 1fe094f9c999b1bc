//! Finite metric measure spaces and the distances between them.
//!
//! Prokhorov distances inside a common space and GHP distances between tiny
//! spaces are computed exactly. Both reduce to a Hall-type deficit on a
//! bipartite "within epsilon" graph, which is either enumerated over subsets or
//! read off a max-flow.

use std::collections::VecDeque;
use std::fmt::Write as _;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use serde::Serialize;

use crate::component_graphs::ComponentGraph;
use crate::error::{invalid, Error, Result};
use crate::percolation::PercolationSample;
use crate::rng::stream;
use crate::substrate::Vertex;

/// Vertex-level spaces larger than this keep an implicit graph metric.
pub const DENSE_LIMIT: usize = 5000;

/// Largest `|X| + |Y|` accepted by `ghp_bruteforce`.
pub const GHP_LIMIT: usize = 10;

/// Largest support handled by subset enumeration.
pub const SUBSET_LIMIT: usize = 20;

const TRIANGLE_TOL: f64 = 1e-9;

#[derive(Clone, Debug)]
enum Metric {
    Dense(Vec<f64>),
    /// Local adjacency with a uniform edge length.
    Graph { adjacency: Vec<Vec<u32>>, scale: f64 },
}

/// A finite metric measure space `(X, d, mu)`.
#[derive(Clone, Debug)]
pub struct FiniteMMSpace {
    k: usize,
    metric: Metric,
    masses: Vec<f64>,
}

impl FiniteMMSpace {
    /// Validates symmetry, zero diagonal, the triangle inequality and masses.
    pub fn from_matrix(k: usize, distances: Vec<f64>, masses: Vec<f64>) -> Result<Self> {
        if distances.len() != k * k || masses.len() != k {
            return invalid(format!("expected a {k}x{k} matrix and {k} masses"));
        }
        if masses.iter().any(|&m| !m.is_finite() || m < 0.0) {
            return invalid("masses must be finite and nonnegative");
        }
        for i in 0..k {
            if distances[i * k + i] != 0.0 {
                return invalid(format!("d({i},{i}) is not 0"));
            }
            for j in 0..k {
                let d = distances[i * k + j];
                if !d.is_finite() || d < 0.0 {
                    return invalid(format!("d({i},{j}) must be finite and nonnegative"));
                }
                if d != distances[j * k + i] {
                    return invalid(format!("d({i},{j}) != d({j},{i})"));
                }
            }
        }
        for i in 0..k {
            for j in 0..k {
                for l in 0..k {
                    if distances[i * k + l] > distances[i * k + j] + distances[j * k + l] + TRIANGLE_TOL {
                        return invalid(format!("triangle inequality fails at ({i},{j},{l})"));
                    }
                }
            }
        }
        Ok(Self {
            k,
            metric: Metric::Dense(distances),
            masses,
        })
    }

    pub fn empty() -> Self {
        Self {
            k: 0,
            metric: Metric::Dense(Vec::new()),
            masses: Vec::new(),
        }
    }

    pub fn point(mass: f64) -> Result<Self> {
        Self::from_matrix(1, vec![0.0], vec![mass])
    }

    /// Graph metric scaled by `scale`; dense when small, implicit otherwise.
    /// The graph must be connected.
    pub fn from_graph(adjacency: Vec<Vec<u32>>, scale: f64, masses: Vec<f64>) -> Result<Self> {
        let k = adjacency.len();
        if masses.len() != k {
            return invalid("one mass per vertex");
        }
        if k == 0 {
            return invalid("empty component");
        }
        if !(scale.is_finite() && scale >= 0.0) {
            return invalid("distance scale must be finite and nonnegative");
        }
        let hops = bfs(&adjacency, 0);
        if hops.contains(&u32::MAX) {
            return invalid("graph is not connected");
        }
        if k > DENSE_LIMIT {
            return Ok(Self {
                k,
                metric: Metric::Graph { adjacency, scale },
                masses,
            });
        }
        let mut d = vec![0.0; k * k];
        for s in 0..k {
            for (t, h) in bfs(&adjacency, s).into_iter().enumerate() {
                d[s * k + t] = h as f64 * scale;
            }
        }
        Ok(Self {
            k,
            metric: Metric::Dense(d),
            masses,
        })
    }

    pub fn len(&self) -> usize {
        self.k
    }

    pub fn is_empty(&self) -> bool {
        self.k == 0
    }

    pub fn is_dense(&self) -> bool {
        matches!(self.metric, Metric::Dense(_))
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn total_mass(&self) -> f64 {
        self.masses.iter().sum()
    }

    /// Only available for dense spaces.
    pub fn distance(&self, i: usize, j: usize) -> f64 {
        match &self.metric {
            Metric::Dense(d) => d[i * self.k + j],
            Metric::Graph { .. } => panic!("distance() on an implicit space; use distances_from"),
        }
    }

    /// Row of distances from point `s`.
    pub fn distances_from(&self, s: usize) -> Vec<f64> {
        match &self.metric {
            Metric::Dense(d) => d[s * self.k..(s + 1) * self.k].to_vec(),
            Metric::Graph { adjacency, scale } => bfs(adjacency, s).into_iter().map(|h| h as f64 * scale).collect(),
        }
    }

    fn dense(&self, what: &str) -> Result<&[f64]> {
        match &self.metric {
            Metric::Dense(d) => Ok(d),
            Metric::Graph { .. } => invalid(format!("{what} needs a dense distance matrix")),
        }
    }

    /// Exact diameter; implicit spaces cost one BFS per point.
    pub fn diameter(&self) -> f64 {
        match &self.metric {
            Metric::Dense(d) => d.iter().cloned().fold(0.0, f64::max),
            Metric::Graph { .. } => (0..self.k)
                .map(|s| self.distances_from(s).into_iter().fold(0.0, f64::max))
                .fold(0.0, f64::max),
        }
    }

    /// Same points with new masses.
    pub fn with_masses(&self, masses: Vec<f64>) -> Result<Self> {
        if masses.len() != self.k || masses.iter().any(|&m| !(m.is_finite() && m >= 0.0)) {
            return invalid("masses must match the point count and be nonnegative");
        }
        Ok(Self {
            k: self.k,
            metric: self.metric.clone(),
            masses,
        })
    }
}

fn bfs(adjacency: &[Vec<u32>], s: usize) -> Vec<u32> {
    let mut dist = vec![u32::MAX; adjacency.len()];
    dist[s] = 0;
    let mut queue = VecDeque::from([s]);
    while let Some(x) = queue.pop_front() {
        for &y in &adjacency[x] {
            if dist[y as usize] == u32::MAX {
                dist[y as usize] = dist[x] + 1;
                queue.push_back(y as usize);
            }
        }
    }
    dist
}

/// An ordered list of spaces, as in the `L4` topology.
#[derive(Clone, Debug, Default)]
pub struct MMSequence {
    pub spaces: Vec<FiniteMMSpace>,
}

impl MMSequence {
    pub fn new(spaces: Vec<FiniteMMSpace>) -> Self {
        Self { spaces }
    }

    pub fn len(&self) -> usize {
        self.spaces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spaces.is_empty()
    }

    pub fn masses(&self) -> Vec<f64> {
        self.spaces.iter().map(|s| s.total_mass()).collect()
    }

    pub fn diameters(&self) -> Vec<f64> {
        self.spaces.iter().map(|s| s.diameter()).collect()
    }

    /// `((sum mass^4)^{1/4}, (sum diam^4)^{1/4})`.
    pub fn l4_summary(&self) -> (f64, f64) {
        let l4 = |xs: Vec<f64>| xs.iter().map(|x| x.powi(4)).sum::<f64>().powf(0.25);
        (l4(self.masses()), l4(self.diameters()))
    }
}

/// Hausdorff distance between two nonempty point sets of one space.
pub fn hausdorff(space: &FiniteMMSpace, a: &[usize], b: &[usize]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return invalid("Hausdorff distance needs nonempty sets");
    }
    if a.iter().chain(b).any(|&i| i >= space.len()) {
        return invalid("point index out of range");
    }
    let d = space.dense("hausdorff")?;
    let k = space.len();
    let directed = |from: &[usize], to: &[usize]| {
        from.iter()
            .map(|&x| to.iter().map(|&y| d[x * k + y]).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max)
    };
    Ok(directed(a, b).max(directed(b, a)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum DeficitMethod {
    /// Subsets up to 15 support points, max-flow above.
    #[default]
    Auto,
    /// Enumerate every subset; rejected above `SUBSET_LIMIT` points.
    Subsets,
    Flow,
}

/// `max_S (left(S) - right(N(S)))` over subsets `S` of the left side, where
/// `adj[i]` lists the right neighbors of left point `i`. Never negative.
pub fn hall_deficit(left: &[f64], right: &[f64], adj: &[Vec<usize>], method: DeficitMethod) -> Result<f64> {
    let use_subsets = match method {
        DeficitMethod::Auto => left.len() <= 15 && right.len() <= 64,
        DeficitMethod::Subsets => {
            if left.len() > SUBSET_LIMIT || right.len() > 64 {
                return Err(Error::TooLarge {
                    what: "support size for subset enumeration",
                    limit: SUBSET_LIMIT,
                    hint: "use the flow method",
                });
            }
            true
        }
        DeficitMethod::Flow => false,
    };
    Ok(if use_subsets {
        deficit_subsets(left, right, adj)
    } else {
        deficit_flow(left, right, adj)
    })
}

fn deficit_subsets(left: &[f64], right: &[f64], adj: &[Vec<usize>]) -> f64 {
    let n = left.len();
    let masks: Vec<u64> = adj.iter().map(|l| l.iter().fold(0u64, |m, &j| m | (1 << j))).collect();
    let mass_of = |mut m: u64| {
        let mut s = 0.0;
        while m != 0 {
            s += right[m.trailing_zeros() as usize];
            m &= m - 1;
        }
        s
    };
    let mut best = 0.0f64;
    let total = 1usize << n;
    let mut nb = vec![0u64; total];
    let mut lm = vec![0.0; total];
    for s in 1..total {
        let low = s.trailing_zeros() as usize;
        let rest = s & (s - 1);
        nb[s] = nb[rest] | masks[low];
        lm[s] = lm[rest] + left[low];
        best = best.max(lm[s] - mass_of(nb[s]));
    }
    // Rounding residue from equal sums is not a deficit.
    if best <= 1e-12 * left.iter().sum::<f64>() {
        0.0
    } else {
        best
    }
}

/// Dinic max-flow on source -> left -> right -> sink with unbounded middle arcs.
fn deficit_flow(left: &[f64], right: &[f64], adj: &[Vec<usize>]) -> f64 {
    let (nl, nr) = (left.len(), right.len());
    let (src, sink) = (nl + nr, nl + nr + 1);
    let mut g = FlowGraph::new(nl + nr + 2);
    for (i, &m) in left.iter().enumerate() {
        g.add(src, i, m);
        for &j in &adj[i] {
            g.add(i, nl + j, f64::INFINITY);
        }
    }
    for (j, &m) in right.iter().enumerate() {
        g.add(nl + j, sink, m);
    }
    let flow = g.max_flow(src, sink);
    let total: f64 = left.iter().sum();
    let deficit = total - flow;
    if deficit <= 1e-12 * total {
        0.0
    } else {
        deficit
    }
}

struct FlowGraph {
    head: Vec<Vec<usize>>,
    to: Vec<usize>,
    cap: Vec<f64>,
}

const FLOW_EPS: f64 = 1e-14;

impl FlowGraph {
    fn new(n: usize) -> Self {
        Self {
            head: vec![Vec::new(); n],
            to: Vec::new(),
            cap: Vec::new(),
        }
    }

    fn add(&mut self, a: usize, b: usize, c: f64) {
        self.head[a].push(self.to.len());
        self.to.push(b);
        self.cap.push(c);
        self.head[b].push(self.to.len());
        self.to.push(a);
        self.cap.push(0.0);
    }

    fn max_flow(&mut self, s: usize, t: usize) -> f64 {
        let n = self.head.len();
        let mut total = 0.0;
        loop {
            let mut level = vec![usize::MAX; n];
            level[s] = 0;
            let mut q = VecDeque::from([s]);
            while let Some(x) = q.pop_front() {
                for &e in &self.head[x] {
                    if self.cap[e] > FLOW_EPS && level[self.to[e]] == usize::MAX {
                        level[self.to[e]] = level[x] + 1;
                        q.push_back(self.to[e]);
                    }
                }
            }
            if level[t] == usize::MAX {
                return total;
            }
            let mut it = vec![0usize; n];
            loop {
                let f = self.push(s, t, f64::INFINITY, &level, &mut it);
                if f <= FLOW_EPS {
                    break;
                }
                total += f;
            }
        }
    }

    fn push(&mut self, x: usize, t: usize, limit: f64, level: &[usize], it: &mut [usize]) -> f64 {
        if x == t {
            return limit;
        }
        while it[x] < self.head[x].len() {
            let e = self.head[x][it[x]];
            let y = self.to[e];
            if self.cap[e] > FLOW_EPS && level[y] == level[x] + 1 {
                let f = self.push(y, t, limit.min(self.cap[e]), level, it);
                if f > FLOW_EPS {
                    self.cap[e] -= f;
                    self.cap[e ^ 1] += f;
                    return f;
                }
            }
            it[x] += 1;
        }
        0.0
    }
}

/// Smallest `e` with `max(deficit(e)) <= e`, where `deficit(e)` is a
/// nonincreasing step function of the bipartite graph `{d <= e}`. Breakpoints
/// are the distinct cross distances, so the infimum is attained at one of them
/// or at a deficit value.
fn threshold_search(cross: &[f64], nl: usize, nr: usize, deficit: impl Fn(&dyn Fn(usize, usize) -> bool) -> Result<f64>) -> Result<f64> {
    let mut levels: Vec<f64> = cross.to_vec();
    levels.push(0.0);
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    let mut best = f64::INFINITY;
    for &t in &levels {
        if t >= best {
            break;
        }
        let within = |i: usize, j: usize| cross[i * nr + j] <= t;
        let f = deficit(&within)?;
        best = best.min(t.max(f));
    }
    debug_assert!(nl == 0 || nr == 0 || best.is_finite());
    Ok(best)
}

/// Exact Prokhorov distance between `mu` and `nu`, two measures on the points
/// of `space` (closed neighborhoods).
pub fn prokhorov(space: &FiniteMMSpace, mu: &[f64], nu: &[f64], method: DeficitMethod) -> Result<f64> {
    let k = space.len();
    if mu.len() != k || nu.len() != k {
        return invalid("one mass per point for both measures");
    }
    if mu.iter().chain(nu).any(|&m| !(m.is_finite() && m >= 0.0)) {
        return invalid("masses must be finite and nonnegative");
    }
    let d = space.dense("prokhorov")?;
    let sa: Vec<usize> = (0..k).filter(|&i| mu[i] > 0.0).collect();
    let sb: Vec<usize> = (0..k).filter(|&i| nu[i] > 0.0).collect();
    let (ma, mb): (f64, f64) = (mu.iter().sum(), nu.iter().sum());
    if sa.is_empty() || sb.is_empty() {
        return Ok(ma.max(mb));
    }
    let left: Vec<f64> = sa.iter().map(|&i| mu[i]).collect();
    let right: Vec<f64> = sb.iter().map(|&j| nu[j]).collect();
    let cross: Vec<f64> = sa.iter().flat_map(|&i| sb.iter().map(move |&j| d[i * k + j])).collect();
    let (nl, nr) = (sa.len(), sb.len());
    threshold_search(&cross, nl, nr, |within| {
        let fwd: Vec<Vec<usize>> = (0..nl).map(|i| (0..nr).filter(|&j| within(i, j)).collect()).collect();
        let bwd: Vec<Vec<usize>> = (0..nr).map(|j| (0..nl).filter(|&i| within(i, j)).collect()).collect();
        Ok(hall_deficit(&left, &right, &fwd, method)?.max(hall_deficit(&right, &left, &bwd, method)?))
    })
}

/// Prokhorov distance from the definition: for each candidate radius `r`,
/// the worst slack `mu(A) - nu(A^r)` over every subset `A` of the space, then
/// the smallest `max(r, slack)`. Exponential; for cross-checking only.
pub fn prokhorov_definition(space: &FiniteMMSpace, mu: &[f64], nu: &[f64]) -> Result<f64> {
    let k = space.len();
    if k > SUBSET_LIMIT {
        return Err(Error::TooLarge {
            what: "points for the definitional Prokhorov loop",
            limit: SUBSET_LIMIT,
            hint: "use prokhorov()",
        });
    }
    let d = space.dense("prokhorov")?;
    let mut radii: Vec<f64> = d.to_vec();
    radii.push(0.0);
    radii.sort_by(f64::total_cmp);
    radii.dedup();
    let m = |w: &[f64], s: u32| (0..k).filter(|&i| s & (1 << i) != 0).map(|i| w[i]).sum::<f64>();
    let mut best = f64::INFINITY;
    for &r in &radii {
        let mut slack = 0.0f64;
        for a in 1u32..(1 << k) {
            let mut ea = 0u32;
            for j in 0..k {
                if (0..k).any(|i| a & (1 << i) != 0 && d[i * k + j] <= r) {
                    ea |= 1 << j;
                }
            }
            slack = slack.max(m(mu, a) - m(nu, ea)).max(m(nu, a) - m(mu, ea));
        }
        best = best.min(r.max(slack));
    }
    Ok(best)
}

/// `n x n` matrix of distances between `n` i.i.d. points drawn from
/// `mu / mu(X)`, row-major.
pub fn gp_distance_matrix(space: &FiniteMMSpace, n_points: usize, seed: u64) -> Result<Vec<f64>> {
    if space.is_empty() || space.total_mass() <= 0.0 {
        return invalid("GP sampling needs positive total mass");
    }
    let dist = WeightedIndex::new(space.masses()).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let mut rng = stream(seed);
    let pts: Vec<usize> = (0..n_points).map(|_| dist.sample(&mut rng)).collect();
    let mut out = vec![0.0; n_points * n_points];
    for (a, &x) in pts.iter().enumerate() {
        let row = space.distances_from(x);
        for (b, &y) in pts.iter().enumerate() {
            out[a * n_points + b] = row[y];
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GhpResult {
    pub distance: f64,
    /// Half the distortion of the optimal correspondence.
    pub hausdorff_part: f64,
    /// Hall deficit of the optimal correspondence.
    pub prokhorov_part: f64,
}

/// Exact GHP distance between two tiny spaces.
///
/// For a correspondence `R`, gluing along `R` with bridge length
/// `r >= dis(R)/2` is a metric in which every related pair is within `r`;
/// conversely any gluing with Hausdorff and Prokhorov distance at most `e`
/// yields such a correspondence `{d <= e}`. Hence
/// `d_GHP = min_R max(dis(R)/2, deficit(R))`, and only correspondences that
/// are maximal for their distortion level need checking: these are the
/// maximal cliques of the compatibility graph on `X x Y`.
pub fn ghp_bruteforce(x: &FiniteMMSpace, y: &FiniteMMSpace) -> Result<GhpResult> {
    if x.is_empty() || y.is_empty() {
        return invalid("ghp_bruteforce needs nonempty spaces");
    }
    if x.len() + y.len() > GHP_LIMIT {
        return Err(Error::TooLarge {
            what: "|X| + |Y| for exact GHP",
            limit: GHP_LIMIT,
            hint: "compare sampled distance matrices instead",
        });
    }
    let dx = x.dense("ghp")?;
    let dy = y.dense("ghp")?;
    if identical(x, y) {
        return Ok(GhpResult {
            distance: 0.0,
            hausdorff_part: 0.0,
            prokhorov_part: 0.0,
        });
    }
    let (nx, ny) = (x.len(), y.len());
    let np = nx * ny;
    // Pair p = (i, j) with i = p / ny, j = p % ny.
    let mut gap = vec![0.0; np * np];
    let mut levels = vec![0.0];
    for p in 0..np {
        for q in 0..np {
            let (i, j, a, b) = (p / ny, p % ny, q / ny, q % ny);
            let g = (dx[i * nx + a] - dy[j * ny + b]).abs() / 2.0;
            gap[p * np + q] = g;
            if p < q {
                levels.push(g);
            }
        }
    }
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    let mut best = GhpResult {
        distance: f64::INFINITY,
        hausdorff_part: f64::INFINITY,
        prokhorov_part: f64::INFINITY,
    };
    for &t in &levels {
        if t >= best.distance {
            break;
        }
        let nbr: Vec<u32> = (0..np)
            .map(|p| (0..np).filter(|&q| q != p && gap[p * np + q] <= t).fold(0u32, |m, q| m | (1 << q)))
            .collect();
        let mut cliques = Vec::new();
        bron_kerbosch(0, (1u32 << np) - 1, 0, &nbr, &mut cliques);
        for r in cliques {
            let mut fwd = vec![Vec::new(); nx];
            let mut bwd = vec![Vec::new(); ny];
            for p in 0..np {
                if r & (1 << p) != 0 {
                    fwd[p / ny].push(p % ny);
                    bwd[p % ny].push(p / ny);
                }
            }
            if fwd.iter().any(Vec::is_empty) || bwd.iter().any(Vec::is_empty) {
                continue;
            }
            let dis = (0..np)
                .filter(|&p| r & (1 << p) != 0)
                .flat_map(|p| (0..np).filter(move |&q| r & (1 << q) != 0).map(move |q| (p, q)))
                .map(|(p, q)| gap[p * np + q])
                .fold(0.0, f64::max);
            let h = deficit_subsets(x.masses(), y.masses(), &fwd).max(deficit_subsets(y.masses(), x.masses(), &bwd));
            let v = dis.max(h);
            if v < best.distance {
                best = GhpResult {
                    distance: v,
                    hausdorff_part: dis,
                    prokhorov_part: h,
                };
            }
        }
    }
    Ok(best)
}

fn bron_kerbosch(r: u32, mut p: u32, mut x: u32, nbr: &[u32], out: &mut Vec<u32>) {
    if p == 0 {
        if x == 0 {
            out.push(r);
        }
        return;
    }
    let pivot = (p | x).trailing_zeros() as usize;
    let mut cand = p & !nbr[pivot];
    while cand != 0 {
        let v = cand.trailing_zeros() as usize;
        cand &= cand - 1;
        bron_kerbosch(r | (1 << v), p & nbr[v], x & nbr[v], nbr, out);
        p &= !(1 << v);
        x |= 1 << v;
    }
}

/// How one index of an `L4` distance was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum TermKind {
    /// Same matrix and masses.
    Identical,
    Exact,
    /// `diam + mass` of the nonempty side, against an empty counterpart.
    EmptyProxy,
    /// `diam(A) + mass(A) + diam(B) + mass(B)`, for pairs too large to solve.
    TriangleProxy,
}

#[derive(Clone, Debug, Serialize)]
pub struct L4Distance {
    pub value: f64,
    pub terms: Vec<(f64, TermKind)>,
    /// True iff every term is exact.
    pub exact: bool,
}

fn identical(a: &FiniteMMSpace, b: &FiniteMMSpace) -> bool {
    match (&a.metric, &b.metric) {
        (Metric::Dense(x), Metric::Dense(y)) => a.k == b.k && x == y && a.masses == b.masses,
        _ => false,
    }
}

/// `(sum_i d_GHP(A_i, B_i)^4)^{1/4}` with the shorter sequence padded by empty
/// spaces. Terms that cannot be solved exactly use declared upper bounds.
pub fn l4_sequence_distance(a: &MMSequence, b: &MMSequence) -> Result<L4Distance> {
    let n = a.len().max(b.len());
    let empty = FiniteMMSpace::empty();
    let mut terms = Vec::with_capacity(n);
    for i in 0..n {
        let x = a.spaces.get(i).unwrap_or(&empty);
        let y = b.spaces.get(i).unwrap_or(&empty);
        let term = if identical(x, y) {
            (0.0, TermKind::Identical)
        } else if x.is_empty() || y.is_empty() {
            let s = if x.is_empty() { y } else { x };
            (s.diameter() + s.total_mass(), TermKind::EmptyProxy)
        } else if x.len() + y.len() <= GHP_LIMIT && x.is_dense() && y.is_dense() {
            (ghp_bruteforce(x, y)?.distance, TermKind::Exact)
        } else {
            (
                x.diameter() + x.total_mass() + y.diameter() + y.total_mass(),
                TermKind::TriangleProxy,
            )
        };
        terms.push(term);
    }
    let value = terms.iter().map(|(t, _)| t.powi(4)).sum::<f64>().powf(0.25);
    let exact = terms
        .iter()
        .all(|(_, k)| matches!(k, TermKind::Identical | TermKind::Exact));
    Ok(L4Distance { value, terms, exact })
}

/// The rank-`r` component (0-based) of `H_p` as a space: graph distance times
/// `distance_scale`, each vertex of mass `mass_scale`.
pub fn from_component(
    sample: &PercolationSample,
    p: f64,
    r: usize,
    distance_scale: f64,
    mass_scale: f64,
) -> Result<FiniteMMSpace> {
    let part = sample.partition(p)?;
    if r >= part.component_count() {
        return invalid(format!("component rank {r} does not exist"));
    }
    let members = part.members(r);
    let g = sample.graph();
    let local = |v: Vertex| members.binary_search(&v).ok();
    let adjacency: Vec<Vec<u32>> = members
        .iter()
        .map(|&v| {
            (0..g.degree())
                .filter(|&i| sample.is_open(v, i, p))
                .filter_map(|i| local(g.neighbor(v, i)).map(|j| j as u32))
                .collect()
        })
        .collect();
    FiniteMMSpace::from_graph(adjacency, distance_scale, vec![mass_scale; members.len()])
}

/// A connected class of a component graph as a space: hop distance times
/// `distance_scale`, node `A` of mass `|A| * mass_scale`. `class` is the rank
/// by total mass (0-based, ties by smallest node).
pub fn from_component_graph(
    graph: &ComponentGraph,
    class: usize,
    distance_scale: f64,
    mass_scale: f64,
) -> Result<FiniteMMSpace> {
    let labels = graph.component_labels();
    let n_classes = labels.iter().map(|&l| l as usize + 1).max().unwrap_or(0);
    let mut mass = vec![0u64; n_classes];
    for (a, &l) in labels.iter().enumerate() {
        mass[l as usize] += graph.sizes[a];
    }
    let mut order: Vec<usize> = (0..n_classes).collect();
    order.sort_by(|&a, &b| mass[b].cmp(&mass[a]).then(a.cmp(&b)));
    let Some(&label) = order.get(class) else {
        return invalid(format!("class {class} does not exist"));
    };
    let nodes: Vec<usize> = (0..labels.len()).filter(|&a| labels[a] as usize == label).collect();
    let adjacency = nodes
        .iter()
        .map(|&a| {
            graph.adjacency[a]
                .iter()
                .map(|&b| nodes.binary_search(&(b as usize)).expect("same class") as u32)
                .collect()
        })
        .collect();
    let masses = nodes.iter().map(|&a| graph.sizes[a] as f64 * mass_scale).collect();
    FiniteMMSpace::from_graph(adjacency, distance_scale, masses)
}

/// Parses the text format: point count, then one mass per line, then the
/// lower triangle of the distance matrix (diagonal optional).
pub fn parse_space(text: &str) -> Result<FiniteMMSpace> {
    let mut tokens = text.split_whitespace();
    let k: usize = tokens
        .next()
        .ok_or_else(|| Error::InvalidInput("empty space file".into()))?
        .parse()
        .map_err(|e| Error::InvalidInput(format!("bad point count: {e}")))?;
    let nums: Vec<f64> = tokens
        .map(|t| t.parse::<f64>().map_err(|e| Error::InvalidInput(format!("bad number {t:?}: {e}"))))
        .collect::<Result<_>>()?;
    if nums.len() < k {
        return invalid("fewer masses than points");
    }
    let (masses, rest) = nums.split_at(k);
    let strict = k * k.saturating_sub(1) / 2;
    let with_diag = strict + k;
    let diag = match rest.len() {
        n if n == strict => false,
        n if n == with_diag => true,
        n => return invalid(format!("expected {strict} or {with_diag} distances, found {n}")),
    };
    let mut d = vec![0.0; k * k];
    let mut it = rest.iter();
    for i in 0..k {
        for j in 0..i {
            let v = *it.next().expect("counted");
            d[i * k + j] = v;
            d[j * k + i] = v;
        }
        if diag && *it.next().expect("counted") != 0.0 {
            return invalid(format!("diagonal entry {i} is not 0"));
        }
    }
    FiniteMMSpace::from_matrix(k, d, masses.to_vec())
}

pub fn format_space(space: &FiniteMMSpace) -> Result<String> {
    let d = space.dense("format_space")?;
    let k = space.len();
    let mut s = format!("{k}\n");
    for m in space.masses() {
        let _ = writeln!(s, "{m}");
    }
    for i in 0..k {
        let row: Vec<String> = (0..i).map(|j| d[i * k + j].to_string()).collect();
        let _ = writeln!(s, "{}", row.join(" "));
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path3() -> FiniteMMSpace {
        FiniteMMSpace::from_matrix(3, vec![0., 1., 2., 1., 0., 1., 2., 1., 0.], vec![1.0; 3]).unwrap()
    }

    #[test]
    fn validation() {
        assert!(FiniteMMSpace::from_matrix(2, vec![0., 1., 2., 0.], vec![1., 1.]).is_err());
        assert!(FiniteMMSpace::from_matrix(3, vec![0., 1., 5., 1., 0., 1., 5., 1., 0.], vec![1.; 3]).is_err());
        assert!(FiniteMMSpace::from_matrix(1, vec![0.], vec![-1.]).is_err());
    }

    #[test]
    fn hausdorff_examples() {
        let s = path3();
        assert_eq!(hausdorff(&s, &[0, 2], &[0, 2]).unwrap(), 0.0);
        assert_eq!(hausdorff(&s, &[0], &[2]).unwrap(), 2.0);
        assert!(hausdorff(&s, &[], &[1]).is_err());
    }

    #[test]
    fn prokhorov_point_masses() {
        let s = FiniteMMSpace::from_matrix(2, vec![0., 0.3, 0.3, 0.], vec![1., 1.]).unwrap();
        let d = prokhorov(&s, &[1., 0.], &[0., 1.], DeficitMethod::Auto).unwrap();
        assert!((d - 0.3).abs() < 1e-15);
        let far = FiniteMMSpace::from_matrix(2, vec![0., 4., 4., 0.], vec![1., 1.]).unwrap();
        assert_eq!(prokhorov(&far, &[1., 0.], &[0., 1.], DeficitMethod::Auto).unwrap(), 1.0);
        assert_eq!(prokhorov(&far, &[1., 2.], &[1., 2.], DeficitMethod::Auto).unwrap(), 0.0);
    }

    #[test]
    fn ghp_examples() {
        let s = path3();
        assert_eq!(ghp_bruteforce(&s, &s).unwrap().distance, 0.0);
        let a = FiniteMMSpace::point(1.0).unwrap();
        let b = FiniteMMSpace::point(2.0).unwrap();
        assert_eq!(ghp_bruteforce(&a, &b).unwrap().distance, 1.0);
        let mut last = f64::INFINITY;
        for e in [0.5, 0.25, 0.1, 0.01, 0.0] {
            let y = FiniteMMSpace::from_matrix(2, vec![0., 2. * e, 2. * e, 0.], vec![0.5, 0.5]).unwrap();
            let d = ghp_bruteforce(&a, &y).unwrap().distance;
            assert!(d <= last);
            last = d;
        }
        assert_eq!(last, 0.0);
    }

    #[test]
    fn l4_examples() {
        let seq = MMSequence::new(vec![path3(), FiniteMMSpace::point(0.5).unwrap()]);
        assert_eq!(l4_sequence_distance(&seq, &seq).unwrap().value, 0.0);
        let one = MMSequence::new(vec![FiniteMMSpace::point(1.0).unwrap()]);
        let r = l4_sequence_distance(&one, &MMSequence::default()).unwrap();
        assert_eq!(r.value, 1.0);
        assert!(!r.exact);
    }

    #[test]
    fn gp_matrix_examples() {
        let p = FiniteMMSpace::point(3.0).unwrap();
        assert!(gp_distance_matrix(&p, 4, 1).unwrap().iter().all(|&x| x == 0.0));
        let zero = FiniteMMSpace::point(0.0).unwrap();
        assert!(gp_distance_matrix(&zero, 4, 1).is_err());
    }

    #[test]
    fn space_file_round_trip() {
        let s = path3();
        let t = parse_space(&format_space(&s).unwrap()).unwrap();
        assert_eq!(t.masses(), s.masses());
        assert_eq!(t.distance(0, 2), 2.0);
        let with_diag = parse_space("2\n1\n1\n0\n3 0\n").unwrap();
        assert_eq!(with_diag.distance(1, 0), 3.0);
    }
}
