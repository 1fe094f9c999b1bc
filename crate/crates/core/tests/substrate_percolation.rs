use percolab_core::dsu::DisjointSets;
use percolab_core::percolation::{
    component_diameter, diameters, BfsScratch, origin_cluster_sizes, percolate, DiameterOptions, PercolationSample,
};
use percolab_core::substrate::{
    nbrw_distribution, nbrw_distribution_with, triangle_diagram_rw, KernelRepr, TransitiveGraph, Vertex,
};

/// Counts non-backtracking paths of length `t` from `u`, by endpoint.
fn nb_path_counts(g: &TransitiveGraph, u: Vertex, t: usize) -> Vec<f64> {
    fn go(g: &TransitiveGraph, v: Vertex, prev: Option<Vertex>, left: usize, out: &mut [f64]) {
        if left == 0 {
            out[v as usize] += 1.0;
            return;
        }
        for i in 0..g.degree() {
            let w = g.neighbor(v, i);
            if Some(w) != prev {
                go(g, w, Some(v), left - 1, out);
            }
        }
    }
    let mut out = vec![0.0; g.vertex_count()];
    go(g, u, None, t, &mut out);
    out
}

fn nb_law(g: &TransitiveGraph, u: Vertex, t: usize) -> Vec<f64> {
    let m = g.degree() as f64;
    let total = if t == 0 { 1.0 } else { m * (m - 1.0).powi(t as i32 - 1) };
    nb_path_counts(g, u, t).into_iter().map(|c| c / total).collect()
}

#[test]
fn nbrw_law_matches_path_enumeration() {
    for m in 2..=4 {
        let g = TransitiveGraph::hypercube(m).unwrap();
        for t in 0..=4 {
            for u in [0, (1 << m) - 1] {
                let brute = nb_law(&g, u, t);
                for repr in [KernelRepr::Reduced, KernelRepr::DirectedEdge] {
                    let k = nbrw_distribution_with(&g, u, t, repr).unwrap();
                    for (z, &b) in brute.iter().enumerate() {
                        assert!((k.prob(z as Vertex) - b).abs() < 1e-12, "m={m} t={t} z={z} {repr:?}");
                    }
                }
            }
        }
    }
}

#[test]
fn nbrw_on_hypercube_is_vertex_transitive() {
    let g = TransitiveGraph::hypercube(5).unwrap();
    let base = nbrw_distribution(&g, 0, 4).unwrap().to_dense();
    for u in [3, 17, 31] {
        let k = nbrw_distribution(&g, u, 4).unwrap();
        for z in 0..32u32 {
            assert!((k.prob(z) - base[(z ^ u) as usize]).abs() < 1e-12);
        }
    }
}

#[test]
fn triangle_diagram_matches_direct_sum() {
    let g = TransitiveGraph::hypercube(4).unwrap();
    let m0 = 4;
    let n = g.vertex_count();
    let kernels: Vec<Vec<Vec<f64>>> = (0..=m0)
        .map(|t| (0..n as Vertex).map(|u| nb_law(&g, u, t)).collect())
        .collect();
    for (x, y) in [(0, 0), (0, 5), (3, 12)] {
        let mut brute = 0.0;
        for t1 in 0..=m0 {
            for t2 in 0..=m0 {
                for t3 in 0..=m0 {
                    if t1 + t2 + t3 < 3 {
                        continue;
                    }
                    for u in 0..n {
                        for v in 0..n {
                            brute += kernels[t1][x][u] * kernels[t2][u][v] * kernels[t3][v][y as usize];
                        }
                    }
                }
            }
        }
        let fast = triangle_diagram_rw(&g, x as Vertex, y, m0).unwrap();
        assert!((fast - brute).abs() < 1e-10 * brute.max(1.0), "{x},{y}: {fast} vs {brute}");
    }
}

/// Exact functionals of bond percolation on Q_3 (12 edges) by enumerating all
/// 4096 configurations.
struct Q3Exact {
    mean_origin: f64,
    mean_largest: f64,
    p_origin_ge4: f64,
}

fn q3_exact(p: f64) -> Q3Exact {
    let g = TransitiveGraph::hypercube(3).unwrap();
    let mut edges = Vec::new();
    for v in 0..8 {
        for i in 0..3 {
            if g.owns_edge(v, i) {
                edges.push((v, g.neighbor(v, i)));
            }
        }
    }
    assert_eq!(edges.len(), 12);
    let mut out = Q3Exact {
        mean_origin: 0.0,
        mean_largest: 0.0,
        p_origin_ge4: 0.0,
    };
    for cfg in 0u32..(1 << 12) {
        let k = cfg.count_ones() as i32;
        let w = p.powi(k) * (1.0 - p).powi(12 - k);
        let mut dsu = DisjointSets::new(8);
        for (e, &(a, b)) in edges.iter().enumerate() {
            if cfg & (1 << e) != 0 {
                dsu.union(a, b);
            }
        }
        let origin = dsu.set_size(0) as f64;
        let largest = (0..8).map(|v| dsu.set_size(v)).max().unwrap() as f64;
        out.mean_origin += w * origin;
        out.mean_largest += w * largest;
        if origin >= 4.0 {
            out.p_origin_ge4 += w;
        }
    }
    out
}

#[test]
fn q3_sampler_matches_exhaustive_enumeration() {
    let p = 0.5;
    let exact = q3_exact(p);
    let g = TransitiveGraph::hypercube(3).unwrap();
    let n = 100_000;
    let mut origin = Vec::with_capacity(n);
    let mut largest = Vec::with_capacity(n);
    for s in 0..n as u64 {
        let sample = PercolationSample::new(g.clone(), s);
        let part = sample.partition(p).unwrap();
        origin.push(part.size(part.component_of(0)) as f64);
        largest.push(part.size(0) as f64);
    }
    let check = |xs: &[f64], target: f64, what: &str| {
        let e = percolab_core::stats::Estimate::from_samples(xs);
        assert!((e.mean - target).abs() < 3.0 * e.se, "{what}: {} +- {} vs {target}", e.mean, e.se);
    };
    check(&origin, exact.mean_origin, "E|C(0)|");
    check(&largest, exact.mean_largest, "E|C_1|");
    let ge4: Vec<f64> = origin.iter().map(|&s| (s >= 4.0) as u8 as f64).collect();
    check(&ge4, exact.p_origin_ge4, "P(|C(0)| >= 4)");

    let cluster: Vec<f64> = origin_cluster_sizes(&g, p, n, 9).unwrap().into_iter().map(|s| s as f64).collect();
    check(&cluster, exact.mean_origin, "cluster sampler E|C(0)|");
}

#[test]
fn partitions_match_brute_force_union_find() {
    let g = TransitiveGraph::hypercube(7).unwrap();
    for seed in 0..5 {
        let sample = PercolationSample::new(g.clone(), seed);
        for p in [0.05, 0.17, 0.4] {
            let mut dsu = DisjointSets::new(g.vertex_count());
            for v in 0..g.vertex_count() as Vertex {
                for i in 0..g.degree() {
                    if sample.uniform(v, i) <= p {
                        dsu.union(v, g.neighbor(v, i));
                    }
                }
            }
            let part = sample.partition(p).unwrap();
            assert_eq!(part.component_count(), dsu.set_count());
            for v in 0..g.vertex_count() as Vertex {
                assert_eq!(part.size(part.component_of(v)), dsu.set_size(v) as usize);
            }
            let stats = percolate(&sample, p).unwrap();
            assert_eq!(stats.sizes.iter().sum::<u64>(), g.vertex_count() as u64);
        }
    }
}

#[test]
fn percolation_is_monotone_in_p() {
    let g = TransitiveGraph::hypercube(8).unwrap();
    let sample = PercolationSample::new(g, 11);
    let lo = sample.partition(0.1).unwrap();
    let hi = sample.partition(0.15).unwrap();
    for v in 0..256 {
        for w in lo.members(lo.component_of(v)) {
            assert_eq!(hi.component_of(v), hi.component_of(*w));
        }
    }
}

#[test]
fn exact_diameters_match_all_pairs_bfs() {
    let g = TransitiveGraph::hypercube(8).unwrap();
    let sample = PercolationSample::new(g.clone(), 4);
    let p = 0.2;
    let opts = DiameterOptions {
        exact_cap: usize::MAX,
        ..DiameterOptions::default()
    };
    let stats = diameters(&sample, p, opts).unwrap();
    let part = sample.partition(p).unwrap();
    let ds = stats.diameters.as_ref().unwrap();
    for r in 0..part.component_count().min(5) {
        let members = part.members(r);
        let mut brute = 0;
        for &s in members {
            let mut dist = std::collections::HashMap::from([(s, 0u32)]);
            let mut q = std::collections::VecDeque::from([s]);
            while let Some(x) = q.pop_front() {
                for i in 0..g.degree() {
                    let y = g.neighbor(x, i);
                    if sample.is_open(x, i, p) && !dist.contains_key(&y) {
                        dist.insert(y, dist[&x] + 1);
                        q.push_back(y);
                    }
                }
            }
            brute = brute.max(*dist.values().max().unwrap());
        }
        assert!(ds[r].exact);
        assert_eq!(ds[r].value, brute, "component {r}");
        // Sweeps give a lower bound that is usually tight.
        let swept = component_diameter(&sample, &part, p, r, DiameterOptions::default(), &mut BfsScratch::new(256));
        assert!(swept.value <= brute);
    }
}
