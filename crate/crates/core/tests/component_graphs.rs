use std::collections::HashSet;

use percolab_core::component_graphs::{
    all_deltas, bad_pair_count, build_pair_sprinkled, build_pair_with, connection_matrices, delta_ab,
    discrepancy_mass, extract_at, full_component_graph, metric_comparison, sprinkled_component_edges,
    ComponentGraph, ComponentGraphPair, PairInput, PairMode, SprinkleSource,
};
use percolab_core::dsu::DisjointSets;
use percolab_core::percolation::PercolationSample;
use percolab_core::stats::ks_two_sample;
use percolab_core::substrate::{TransitiveGraph, Vertex};

fn sample(m: usize, seed: u64) -> PercolationSample {
    PercolationSample::new(TransitiveGraph::hypercube(m).unwrap(), seed)
}

/// A slightly subcritical point with a handful of retained components.
fn subcritical(m: usize) -> f64 {
    0.9 / (m as f64 - 1.0)
}

#[test]
fn deltas_match_double_loop() {
    let s = sample(10, 3);
    let wc = extract_at(&s, subcritical(10), 4).unwrap();
    assert!(wc.len() > 10);
    let g = s.graph();
    let sparse = all_deltas(&s, &wc);
    let lookup: std::collections::HashMap<(u32, u32), u32> = sparse.iter().map(|&(a, b, d)| ((a, b), d)).collect();
    for a in 0..wc.len() {
        for b in (a + 1)..wc.len() {
            let mut brute = 0u64;
            for &x in wc.members(a) {
                for &y in wc.members(b) {
                    if (x ^ y).count_ones() == 1 {
                        brute += 1;
                    }
                }
            }
            assert_eq!(delta_ab(&s, &wc, a, b).unwrap(), brute);
            assert_eq!(lookup.get(&(a as u32, b as u32)).copied().unwrap_or(0) as u64, brute);
        }
    }
    assert_eq!(g.degree(), 10);
}

#[test]
fn sparse_and_exhaustive_modes_agree() {
    let s = sample(12, 5);
    let wc = extract_at(&s, subcritical(12), 6).unwrap();
    let input = PairInput::from_components(&s, &wc, 1.0);
    let mut counts_x = Vec::new();
    let mut counts_s = Vec::new();
    for seed in 0..300 {
        let ex = build_pair_with(&input, seed, PairMode::Exhaustive);
        let sp = build_pair_with(&input, seed, PairMode::Sparse);
        // Pairs with Delta > 0 share their keyed uniforms.
        assert_eq!(ex.sprinkled_edges, sp.sprinkled_edges);
        let touching: HashSet<(u32, u32)> = input.deltas.iter().map(|&(a, b, _)| (a, b)).collect();
        let on_delta = |p: &ComponentGraphPair| -> Vec<(u32, u32)> {
            p.mult_edges.iter().copied().filter(|e| touching.contains(e)).collect()
        };
        assert_eq!(on_delta(&ex), on_delta(&sp));
        counts_x.push(ex.mult_edges.len() as f64);
        counts_s.push(sp.mult_edges.len() as f64);
    }
    let r = ks_two_sample(&counts_x, &counts_s, 1000, 2).unwrap();
    assert!(r.p_value > 0.01, "{r:?}");
}

#[test]
fn coupling_orders_edges_by_threshold() {
    let s = sample(12, 8);
    let wc = extract_at(&s, subcritical(12), 5).unwrap();
    let input = PairInput::from_components(&s, &wc, 2.0);
    for seed in 0..50 {
        let pair = build_pair_with(&input, seed, PairMode::Exhaustive);
        let mult: HashSet<_> = pair.mult_edges.iter().copied().collect();
        let spr: HashSet<_> = pair.sprinkled_edges.iter().copied().collect();
        for &(a, b, d) in &input.deltas {
            let (q, p) = (input.q_ab(a as usize, b as usize), input.p_of_delta(d as u64));
            if p <= q && spr.contains(&(a, b)) {
                assert!(mult.contains(&(a, b)));
            }
            if q <= p && mult.contains(&(a, b)) {
                assert!(spr.contains(&(a, b)));
            }
        }
    }
}

#[test]
fn discrepancy_matches_pair_sum() {
    let s = sample(11, 2);
    let wc = extract_at(&s, subcritical(11), 3).unwrap();
    let input = PairInput::from_components(&s, &wc, 1.5);
    for seed in 0..5 {
        let pair = build_pair_with(&input, seed, PairMode::Auto);
        let mut brute = 0u128;
        for a in 0..pair.len() {
            for b in 0..pair.len() {
                let x = pair.mult_labels[a] == pair.mult_labels[b];
                let y = pair.sprinkled_labels[a] == pair.sprinkled_labels[b];
                if a != b && x != y {
                    brute += pair.sizes[a] as u128 * pair.sizes[b] as u128;
                }
            }
        }
        let v = s.vertex_count() as f64;
        assert!((discrepancy_mass(&pair) - brute as f64 / v.powf(4.0 / 3.0)).abs() < 1e-12);
    }
}

#[test]
fn connection_matrix_inequality_on_synthetic_input() {
    let input = PairInput {
        vertex_count: 4096,
        degree: 12,
        q: 3.0,
        sizes: vec![120, 90, 80, 60, 40, 30, 25],
        keys: vec![0, 1, 2, 3, 4, 5, 6],
        deltas: vec![(0, 1, 40), (0, 2, 12), (1, 3, 30), (2, 4, 3), (3, 5, 9), (4, 6, 2)],
    };
    let cm = connection_matrices(&input, 4000, 7).unwrap();
    let lhs = cm.t_neq.frobenius();
    let rhs = cm.xi.frobenius() * (1.0 + cm.t_sprinkled.frobenius()) * (1.0 + cm.t_mult.frobenius());
    assert!(lhs <= rhs, "{lhs} > {rhs}");
    for a in 0..7 {
        assert_eq!(cm.t_mult.get(a, a), 0.0);
        for b in 0..7 {
            assert!((cm.t_mult.get(a, b) - cm.t_mult.get(b, a)).abs() < 1e-12);
        }
    }
}

#[test]
fn sprinkled_classes_refine_host_components() {
    let s = sample(12, 4);
    let p_s = subcritical(12);
    let p_prime = 1.0 / 11.0;
    let wc = extract_at(&s, p_s, 4).unwrap();
    let edges = sprinkled_component_edges(&s, &wc, p_prime, SprinkleSource::Sample).unwrap();
    let classes = ComponentGraph::new(wc.sizes().to_vec(), &edges).component_labels();
    let host = s.partition(p_prime).unwrap();
    let mut rep = std::collections::HashMap::new();
    for (a, &class) in classes.iter().enumerate() {
        let c = host.component_of(wc.key(a));
        assert_eq!(*rep.entry(class).or_insert(c), c);
    }
    let fresh = build_pair_sprinkled(&s, &wc, 1.0, p_prime, 3, SprinkleSource::Fresh(9)).unwrap();
    assert_eq!(fresh.len(), wc.len());
}

fn host_distance(s: &PercolationSample, p: f64, u: Vertex, v: Vertex) -> Option<u32> {
    let g = s.graph();
    let mut dist = std::collections::HashMap::from([(u, 0u32)]);
    let mut q = std::collections::VecDeque::from([u]);
    while let Some(x) = q.pop_front() {
        if x == v {
            return Some(dist[&x]);
        }
        for i in 0..g.degree() {
            let y = g.neighbor(x, i);
            if s.is_open(x, i, p) && !dist.contains_key(&y) {
                dist.insert(y, dist[&x] + 1);
                q.push_back(y);
            }
        }
    }
    None
}

#[test]
fn component_distances_are_ordered() {
    let s = sample(12, 6);
    let p_s = subcritical(12);
    let p_prime = 1.05 / 11.0;
    let wc = extract_at(&s, p_s, 3).unwrap();
    let edges = sprinkled_component_edges(&s, &wc, p_prime, SprinkleSource::Sample).unwrap();
    let restricted = ComponentGraph::new(wc.sizes().to_vec(), &edges);
    let (full, full_part) = full_component_graph(&s, p_s, p_prime).unwrap();
    let host = s.partition(p_prime).unwrap();
    let c1 = host.members(0);
    let mut checked = 0;
    for (i, &u) in c1.iter().enumerate().step_by(7).take(20) {
        let v = c1[(i * 13 + 5) % c1.len()];
        let d_host = host_distance(&s, p_prime, u, v).unwrap();
        let fu = full_part.component_of(u);
        let d_full = full.distances_from(fu)[full_part.component_of(v)];
        // Every host path crosses at least d_full sprinkled edges.
        assert!(d_full <= d_host);
        if let (Some(a), Some(b)) = (wc.index_of(u), wc.index_of(v)) {
            let d_res = restricted.distances_from(a)[b];
            assert!(d_full <= d_res);
            checked += 1;
        }
    }
    assert!(checked > 0);
    let pairs = metric_comparison(&s, &wc, 5.0, p_prime, 1, 25, 4).unwrap();
    assert_eq!(pairs.len(), 25);
    assert!(pairs.iter().all(|p| p.d_cube >= 0.0 && (p.outside_vstar == p.d_comp.is_nan())));
}

#[test]
fn bad_pairs_match_brute_force() {
    let s = sample(10, 9);
    let p_s = subcritical(10);
    let wc = extract_at(&s, p_s, 4).unwrap();
    let p = 1.0 / 9.0;
    let g = s.graph();
    let keep = wc.in_vstar();
    let mut full = DisjointSets::new(g.vertex_count());
    let mut inner = DisjointSets::new(g.vertex_count());
    for v in 0..g.vertex_count() as Vertex {
        for i in 0..g.degree() {
            let w = g.neighbor(v, i);
            if s.is_open(v, i, p) {
                full.union(v, w);
                if keep[v as usize] && keep[w as usize] {
                    inner.union(v, w);
                }
            }
        }
    }
    // Ordered pairs connected in H_p but not inside V_*.
    let mut brute = 0u128;
    for x in 0..g.vertex_count() as Vertex {
        for y in 0..g.vertex_count() as Vertex {
            let connected = full.same(x, y);
            let good = keep[x as usize] && keep[y as usize] && inner.same(x, y);
            if connected && !good {
                brute += 1;
            }
        }
    }
    assert_eq!(bad_pair_count(&s, &wc, p).unwrap().0, brute);
}
