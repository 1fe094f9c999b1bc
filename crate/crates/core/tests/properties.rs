use percolab_core::component_graphs::{discrepancy_mass, ComponentGraphPair};
use percolab_core::mmspace::{ghp_bruteforce, hausdorff, prokhorov, DeficitMethod, FiniteMMSpace};
use percolab_core::multiplicative::{sample_direct, WeightVector};
use percolab_core::percolation::PercolationSample;
use percolab_core::substrate::{nbrw_distribution, TransitiveGraph};
use proptest::prelude::*;

/// Points on a line give a valid metric for any coordinates.
fn line_space(coords: &[f64], masses: &[f64]) -> FiniteMMSpace {
    let k = coords.len();
    let d = (0..k * k).map(|i| (coords[i / k] - coords[i % k]).abs()).collect();
    FiniteMMSpace::from_matrix(k, d, masses.to_vec()).unwrap()
}

fn line(k: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = FiniteMMSpace> {
    k.prop_flat_map(|k| (prop::collection::vec(0.0..3.0f64, k), prop::collection::vec(0.0..1.0f64, k)))
        .prop_map(|(c, m)| line_space(&c, &m))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn partition_sizes_cover_the_cube(m in 2usize..9, seed in any::<u64>(), p in 0.0..1.0f64) {
        let s = PercolationSample::new(TransitiveGraph::hypercube(m).unwrap(), seed);
        let part = s.partition(p).unwrap();
        prop_assert_eq!(part.sizes().iter().map(|&x| x as usize).sum::<usize>(), 1 << m);
        prop_assert!(part.sizes().windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn coupling_is_monotone(m in 3usize..9, seed in any::<u64>(), p in 0.0..0.6f64, dp in 0.0..0.4f64) {
        let s = PercolationSample::new(TransitiveGraph::hypercube(m).unwrap(), seed);
        let lo = s.partition(p).unwrap();
        let hi = s.partition(p + dp).unwrap();
        prop_assert!(hi.component_count() <= lo.component_count());
        for v in 0..(1u32 << m) {
            let w = lo.members(lo.component_of(v))[0];
            prop_assert_eq!(hi.component_of(v), hi.component_of(w));
        }
    }

    #[test]
    fn nbrw_law_is_a_probability(m in 2usize..12, t in 0usize..20) {
        let g = TransitiveGraph::hypercube(m).unwrap();
        let total: f64 = nbrw_distribution(&g, 0, t).unwrap().to_dense().iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn multiplicative_partition_conserves_weight(ws in prop::collection::vec(0.01..2.0f64, 1..60), q in 0.0..3.0f64, seed in any::<u64>()) {
        let total: f64 = ws.iter().sum();
        let wv = WeightVector::new(ws, q).unwrap();
        let part = sample_direct(&wv, seed);
        let got: f64 = part.weights().iter().sum();
        prop_assert!((got - total).abs() < 1e-9 * total);
    }

    #[test]
    fn identical_graphs_have_no_discrepancy(sizes in prop::collection::vec(1u64..50, 2..12), seed in any::<u64>()) {
        let n = sizes.len() as u32;
        let edges: Vec<(u32, u32)> = (0..n).flat_map(|a| ((a + 1)..n).map(move |b| (a, b)))
            .filter(|&(a, b)| (seed >> ((a * 7 + b) % 64)) & 1 == 1)
            .collect();
        let pair = ComponentGraphPair::from_edges(4096, sizes, edges.clone(), edges);
        prop_assert_eq!(discrepancy_mass(&pair), 0.0);
    }

    #[test]
    fn hausdorff_is_symmetric(space in line(2..=8), a in any::<u8>(), b in any::<u8>()) {
        let k = space.len();
        let pick = |bits: u8| -> Vec<usize> {
            let v: Vec<usize> = (0..k).filter(|&i| bits >> i & 1 == 1).collect();
            if v.is_empty() { vec![0] } else { v }
        };
        let (sa, sb) = (pick(a), pick(b));
        prop_assert_eq!(hausdorff(&space, &sa, &sb).unwrap(), hausdorff(&space, &sb, &sa).unwrap());
    }

    #[test]
    fn prokhorov_methods_agree(space in line(1..=9), nu in prop::collection::vec(0.0..1.0f64, 9)) {
        let nu = &nu[..space.len()];
        let a = prokhorov(&space, space.masses(), nu, DeficitMethod::Subsets).unwrap();
        let b = prokhorov(&space, space.masses(), nu, DeficitMethod::Flow).unwrap();
        prop_assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn ghp_is_symmetric(x in line(1..=4), y in line(1..=4)) {
        let d1 = ghp_bruteforce(&x, &y).unwrap().distance;
        let d2 = ghp_bruteforce(&y, &x).unwrap().distance;
        prop_assert!((d1 - d2).abs() < 1e-12);
        prop_assert_eq!(ghp_bruteforce(&x, &x).unwrap().distance, 0.0);
    }
}
