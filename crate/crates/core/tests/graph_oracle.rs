//! Graph builders against a brute-force enumeration of the connection rules.

mod support;

use coguiding::graphs::{build_i2s_graph, build_s2i_graph, RelationType};
use proptest::prelude::*;
use support::graph_ref::{brute_i2s, brute_s2i, built, check_all_small_graphs};

#[test]
fn exhaustive_small_graphs_match_enumerator() {
    assert_eq!(check_all_small_graphs(), Ok(6 * 4 * 4));
}

#[test]
fn figure_neighbourhoods() {
    let s2i = built(&build_s2i_graph(5, 1).unwrap());
    let into_i3: Vec<_> = s2i.iter().filter(|(_, d, _)| d == "I3").map(|(s, _, _)| s.as_str()).collect();
    assert_eq!(into_i3, ["I2", "I3", "I4", "SL2", "SL3", "SL4"]);
    let i2s = built(&build_i2s_graph(5, 2, 1).unwrap());
    let into_s3: Vec<_> = i2s.iter().filter(|(_, d, _)| d == "S3").map(|(s, _, _)| s.as_str()).collect();
    assert_eq!(into_s3, ["IL1", "IL2", "S2", "S3", "S4"]);
}

#[test]
fn edge_list_is_sorted_by_destination() {
    let g = build_i2s_graph(4, 2, 1).unwrap();
    let keys: Vec<_> = g.edges().iter().map(|e| (e.dst, e.rel, e.src)).collect();
    let mut sorted = keys.clone();
    sorted.sort();
    assert_eq!(keys, sorted);
}

#[test]
fn zero_tokens_rejected() {
    assert!(build_s2i_graph(0, 1).is_err());
    assert!(build_i2s_graph(0, 1, 1).is_err());
    assert!(build_i2s_graph(2, 0, 1).is_err());
}

proptest! {
    #[test]
    fn larger_graphs_match_enumerator(n in 7usize..14, m in 1usize..6, w in 0usize..6) {
        prop_assert_eq!(built(&build_s2i_graph(n, w).unwrap()), brute_s2i(n, w));
        prop_assert_eq!(built(&build_i2s_graph(n, m, w).unwrap()), brute_i2s(n, m, w));
    }

    #[test]
    fn relation_endpoints_match_signatures(n in 1usize..12, m in 1usize..5, w in 0usize..5) {
        for g in [build_s2i_graph(n, w).unwrap(), build_i2s_graph(n, m, w).unwrap()] {
            let types = g.node_types();
            for e in g.edges() {
                prop_assert_eq!((types[e.src], types[e.dst]), e.rel.signature());
                prop_assert!(RelationType::of(g.kind()).contains(&e.rel));
            }
            for node in 0..g.node_count() {
                let incoming: usize = g.relations().iter().map(|&r| g.in_neighbors(node, r).count()).sum();
                prop_assert!(incoming > 0);
            }
        }
    }

    #[test]
    fn window_only_grows_edge_sets(n in 1usize..10, w in 0usize..4) {
        let small = built(&build_s2i_graph(n, w).unwrap());
        let large = built(&build_s2i_graph(n, w + 1).unwrap());
        prop_assert!(small.is_subset(&large));
    }
}
