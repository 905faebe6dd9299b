//! Brute-force enumeration of the graph connection rules.

use std::collections::BTreeSet;

use coguiding::graphs::{build_i2s_graph, build_s2i_graph, HeteroGraph};

pub type EdgeSet = BTreeSet<(String, String, String)>;

fn near(i: usize, j: usize, w: usize) -> bool {
    i.abs_diff(j) <= w
}

fn edge(src: String, dst: String, rel: &str) -> (String, String, String) {
    (src, dst, rel.to_string())
}

/// Every ordered node pair is tested against the rule for its node types.
pub fn brute_s2i(n: usize, w: usize) -> EdgeSet {
    let mut out = EdgeSet::new();
    for dst in 1..=n {
        for src in 1..=n {
            if near(src, dst, w) {
                out.insert(edge(format!("I{src}"), format!("I{dst}"), "IntentSemanticDep"));
                out.insert(edge(format!("SL{src}"), format!("I{dst}"), "SlotToIntentGuidance"));
                out.insert(edge(format!("SL{src}"), format!("SL{dst}"), "SlotLabelDep"));
                out.insert(edge(format!("I{src}"), format!("SL{dst}"), "IntentToSlotLabelFeedback"));
            }
        }
    }
    out
}

pub fn brute_i2s(n: usize, m: usize, w: usize) -> EdgeSet {
    let mut out = EdgeSet::new();
    for dst in 1..=n {
        for src in 1..=n {
            if near(src, dst, w) {
                out.insert(edge(format!("S{src}"), format!("S{dst}"), "SlotSemanticDep"));
            }
        }
        for k in 1..=m {
            out.insert(edge(format!("IL{k}"), format!("S{dst}"), "IntentToSlotGuidance"));
            out.insert(edge(format!("S{dst}"), format!("IL{k}"), "SlotToIntentLabelFeedback"));
        }
    }
    for a in 1..=m {
        for b in 1..=m {
            out.insert(edge(format!("IL{a}"), format!("IL{b}"), "IntentLabelDep"));
        }
    }
    out
}

/// Edge set parsed back from the text edge list.
pub fn built(g: &HeteroGraph) -> EdgeSet {
    g.to_edge_list()
        .lines()
        .map(|line| {
            let (pair, rel) = line.split_once(' ').unwrap();
            let (src, dst) = pair.split_once('→').unwrap();
            edge(src.to_string(), dst.to_string(), rel)
        })
        .collect()
}

/// Compares both builders with the enumerator for `n <= 6`, `w <= 3`, `m <= 3`.
/// Returns the number of graphs compared.
pub fn check_all_small_graphs() -> Result<usize, String> {
    let mut compared = 0;
    for n in 1..=6 {
        for w in 0..=3 {
            let g = build_s2i_graph(n, w).map_err(|e| e.to_string())?;
            if built(&g) != brute_s2i(n, w) || g.edges().len() != brute_s2i(n, w).len() {
                return Err(format!("S2I differs at n={n} w={w}"));
            }
            compared += 1;
            for m in 1..=3 {
                let g = build_i2s_graph(n, m, w).map_err(|e| e.to_string())?;
                if built(&g) != brute_i2s(n, m, w) {
                    return Err(format!("I2S differs at n={n} m={m} w={w}"));
                }
                compared += 1;
            }
        }
    }
    Ok(compared)
}
