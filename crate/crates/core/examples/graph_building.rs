//! Prints the slot-to-intent and intent-to-slot graphs of one utterance.
//!
//! ```text
//! cargo run --example graph_building -- [n] [m] [window]
//! ```

use coguiding::graphs::{build_i2s_graph, build_s2i_graph};

fn main() -> coguiding::Result<()> {
    let arg = |i: usize, default: usize| std::env::args().nth(i).and_then(|s| s.parse().ok()).unwrap_or(default);
    let (n, m, w) = (arg(1, 4), arg(2, 2), arg(3, 1));

    let s2i = build_s2i_graph(n, w)?;
    println!("S2I: {} nodes, {} edges", s2i.node_count(), s2i.edges().len());
    print!("{}", s2i.to_edge_list());

    let i2s = build_i2s_graph(n, m, w)?;
    println!("I2S: {} nodes, {} edges", i2s.node_count(), i2s.edges().len());
    for &rel in i2s.relations() {
        let count = i2s.edges().iter().filter(|e| e.rel == rel).count();
        println!("  {rel:<28} {count}");
    }
    Ok(())
}
