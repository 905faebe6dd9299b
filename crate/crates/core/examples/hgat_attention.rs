//! One heterogeneous graph attention layer and its per-relation weights.

use coguiding::autodiff::Tape;
use coguiding::graphs::{build_s2i_graph, GraphKind};
use coguiding::hgat::{hgat_layer, init_hgat, HgatConfig};
use coguiding::layers::ParamBuilder;
use coguiding::tensor::Tensor;

fn main() -> coguiding::Result<()> {
    let (n, dim) = (3, 4);
    let graph = build_s2i_graph(n, 1)?;
    let cfg = HgatConfig { heads: 2, ..Default::default() };
    let mut builder = ParamBuilder::seeded(0);
    init_hgat(&mut builder, "g", GraphKind::SlotToIntent, dim, 1, &cfg);
    let params = builder.finish();

    let rows = 2 * n;
    let x = Tensor::matrix(rows, dim, (0..rows * dim).map(|i| ((i * 7 % 11) as f64 - 5.0) / 5.0).collect());
    let mut tape = Tape::new(&params);
    let x = tape.constant(x);
    let out = hgat_layer(&mut tape, &graph, x, "g.layer0", &cfg)?;

    for att in out.attention.iter().filter(|a| a.head == 0) {
        println!("{}", att.relation.map_or("shared", |r| r.name()));
        let w = tape.value(att.weights);
        for i in 0..rows {
            let row: Vec<String> = w.row(i).iter().map(|v| format!("{v:.3}")).collect();
            println!("  {:<4} {}", graph.node_label(i), row.join(" "));
        }
    }
    println!("output {:?}", tape.value(out.output).shape());
    Ok(())
}
