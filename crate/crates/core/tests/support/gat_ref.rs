//! Random typed graphs and a loop-based homogeneous multi-head GAT.

use std::collections::BTreeSet;

use coguiding::autodiff::Tape;
use coguiding::graphs::{Edge, GraphKind, HeteroGraph, NodeType, RelationType};
use coguiding::hgat::{hgat_layer, init_hgat, HgatConfig};
use coguiding::layers::{Activation, ParamBuilder, LEAKY_SLOPE};
use coguiding::tensor::{ModelParams, Tensor};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random typed graph: shuffled node order, a self edge on every node and
/// random extra edges of every relation.
pub fn random_graph(rng: &mut ChaCha8Rng) -> HeteroGraph {
    let kind = if rng.gen_bool(0.5) { GraphKind::SlotToIntent } else { GraphKind::IntentToSlot };
    let (a, b) = match kind {
        GraphKind::SlotToIntent => (NodeType::IntentSemantic, NodeType::SlotLabel),
        GraphKind::IntentToSlot => (NodeType::SlotSemantic, NodeType::IntentLabel),
    };
    let mut types = vec![a; rng.gen_range(1..=5)];
    types.extend(vec![b; rng.gen_range(1..=4)]);
    types.shuffle(rng);
    let mut edges = BTreeSet::new();
    for (i, &t) in types.iter().enumerate() {
        let own = RelationType::of(kind).iter().find(|r| r.signature() == (t, t)).unwrap();
        edges.insert(Edge { src: i, dst: i, rel: *own });
    }
    for _ in 0..rng.gen_range(0..3 * types.len()) {
        let (src, dst) = (rng.gen_range(0..types.len()), rng.gen_range(0..types.len()));
        if let Some(rel) = RelationType::of(kind)
            .iter()
            .find(|r| r.signature() == (types[src], types[dst]))
        {
            edges.insert(Edge { src, dst, rel: *rel });
        }
    }
    HeteroGraph::new(kind, types, edges.into_iter().collect()).unwrap()
}

/// Relabels node `i` as `perm[i]`.
pub fn permuted(g: &HeteroGraph, perm: &[usize]) -> HeteroGraph {
    let mut types = g.node_types().to_vec();
    for (old, &new) in perm.iter().enumerate() {
        types[new] = g.node_types()[old];
    }
    let edges = g
        .edges()
        .iter()
        .map(|e| Edge { src: perm[e.src], dst: perm[e.dst], rel: e.rel })
        .collect();
    HeteroGraph::new(g.kind(), types, edges).unwrap()
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect())
}

pub fn params(kind: GraphKind, dim: usize, cfg: &HgatConfig, seed: u64) -> ModelParams {
    let mut b = ParamBuilder::seeded(seed);
    init_hgat(&mut b, "g", kind, dim, 1, cfg);
    b.finish()
}

pub fn run_layer(p: &ModelParams, g: &HeteroGraph, x: &Tensor, cfg: &HgatConfig) -> Tensor {
    let mut tape = Tape::new(p);
    let x = tape.constant(x.clone());
    let out = hgat_layer(&mut tape, g, x, "g.layer0", cfg).unwrap();
    tape.value(out.output).clone()
}

fn matvec(w: &Tensor, x: &[f64]) -> Vec<f64> {
    (0..w.rows()).map(|r| w.row(r).iter().zip(x).map(|(a, b)| a * b).sum()).collect()
}

fn activate(act: Activation, v: f64) -> f64 {
    match act {
        Activation::LeakyRelu => {
            if v > 0.0 {
                v
            } else {
                LEAKY_SLOPE * v
            }
        }
        Activation::Relu => v.max(0.0),
        Activation::Tanh => v.tanh(),
    }
}

/// Textbook multi-head dot-product GAT over the union of all edges.
pub fn reference_gat(
    g: &HeteroGraph,
    x: &Tensor,
    p: &ModelParams,
    heads: usize,
    act: Activation,
) -> Vec<Vec<f64>> {
    let n = g.node_count();
    let scale = (x.cols() as f64).sqrt();
    let mut out = vec![Vec::new(); n];
    for k in 0..heads {
        let w = |name: &str| p.get(&format!("g.layer0.shared.head{k}.{name}")).unwrap();
        let (wv, wq, wk) = (w("w_value"), w("w_query"), w("w_key"));
        for (i, row) in out.iter_mut().enumerate() {
            let sources: BTreeSet<usize> =
                g.edges().iter().filter(|e| e.dst == i).map(|e| e.src).collect();
            let q = matvec(wq, x.row(i));
            let scores: Vec<f64> = sources
                .iter()
                .map(|&j| matvec(wk, x.row(j)).iter().zip(&q).map(|(a, b)| a * b).sum::<f64>() / scale)
                .collect();
            let top = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = scores.iter().map(|s| (s - top).exp()).sum();
            let mut acc = vec![0.0; wv.rows()];
            for (&j, s) in sources.iter().zip(&scores) {
                let alpha = (s - top).exp() / z;
                for (a, v) in acc.iter_mut().zip(matvec(wv, x.row(j))) {
                    *a += alpha * v;
                }
            }
            row.extend(acc.into_iter().map(|v| activate(act, v)));
        }
    }
    out
}

/// Per-relation attention rows sum to one exactly where the relation has
/// incoming edges, with support equal to the in-neighbour set.
pub fn check_row_sums(trials: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for trial in 0..trials {
        let g = random_graph(&mut rng);
        let cfg = HgatConfig { heads: 2, ..Default::default() };
        let p = params(g.kind(), 4, &cfg, trial);
        let mut tape = Tape::new(&p);
        let x = tape.constant(random_matrix(&mut rng, g.node_count(), 4));
        let out = hgat_layer(&mut tape, &g, x, "g.layer0", &cfg).map_err(|e| e.to_string())?;
        for att in &out.attention {
            let rel = att.relation.unwrap();
            let w = tape.value(att.weights);
            for i in 0..g.node_count() {
                let sources: BTreeSet<usize> = g.in_neighbors(i, rel).collect();
                let total: f64 = w.row(i).iter().sum();
                let ok = if sources.is_empty() { total == 0.0 } else { (total - 1.0).abs() < 1e-10 };
                if !ok {
                    return Err(format!("trial {trial}: row {i} of {rel} sums to {total}"));
                }
                if w.row(i).iter().enumerate().any(|(j, &v)| (v > 0.0) != sources.contains(&j)) {
                    return Err(format!("trial {trial}: row {i} of {rel} attends outside its edges"));
                }
            }
        }
    }
    Ok(())
}

/// Largest deviation from equivariance over `trials` random graphs.
pub fn check_equivariance(trials: u64) -> Result<f64, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for trial in 0..trials {
        let g = random_graph(&mut rng);
        let n = g.node_count();
        let cfg = HgatConfig { heads: 2, ..Default::default() };
        let p = params(g.kind(), 6, &cfg, 100 + trial);
        let x = random_matrix(&mut rng, n, 6);
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        let mut px = x.to_rows();
        for (old, &new) in perm.iter().enumerate() {
            px[new] = x.row(old).to_vec();
        }
        let base = run_layer(&p, &g, &x, &cfg);
        let moved = run_layer(&p, &permuted(&g, &perm), &Tensor::from_rows(&px), &cfg);
        for (old, &new) in perm.iter().enumerate() {
            for (a, b) in base.row(old).iter().zip(moved.row(new)) {
                worst = worst.max((a - b).abs());
            }
        }
    }
    if worst < 1e-12 {
        Ok(worst)
    } else {
        Err(format!("equivariance broken by {worst:.3e}"))
    }
}

/// Largest deviation between the collapsed layer and [`reference_gat`].
pub fn check_collapse(trials: u64) -> Result<f64, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let mut worst: f64 = 0.0;
    for trial in 0..trials {
        let g = random_graph(&mut rng);
        for (heads, act) in [(1, Activation::LeakyRelu), (2, Activation::Tanh), (3, Activation::Relu)] {
            let cfg = HgatConfig { heads, activation: act, collapse_relations: true, literal_sqrt_d: true };
            let p = params(g.kind(), 6, &cfg, 200 + trial);
            if !p.iter().all(|(k, _)| k.contains(".shared.")) {
                return Err("collapsed layer registered relation-specific weights".into());
            }
            let x = random_matrix(&mut rng, g.node_count(), 6);
            let got = run_layer(&p, &g, &x, &cfg);
            for (i, row) in reference_gat(&g, &x, &p, heads, act).iter().enumerate() {
                for (a, b) in got.row(i).iter().zip(row) {
                    worst = worst.max((a - b).abs());
                }
            }
        }
    }
    if worst <= 1e-10 {
        Ok(worst)
    } else {
        Err(format!("collapsed layer differs from reference GAT by {worst:.3e}"))
    }
}
