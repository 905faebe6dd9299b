//! Heterogeneous graph attention.
//!
//! For node `i` and head `k`, each incoming neighbour `j` is scored with the
//! weights of the edge's relation `r`:
//!
//! ```text
//! e_ij = (W2[r,k] h_i) . (W3[r,k] h_j) / scale
//! ```
//!
//! and the scores are normalised separately within every relation's
//! neighbourhood. The head output is `act(sum_j alpha_ij W1[r,k] h_j)`, summed
//! over all incoming neighbours of all relations, and heads are concatenated.
//!
//! With `collapse_relations` every edge shares one weight set and one softmax,
//! which is a plain multi-head dot-product GAT.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::graphs::{GraphKind, HeteroGraph, RelationType};
use crate::layers::{Activation, ParamBuilder};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HgatConfig {
    pub heads: usize,
    pub activation: Activation,
    /// Scale logits by `sqrt(d)` of the node state rather than `sqrt(d / heads)`.
    pub literal_sqrt_d: bool,
    pub collapse_relations: bool,
}

impl Default for HgatConfig {
    fn default() -> Self {
        HgatConfig {
            heads: 1,
            activation: Activation::LeakyRelu,
            literal_sqrt_d: true,
            collapse_relations: false,
        }
    }
}

const SHARED: &str = "shared";

fn relation_keys(kind: GraphKind, cfg: &HgatConfig) -> Vec<&'static str> {
    if cfg.collapse_relations {
        vec![SHARED]
    } else {
        RelationType::of(kind).iter().map(|r| r.name()).collect()
    }
}

/// Registers `layers` layers of weights under `prefix.layer{l}.{relation}.head{k}`.
pub fn init_hgat(
    b: &mut ParamBuilder,
    prefix: &str,
    kind: GraphKind,
    dim: usize,
    layers: usize,
    cfg: &HgatConfig,
) {
    assert!(cfg.heads > 0 && dim.is_multiple_of(cfg.heads), "dim must divide into heads");
    let head_dim = dim / cfg.heads;
    for l in 0..layers {
        for rel in relation_keys(kind, cfg) {
            for k in 0..cfg.heads {
                let p = format!("{prefix}.layer{l}.{rel}.head{k}");
                b.add(format!("{p}.w_value"), &[head_dim, dim], dim);
                b.add(format!("{p}.w_query"), &[head_dim, dim], dim);
                b.add(format!("{p}.w_key"), &[head_dim, dim], dim);
            }
        }
    }
}

/// Attention weights of one head over one relation; row `i` holds
/// `alpha_ij` for every source `j` (zero where no edge of that relation).
pub struct RelationAttention {
    pub head: usize,
    pub relation: Option<RelationType>,
    pub weights: Var,
}

pub struct HgatOutput {
    pub output: Var,
    pub attention: Vec<RelationAttention>,
}

fn relation_masks(graph: &HeteroGraph, collapse: bool) -> Vec<(Option<RelationType>, Vec<bool>)> {
    let n = graph.node_count();
    if collapse {
        let mut mask = vec![false; n * n];
        for e in graph.edges() {
            mask[e.dst * n + e.src] = true;
        }
        return vec![(None, mask)];
    }
    graph
        .relations()
        .iter()
        .map(|&rel| {
            let mut mask = vec![false; n * n];
            for e in graph.edges().iter().filter(|e| e.rel == rel) {
                mask[e.dst * n + e.src] = true;
            }
            (Some(rel), mask)
        })
        .collect()
}

pub fn hgat_layer(
    tape: &mut Tape,
    graph: &HeteroGraph,
    features: Var,
    prefix: &str,
    cfg: &HgatConfig,
) -> Result<HgatOutput> {
    let (n, dim) = tape.shape(features);
    if n != graph.node_count() {
        return Err(Error::Shape(format!(
            "graph has {} nodes but {n} feature rows",
            graph.node_count()
        )));
    }
    if cfg.heads == 0 || dim % cfg.heads != 0 {
        return Err(Error::Shape(format!("width {dim} not divisible into {} heads", cfg.heads)));
    }
    let head_dim = dim / cfg.heads;
    let scale = if cfg.literal_sqrt_d {
        (dim as f64).sqrt()
    } else {
        (head_dim as f64).sqrt()
    };
    let masks = relation_masks(graph, cfg.collapse_relations);
    let mut attention = Vec::new();
    let mut heads = Vec::with_capacity(cfg.heads);
    for k in 0..cfg.heads {
        let mut total: Option<Var> = None;
        for (rel, mask) in &masks {
            if !mask.iter().any(|&m| m) {
                continue;
            }
            let key = rel.map_or(SHARED, RelationType::name);
            let p = format!("{prefix}.{key}.head{k}");
            let values = tape.linear(features, &format!("{p}.w_value"), None)?;
            let queries = tape.linear(features, &format!("{p}.w_query"), None)?;
            let keys = tape.linear(features, &format!("{p}.w_key"), None)?;
            let scores = tape.matmul_bt(queries, keys);
            let scores = tape.scale(scores, 1.0 / scale);
            let alpha = tape.masked_softmax_rows(scores, mask.clone());
            let message = tape.matmul(alpha, values);
            total = Some(match total {
                Some(t) => tape.add(t, message),
                None => message,
            });
            attention.push(RelationAttention {
                head: k,
                relation: *rel,
                weights: alpha,
            });
        }
        let total = total.ok_or_else(|| Error::Graph("graph has no edges".into()))?;
        heads.push(cfg.activation.apply(tape, total));
    }
    let output = if heads.len() == 1 {
        heads[0]
    } else {
        tape.concat_cols(&heads)
    };
    Ok(HgatOutput { output, attention })
}

/// Applies `layers` layers in sequence and returns the final node states.
pub fn hgat_stack(
    tape: &mut Tape,
    graph: &HeteroGraph,
    features: Var,
    prefix: &str,
    layers: usize,
    cfg: &HgatConfig,
) -> Result<Var> {
    if layers == 0 {
        return Err(Error::Config("graph attention needs at least one layer".into()));
    }
    let mut h = features;
    for l in 0..layers {
        h = hgat_layer(tape, graph, h, &format!("{prefix}.layer{l}"), cfg)?.output;
    }
    Ok(h)
}
