//! Heterogeneous semantics-label graphs.
//!
//! The slot-to-intent graph links intent semantic nodes `I_i` with the
//! estimated slot label nodes `SL_i` through windowed connections. The
//! intent-to-slot graph links slot semantic nodes `S_i` (windowed) with the
//! estimated intent label nodes `IL_k` (global).
//!
//! Edges are stored sorted by `(dst, relation, src)`, so the incoming
//! neighbourhood of a node for one relation is a contiguous run.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NodeType {
    IntentSemantic,
    SlotLabel,
    SlotSemantic,
    IntentLabel,
}

impl NodeType {
    pub fn prefix(self) -> &'static str {
        match self {
            NodeType::IntentSemantic => "I",
            NodeType::SlotLabel => "SL",
            NodeType::SlotSemantic => "S",
            NodeType::IntentLabel => "IL",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum GraphKind {
    SlotToIntent,
    IntentToSlot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RelationType {
    // slot-to-intent graph
    IntentSemanticDep,
    SlotToIntentGuidance,
    SlotLabelDep,
    IntentToSlotLabelFeedback,
    // intent-to-slot graph
    SlotSemanticDep,
    IntentToSlotGuidance,
    IntentLabelDep,
    SlotToIntentLabelFeedback,
}

impl RelationType {
    pub const S2I: [RelationType; 4] = [
        RelationType::IntentSemanticDep,
        RelationType::SlotToIntentGuidance,
        RelationType::SlotLabelDep,
        RelationType::IntentToSlotLabelFeedback,
    ];
    pub const I2S: [RelationType; 4] = [
        RelationType::SlotSemanticDep,
        RelationType::IntentToSlotGuidance,
        RelationType::IntentLabelDep,
        RelationType::SlotToIntentLabelFeedback,
    ];

    pub fn of(kind: GraphKind) -> &'static [RelationType; 4] {
        match kind {
            GraphKind::SlotToIntent => &Self::S2I,
            GraphKind::IntentToSlot => &Self::I2S,
        }
    }

    /// `(source type, destination type)` every edge of this relation must have.
    pub fn signature(self) -> (NodeType, NodeType) {
        use NodeType::*;
        match self {
            RelationType::IntentSemanticDep => (IntentSemantic, IntentSemantic),
            RelationType::SlotToIntentGuidance => (SlotLabel, IntentSemantic),
            RelationType::SlotLabelDep => (SlotLabel, SlotLabel),
            RelationType::IntentToSlotLabelFeedback => (IntentSemantic, SlotLabel),
            RelationType::SlotSemanticDep => (SlotSemantic, SlotSemantic),
            RelationType::IntentToSlotGuidance => (IntentLabel, SlotSemantic),
            RelationType::IntentLabelDep => (IntentLabel, IntentLabel),
            RelationType::SlotToIntentLabelFeedback => (SlotSemantic, IntentLabel),
        }
    }

    /// Position within the graph's four relations.
    pub fn local_index(self) -> usize {
        match self {
            RelationType::IntentSemanticDep | RelationType::SlotSemanticDep => 0,
            RelationType::SlotToIntentGuidance | RelationType::IntentToSlotGuidance => 1,
            RelationType::SlotLabelDep | RelationType::IntentLabelDep => 2,
            RelationType::IntentToSlotLabelFeedback
            | RelationType::SlotToIntentLabelFeedback => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            RelationType::IntentSemanticDep => "IntentSemanticDep",
            RelationType::SlotToIntentGuidance => "SlotToIntentGuidance",
            RelationType::SlotLabelDep => "SlotLabelDep",
            RelationType::IntentToSlotLabelFeedback => "IntentToSlotLabelFeedback",
            RelationType::SlotSemanticDep => "SlotSemanticDep",
            RelationType::IntentToSlotGuidance => "IntentToSlotGuidance",
            RelationType::IntentLabelDep => "IntentLabelDep",
            RelationType::SlotToIntentLabelFeedback => "SlotToIntentLabelFeedback",
        }
    }
}

impl fmt::Display for RelationType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
    pub rel: RelationType,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HeteroGraph {
    kind: GraphKind,
    node_types: Vec<NodeType>,
    edges: Vec<Edge>,
}

impl HeteroGraph {
    /// Builds and validates a graph. Edges are sorted and must be unique.
    pub fn new(kind: GraphKind, node_types: Vec<NodeType>, mut edges: Vec<Edge>) -> Result<Self> {
        edges.sort_by_key(|e| (e.dst, e.rel, e.src));
        let graph = HeteroGraph {
            kind,
            node_types,
            edges,
        };
        graph.check()?;
        Ok(graph)
    }

    fn check(&self) -> Result<()> {
        let n = self.node_types.len();
        let allowed = RelationType::of(self.kind);
        let mut has_incoming = vec![false; n];
        for (i, e) in self.edges.iter().enumerate() {
            if e.src >= n || e.dst >= n {
                return Err(Error::Graph(format!(
                    "edge {}->{} out of range for {n} nodes",
                    e.src, e.dst
                )));
            }
            if !allowed.contains(&e.rel) {
                return Err(Error::Graph(format!("relation {} not in this graph", e.rel)));
            }
            if (self.node_types[e.src], self.node_types[e.dst]) != e.rel.signature() {
                return Err(Error::Graph(format!(
                    "edge {}->{} violates the {} signature",
                    e.src, e.dst, e.rel
                )));
            }
            if i > 0 && self.edges[i - 1] == *e {
                return Err(Error::Graph(format!("duplicate edge {}->{} {}", e.src, e.dst, e.rel)));
            }
            has_incoming[e.dst] = true;
        }
        if let Some(lonely) = has_incoming.iter().position(|&h| !h) {
            return Err(Error::Graph(format!("node {lonely} has no incoming edge")));
        }
        Ok(())
    }

    pub fn kind(&self) -> GraphKind {
        self.kind
    }

    pub fn node_count(&self) -> usize {
        self.node_types.len()
    }

    pub fn node_types(&self) -> &[NodeType] {
        &self.node_types
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn relations(&self) -> &'static [RelationType; 4] {
        RelationType::of(self.kind)
    }

    /// Sources of edges into `dst` carrying `rel`, in ascending order.
    pub fn in_neighbors(&self, dst: usize, rel: RelationType) -> impl Iterator<Item = usize> + '_ {
        let start = self.edges.partition_point(|e| (e.dst, e.rel) < (dst, rel));
        self.edges[start..]
            .iter()
            .take_while(move |e| e.dst == dst && e.rel == rel)
            .map(|e| e.src)
    }

    /// Human-readable label such as `I3` or `IL1` (1-based within its type).
    pub fn node_label(&self, node: usize) -> String {
        let ty = self.node_types[node];
        let ordinal = self.node_types[..node].iter().filter(|&&t| t == ty).count() + 1;
        format!("{}{}", ty.prefix(), ordinal)
    }

    /// One edge per line as `src→dst relation`, in storage order.
    pub fn to_edge_list(&self) -> String {
        let mut out = String::new();
        for e in &self.edges {
            out.push_str(&format!(
                "{}\u{2192}{} {}\n",
                self.node_label(e.src),
                self.node_label(e.dst),
                e.rel
            ));
        }
        out
    }
}

fn window(i: usize, n: usize, w: usize) -> std::ops::RangeInclusive<usize> {
    i.saturating_sub(w)..=(i + w).min(n - 1)
}

/// Slot-to-intent graph: nodes `0..n` are `I_i`, nodes `n..2n` are `SL_i`.
pub fn build_s2i_graph(n: usize, w: usize) -> Result<HeteroGraph> {
    if n == 0 {
        return Err(Error::Graph("utterance length must be at least 1".into()));
    }
    let mut node_types = vec![NodeType::IntentSemantic; n];
    node_types.extend(std::iter::repeat_n(NodeType::SlotLabel, n));
    let intent = |i: usize| i;
    let label = |i: usize| n + i;
    let mut edges = Vec::new();
    for i in 0..n {
        for j in window(i, n, w) {
            edges.push(Edge { src: intent(j), dst: intent(i), rel: RelationType::IntentSemanticDep });
            edges.push(Edge { src: label(j), dst: intent(i), rel: RelationType::SlotToIntentGuidance });
            edges.push(Edge { src: label(j), dst: label(i), rel: RelationType::SlotLabelDep });
            edges.push(Edge {
                src: intent(j),
                dst: label(i),
                rel: RelationType::IntentToSlotLabelFeedback,
            });
        }
    }
    HeteroGraph::new(GraphKind::SlotToIntent, node_types, edges)
}

/// Intent-to-slot graph: nodes `0..n` are `S_i`, nodes `n..n+m` are `IL_k`.
pub fn build_i2s_graph(n: usize, m: usize, w: usize) -> Result<HeteroGraph> {
    if n == 0 {
        return Err(Error::Graph("utterance length must be at least 1".into()));
    }
    if m == 0 {
        return Err(Error::Graph("at least one intent label node is required".into()));
    }
    let mut node_types = vec![NodeType::SlotSemantic; n];
    node_types.extend(std::iter::repeat_n(NodeType::IntentLabel, m));
    let slot = |i: usize| i;
    let label = |k: usize| n + k;
    let mut edges = Vec::new();
    for i in 0..n {
        for j in window(i, n, w) {
            edges.push(Edge { src: slot(j), dst: slot(i), rel: RelationType::SlotSemanticDep });
        }
        for k in 0..m {
            edges.push(Edge { src: label(k), dst: slot(i), rel: RelationType::IntentToSlotGuidance });
            edges.push(Edge {
                src: slot(i),
                dst: label(k),
                rel: RelationType::SlotToIntentLabelFeedback,
            });
        }
    }
    for j in 0..m {
        for k in 0..m {
            edges.push(Edge { src: label(j), dst: label(k), rel: RelationType::IntentLabelDep });
        }
    }
    HeteroGraph::new(GraphKind::IntentToSlot, node_types, edges)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn incoming(g: &HeteroGraph, dst: usize, rel: RelationType) -> Vec<String> {
        g.in_neighbors(dst, rel).map(|s| g.node_label(s)).collect()
    }

    #[test]
    fn s2i_window_of_one() {
        let g = build_s2i_graph(5, 1).unwrap();
        // I_3 is node index 2
        assert_eq!(incoming(&g, 2, RelationType::IntentSemanticDep), ["I2", "I3", "I4"]);
        assert_eq!(incoming(&g, 2, RelationType::SlotToIntentGuidance), ["SL2", "SL3", "SL4"]);
        assert_eq!(incoming(&g, 7, RelationType::SlotLabelDep), ["SL2", "SL3", "SL4"]);
        assert_eq!(incoming(&g, 7, RelationType::IntentToSlotLabelFeedback), ["I2", "I3", "I4"]);
    }

    #[test]
    fn smallest_graphs() {
        let g = build_s2i_graph(1, 0).unwrap();
        assert_eq!(g.node_count(), 2);
        assert_eq!(g.edges().len(), 4);
        let g = build_i2s_graph(1, 1, 0).unwrap();
        assert_eq!(g.node_count(), 2);
        assert_eq!(g.edges().len(), 4);
    }

    #[test]
    fn wide_window_clips() {
        assert_eq!(build_s2i_graph(4, 10).unwrap().edges().len(), 64);
    }

    #[test]
    fn i2s_connectivity() {
        let g = build_i2s_graph(5, 2, 1).unwrap();
        assert_eq!(incoming(&g, 2, RelationType::SlotSemanticDep), ["S2", "S3", "S4"]);
        assert_eq!(incoming(&g, 2, RelationType::IntentToSlotGuidance), ["IL1", "IL2"]);
        let g = build_i2s_graph(3, 2, 1).unwrap();
        let count = g
            .edges()
            .iter()
            .filter(|e| e.rel == RelationType::SlotSemanticDep)
            .count();
        assert_eq!(count, 7);
    }

    #[test]
    fn empty_inputs_rejected() {
        assert!(build_s2i_graph(0, 1).is_err());
        assert!(build_i2s_graph(0, 1, 1).is_err());
        assert!(build_i2s_graph(2, 0, 1).is_err());
    }

    #[test]
    fn validation_catches_bad_edges() {
        let types = vec![NodeType::IntentSemantic, NodeType::SlotLabel];
        let self_loops = vec![
            Edge { src: 0, dst: 0, rel: RelationType::IntentSemanticDep },
            Edge { src: 1, dst: 1, rel: RelationType::SlotLabelDep },
        ];
        assert!(HeteroGraph::new(GraphKind::SlotToIntent, types.clone(), self_loops.clone()).is_ok());

        let mut dup = self_loops.clone();
        dup.push(self_loops[0]);
        assert!(HeteroGraph::new(GraphKind::SlotToIntent, types.clone(), dup).is_err());

        let wrong_sig = vec![
            Edge { src: 0, dst: 0, rel: RelationType::IntentSemanticDep },
            Edge { src: 0, dst: 1, rel: RelationType::SlotLabelDep },
        ];
        assert!(HeteroGraph::new(GraphKind::SlotToIntent, types.clone(), wrong_sig).is_err());

        let no_incoming = vec![Edge { src: 0, dst: 0, rel: RelationType::IntentSemanticDep }];
        assert!(HeteroGraph::new(GraphKind::SlotToIntent, types.clone(), no_incoming).is_err());

        let foreign = vec![
            Edge { src: 0, dst: 0, rel: RelationType::SlotSemanticDep },
            Edge { src: 1, dst: 1, rel: RelationType::SlotLabelDep },
        ];
        assert!(HeteroGraph::new(GraphKind::SlotToIntent, types, foreign).is_err());
    }

    #[test]
    fn edge_list_format() {
        let text = build_s2i_graph(5, 1).unwrap().to_edge_list();
        assert!(text.lines().any(|l| l == "I2\u{2192}I3 IntentSemanticDep"));
    }
}
