//! Intent accuracy, slot F1 and overall (semantic frame) accuracy.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::corpus::BioTag;

/// A labelled span `[start, end)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Span {
    pub start: usize,
    pub end: usize,
    pub label: String,
}

/// Extracts spans from a BIO sequence. An `I-x` that does not continue an
/// open `x` span starts a new one; unparseable tags are treated as `O`.
pub fn extract_spans<S: AsRef<str>>(tags: &[S]) -> Vec<Span> {
    let mut spans = Vec::new();
    let mut open: Option<(usize, &str)> = None;
    for (i, tag) in tags.iter().enumerate() {
        match BioTag::parse(tag.as_ref()) {
            Some(BioTag::Inside(t)) if open.is_some_and(|(_, o)| o == t) => {}
            Some(BioTag::Begin(t)) | Some(BioTag::Inside(t)) => {
                if let Some((s, o)) = open.take() {
                    spans.push(Span { start: s, end: i, label: o.to_string() });
                }
                open = Some((i, t));
            }
            Some(BioTag::Outside) | None => {
                if let Some((s, o)) = open.take() {
                    spans.push(Span { start: s, end: i, label: o.to_string() });
                }
            }
        }
    }
    if let Some((s, o)) = open {
        spans.push(Span { start: s, end: tags.len(), label: o.to_string() });
    }
    spans
}

pub fn f1(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SlotScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub gold: usize,
    pub predicted: usize,
    pub matched: usize,
}

impl SlotScore {
    fn from_counts(gold: usize, predicted: usize, matched: usize) -> Self {
        let precision = ratio(matched, predicted);
        let recall = ratio(matched, gold);
        SlotScore { precision, recall, f1: f1(precision, recall), gold, predicted, matched }
    }
}

/// Micro-averaged exact-match span F1.
pub fn slot_f1<S: AsRef<str>>(preds: &[Vec<S>], golds: &[Vec<S>]) -> SlotScore {
    let (mut g, mut p, mut m) = (0, 0, 0);
    for (pred, gold) in preds.iter().zip(golds) {
        let ps = extract_spans(pred);
        let gs: BTreeSet<Span> = extract_spans(gold).into_iter().collect();
        g += gs.len();
        p += ps.len();
        m += ps.iter().filter(|s| gs.contains(s)).count();
    }
    SlotScore::from_counts(g, p, m)
}

/// Micro-averaged token-level F1 over non-`O` tags.
pub fn token_slot_f1<S: AsRef<str>>(preds: &[Vec<S>], golds: &[Vec<S>]) -> SlotScore {
    let (mut g, mut p, mut m) = (0, 0, 0);
    for (pred, gold) in preds.iter().zip(golds) {
        for (a, b) in pred.iter().zip(gold) {
            let (a, b) = (a.as_ref(), b.as_ref());
            g += usize::from(b != "O");
            p += usize::from(a != "O");
            m += usize::from(a != "O" && a == b);
        }
    }
    SlotScore::from_counts(g, p, m)
}

pub fn intent_accuracy(preds: &[BTreeSet<String>], golds: &[BTreeSet<String>]) -> f64 {
    let hits = preds.iter().zip(golds).filter(|(p, g)| p == g).count();
    ratio(hits, golds.len())
}

pub fn overall_accuracy<S: AsRef<str> + PartialEq>(
    pred_intents: &[BTreeSet<String>],
    gold_intents: &[BTreeSet<String>],
    pred_slots: &[Vec<S>],
    gold_slots: &[Vec<S>],
) -> f64 {
    let hits = (0..gold_intents.len())
        .filter(|&i| pred_intents[i] == gold_intents[i] && pred_slots[i] == gold_slots[i])
        .count();
    ratio(hits, gold_intents.len())
}

/// One evaluation row: intents as label sets and slots as tag strings.
#[derive(Debug, Clone, PartialEq)]
pub struct Labelled {
    pub intents: BTreeSet<String>,
    pub slots: Vec<String>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub samples: usize,
    pub intent_acc: f64,
    pub slot_precision: f64,
    pub slot_recall: f64,
    pub slot_f1: f64,
    pub overall_acc: f64,
    pub gold_spans: usize,
    pub predicted_spans: usize,
    pub matched_spans: usize,
    pub token_level: bool,
}

impl EvalReport {
    pub fn compute(preds: &[Labelled], golds: &[Labelled], token_level: bool) -> Self {
        assert_eq!(preds.len(), golds.len(), "prediction and gold counts differ");
        let pi: Vec<_> = preds.iter().map(|p| p.intents.clone()).collect();
        let gi: Vec<_> = golds.iter().map(|g| g.intents.clone()).collect();
        let ps: Vec<_> = preds.iter().map(|p| p.slots.clone()).collect();
        let gs: Vec<_> = golds.iter().map(|g| g.slots.clone()).collect();
        let slot = if token_level { token_slot_f1(&ps, &gs) } else { slot_f1(&ps, &gs) };
        EvalReport {
            samples: golds.len(),
            intent_acc: intent_accuracy(&pi, &gi),
            slot_precision: slot.precision,
            slot_recall: slot.recall,
            slot_f1: slot.f1,
            overall_acc: overall_accuracy(&pi, &gi, &ps, &gs),
            gold_spans: slot.gold,
            predicted_spans: slot.predicted,
            matched_spans: slot.matched,
            token_level,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let unit = if self.token_level { "tokens" } else { "spans" };
        writeln!(f, "{:<16}{:>10}", "samples", self.samples)?;
        writeln!(f, "{:<16}{:>10.4}", "intent_acc", self.intent_acc)?;
        writeln!(f, "{:<16}{:>10.4}", "slot_precision", self.slot_precision)?;
        writeln!(f, "{:<16}{:>10.4}", "slot_recall", self.slot_recall)?;
        writeln!(f, "{:<16}{:>10.4}", "slot_f1", self.slot_f1)?;
        writeln!(f, "{:<16}{:>10.4}", "overall_acc", self.overall_acc)?;
        write!(
            f,
            "{:<16}{:>10}",
            unit,
            format!("{}/{}/{}", self.matched_spans, self.predicted_spans, self.gold_spans)
        )
    }
}

/// Per-label span counts, useful for diagnosing a single slot type.
pub fn per_label_counts<S: AsRef<str>>(
    preds: &[Vec<S>],
    golds: &[Vec<S>],
) -> HashMap<String, SlotScore> {
    let mut counts: HashMap<String, (usize, usize, usize)> = HashMap::new();
    for (pred, gold) in preds.iter().zip(golds) {
        let ps = extract_spans(pred);
        let gs: BTreeSet<Span> = extract_spans(gold).into_iter().collect();
        for s in &gs {
            counts.entry(s.label.clone()).or_default().0 += 1;
        }
        for s in &ps {
            let c = counts.entry(s.label.clone()).or_default();
            c.1 += 1;
            if gs.contains(s) {
                c.2 += 1;
            }
        }
    }
    counts
        .into_iter()
        .map(|(k, (g, p, m))| (k, SlotScore::from_counts(g, p, m)))
        .collect()
}
