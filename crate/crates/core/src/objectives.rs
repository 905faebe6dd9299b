//! Supervised losses, margin penalties, the four supervised contrastive
//! terms and the sample queues they contrast against.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::corpus::EncodedSample;
use crate::error::{Error, Result};
use crate::model::ForwardTrace;
use crate::tensor::Tensor;

const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ObjectiveConfig {
    pub gamma: f64,
    pub beta_i: f64,
    pub beta_s: f64,
    pub scl: bool,
    pub eta_i: f64,
    pub eta_s: f64,
    pub tau: f64,
    pub lambda_i: f64,
    pub lambda_s: f64,
    pub queue_size: usize,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        ObjectiveConfig {
            gamma: 0.9,
            beta_i: 1e-6,
            beta_s: 1.0,
            scl: true,
            eta_i: 0.1,
            eta_s: 0.01,
            tau: 0.07,
            lambda_i: 0.5,
            lambda_s: 0.5,
            queue_size: 64,
        }
    }
}

impl ObjectiveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::Config("gamma must lie in [0, 1]".into()));
        }
        if self.tau <= 0.0 {
            return Err(Error::Config("tau must be positive".into()));
        }
        if self.queue_size == 0 {
            return Err(Error::Config("queue_size must be at least 1".into()));
        }
        let coefficients = [self.beta_i, self.beta_s, self.eta_i, self.eta_s, self.lambda_i, self.lambda_s];
        if coefficients.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return Err(Error::Config("loss coefficients must be finite and non-negative".into()));
        }
        Ok(())
    }
}

fn broadcast(tape: &mut Tape, row: &[f64], n: usize) -> Var {
    let data = (0..n).flat_map(|_| row.iter().copied()).collect();
    tape.constant(Tensor::matrix(n, row.len(), data))
}

fn one_hot_matrix(tape: &mut Tape, ids: &[usize], width: usize) -> Var {
    let mut data = vec![0.0; ids.len() * width];
    for (i, &id) in ids.iter().enumerate() {
        data[i * width + id] = 1.0;
    }
    tape.constant(Tensor::matrix(ids.len(), width, data))
}

fn check_width(tape: &Tape, probs: Var, rows: usize, cols: usize) -> Result<()> {
    if tape.shape(probs) != (rows, cols) {
        return Err(Error::Shape(format!(
            "expected {rows}x{cols} probabilities, got {:?}",
            tape.shape(probs)
        )));
    }
    Ok(())
}

/// Negated token-level binary cross-entropy summed over both stages, with
/// the sentence's gold multi-hot broadcast to every token.
pub fn intent_loss(tape: &mut Tape, gold: &[f64], stage0: Var, stage1: Var) -> Result<Var> {
    let n = tape.shape(stage0).0;
    let mut total = None;
    for probs in [stage0, stage1] {
        check_width(tape, probs, n, gold.len())?;
        let p = tape.clamp(probs, PROB_FLOOR, 1.0 - PROB_FLOOR);
        let log_p = tape.log(p);
        let q = tape.affine(p, -1.0, 1.0);
        let log_q = tape.log(q);
        let g = broadcast(tape, gold, n);
        let not_g = tape.affine(g, -1.0, 1.0);
        let pos = tape.mul(g, log_p);
        let neg = tape.mul(not_g, log_q);
        let ll = tape.add(pos, neg);
        let s = tape.sum_all(ll);
        total = Some(match total {
            Some(t) => tape.add(t, s),
            None => s,
        });
    }
    Ok(tape.scale(total.expect("two stages"), -1.0))
}

/// Negated token-level cross-entropy summed over both stages.
pub fn slot_loss(tape: &mut Tape, gold: &[usize], stage0: Var, stage1: Var) -> Result<Var> {
    let (n, width) = tape.shape(stage0);
    if gold.len() != n || gold.iter().any(|&g| g >= width) {
        return Err(Error::Shape("gold slots do not match the probability matrix".into()));
    }
    let g = one_hot_matrix(tape, gold, width);
    let mut total = None;
    for probs in [stage0, stage1] {
        check_width(tape, probs, n, width)?;
        let p = tape.clamp(probs, PROB_FLOOR, 1.0);
        let log_p = tape.log(p);
        let picked = tape.mul(g, log_p);
        let s = tape.sum_all(picked);
        total = Some(match total {
            Some(t) => tape.add(t, s),
            None => s,
        });
    }
    Ok(tape.scale(total.expect("two stages"), -1.0))
}

/// `sum over gold-positive entries of max(0, stage0 - stage1)`.
/// `gold` is an `n x labels` 0/1 matrix.
pub fn margin_penalty(tape: &mut Tape, gold: Var, stage0: Var, stage1: Var) -> Var {
    let diff = tape.sub(stage0, stage1);
    let hinge = tape.relu(diff);
    let masked = tape.mul(gold, hinge);
    tape.sum_all(masked)
}

/// Component values of one objective evaluation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub intent: f64,
    pub slot: f64,
    pub intent_margin: f64,
    pub slot_margin: f64,
    pub multi_intent_scl: f64,
    pub slot_scl: f64,
    pub slot_guided_intent_scl: f64,
    pub intent_guided_slot_scl: f64,
    pub total: f64,
}

impl LossParts {
    pub const CSV_HEADER: &'static str =
        "L_I,L_S,L_mp_I,L_mp_S,L_MI,L_S_scl,L_SGMI,L_IGS,total";

    pub fn csv_fields(&self) -> String {
        [
            self.intent,
            self.slot,
            self.intent_margin,
            self.slot_margin,
            self.multi_intent_scl,
            self.slot_scl,
            self.slot_guided_intent_scl,
            self.intent_guided_slot_scl,
            self.total,
        ]
        .iter()
        .map(|v| format!("{v:.6e}"))
        .collect::<Vec<_>>()
        .join(",")
    }

    pub fn add_assign(&mut self, o: &LossParts) {
        self.intent += o.intent;
        self.slot += o.slot;
        self.intent_margin += o.intent_margin;
        self.slot_margin += o.slot_margin;
        self.multi_intent_scl += o.multi_intent_scl;
        self.slot_scl += o.slot_scl;
        self.slot_guided_intent_scl += o.slot_guided_intent_scl;
        self.intent_guided_slot_scl += o.intent_guided_slot_scl;
        self.total += o.total;
    }
}

/// `gamma (L_I + beta_I L_mp_I) + (1 - gamma)(L_S + beta_S L_mp_S)`.
pub fn coguiding_objective(parts: &LossParts, cfg: &ObjectiveConfig) -> f64 {
    cfg.gamma * (parts.intent + cfg.beta_i * parts.intent_margin)
        + (1.0 - cfg.gamma) * (parts.slot + cfg.beta_s * parts.slot_margin)
}

/// Co-guiding objective plus `eta_I (MI + SGMI) + eta_S (S + IGS)`.
pub fn scl_objective(parts: &LossParts, cfg: &ObjectiveConfig) -> f64 {
    coguiding_objective(parts, cfg)
        + cfg.eta_i * (parts.multi_intent_scl + parts.slot_guided_intent_scl)
        + cfg.eta_s * (parts.slot_scl + parts.intent_guided_slot_scl)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `a.b / (|a| |b| tau)`.
pub fn cosine_sim(a: &[f64], b: &[f64], tau: f64) -> Result<f64> {
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroNorm);
    }
    Ok(dot(a, b) / (na * nb * tau))
}

/// Mean of the one-hot vectors of every non-`O` token; zero when all are `O`.
pub fn sentence_slot_vector(slot_ids: &[usize], num_slots: usize, outside: Option<usize>) -> Vec<f64> {
    let mut v = vec![0.0; num_slots];
    let mut count = 0usize;
    for &s in slot_ids.iter().filter(|&&s| Some(s) != outside) {
        v[s] += 1.0;
        count += 1;
    }
    if count > 0 {
        v.iter_mut().for_each(|x| *x /= count as f64);
    }
    v
}

/// Normalised label-similarity weights; all zero when nothing is similar.
pub fn mu_weights(similarities: &[f64]) -> Vec<f64> {
    let total: f64 = similarities.iter().sum();
    if total > 0.0 {
        similarities.iter().map(|s| s / total).collect()
    } else {
        vec![0.0; similarities.len()]
    }
}

/// `l_I . l_I^k + lambda^2 (l_ss . l_ss^k)`.
pub fn joint_intent_similarity(
    intent: &[f64],
    sentence_slots: &[f64],
    other_intent: &[f64],
    other_sentence_slots: &[f64],
    lambda: f64,
) -> f64 {
    dot(intent, other_intent) + lambda * lambda * dot(sentence_slots, other_sentence_slots)
}

/// `l_S^i . l_S^(k,j) + lambda^2 (l_I . l_I^k)`.
pub fn joint_slot_similarity(
    slot: &[f64],
    intent: &[f64],
    other_slot: &[f64],
    other_intent: &[f64],
    lambda: f64,
) -> f64 {
    dot(slot, other_slot) + lambda * lambda * dot(intent, other_intent)
}

/// `-sum_i sum_q (w_iq / M_i) log softmax_q(s(anchor_i, queued_q))`, with
/// `M_i = sum_q w_iq`. Anchors without positives contribute nothing and the
/// queued features are constants.
pub fn contrastive_term(
    tape: &mut Tape,
    anchors: Var,
    queued: &[&[f64]],
    weights: &[Vec<f64>],
    tau: f64,
) -> Result<Var> {
    let (a, d) = tape.shape(anchors);
    if weights.len() != a || weights.iter().any(|w| w.len() != queued.len()) {
        return Err(Error::Shape("contrastive weights do not match anchors x queue".into()));
    }
    let normalized: Vec<Vec<f64>> = weights.iter().map(|w| mu_weights(w)).collect();
    if queued.is_empty() || normalized.iter().all(|w| w.iter().all(|&x| x == 0.0)) {
        return Ok(tape.constant(Tensor::scalar(0.0)));
    }
    let anchor_value = tape.value(anchors);
    if (0..a).any(|r| norm(anchor_value.row(r)) == 0.0) {
        return Err(Error::ZeroNorm);
    }
    let mut q = Vec::with_capacity(queued.len() * d);
    for row in queued {
        if row.len() != d {
            return Err(Error::Shape(format!("queued feature of width {} vs {d}", row.len())));
        }
        let n = norm(row);
        if n == 0.0 {
            return Err(Error::ZeroNorm);
        }
        q.extend(row.iter().map(|x| x / n));
    }
    let q = tape.constant(Tensor::matrix(queued.len(), d, q));
    let unit = tape.normalize_rows(anchors);
    let sims = tape.matmul_bt(unit, q);
    let logits = tape.scale(sims, 1.0 / tau);
    let log_probs = tape.log_softmax_rows(logits);
    let w = tape.constant(Tensor::matrix(a, queued.len(), normalized.concat()));
    let weighted = tape.mul(w, log_probs);
    let s = tape.sum_all(weighted);
    Ok(tape.scale(s, -1.0))
}

/// One past instance, detached from any tape.
#[derive(Debug, Clone, PartialEq)]
pub struct QueueEntry {
    pub utterance0: Vec<f64>,
    pub utterance1: Vec<f64>,
    pub words0: Vec<Vec<f64>>,
    pub words1: Vec<Vec<f64>>,
    pub intent_label: Vec<f64>,
    pub slot_labels: Vec<Vec<f64>>,
    pub sentence_slots: Vec<f64>,
}

/// Column-wise batch of queue entries; every column must have equal length.
#[derive(Debug, Clone, Default)]
pub struct QueueBatch {
    pub utterance0: Vec<Vec<f64>>,
    pub utterance1: Vec<Vec<f64>>,
    pub words0: Vec<Vec<Vec<f64>>>,
    pub words1: Vec<Vec<Vec<f64>>>,
    pub intent_labels: Vec<Vec<f64>>,
    pub slot_labels: Vec<Vec<Vec<f64>>>,
    pub sentence_slots: Vec<Vec<f64>>,
}

impl QueueBatch {
    pub fn push(&mut self, e: QueueEntry) {
        self.utterance0.push(e.utterance0);
        self.utterance1.push(e.utterance1);
        self.words0.push(e.words0);
        self.words1.push(e.words1);
        self.intent_labels.push(e.intent_label);
        self.slot_labels.push(e.slot_labels);
        self.sentence_slots.push(e.sentence_slots);
    }

    fn lengths(&self) -> [usize; 7] {
        [
            self.utterance0.len(),
            self.utterance1.len(),
            self.words0.len(),
            self.words1.len(),
            self.intent_labels.len(),
            self.slot_labels.len(),
            self.sentence_slots.len(),
        ]
    }
}

/// Seven index-aligned FIFO queues of past features and labels.
#[derive(Debug, Clone)]
pub struct SampleQueues {
    capacity: usize,
    pub q0_u: VecDeque<Vec<f64>>,
    pub q1_u: VecDeque<Vec<f64>>,
    pub q0_s: VecDeque<Vec<Vec<f64>>>,
    pub q1_s: VecDeque<Vec<Vec<f64>>>,
    pub ql_i: VecDeque<Vec<f64>>,
    pub ql_s: VecDeque<Vec<Vec<f64>>>,
    pub ql_ss: VecDeque<Vec<f64>>,
}

impl SampleQueues {
    pub fn new(capacity: usize) -> Self {
        SampleQueues {
            capacity,
            q0_u: VecDeque::new(),
            q1_u: VecDeque::new(),
            q0_s: VecDeque::new(),
            q1_s: VecDeque::new(),
            ql_i: VecDeque::new(),
            ql_s: VecDeque::new(),
            ql_ss: VecDeque::new(),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.q0_u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q0_u.is_empty()
    }

    pub fn push_batch(&mut self, batch: QueueBatch) -> Result<()> {
        let lens = batch.lengths();
        if lens.iter().any(|&l| l != lens[0]) {
            return Err(Error::QueueMisaligned(format!("column lengths {lens:?}")));
        }
        fn extend<T>(q: &mut VecDeque<T>, items: Vec<T>, cap: usize) {
            q.extend(items);
            while q.len() > cap {
                q.pop_front();
            }
        }
        let cap = self.capacity;
        extend(&mut self.q0_u, batch.utterance0, cap);
        extend(&mut self.q1_u, batch.utterance1, cap);
        extend(&mut self.q0_s, batch.words0, cap);
        extend(&mut self.q1_s, batch.words1, cap);
        extend(&mut self.ql_i, batch.intent_labels, cap);
        extend(&mut self.ql_s, batch.slot_labels, cap);
        extend(&mut self.ql_ss, batch.sentence_slots, cap);
        Ok(())
    }

    pub fn push(&mut self, entry: QueueEntry) -> Result<()> {
        let mut b = QueueBatch::default();
        b.push(entry);
        self.push_batch(b)
    }

    pub fn entry(&self, k: usize) -> Option<QueueEntry> {
        Some(QueueEntry {
            utterance0: self.q0_u.get(k)?.clone(),
            utterance1: self.q1_u.get(k)?.clone(),
            words0: self.q0_s.get(k)?.clone(),
            words1: self.q1_s.get(k)?.clone(),
            intent_label: self.ql_i.get(k)?.clone(),
            slot_labels: self.ql_s.get(k)?.clone(),
            sentence_slots: self.ql_ss.get(k)?.clone(),
        })
    }
}

/// Gold labels of one sample in the vector forms the losses consume.
#[derive(Debug, Clone)]
pub struct GoldLabels<'a> {
    pub sample: &'a EncodedSample,
    pub sentence_slots: Vec<f64>,
}

impl<'a> GoldLabels<'a> {
    pub fn new(sample: &'a EncodedSample, num_slots: usize, outside: Option<usize>) -> Self {
        GoldLabels {
            sample,
            sentence_slots: sentence_slot_vector(&sample.slot_ids, num_slots, outside),
        }
    }
}

pub fn multi_intent_scl(
    tape: &mut Tape,
    anchor: Var,
    intent_label: &[f64],
    queues: &SampleQueues,
    tau: f64,
) -> Result<Var> {
    let queued: Vec<&[f64]> = queues.q0_u.iter().map(Vec::as_slice).collect();
    let w = vec![queues.ql_i.iter().map(|l| dot(intent_label, l)).collect()];
    contrastive_term(tape, anchor, &queued, &w, tau)
}

pub fn sg_multi_intent_scl(
    tape: &mut Tape,
    anchor: Var,
    intent_label: &[f64],
    sentence_slots: &[f64],
    queues: &SampleQueues,
    lambda: f64,
    tau: f64,
) -> Result<Var> {
    let queued: Vec<&[f64]> = queues.q1_u.iter().map(Vec::as_slice).collect();
    let w = vec![queues
        .ql_i
        .iter()
        .zip(&queues.ql_ss)
        .map(|(li, ss)| joint_intent_similarity(intent_label, sentence_slots, li, ss, lambda))
        .collect()];
    contrastive_term(tape, anchor, &queued, &w, tau)
}

fn flatten_words(words: &VecDeque<Vec<Vec<f64>>>) -> Vec<&[f64]> {
    words.iter().flat_map(|inst| inst.iter().map(Vec::as_slice)).collect()
}

pub fn slot_scl(
    tape: &mut Tape,
    anchors: Var,
    slot_labels: &[Vec<f64>],
    queues: &SampleQueues,
    tau: f64,
) -> Result<Var> {
    let queued = flatten_words(&queues.q0_s);
    let w = slot_labels
        .iter()
        .map(|l| {
            queues
                .ql_s
                .iter()
                .flat_map(|inst| inst.iter().map(|lk| dot(l, lk)))
                .collect()
        })
        .collect::<Vec<_>>();
    contrastive_term(tape, anchors, &queued, &w, tau)
}

pub fn ig_slot_scl(
    tape: &mut Tape,
    anchors: Var,
    slot_labels: &[Vec<f64>],
    intent_label: &[f64],
    queues: &SampleQueues,
    lambda: f64,
    tau: f64,
) -> Result<Var> {
    let queued = flatten_words(&queues.q1_s);
    let w = slot_labels
        .iter()
        .map(|l| {
            queues
                .ql_s
                .iter()
                .zip(&queues.ql_i)
                .flat_map(|(inst, li)| {
                    inst.iter()
                        .map(move |lk| joint_slot_similarity(l, intent_label, lk, li, lambda))
                })
                .collect()
        })
        .collect::<Vec<_>>();
    contrastive_term(tape, anchors, &queued, &w, tau)
}

/// Tape variables of every loss term of one sample.
#[derive(Debug, Clone, Copy)]
pub struct LossVars {
    pub intent: Var,
    pub slot: Var,
    pub intent_margin: Var,
    pub slot_margin: Var,
    pub multi_intent_scl: Var,
    pub slot_scl: Var,
    pub slot_guided_intent_scl: Var,
    pub intent_guided_slot_scl: Var,
    pub total: Var,
}

impl LossVars {
    pub fn terms(&self) -> [(&'static str, Var); 9] {
        [
            ("intent", self.intent),
            ("slot", self.slot),
            ("intent_margin", self.intent_margin),
            ("slot_margin", self.slot_margin),
            ("multi_intent_scl", self.multi_intent_scl),
            ("slot_scl", self.slot_scl),
            ("slot_guided_intent_scl", self.slot_guided_intent_scl),
            ("intent_guided_slot_scl", self.intent_guided_slot_scl),
            ("total", self.total),
        ]
    }

    pub fn values(&self, tape: &Tape) -> LossParts {
        LossParts {
            intent: tape.scalar(self.intent),
            slot: tape.scalar(self.slot),
            intent_margin: tape.scalar(self.intent_margin),
            slot_margin: tape.scalar(self.slot_margin),
            multi_intent_scl: tape.scalar(self.multi_intent_scl),
            slot_scl: tape.scalar(self.slot_scl),
            slot_guided_intent_scl: tape.scalar(self.slot_guided_intent_scl),
            intent_guided_slot_scl: tape.scalar(self.intent_guided_slot_scl),
            total: tape.scalar(self.total),
        }
    }
}

/// Builds the full objective of one sample on its forward tape.
pub fn sample_objective(
    trace: &mut ForwardTrace,
    gold: &GoldLabels,
    queues: &SampleQueues,
    cfg: &ObjectiveConfig,
) -> Result<LossVars> {
    let s = gold.sample;
    let tape = &mut trace.tape;
    let (st0, st1) = (trace.stage1, trace.stage2);
    let (n, num_intents) = tape.shape(st0.intent_probs);
    let num_slots = tape.shape(st0.slot_probs).1;
    if s.len() != n {
        return Err(Error::Shape(format!("{} gold tags for {n} tokens", s.len())));
    }

    let intent = intent_loss(tape, &s.intent_multi_hot, st0.intent_probs, st1.intent_probs)?;
    let slot = slot_loss(tape, &s.slot_ids, st0.slot_probs, st1.slot_probs)?;
    let intent_gold = broadcast(tape, &s.intent_multi_hot, n);
    let intent_margin = margin_penalty(tape, intent_gold, st0.intent_probs, st1.intent_probs);
    let slot_gold = one_hot_matrix(tape, &s.slot_ids, num_slots);
    let slot_margin = margin_penalty(tape, slot_gold, st0.slot_probs, st1.slot_probs);
    debug_assert_eq!(num_intents, s.intent_multi_hot.len());

    let zero = tape.constant(Tensor::scalar(0.0));
    let (mi, sl, sgmi, igs) = if cfg.scl {
        let u0 = tape.mean_rows(st0.intent_features);
        let u1 = tape.mean_rows(st1.intent_features);
        (
            multi_intent_scl(tape, u0, &s.intent_multi_hot, queues, cfg.tau)?,
            slot_scl(tape, st0.slot_features, &s.slot_one_hots, queues, cfg.tau)?,
            sg_multi_intent_scl(
                tape,
                u1,
                &s.intent_multi_hot,
                &gold.sentence_slots,
                queues,
                cfg.lambda_i,
                cfg.tau,
            )?,
            ig_slot_scl(
                tape,
                st1.slot_features,
                &s.slot_one_hots,
                &s.intent_multi_hot,
                queues,
                cfg.lambda_s,
                cfg.tau,
            )?,
        )
    } else {
        (zero, zero, zero, zero)
    };

    let mp_i = tape.scale(intent_margin, cfg.beta_i);
    let intent_part = tape.add(intent, mp_i);
    let intent_part = tape.scale(intent_part, cfg.gamma);
    let mp_s = tape.scale(slot_margin, cfg.beta_s);
    let slot_part = tape.add(slot, mp_s);
    let slot_part = tape.scale(slot_part, 1.0 - cfg.gamma);
    let mut total = tape.add(intent_part, slot_part);
    if cfg.scl {
        let ci = tape.add(mi, sgmi);
        let ci = tape.scale(ci, cfg.eta_i);
        let cs = tape.add(sl, igs);
        let cs = tape.scale(cs, cfg.eta_s);
        total = tape.add(total, ci);
        total = tape.add(total, cs);
    }
    tape.check_finite()?;
    Ok(LossVars {
        intent,
        slot,
        intent_margin,
        slot_margin,
        multi_intent_scl: mi,
        slot_scl: sl,
        slot_guided_intent_scl: sgmi,
        intent_guided_slot_scl: igs,
        total,
    })
}

/// Detached features and labels of a sample, ready to enqueue.
pub fn queue_entry(trace: &ForwardTrace, gold: &GoldLabels) -> QueueEntry {
    let t = &trace.tape;
    let mean = |v: Var| {
        let m = t.value(v);
        let mut out = vec![0.0; m.cols()];
        for r in 0..m.rows() {
            for (o, x) in out.iter_mut().zip(m.row(r)) {
                *o += x;
            }
        }
        out.iter_mut().for_each(|o| *o /= m.rows() as f64);
        out
    };
    QueueEntry {
        utterance0: mean(trace.stage1.intent_features),
        utterance1: mean(trace.stage2.intent_features),
        words0: t.value(trace.stage1.slot_features).to_rows(),
        words1: t.value(trace.stage2.slot_features).to_rows(),
        intent_label: gold.sample.intent_multi_hot.clone(),
        slot_labels: gold.sample.slot_one_hots.clone(),
        sentence_slots: gold.sentence_slots.clone(),
    }
}
