//! Nested-loop references for the contrastive losses.

use coguiding::autodiff::Tape;
use coguiding::objectives::{
    ig_slot_scl, multi_intent_scl, mu_weights, sentence_slot_vector, sg_multi_intent_scl, slot_scl,
    QueueEntry, SampleQueues,
};
use coguiding::tensor::{ModelParams, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const TAU: f64 = 0.07;
const OUTSIDE: usize = 0;

pub struct Instance {
    pub intent: Vec<f64>,
    pub slot_ids: Vec<usize>,
    pub sentence_slots: Vec<f64>,
    pub utterance0: Vec<f64>,
    pub utterance1: Vec<f64>,
    pub words0: Vec<Vec<f64>>,
    pub words1: Vec<Vec<f64>>,
}

pub fn vector(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        if v.iter().any(|x| x.abs() > 1e-3) {
            return v;
        }
    }
}

pub fn instance(rng: &mut ChaCha8Rng, d: usize, ni: usize, ns: usize) -> Instance {
    let n = rng.gen_range(1..=4);
    let mut intent: Vec<f64> = (0..ni).map(|_| f64::from(u8::from(rng.gen_bool(0.4)))).collect();
    if intent.iter().all(|&x| x == 0.0) {
        intent[rng.gen_range(0..ni)] = 1.0;
    }
    let slot_ids: Vec<usize> = (0..n).map(|_| rng.gen_range(0..ns)).collect();
    Instance {
        sentence_slots: sentence_slot_vector(&slot_ids, ns, Some(OUTSIDE)),
        intent,
        slot_ids,
        utterance0: vector(rng, d),
        utterance1: vector(rng, d),
        words0: (0..n).map(|_| vector(rng, d)).collect(),
        words1: (0..n).map(|_| vector(rng, d)).collect(),
    }
}

pub fn one_hot(id: usize, ns: usize) -> Vec<f64> {
    (0..ns).map(|s| f64::from(u8::from(s == id))).collect()
}

pub fn queues_of(items: &[Instance], ns: usize) -> SampleQueues {
    let mut q = SampleQueues::new(items.len().max(1));
    for it in items {
        q.push(QueueEntry {
            utterance0: it.utterance0.clone(),
            utterance1: it.utterance1.clone(),
            words0: it.words0.clone(),
            words1: it.words1.clone(),
            intent_label: it.intent.clone(),
            slot_labels: it.slot_ids.iter().map(|&s| one_hot(s, ns)).collect(),
            sentence_slots: it.sentence_slots.clone(),
        })
        .unwrap();
    }
    q
}

pub fn inner(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        s += a[i] * b[i];
    }
    s
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    inner(a, b) / (inner(a, a).sqrt() * inner(b, b).sqrt() * TAU)
}

/// `-sum_k w_k/W log(e^{s(a,q_k)} / sum_j e^{s(a,q_j)})`, zero when `W = 0`.
pub fn reference_row(anchor: &[f64], queued: &[&Vec<f64>], weights: &[f64]) -> f64 {
    let total: f64 = weights.iter().sum();
    if total == 0.0 {
        return 0.0;
    }
    let mut denom = 0.0;
    for q in queued {
        denom += cosine(anchor, q).exp();
    }
    let mut loss = 0.0;
    for k in 0..queued.len() {
        loss -= weights[k] / total * (cosine(anchor, queued[k]).exp() / denom).ln();
    }
    loss
}

pub fn ref_multi_intent(anchor: &[f64], intent: &[f64], past: &[Instance]) -> f64 {
    let queued: Vec<&Vec<f64>> = past.iter().map(|p| &p.utterance0).collect();
    let w: Vec<f64> = past.iter().map(|p| inner(intent, &p.intent)).collect();
    reference_row(anchor, &queued, &w)
}

pub fn ref_sg_multi_intent(anchor: &[f64], cur: &Instance, past: &[Instance], lambda: f64) -> f64 {
    let joint = |x: &Instance| {
        let mut v = x.intent.clone();
        v.extend(x.sentence_slots.iter().map(|s| lambda * s));
        v
    };
    let queued: Vec<&Vec<f64>> = past.iter().map(|p| &p.utterance1).collect();
    let w: Vec<f64> = past.iter().map(|p| inner(&joint(cur), &joint(p))).collect();
    reference_row(anchor, &queued, &w)
}

pub fn ref_slot(anchors: &[Vec<f64>], cur: &Instance, past: &[Instance], ns: usize, second: bool, lambda: f64) -> f64 {
    let mut queued = Vec::new();
    let mut labels = Vec::new();
    for p in past {
        let words = if second { &p.words1 } else { &p.words0 };
        for (j, w) in words.iter().enumerate() {
            queued.push(w);
            labels.push((one_hot(p.slot_ids[j], ns), p.intent.clone()));
        }
    }
    let mut total = 0.0;
    for (i, a) in anchors.iter().enumerate() {
        let mine = one_hot(cur.slot_ids[i], ns);
        let w: Vec<f64> = labels
            .iter()
            .map(|(s, it)| {
                let mut x = mine.clone();
                let mut y = s.clone();
                if second {
                    x.extend(cur.intent.iter().map(|v| lambda * v));
                    y.extend(it.iter().map(|v| lambda * v));
                }
                inner(&x, &y)
            })
            .collect();
        total += reference_row(a, &queued, &w);
    }
    total
}

pub struct Case {
    pub cur: Instance,
    pub past: Vec<Instance>,
    pub ns: usize,
    pub lambda: f64,
    pub anchors: Vec<Vec<f64>>,
}

pub fn case(rng: &mut ChaCha8Rng) -> Case {
    let d = rng.gen_range(2..=5);
    let (ni, ns) = (rng.gen_range(2..=4), rng.gen_range(2..=5));
    let cur = instance(rng, d, ni, ns);
    let past = (0..rng.gen_range(1..=5)).map(|_| instance(rng, d, ni, ns)).collect();
    let anchors = (0..cur.slot_ids.len()).map(|_| vector(rng, d)).collect();
    Case { cur, past, ns, lambda: rng.gen_range(0.0..1.5), anchors }
}

pub struct Values {
    pub mi: f64,
    pub sgmi: f64,
    pub slot: f64,
    pub igs: f64,
}

pub fn library(c: &Case, lambda: f64) -> Values {
    let params = ModelParams::new();
    let mut tape = Tape::new(&params);
    let q = queues_of(&c.past, c.ns);
    let u = tape.constant(Tensor::row_vector(c.anchors[0].clone()));
    let words = tape.constant(Tensor::from_rows(&c.anchors));
    let labels: Vec<Vec<f64>> = c.cur.slot_ids.iter().map(|&s| one_hot(s, c.ns)).collect();
    let mi = multi_intent_scl(&mut tape, u, &c.cur.intent, &q, TAU).unwrap();
    let sgmi =
        sg_multi_intent_scl(&mut tape, u, &c.cur.intent, &c.cur.sentence_slots, &q, lambda, TAU).unwrap();
    let slot = slot_scl(&mut tape, words, &labels, &q, TAU).unwrap();
    let igs = ig_slot_scl(&mut tape, words, &labels, &c.cur.intent, &q, lambda, TAU).unwrap();
    Values {
        mi: tape.scalar(mi),
        sgmi: tape.scalar(sgmi),
        slot: tape.scalar(slot),
        igs: tape.scalar(igs),
    }
}

pub fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-10 * b.abs().max(1.0)
}

/// Largest relative deviation of the four terms from the references.
pub fn check_references(trials: usize) -> Result<f64, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for trial in 0..trials {
        let c = case(&mut rng);
        let got = library(&c, c.lambda);
        let a = &c.anchors[0];
        let want = [
            ("MI", got.mi, ref_multi_intent(a, &c.cur.intent, &c.past)),
            ("SGMI", got.sgmi, ref_sg_multi_intent(a, &c.cur, &c.past, c.lambda)),
            ("S", got.slot, ref_slot(&c.anchors, &c.cur, &c.past, c.ns, false, 0.0)),
            ("IGS", got.igs, ref_slot(&c.anchors, &c.cur, &c.past, c.ns, true, c.lambda)),
        ];
        for (name, g, w) in want {
            worst = worst.max((g - w).abs() / w.abs().max(1.0));
            if !close(g, w) {
                return Err(format!("trial {trial} {name}: {g} vs {w}"));
            }
        }
    }
    Ok(worst)
}

/// With `lambda = 0` and identical stage features the co-guiding terms equal
/// the single-task terms bit for bit.
pub fn check_lambda_zero(trials: usize) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for trial in 0..trials {
        let mut c = case(&mut rng);
        for p in &mut c.past {
            p.utterance1 = p.utterance0.clone();
            p.words1 = p.words0.clone();
        }
        let v = library(&c, 0.0);
        if v.sgmi != v.mi || v.igs != v.slot {
            return Err(format!("trial {trial}: SGMI {} vs MI {}, IGS {} vs S {}", v.sgmi, v.mi, v.igs, v.slot));
        }
    }
    Ok(())
}

/// `mu` sums to one whenever some similarity is positive, else is all zero.
pub fn check_mu(trials: usize) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..trials {
        let sims: Vec<f64> = (0..rng.gen_range(1..8)).map(|_| f64::from(rng.gen_range(0u8..3))).collect();
        let mu = mu_weights(&sims);
        let ok = if sims.iter().sum::<f64>() > 0.0 {
            (mu.iter().sum::<f64>() - 1.0).abs() < 1e-12
        } else {
            mu.iter().all(|&m| m == 0.0)
        };
        if !ok {
            return Err(format!("mu {mu:?} for similarities {sims:?}"));
        }
    }
    Ok(())
}
