//! The four contrastive terms on hand-made anchors and a small queue.

use coguiding::autodiff::Tape;
use coguiding::objectives::{
    ig_slot_scl, joint_intent_similarity, mu_weights, multi_intent_scl, sentence_slot_vector,
    sg_multi_intent_scl, slot_scl, QueueEntry, SampleQueues,
};
use coguiding::tensor::{ModelParams, Tensor};

fn entry(u: [f64; 3], intent: [f64; 3], slots: &[usize]) -> QueueEntry {
    let one_hot = |s: usize| (0..4).map(|k| f64::from(u8::from(k == s))).collect::<Vec<_>>();
    QueueEntry {
        utterance0: u.to_vec(),
        utterance1: u.iter().map(|x| x * 0.5 + 0.1).collect(),
        words0: slots.iter().map(|&s| vec![u[0] + s as f64, u[1], 1.0]).collect(),
        words1: slots.iter().map(|&s| vec![u[0], u[1] - s as f64, 1.0]).collect(),
        intent_label: intent.to_vec(),
        slot_labels: slots.iter().map(|&s| one_hot(s)).collect(),
        sentence_slots: sentence_slot_vector(slots, 4, Some(0)),
    }
}

fn main() -> coguiding::Result<()> {
    let mut queues = SampleQueues::new(8);
    queues.push(entry([1.0, 0.0, 0.2], [1.0, 0.0, 0.0], &[0, 1, 2]))?;
    queues.push(entry([0.0, 1.0, 0.1], [0.0, 1.0, 0.0], &[0, 3]))?;
    queues.push(entry([0.7, 0.7, 0.0], [1.0, 1.0, 0.0], &[1, 2, 0, 3]))?;

    let intent = [1.0, 1.0, 0.0];
    let ss = sentence_slot_vector(&[0, 1, 2], 4, Some(0));
    let sims: Vec<f64> = queues
        .ql_i
        .iter()
        .zip(&queues.ql_ss)
        .map(|(li, lss)| joint_intent_similarity(&intent, &ss, li, lss, 0.5))
        .collect();
    println!("joint similarities {sims:?} -> mu {:?}", mu_weights(&sims));

    let params = ModelParams::new();
    let mut tape = Tape::new(&params);
    let u = tape.constant(Tensor::row_vector(vec![0.8, 0.5, 0.1]));
    let words = tape.constant(Tensor::from_rows(&[vec![1.0, 0.2, 1.0], vec![2.0, 0.0, 1.0], vec![0.1, 0.9, 1.0]]));
    let labels: Vec<Vec<f64>> = [0usize, 1, 2]
        .iter()
        .map(|&s| (0..4).map(|k| f64::from(u8::from(k == s))).collect())
        .collect();
    let tau = 0.07;
    let terms = [
        ("multi-intent", multi_intent_scl(&mut tape, u, &intent, &queues, tau)?),
        ("slot-guided multi-intent", sg_multi_intent_scl(&mut tape, u, &intent, &ss, &queues, 0.5, tau)?),
        ("slot", slot_scl(&mut tape, words, &labels, &queues, tau)?),
        ("intent-guided slot", ig_slot_scl(&mut tape, words, &labels, &intent, &queues, 0.5, tau)?),
    ];
    for (name, v) in terms {
        println!("{name:<26} {:.4}", tape.scalar(v));
    }
    Ok(())
}
