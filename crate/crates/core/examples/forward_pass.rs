//! Two-stage forward pass of an untrained model on one utterance.

use coguiding::corpus::{generate_synthetic, Vocabularies};
use coguiding::model::{init_params, CoGuidingNet, ModelConfig};

fn main() -> coguiding::Result<()> {
    let corpus = generate_synthetic(4, 8, 3)?;
    let vocab = Vocabularies::build(&corpus, false);
    let cfg = ModelConfig::new(vocab.num_words(), vocab.num_intents(), vocab.num_slots());
    let net = CoGuidingNet::new(cfg.clone())?;
    let params = init_params(&cfg, 0);

    let sample = &corpus[0];
    let trace = net.forward(&params, &vocab.word_ids(&sample.tokens), None)?;
    println!("tokens    {:?}", sample.tokens);
    println!("stage-1 slots {:?}", trace.estimated_slots);
    println!("stage-1 intents {:?}", trace.estimated_intents);
    let p = trace.prediction(cfg.threshold);
    let slots: Vec<&str> = p.slots.iter().map(|&s| vocab.slots.label(s).unwrap_or("?")).collect();
    let intents: Vec<&str> = p.intents.iter().map(|&i| vocab.intents.label(i).unwrap_or("?")).collect();
    println!("stage-2 slots {slots:?}");
    println!("stage-2 intents {intents:?}");
    println!("intent probs {:?}", trace.tape.value(trace.stage2.intent_probs).shape());
    println!("tape length {}", trace.tape.len());
    Ok(())
}
