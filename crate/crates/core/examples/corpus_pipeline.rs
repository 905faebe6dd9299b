//! Parses block-format data, builds vocabularies and encodes samples.
//!
//! ```text
//! cargo run --example corpus_pipeline -- [dataset.txt]
//! ```

use coguiding::corpus::{encode_all, generate_synthetic, read_dataset, serialize_dataset, Vocabularies};

fn main() -> coguiding::Result<()> {
    let samples = match std::env::args().nth(1) {
        Some(path) => read_dataset(path.as_ref())?,
        None => generate_synthetic(4, 6, 1)?,
    };
    print!("{}", serialize_dataset(&samples[..2.min(samples.len())]));

    let vocab = Vocabularies::build(&samples, true);
    println!(
        "{} words (UNK included), {} slot tags, {} intents",
        vocab.num_words(),
        vocab.num_slots(),
        vocab.num_intents()
    );
    for (sample, enc) in samples.iter().zip(encode_all(&samples, &vocab)?).take(3) {
        println!("{:?}", sample.tokens);
        println!("  words {:?}  slots {:?}  intents {:?}", enc.word_ids, enc.slot_ids, enc.intent_ids);
        for issue in sample.validate() {
            println!("  orphan {} at {}", issue.tag, issue.position);
        }
    }
    Ok(())
}
