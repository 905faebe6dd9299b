//! Overfits a 20-utterance synthetic corpus with the contrastive objective.
//!
//! ```text
//! cargo run --release --example train_synthetic -- [seed] [epochs]
//! ```

use std::time::Instant;

use coguiding::corpus::generate_synthetic;
use coguiding::train::{fit, TrainConfig};

fn main() -> coguiding::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed = args.next().and_then(|s| s.parse().ok()).unwrap_or(7);
    let epochs = args.next().and_then(|s| s.parse().ok()).unwrap_or(300);
    let corpus = generate_synthetic(6, 20, seed)?;
    let multi = corpus.iter().filter(|s| s.intents.len() > 1).count();
    println!("{} utterances, {multi} with several intents", corpus.len());

    let cfg = TrainConfig { seed, epochs, ..TrainConfig::overfit() };
    let start = Instant::now();
    let outcome = fit(&cfg, &corpus, &corpus, None, |r| {
        if r.epoch % 10 == 0 || r.dev.overall_acc == 1.0 {
            println!(
                "epoch {:>3}  total {:>9.3}  L_I {:>8.3} L_S {:>8.3} mp_I {:.1e}  mp_S {:.1e} scl {:.1}/{:.1}/{:.1}/{:.1} intent {:.2} slot {:.2} overall {:.2}",
                r.epoch, r.loss.total, r.loss.intent, r.loss.slot, r.loss.intent_margin, r.loss.slot_margin,
                r.loss.multi_intent_scl, r.loss.slot_scl, r.loss.slot_guided_intent_scl, r.loss.intent_guided_slot_scl,
                r.dev.intent_acc, r.dev.slot_f1, r.dev.overall_acc
            );
        }
    })?;
    println!(
        "best overall_acc {:.3} at epoch {} after {:.1}s",
        outcome.best_dev.overall_acc,
        outcome.best_epoch,
        start.elapsed().as_secs_f64()
    );
    Ok(())
}
