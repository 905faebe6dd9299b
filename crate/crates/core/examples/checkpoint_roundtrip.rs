//! Trains briefly, saves a checkpoint, reloads it and compares predictions.

use coguiding::corpus::generate_synthetic;
use coguiding::train::{evaluate, fit, load_model, predict_labels, TrainConfig};

fn main() -> coguiding::Result<()> {
    let corpus = generate_synthetic(4, 16, 2)?;
    let dir = std::env::temp_dir().join("coguiding-checkpoint-example");
    let cfg = TrainConfig { epochs: 3, window: 1, ..TrainConfig::small() };
    let outcome = fit(&cfg, &corpus, &corpus, Some(&dir), |r| {
        println!("epoch {}  loss {:.3}  overall {:.2}", r.epoch, r.loss.total, r.dev.overall_acc)
    })?;

    let path = dir.join("best.ckpt");
    let (net, params, vocab) = load_model(&path)?;
    println!("reloaded {} parameter tensors from {}", params.iter().count(), path.display());
    let before = evaluate(&outcome.net, &outcome.params, &outcome.vocab, &corpus, false)?;
    let after = evaluate(&net, &params, &vocab, &corpus, false)?;
    println!("overall before {:.4} after {:.4}", before.overall_acc, after.overall_acc);
    assert_eq!(before, after);

    let p = predict_labels(&net, &params, &vocab, &corpus[0].tokens)?;
    println!("{:?} -> {:?} {:?}", corpus[0].tokens, p.intents, p.slots);
    Ok(())
}
