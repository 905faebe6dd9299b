//! Acceptance suite. Every criterion prints one `PASS`/`FAIL`/`SKIP` line to
//! stderr (uncaptured) and the test fails if any criterion fails.
//!
//! Run with `cargo test -p coguiding --test acceptance`.

mod support;

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use coguiding::corpus::{generate_synthetic, read_dataset, Sample, Vocabularies};
use coguiding::metrics::{EvalReport, Labelled};
use coguiding::model::{init_params, CoGuidingNet, ModelConfig};
use coguiding::train::{
    corpus_loss, evaluate, fit, grad_check, prepare_examples, GradCheckConfig, TrainConfig,
};

enum Verdict {
    Pass(String),
    Fail(String),
    Skip(String),
}

fn report(id: usize, name: &str, verdict: &Verdict) {
    let (tag, detail) = match verdict {
        Verdict::Pass(d) => ("PASS", d),
        Verdict::Fail(d) => ("FAIL", d),
        Verdict::Skip(d) => ("SKIP", d),
    };
    let line = format!("[{tag}] AC{id} {name}: {detail}\n");
    let _ = std::io::stderr().lock().write_all(line.as_bytes());
}

type Criterion = (&'static str, fn() -> Verdict);

fn verdict(ok: bool, detail: String) -> Verdict {
    if ok {
        Verdict::Pass(detail)
    } else {
        Verdict::Fail(detail)
    }
}

fn gradient_oracle() -> Verdict {
    let start = Instant::now();
    let report = match grad_check(&GradCheckConfig::default()) {
        Ok(r) => r,
        Err(e) => return Verdict::Fail(e.to_string()),
    };
    let elapsed = start.elapsed();
    let mut detail = format!(
        "{} coords, {} skipped, max rel err {:.2e} ({}), {:.1}s; per term:",
        report.checked,
        report.skipped,
        report.max_rel_error,
        report.worst_param,
        elapsed.as_secs_f64()
    );
    for t in &report.terms {
        let _ = write!(detail, " {}={:.1e}", t.term, t.max_rel_error);
    }
    let ok = report.passed() && report.terms.len() == 9 && report.checked >= 200 && elapsed < Duration::from_secs(60);
    verdict(ok, detail)
}

fn graph_oracle() -> Verdict {
    let start = Instant::now();
    match support::graph_ref::check_all_small_graphs() {
        Ok(n) => {
            let t = start.elapsed();
            verdict(t < Duration::from_secs(5), format!("{n} graphs equal the enumerator in {:.3}s", t.as_secs_f64()))
        }
        Err(e) => Verdict::Fail(e),
    }
}

fn hgat_invariants() -> Verdict {
    use support::gat_ref::{check_collapse, check_equivariance, check_row_sums};
    let rows = check_row_sums(20);
    let perm = check_equivariance(20);
    let collapse = check_collapse(20);
    match (rows, perm, collapse) {
        (Ok(()), Ok(p), Ok(c)) => Verdict::Pass(format!(
            "row sums 1 +- 1e-10; equivariance err {p:.1e} on 20 graphs; collapsed vs reference GAT err {c:.1e}"
        )),
        (r, p, c) => Verdict::Fail(format!("rows {r:?}; equivariance {p:?}; collapse {c:?}")),
    }
}

fn scl_oracles() -> Verdict {
    use support::scl_ref::{check_lambda_zero, check_mu, check_references};
    match (check_references(100), check_mu(200), check_lambda_zero(100)) {
        (Ok(err), Ok(()), Ok(())) => Verdict::Pass(format!(
            "4 terms x 100 instances, max rel err {err:.1e}; mu sums to 1; lambda=0 degenerations exact"
        )),
        (r, m, l) => Verdict::Fail(format!("references {r:?}; mu {m:?}; lambda=0 {l:?}")),
    }
}

/// Threshold on the margin penalties summed over every utterance of the
/// training corpus.
const MARGIN_LIMIT: f64 = 1e-3;

fn overfit() -> Verdict {
    let cfg = TrainConfig::overfit();
    let corpus = match generate_synthetic(6, 20, cfg.seed) {
        Ok(c) => c,
        Err(e) => return Verdict::Fail(e.to_string()),
    };
    let multi = corpus.iter().filter(|s| s.intents.len() > 1).count() as f64 / corpus.len() as f64;
    let start = Instant::now();
    let mut first_full = None;
    let mut losses = Vec::new();
    let outcome = fit(&cfg, &corpus, &corpus, None, |r| {
        losses.push(r.loss.total);
        if r.dev.overall_acc == 1.0 && first_full.is_none() {
            first_full = Some(r.epoch);
        }
    });
    let elapsed = start.elapsed();
    let outcome = match outcome {
        Ok(o) => o,
        Err(e) => return Verdict::Fail(e.to_string()),
    };
    let fs = &outcome.final_state;
    let final_report = evaluate(&fs.net, &fs.params, &outcome.vocab, &corpus, false);
    let margins = prepare_examples(&corpus, &outcome.vocab)
        .and_then(|ex| corpus_loss(&fs.net, &fs.params, &ex, &fs.queues, &cfg.objective));
    let (final_report, margins) = match (final_report, margins) {
        (Ok(r), Ok(m)) => (r, m),
        (Err(e), _) | (_, Err(e)) => return Verdict::Fail(e.to_string()),
    };
    let margin = margins.intent_margin + margins.slot_margin;
    let decreasing = losses.len() >= 10 && losses[9] < losses[0];
    let detail = format!(
        "{:.0}% multi-intent; overall_acc 1.0 first at epoch {:?}, final {:.2}; \
         L_mp_I {:.2e} + L_mp_S {:.2e} = {:.2e} summed over {} utterances \
         ({:.2e} per utterance, limit {:.0e}); loss falls over 10 epochs: {}; {:.0}s",
        multi * 100.0,
        first_full,
        final_report.overall_acc,
        margins.intent_margin,
        margins.slot_margin,
        margin,
        corpus.len(),
        margin / corpus.len() as f64,
        MARGIN_LIMIT,
        decreasing,
        elapsed.as_secs_f64()
    );
    let ok = multi >= 0.3
        && first_full.is_some_and(|e| e <= 300)
        && final_report.overall_acc == 1.0
        && margin < MARGIN_LIMIT
        && decreasing
        && elapsed < Duration::from_secs(300);
    verdict(ok, detail)
}

fn ablation_structure() -> Verdict {
    let corpus = generate_synthetic(6, 20, 1).expect("synthetic corpus");
    let vocab = Vocabularies::build(&corpus, false);
    let mut checked = 0;
    for (s2i, i2s) in [(false, true), (true, false)] {
        let mut cfg = ModelConfig::new(vocab.num_words(), vocab.num_intents(), vocab.num_slots());
        cfg.s2i_guidance = s2i;
        cfg.i2s_guidance = i2s;
        let net = CoGuidingNet::new(cfg.clone()).expect("valid config");
        for seed in 0..5 {
            let params = init_params(&cfg, seed);
            for s in &corpus {
                let ids = vocab.word_ids(&s.tokens);
                let trace = net.forward(&params, &ids, None).expect("forward");
                let (one, two) = (trace.stage1_prediction(cfg.threshold), trace.prediction(cfg.threshold));
                let same = if s2i { one.slots == two.slots } else { one.intents == two.intents };
                if !same {
                    let which = if s2i { "slot" } else { "intent" };
                    return Verdict::Fail(format!("{which} predictions differ with its guidance off (seed {seed})"));
                }
                checked += 1;
            }
        }
    }
    Verdict::Pass(format!("stage-1 == stage-2 on {checked} untrained forwards for S2I off and I2S off"))
}

fn determinism() -> Verdict {
    let cfg = TrainConfig { epochs: 4, patience: 4, window: 1, ..TrainConfig::small() };
    let corpus = generate_synthetic(4, 16, 5).expect("synthetic corpus");
    let dirs: Vec<_> = (0..2).map(|_| tempfile::tempdir().expect("tempdir")).collect();
    let mut artefacts = Vec::new();
    for d in &dirs {
        let out = match fit(&cfg, &corpus, &corpus, Some(d.path()), |_| {}) {
            Ok(o) => o,
            Err(e) => return Verdict::Fail(e.to_string()),
        };
        let report = evaluate(&out.net, &out.params, &out.vocab, &corpus, false).expect("evaluate");
        let read = |f: &str| std::fs::read(d.path().join(f)).unwrap_or_default();
        artefacts.push((read("best.ckpt"), read("best.ckpt.meta.json"), read("losses.csv"), report.to_json()));
    }
    let same = artefacts[0] == artefacts[1] && !artefacts[0].0.is_empty();
    verdict(same, format!("checkpoint {} bytes, loss CSV and report identical across two runs: {same}", artefacts[0].0.len()))
}

fn mixatis_dir() -> Option<PathBuf> {
    let candidates = [
        std::env::var_os("MIXATIS_DIR").map(PathBuf::from),
        Some(PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/MixATIS_clean"))),
    ];
    candidates.into_iter().flatten().find(|d| d.join("train.txt").is_file())
}

fn baseline(samples: &[Sample]) -> EvalReport {
    let golds: Vec<Labelled> = samples
        .iter()
        .map(|s| Labelled { intents: s.intents.clone(), slots: s.slot_tags.clone() })
        .collect();
    let preds: Vec<Labelled> = samples
        .iter()
        .map(|s| Labelled { intents: Default::default(), slots: vec!["O".into(); s.tokens.len()] })
        .collect();
    EvalReport::compute(&preds, &golds, false)
}

fn mixatis_smoke() -> Verdict {
    let Some(dir) = mixatis_dir() else {
        return Verdict::Skip("no MixATIS data (set MIXATIS_DIR to a directory with train.txt and dev.txt)".into());
    };
    let load = |f: &str| read_dataset(&dir.join(f));
    let (train, dev) = match (load("train.txt"), load("dev.txt")) {
        (Ok(t), Ok(d)) => (t, d),
        (Err(e), _) | (_, Err(e)) => return Verdict::Fail(e.to_string()),
    };
    let cfg = TrainConfig { epochs: 1, ..TrainConfig::default() };
    let out = match fit(&cfg, &train, &dev, None, |_| {}) {
        Ok(o) => o,
        Err(e) => return Verdict::Fail(e.to_string()),
    };
    let base = baseline(&dev);
    verdict(
        train.len() == 13_162 && out.best_dev.overall_acc > base.overall_acc,
        format!(
            "{} training utterances; 1-epoch dev overall_acc {:.4} vs baseline {:.4}",
            train.len(),
            out.best_dev.overall_acc,
            base.overall_acc
        ),
    )
}

#[test]
fn acceptance_criteria() {
    let criteria: [Criterion; 8] = [
        ("gradient oracle", gradient_oracle),
        ("graph oracle", graph_oracle),
        ("HGAT invariants", hgat_invariants),
        ("SCL oracles", scl_oracles),
        ("overfit", overfit),
        ("ablation structure", ablation_structure),
        ("determinism", determinism),
        ("MixATIS smoke", mixatis_smoke),
    ];
    let _ = std::io::stderr().lock().write_all(b"\n");
    let mut failed = Vec::new();
    for (i, (name, check)) in criteria.iter().enumerate() {
        let v = check();
        report(i + 1, name, &v);
        if let Verdict::Fail(d) = v {
            failed.push(format!("AC{} {name}: {d}", i + 1));
        }
    }
    assert!(failed.is_empty(), "failed criteria:\n{}", failed.join("\n"));
}
