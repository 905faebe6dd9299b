//! Command-line front end.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

use std::ffi::OsString;
use std::fs;
use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::corpus::{generate_synthetic, read_dataset, serialize_dataset, Sample};
use crate::error::Error;
use crate::graphs::{build_i2s_graph, build_s2i_graph};
use crate::train::{evaluate, fit, grad_check, load_model, predict_labels, GradCheckConfig, TrainConfig};

#[derive(Debug, Parser)]
#[command(name = "coguiding", version, about = "Joint multi-intent detection and slot filling")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model and write the best checkpoint, loss curve and test report.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a dataset.
    Eval(EvalArgs),
    /// Predict intents and slots for whitespace-tokenised utterances.
    Predict(PredictArgs),
    /// Finite-difference gradient check on a micro model.
    Gradcheck(GradcheckArgs),
    /// Print the edge lists of both graphs for the given sizes.
    GraphDump(GraphDumpArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// JSON file with training settings; unknown keys are rejected.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub train: Option<PathBuf>,
    #[arg(long)]
    pub dev: Option<PathBuf>,
    #[arg(long)]
    pub test: Option<PathBuf>,
    /// Generate a seeded synthetic corpus instead of reading files. Without
    /// --config the small desk-scale settings are used.
    #[arg(long)]
    pub synthetic: bool,
    #[arg(long, default_value_t = 200)]
    pub synthetic_size: usize,
    #[arg(long, default_value_t = 8)]
    pub synthetic_templates: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Train without the contrastive terms.
    #[arg(long)]
    pub no_scl: bool,
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub queue_size: Option<usize>,
    #[arg(long)]
    pub lambda_i: Option<f64>,
    #[arg(long)]
    pub lambda_s: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long, default_value = "run")]
    pub out_dir: PathBuf,
    /// Suppress the per-epoch progress lines.
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Dataset to score (block format, or JSON lines with a .jsonl extension).
    #[arg(long)]
    pub data: PathBuf,
    /// Score slots per token instead of per span.
    #[arg(long)]
    pub token_f1: bool,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// One utterance; otherwise lines are read from --input or stdin.
    #[arg(long)]
    pub text: Option<String>,
    #[arg(long)]
    pub input: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Print the error of every loss term.
    #[arg(long)]
    pub per_term: bool,
}

#[derive(Debug, Args)]
pub struct GraphDumpArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 1)]
    pub m: usize,
    #[arg(long, default_value_t = 1)]
    pub window: usize,
}

enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) => Failure::Usage(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

type CmdResult = std::result::Result<(), Failure>;

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = if code == 0 {
                write!(out, "{}", e.render())
            } else {
                write!(err, "{}", e.render())
            };
            return code;
        }
    };
    let result = match cli.command {
        Command::Train(a) => cmd_train(&a, out),
        Command::Eval(a) => cmd_eval(&a, out),
        Command::Predict(a) => cmd_predict(&a, out),
        Command::Gradcheck(a) => cmd_gradcheck(&a, out),
        Command::GraphDump(a) => cmd_graph_dump(&a, out),
    };
    match result {
        Ok(()) => 0,
        Err(Failure::Usage(m)) => {
            let _ = writeln!(err, "error: {m}");
            2
        }
        Err(Failure::Runtime(m)) => {
            let _ = writeln!(err, "error: {m}");
            1
        }
    }
}

fn require_file(path: &Path, what: &str) -> CmdResult {
    if path.is_file() {
        Ok(())
    } else {
        Err(Failure::Usage(format!("{what} `{}` does not exist", path.display())))
    }
}

fn load(path: &Path, what: &str) -> std::result::Result<Vec<Sample>, Failure> {
    require_file(path, what)?;
    read_dataset(path).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))
}

/// Base settings from `--config` (or defaults) with flag overrides applied.
pub fn effective_config(a: &TrainArgs) -> crate::Result<TrainConfig> {
    let mut cfg = match &a.config {
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| Error::Config(format!("cannot read `{}`: {e}", p.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| Error::Config(format!("`{}`: {e}", p.display())))?
        }
        None if a.synthetic => TrainConfig::small(),
        None => TrainConfig::default(),
    };
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if a.no_scl {
        cfg.objective.scl = false;
    }
    if let Some(w) = a.window {
        cfg.window = w;
    }
    if let Some(k) = a.queue_size {
        cfg.objective.queue_size = k;
    }
    if let Some(l) = a.lambda_i {
        cfg.objective.lambda_i = l;
    }
    if let Some(l) = a.lambda_s {
        cfg.objective.lambda_s = l;
    }
    if let Some(e) = a.epochs {
        cfg.epochs = e;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_train(a: &TrainArgs, out: &mut dyn Write) -> CmdResult {
    let cfg = effective_config(a)?;
    fs::create_dir_all(&a.out_dir)?;
    let (train, dev, test) = if a.synthetic {
        let all = generate_synthetic(a.synthetic_templates, a.synthetic_size, cfg.seed)?;
        let n_dev = all.len() / 10;
        let n_train = all.len() - 2 * n_dev;
        let (train, rest) = all.split_at(n_train);
        let (dev, test) = rest.split_at(n_dev);
        for (name, split) in [("train.txt", train), ("dev.txt", dev), ("test.txt", test)] {
            fs::write(a.out_dir.join(name), serialize_dataset(split))?;
        }
        (train.to_vec(), dev.to_vec(), test.to_vec())
    } else {
        let train = match &a.train {
            Some(p) => load(p, "training file")?,
            None => return Err(Failure::Usage("--train or --synthetic is required".into())),
        };
        let dev = a.dev.as_deref().map(|p| load(p, "dev file")).transpose()?.unwrap_or_default();
        let test = a.test.as_deref().map(|p| load(p, "test file")).transpose()?.unwrap_or_default();
        (train, dev, test)
    };

    let echoed = serde_json::to_string_pretty(&cfg).expect("config serializes");
    fs::write(a.out_dir.join("config.json"), &echoed)?;
    writeln!(out, "effective config:\n{echoed}")?;
    writeln!(out, "train {} / dev {} / test {} samples", train.len(), dev.len(), test.len())?;

    let quiet = a.quiet;
    let mut progress = Vec::new();
    let outcome = fit(&cfg, &train, &dev, Some(&a.out_dir), |r| {
        if !quiet {
            progress.push(format!(
                "epoch {:>4}  loss {:>12.4}  dev intent {:.4}  slot f1 {:.4}  overall {:.4}",
                r.epoch, r.loss.total, r.dev.intent_acc, r.dev.slot_f1, r.dev.overall_acc
            ));
        }
    })?;
    for line in progress {
        writeln!(out, "{line}")?;
    }
    writeln!(out, "best dev overall_acc {:.4} at epoch {}", outcome.best_dev.overall_acc, outcome.best_epoch)?;
    let eval_split = if test.is_empty() { &dev } else { &test };
    if !eval_split.is_empty() {
        let report = evaluate(&outcome.net, &outcome.params, &outcome.vocab, eval_split, cfg.token_f1)?;
        fs::write(a.out_dir.join("test_report.json"), report.to_json())?;
        writeln!(out, "{report}")?;
    }
    writeln!(out, "wrote {}", a.out_dir.join("best.ckpt").display())?;
    Ok(())
}

fn cmd_eval(a: &EvalArgs, out: &mut dyn Write) -> CmdResult {
    require_file(&a.checkpoint, "checkpoint")?;
    let data = load(&a.data, "dataset")?;
    let (net, params, vocab) = load_model(&a.checkpoint)?;
    let report = evaluate(&net, &params, &vocab, &data, a.token_f1)?;
    writeln!(out, "{report}")?;
    writeln!(out, "{}", report.to_json())?;
    Ok(())
}

fn cmd_predict(a: &PredictArgs, out: &mut dyn Write) -> CmdResult {
    require_file(&a.checkpoint, "checkpoint")?;
    let lines: Vec<String> = match (&a.text, &a.input) {
        (Some(t), _) => vec![t.clone()],
        (None, Some(p)) => {
            require_file(p, "input file")?;
            fs::read_to_string(p)?.lines().map(String::from).collect()
        }
        (None, None) => io::stdin().lock().lines().collect::<io::Result<_>>()?,
    };
    let (net, params, vocab) = load_model(&a.checkpoint)?;
    for line in lines {
        let tokens: Vec<String> = line.split_whitespace().map(String::from).collect();
        if tokens.is_empty() {
            continue;
        }
        let p = predict_labels(&net, &params, &vocab, &tokens)?;
        writeln!(out, "{}", json!({"tokens": tokens, "intents": p.intents, "slots": p.slots}))?;
    }
    Ok(())
}

fn cmd_gradcheck(a: &GradcheckArgs, out: &mut dyn Write) -> CmdResult {
    let report = grad_check(&GradCheckConfig { seed: a.seed, ..Default::default() })?;
    writeln!(out, "checked {} coordinates, {} skipped at kinks", report.checked, report.skipped)?;
    if a.per_term {
        writeln!(out, "{:<24} {:>12}  worst parameter", "term", "rel. error")?;
        for t in &report.terms {
            writeln!(out, "{:<24} {:>12.3e}  {}", t.term, t.max_rel_error, t.worst_param)?;
        }
    }
    writeln!(out, "max relative error {:.3e} at {}", report.max_rel_error, report.worst_param)?;
    if report.passed() {
        writeln!(out, "PASS (tolerance {:.0e})", report.tolerance)?;
        Ok(())
    } else {
        writeln!(out, "FAIL (tolerance {:.0e})", report.tolerance)?;
        Err(Failure::Runtime("gradient check exceeded tolerance".into()))
    }
}

fn cmd_graph_dump(a: &GraphDumpArgs, out: &mut dyn Write) -> CmdResult {
    let s2i = build_s2i_graph(a.n, a.window).map_err(|e| Failure::Usage(e.to_string()))?;
    let i2s = build_i2s_graph(a.n, a.m, a.window).map_err(|e| Failure::Usage(e.to_string()))?;
    writeln!(out, "# S2I ({} edges)", s2i.edges().len())?;
    write!(out, "{}", s2i.to_edge_list())?;
    writeln!(out, "# I2S ({} edges)", i2s.edges().len())?;
    write!(out, "{}", i2s.to_edge_list())?;
    Ok(())
}
