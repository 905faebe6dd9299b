//! Training loop, evaluation, checkpoints and the finite-difference
//! gradient check.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{encode_all, EncodedSample, Sample, Vocabularies};
use crate::error::{Error, Result};
use crate::layers::Activation;
use crate::metrics::{EvalReport, Labelled};
use crate::model::{init_params, CoGuidingNet, ForwardTrace, ModelConfig};
use crate::objectives::{
    queue_entry, sample_objective, GoldLabels, LossParts, ObjectiveConfig, QueueBatch, QueueEntry,
    SampleQueues,
};
use crate::tensor::{read_checkpoint, write_checkpoint, GradMap, ModelParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub word_dim: usize,
    pub label_dim: usize,
    pub hidden_dim: usize,
    pub attention_dim: usize,
    pub decoder_dim: usize,
    pub heads: usize,
    pub gnn_layers: usize,
    pub window: usize,
    pub threshold: f64,
    pub activation: Activation,
    pub tie_decoders: bool,
    pub collapse_relations: bool,
    pub literal_sqrt_d: bool,
    pub s2i_guidance: bool,
    pub i2s_guidance: bool,
    pub dropout: f64,
    pub objective: ObjectiveConfig,
    pub lr: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Epochs without dev improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    pub lowercase: bool,
    pub shuffle: bool,
    pub token_f1: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            word_dim: 256,
            label_dim: 256,
            hidden_dim: 256,
            attention_dim: 256,
            decoder_dim: 256,
            heads: 4,
            gnn_layers: 2,
            window: 3,
            threshold: 0.5,
            activation: Activation::LeakyRelu,
            tie_decoders: false,
            collapse_relations: false,
            literal_sqrt_d: true,
            s2i_guidance: true,
            i2s_guidance: true,
            dropout: 0.0,
            objective: ObjectiveConfig::default(),
            lr: 1e-3,
            weight_decay: 1e-6,
            batch_size: 16,
            epochs: 100,
            patience: 50,
            seed: 0,
            lowercase: false,
            shuffle: true,
            token_f1: false,
        }
    }
}

impl TrainConfig {
    /// Small dimensions and a faster step size for desk-scale corpora.
    pub fn small() -> Self {
        TrainConfig {
            word_dim: 32,
            label_dim: 32,
            hidden_dim: 32,
            attention_dim: 16,
            decoder_dim: 32,
            heads: 2,
            lr: 5e-3,
            batch_size: 4,
            epochs: 300,
            ..TrainConfig::default()
        }
    }

    /// [`TrainConfig::small`] tuned to memorise a 20-utterance corpus: no
    /// neighbouring tokens in the graphs, heavier margin penalties and a
    /// stop 100 epochs after the last dev improvement.
    pub fn overfit() -> Self {
        let mut cfg = TrainConfig { window: 0, patience: 100, seed: 7, ..TrainConfig::small() };
        cfg.objective.beta_i = 10.0;
        cfg.objective.beta_s = 10.0;
        cfg
    }

    pub fn model_config(&self, vocab: &Vocabularies) -> ModelConfig {
        ModelConfig {
            vocab_size: vocab.num_words(),
            num_intents: vocab.num_intents(),
            num_slots: vocab.num_slots(),
            word_dim: self.word_dim,
            label_dim: self.label_dim,
            hidden_dim: self.hidden_dim,
            attention_dim: self.attention_dim,
            decoder_dim: self.decoder_dim,
            heads: self.heads,
            gnn_layers: self.gnn_layers,
            window: self.window,
            activation: self.activation,
            threshold: self.threshold,
            tie_decoders: self.tie_decoders,
            collapse_relations: self.collapse_relations,
            literal_sqrt_d: self.literal_sqrt_d,
            s2i_guidance: self.s2i_guidance,
            i2s_guidance: self.i2s_guidance,
            dropout: self.dropout,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.objective.validate()?;
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config("lr must be positive".into()));
        }
        if self.weight_decay < 0.0 {
            return Err(Error::Config("weight_decay must be non-negative".into()));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::Config("batch_size and epochs must be positive".into()));
        }
        Ok(())
    }
}

/// First and second Adam moments, shaped like the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamMoments {
    pub first: BTreeMap<String, Vec<f64>>,
    pub second: BTreeMap<String, Vec<f64>>,
}

impl AdamMoments {
    pub fn zeros_like(params: &ModelParams) -> Self {
        let zeros: BTreeMap<_, _> = params
            .iter()
            .map(|(k, t)| (k.clone(), vec![0.0; t.len()]))
            .collect();
        AdamMoments { first: zeros.clone(), second: zeros }
    }
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Bias-corrected Adam with L2 weight decay folded into the gradient.
pub fn adam_step(
    params: &mut ModelParams,
    grads: &GradMap,
    moments: &mut AdamMoments,
    lr: f64,
    weight_decay: f64,
    t: u64,
) -> Result<()> {
    if t == 0 {
        return Err(Error::Training("Adam step counter starts at 1".into()));
    }
    let c1 = 1.0 - ADAM_BETA1.powi(t as i32);
    let c2 = 1.0 - ADAM_BETA2.powi(t as i32);
    for (path, theta) in params.iter_mut() {
        let g = grads
            .get(path)
            .ok_or_else(|| Error::Training(format!("no gradient for `{path}`")))?;
        let m = moments.first.get_mut(path).expect("moments mirror params");
        let v = moments.second.get_mut(path).expect("moments mirror params");
        for (((x, &gx), mx), vx) in theta.data_mut().iter_mut().zip(g.data()).zip(m).zip(v) {
            let gx = gx + weight_decay * *x;
            *mx = ADAM_BETA1 * *mx + (1.0 - ADAM_BETA1) * gx;
            *vx = ADAM_BETA2 * *vx + (1.0 - ADAM_BETA2) * gx * gx;
            let mh = *mx / c1;
            let vh = *vx / c2;
            *x -= lr * mh / (vh.sqrt() + ADAM_EPS);
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BestRecord {
    pub overall_acc: f64,
    pub epoch: usize,
    pub checkpoint: Option<PathBuf>,
}

pub struct TrainState {
    pub net: CoGuidingNet,
    pub params: ModelParams,
    pub moments: AdamMoments,
    pub queues: SampleQueues,
    pub step: u64,
    pub epoch: usize,
    pub best: Option<BestRecord>,
    pub rng: ChaCha8Rng,
}

impl TrainState {
    pub fn new(model: ModelConfig, objective: &ObjectiveConfig, seed: u64) -> Result<Self> {
        let net = CoGuidingNet::new(model)?;
        let params = init_params(&net.config, seed);
        Ok(TrainState {
            moments: AdamMoments::zeros_like(&params),
            params,
            net,
            queues: SampleQueues::new(objective.queue_size),
            step: 0,
            epoch: 0,
            best: None,
            rng: ChaCha8Rng::seed_from_u64(seed ^ ORDER_STREAM),
        })
    }
}

// separates the shuffling stream from the initialisation stream
const ORDER_STREAM: u64 = 0x9e37_79b9_7f4a_7c15;

/// Training targets for one sample.
#[derive(Debug, Clone)]
pub struct TrainExample {
    pub encoded: EncodedSample,
    pub sentence_slots: Vec<f64>,
}

pub fn prepare_examples(samples: &[Sample], vocab: &Vocabularies) -> Result<Vec<TrainExample>> {
    let outside = vocab.outside_id();
    encode_all(samples, vocab).map(|enc| {
        enc.into_iter()
            .map(|e| {
                let sentence_slots = GoldLabels::new(&e, vocab.num_slots(), outside).sentence_slots;
                TrainExample { encoded: e, sentence_slots }
            })
            .collect()
    })
}

struct SampleResult {
    grads: GradMap,
    parts: LossParts,
    entry: QueueEntry,
}

fn run_sample(
    state: &TrainState,
    ex: &TrainExample,
    objective: &ObjectiveConfig,
    dropout: Option<&mut ChaCha8Rng>,
) -> Result<SampleResult> {
    let mut trace = state.net.forward(&state.params, &ex.encoded.word_ids, dropout)?;
    let gold = GoldLabels { sample: &ex.encoded, sentence_slots: ex.sentence_slots.clone() };
    let vars = sample_objective(&mut trace, &gold, &state.queues, objective)?;
    let parts = vars.values(&trace.tape);
    if !parts.total.is_finite() {
        return Err(Error::NonFinite(format!("loss parts {parts:?}")));
    }
    let grads = trace.tape.backward(vars.total)?;
    Ok(SampleResult { grads, parts, entry: queue_entry(&trace, &gold) })
}

/// One pass over `examples`; returns the summed loss components.
pub fn train_epoch(state: &mut TrainState, examples: &[TrainExample], cfg: &TrainConfig) -> Result<LossParts> {
    let mut order: Vec<usize> = (0..examples.len()).collect();
    if cfg.shuffle {
        order.shuffle(&mut state.rng);
    }
    let mut epoch_parts = LossParts::default();
    for batch in order.chunks(cfg.batch_size) {
        let mut grads = GradMap::zeros_like(&state.params);
        let mut queued = QueueBatch::default();
        for &i in batch {
            let mut dropout_rng = (cfg.dropout > 0.0).then(|| ChaCha8Rng::seed_from_u64(state.rng.gen()));
            let r = run_sample(state, &examples[i], &cfg.objective, dropout_rng.as_mut())
                .map_err(|e| Error::Training(format!("epoch {} sample {i}: {e}", state.epoch + 1)))?;
            grads.add_assign(&r.grads);
            epoch_parts.add_assign(&r.parts);
            queued.push(r.entry);
        }
        grads.check_finite()?;
        state.step += 1;
        adam_step(&mut state.params, &grads, &mut state.moments, cfg.lr, cfg.weight_decay, state.step)?;
        if cfg.objective.scl {
            state.queues.push_batch(queued)?;
        }
    }
    state.epoch += 1;
    Ok(epoch_parts)
}

/// Summed loss components at fixed parameters, without dropout.
pub fn corpus_loss(
    net: &CoGuidingNet,
    params: &ModelParams,
    examples: &[TrainExample],
    queues: &SampleQueues,
    objective: &ObjectiveConfig,
) -> Result<LossParts> {
    let mut total = LossParts::default();
    for ex in examples {
        let mut trace = net.forward(params, &ex.encoded.word_ids, None)?;
        let gold = GoldLabels { sample: &ex.encoded, sentence_slots: ex.sentence_slots.clone() };
        let vars = sample_objective(&mut trace, &gold, queues, objective)?;
        total.add_assign(&vars.values(&trace.tape));
    }
    Ok(total)
}

pub fn predict_labels(
    net: &CoGuidingNet,
    params: &ModelParams,
    vocab: &Vocabularies,
    tokens: &[String],
) -> Result<Labelled> {
    let ids = vocab.word_ids(tokens);
    let pred = net.predict(params, &ids)?;
    let label = |idx: &crate::corpus::LabelIndex, i: usize| {
        idx.label(i).map(str::to_string).ok_or_else(|| Error::UnknownLabel {
            kind: "id",
            label: i.to_string(),
        })
    };
    Ok(Labelled {
        intents: pred
            .intents
            .iter()
            .map(|&i| label(&vocab.intents, i))
            .collect::<Result<BTreeSet<_>>>()?,
        slots: pred.slots.iter().map(|&s| label(&vocab.slots, s)).collect::<Result<_>>()?,
    })
}

/// Side-effect free evaluation of `params` on raw samples.
pub fn evaluate(
    net: &CoGuidingNet,
    params: &ModelParams,
    vocab: &Vocabularies,
    samples: &[Sample],
    token_f1: bool,
) -> Result<EvalReport> {
    let mut preds = Vec::with_capacity(samples.len());
    let mut golds = Vec::with_capacity(samples.len());
    for s in samples {
        preds.push(predict_labels(net, params, vocab, &s.tokens)?);
        golds.push(Labelled { intents: s.intents.clone(), slots: s.slot_tags.clone() });
    }
    Ok(EvalReport::compute(&preds, &golds, token_f1))
}

/// Everything needed to rebuild a model next to its checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub model: ModelConfig,
    pub vocab: Vocabularies,
}

pub fn config_hash(model: &ModelConfig) -> [u8; 32] {
    let bytes = serde_json::to_vec(model).expect("config serializes");
    Sha256::digest(&bytes).into()
}

pub fn meta_path(checkpoint: &Path) -> PathBuf {
    let mut s = checkpoint.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

pub fn save_model(path: &Path, params: &ModelParams, meta: &CheckpointMeta) -> Result<()> {
    write_checkpoint(path, params, &config_hash(&meta.model))?;
    fs::write(meta_path(path), serde_json::to_string_pretty(meta)?)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<(CoGuidingNet, ModelParams, Vocabularies)> {
    let mp = meta_path(path);
    let text = fs::read_to_string(&mp).map_err(|e| Error::Checkpoint {
        path: mp.clone(),
        message: e.to_string(),
    })?;
    let mut meta: CheckpointMeta = serde_json::from_str(&text)?;
    meta.vocab.reindex();
    let (params, hash) = read_checkpoint(path)?;
    if hash != config_hash(&meta.model) {
        return Err(Error::Checkpoint {
            path: path.to_path_buf(),
            message: "config hash does not match the sidecar metadata".into(),
        });
    }
    let net = CoGuidingNet::new(meta.model)?;
    params.check_layout(&crate::model::zero_params(&net.config))?;
    Ok((net, params, meta.vocab))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: LossParts,
    pub dev: EvalReport,
}

pub struct TrainOutcome {
    pub net: CoGuidingNet,
    /// Parameters and queues after the last epoch run.
    pub final_state: TrainState,
    /// Parameters of the best dev epoch.
    pub params: ModelParams,
    pub vocab: Vocabularies,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_dev: EvalReport,
}

fn write_loss_csv(path: &Path, history: &[EpochRecord]) -> Result<()> {
    let mut f = fs::File::create(path)?;
    writeln!(f, "epoch,{},dev_overall_acc", LossParts::CSV_HEADER)?;
    for r in history {
        writeln!(f, "{},{},{:.6}", r.epoch, r.loss.csv_fields(), r.dev.overall_acc)?;
    }
    Ok(())
}

/// Trains on `train`, selects on `dev` overall accuracy and stops early
/// after `patience` flat epochs. With `out_dir` the best checkpoint, its
/// metadata and `losses.csv` are written there.
pub fn fit(
    cfg: &TrainConfig,
    train: &[Sample],
    dev: &[Sample],
    out_dir: Option<&Path>,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Training("training split is empty".into()));
    }
    let vocab = Vocabularies::build(train, cfg.lowercase);
    let examples = prepare_examples(train, &vocab)?;
    let mut state = TrainState::new(cfg.model_config(&vocab), &cfg.objective, cfg.seed)?;
    let dev = if dev.is_empty() { train } else { dev };
    let meta = CheckpointMeta { model: state.net.config.clone(), vocab: vocab.clone() };
    let ckpt = out_dir.map(|d| d.join("best.ckpt"));
    if let Some(d) = out_dir {
        fs::create_dir_all(d)?;
    }

    let mut history = Vec::new();
    let mut best_params = state.params.clone();
    let mut best_dev = evaluate(&state.net, &state.params, &vocab, dev, cfg.token_f1)?;
    let mut best_epoch = 0;
    let mut best_acc = f64::NEG_INFINITY;
    while state.epoch < cfg.epochs {
        let loss = train_epoch(&mut state, &examples, cfg)?;
        let report = evaluate(&state.net, &state.params, &vocab, dev, cfg.token_f1)?;
        let record = EpochRecord { epoch: state.epoch, loss, dev: report };
        on_epoch(&record);
        history.push(record);
        if report.overall_acc > best_acc {
            best_acc = report.overall_acc;
            best_epoch = state.epoch;
            best_dev = report;
            best_params = state.params.clone();
            if let Some(p) = &ckpt {
                save_model(p, &best_params, &meta)?;
            }
            state.best = Some(BestRecord {
                overall_acc: best_acc,
                epoch: best_epoch,
                checkpoint: ckpt.clone(),
            });
        } else if state.epoch - best_epoch >= cfg.patience {
            break;
        }
    }
    if let Some(d) = out_dir {
        write_loss_csv(&d.join("losses.csv"), &history)?;
    }
    Ok(TrainOutcome {
        net: state.net.clone(),
        final_state: state,
        params: best_params,
        vocab,
        history,
        best_epoch,
        best_dev,
    })
}

/// Settings of the finite-difference gradient check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckConfig {
    pub seed: u64,
    pub min_params: usize,
    pub epsilon: f64,
    pub tolerance: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig { seed: 0, min_params: 200, epsilon: 1e-4, tolerance: 1e-4 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TermCheck {
    pub term: String,
    pub max_rel_error: f64,
    pub worst_param: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub checked: usize,
    /// Perturbations rejected because they crossed a kink or flipped a
    /// discrete label estimate.
    pub skipped: usize,
    pub max_rel_error: f64,
    pub worst_param: String,
    pub terms: Vec<TermCheck>,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error <= self.tolerance && self.terms.iter().all(|t| t.max_rel_error <= self.tolerance)
    }
}

/// `|a - n| / max(|a|, |n|, 1e-6 max(1, |loss|))`. The floor tracks the
/// roundoff resolution of a central difference on a loss of that size.
pub fn relative_error(analytic: f64, numeric: f64, loss: f64) -> f64 {
    let floor = 1e-6 * loss.abs().max(1.0);
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Micro model, samples and pre-filled queues used by the gradient check.
pub struct MicroProblem {
    pub net: CoGuidingNet,
    pub params: ModelParams,
    pub examples: Vec<TrainExample>,
    pub queues: SampleQueues,
    pub objective: ObjectiveConfig,
}

pub fn micro_problem(seed: u64) -> Result<MicroProblem> {
    let (n_i, n_s, vocab) = (3, 4, 12);
    let model = ModelConfig {
        word_dim: 8,
        label_dim: 6,
        hidden_dim: 8,
        attention_dim: 4,
        decoder_dim: 8,
        heads: 2,
        window: 1,
        ..ModelConfig::new(vocab, n_i, n_s)
    };
    let net = CoGuidingNet::new(model)?;
    let params = init_params(&net.config, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    let random_intents = |rng: &mut ChaCha8Rng| {
        let mut v: Vec<f64> = (0..n_i).map(|_| f64::from(rng.gen_bool(0.5))).collect();
        v[rng.gen_range(0..n_i)] = 1.0;
        v
    };
    let mut examples = Vec::new();
    for _ in 0..2 {
        let n = rng.gen_range(3..=5);
        let slot_ids: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n_s)).collect();
        let intent_multi_hot = random_intents(&mut rng);
        let encoded = EncodedSample {
            word_ids: (0..n).map(|_| rng.gen_range(0..vocab)).collect(),
            slot_one_hots: slot_ids.iter().map(|&s| crate::corpus::one_hot(s, n_s)).collect(),
            intent_ids: (0..n_i).filter(|&j| intent_multi_hot[j] == 1.0).collect(),
            slot_ids,
            intent_multi_hot,
        };
        let sentence_slots = crate::objectives::sentence_slot_vector(&encoded.slot_ids, n_s, Some(0));
        examples.push(TrainExample { encoded, sentence_slots });
    }
    let objective = ObjectiveConfig { queue_size: 3, ..ObjectiveConfig::default() };
    let mut queues = SampleQueues::new(objective.queue_size);
    let d = net.config.hidden_dim;
    for _ in 0..objective.queue_size {
        let n = rng.gen_range(2..=4);
        let vec_d = |rng: &mut ChaCha8Rng| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<f64>>();
        let slots: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n_s)).collect();
        queues.push(QueueEntry {
            utterance0: vec_d(&mut rng),
            utterance1: vec_d(&mut rng),
            words0: (0..n).map(|_| vec_d(&mut rng)).collect(),
            words1: (0..n).map(|_| vec_d(&mut rng)).collect(),
            intent_label: random_intents(&mut rng),
            slot_labels: slots.iter().map(|&s| crate::corpus::one_hot(s, n_s)).collect(),
            sentence_slots: crate::objectives::sentence_slot_vector(&slots, n_s, Some(0)),
        })?;
    }
    Ok(MicroProblem { net, params, examples, queues, objective })
}

struct Evaluation {
    terms: Vec<(&'static str, f64)>,
    signature: Vec<u64>,
    decisions: Vec<(Vec<usize>, Vec<usize>)>,
}

fn evaluate_terms(
    p: &MicroProblem,
    params: &ModelParams,
    with_grads: bool,
) -> Result<(Evaluation, Vec<Vec<GradMap>>)> {
    let mut sums: Vec<(&'static str, f64)> = Vec::new();
    let mut signature = Vec::new();
    let mut decisions = Vec::new();
    let mut grads = Vec::new();
    for ex in &p.examples {
        let mut trace: ForwardTrace = p.net.forward(params, &ex.encoded.word_ids, None)?;
        let gold = GoldLabels { sample: &ex.encoded, sentence_slots: ex.sentence_slots.clone() };
        let vars = sample_objective(&mut trace, &gold, &p.queues, &p.objective)?;
        let mut per_term = Vec::new();
        for (k, (name, v)) in vars.terms().into_iter().enumerate() {
            if sums.len() <= k {
                sums.push((name, 0.0));
            }
            sums[k].1 += trace.tape.scalar(v);
            if with_grads {
                per_term.push(trace.tape.backward(v)?);
            }
        }
        grads.push(per_term);
        signature.push(trace.tape.pattern_signature());
        decisions.push((trace.estimated_slots.clone(), trace.estimated_intents.clone()));
    }
    Ok((Evaluation { terms: sums, signature, decisions }, grads))
}

/// Compares analytic gradients of every loss term against central finite
/// differences on sampled coordinates of the micro model.
pub fn grad_check(cfg: &GradCheckConfig) -> Result<GradCheckReport> {
    let problem = micro_problem(cfg.seed)?;
    let (base, grads) = evaluate_terms(&problem, &problem.params, true)?;
    let n_terms = base.terms.len();
    let analytic = |term: usize, path: &str, idx: usize| -> f64 {
        grads.iter().map(|g| g[term].get(path).expect("full map").data()[idx]).sum()
    };

    // one coordinate from every tensor, then random extras
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(2));
    let tensors: Vec<(String, usize)> = problem.params.iter().map(|(k, t)| (k.clone(), t.len())).collect();
    let mut candidates: Vec<(String, usize)> =
        tensors.iter().map(|(k, len)| (k.clone(), rng.gen_range(0..*len))).collect();
    while candidates.len() < cfg.min_params.max(tensors.len()) * 2 {
        let (k, len) = &tensors[rng.gen_range(0..tensors.len())];
        candidates.push((k.clone(), rng.gen_range(0..*len)));
    }

    let mut worst = vec![(0.0f64, String::new()); n_terms];
    let (mut checked, mut skipped) = (0, 0);
    let mut params = problem.params.clone();
    for (path, idx) in candidates {
        if checked >= cfg.min_params {
            break;
        }
        let orig = params.get(&path).expect("sampled").data()[idx];
        params.get_mut(&path).expect("sampled").data_mut()[idx] = orig + cfg.epsilon;
        let plus = evaluate_terms(&problem, &params, false)?.0;
        params.get_mut(&path).expect("sampled").data_mut()[idx] = orig - cfg.epsilon;
        let minus = evaluate_terms(&problem, &params, false)?.0;
        params.get_mut(&path).expect("sampled").data_mut()[idx] = orig;
        let smooth = [&plus, &minus]
            .iter()
            .all(|e| e.signature == base.signature && e.decisions == base.decisions);
        if !smooth {
            skipped += 1;
            continue;
        }
        checked += 1;
        for (t, w) in worst.iter_mut().enumerate() {
            let numeric = (plus.terms[t].1 - minus.terms[t].1) / (2.0 * cfg.epsilon);
            let err = relative_error(analytic(t, &path, idx), numeric, base.terms[t].1);
            if err > w.0 {
                *w = (err, format!("{path}[{idx}]"));
            }
        }
    }
    let total = n_terms - 1;
    Ok(GradCheckReport {
        checked,
        skipped,
        max_rel_error: worst[total].0,
        worst_param: worst[total].1.clone(),
        terms: base
            .terms
            .iter()
            .zip(&worst)
            .map(|((name, _), (e, p))| TermCheck {
                term: name.to_string(),
                max_rel_error: *e,
                worst_param: p.clone(),
            })
            .collect(),
        tolerance: cfg.tolerance,
    })
}
