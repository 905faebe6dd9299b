//! The two-stage co-guiding network.
//!
//! Stage one encodes the utterance and makes independent token-level intent
//! and slot estimates. Stage two re-decodes each task over a heterogeneous
//! graph that joins its own semantic states with the other task's estimated
//! labels.

use std::collections::BTreeSet;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::graphs::{build_i2s_graph, build_s2i_graph, GraphKind};
use crate::hgat::{hgat_stack, init_hgat, HgatConfig};
use crate::layers::{
    birnn_forward, init_attention, init_birnn, init_decoder, intent_token_decoder,
    self_attention, slot_token_decoder, Activation, ParamBuilder,
};
use crate::tensor::{ModelParams, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub num_intents: usize,
    pub num_slots: usize,
    pub word_dim: usize,
    pub label_dim: usize,
    /// Width of every task-specific BiLSTM output and graph node state.
    pub hidden_dim: usize,
    /// Output width of the encoder's self-attention.
    pub attention_dim: usize,
    pub decoder_dim: usize,
    pub heads: usize,
    pub gnn_layers: usize,
    pub window: usize,
    pub activation: Activation,
    pub threshold: f64,
    pub tie_decoders: bool,
    pub collapse_relations: bool,
    pub literal_sqrt_d: bool,
    pub s2i_guidance: bool,
    pub i2s_guidance: bool,
    pub dropout: f64,
}

impl ModelConfig {
    /// Small defaults sized for the given label inventories.
    pub fn new(vocab_size: usize, num_intents: usize, num_slots: usize) -> Self {
        ModelConfig {
            vocab_size,
            num_intents,
            num_slots,
            word_dim: 32,
            label_dim: 32,
            hidden_dim: 32,
            attention_dim: 32,
            decoder_dim: 32,
            heads: 2,
            gnn_layers: 2,
            window: 3,
            activation: Activation::LeakyRelu,
            threshold: 0.5,
            tie_decoders: false,
            collapse_relations: false,
            literal_sqrt_d: true,
            s2i_guidance: true,
            i2s_guidance: true,
            dropout: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if self.vocab_size == 0 || self.num_intents == 0 || self.num_slots == 0 {
            return fail("vocabulary and label inventories must be non-empty");
        }
        if [self.word_dim, self.label_dim, self.hidden_dim, self.attention_dim, self.decoder_dim]
            .contains(&0)
        {
            return fail("all dimensions must be positive");
        }
        if !self.hidden_dim.is_multiple_of(2) {
            return fail("hidden_dim must be even (split across LSTM directions)");
        }
        if self.heads == 0 || !self.hidden_dim.is_multiple_of(self.heads) {
            return fail("hidden_dim must be divisible by heads");
        }
        if self.gnn_layers == 0 {
            return fail("gnn_layers must be at least 1");
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return fail("threshold must lie in (0, 1)");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail("dropout must lie in [0, 1)");
        }
        Ok(())
    }

    pub fn hgat(&self) -> HgatConfig {
        HgatConfig {
            heads: self.heads,
            activation: self.activation,
            literal_sqrt_d: self.literal_sqrt_d,
            collapse_relations: self.collapse_relations,
        }
    }

    fn encoder_width(&self) -> usize {
        self.hidden_dim + self.attention_dim
    }

    fn intent_decoder(&self, stage: usize) -> &'static str {
        if stage == 2 && !self.tie_decoders {
            "decoder.intent.stage2"
        } else {
            "decoder.intent.stage1"
        }
    }

    fn slot_decoder(&self, stage: usize) -> &'static str {
        if stage == 2 && !self.tie_decoders {
            "decoder.slot.stage2"
        } else {
            "decoder.slot.stage1"
        }
    }
}

pub const WORD_EMBEDDING: &str = "embedding.word";
pub const SLOT_LABEL_EMBEDDING: &str = "embedding.slot_label";
pub const INTENT_LABEL_EMBEDDING: &str = "embedding.intent_label";
const SLOT_ADAPTER: &str = "embedding.slot_label_adapter";
const INTENT_ADAPTER: &str = "embedding.intent_label_adapter";

fn build_params(cfg: &ModelConfig, mut b: ParamBuilder) -> ModelParams {
    let h = cfg.hidden_dim;
    b.add(WORD_EMBEDDING, &[cfg.vocab_size, cfg.word_dim], cfg.word_dim);
    init_birnn(&mut b, "encoder.lstm", cfg.word_dim, h);
    init_attention(&mut b, "encoder.attention", cfg.word_dim, cfg.attention_dim);
    init_birnn(&mut b, "intent.lstm", cfg.encoder_width(), h);
    init_birnn(&mut b, "slot.lstm", cfg.encoder_width(), h);
    init_birnn(&mut b, "slot.intent_aware_lstm", cfg.num_intents + h, h);
    init_decoder(&mut b, "decoder.intent.stage1", h, cfg.decoder_dim, cfg.num_intents);
    init_decoder(&mut b, "decoder.slot.stage1", h, cfg.decoder_dim, cfg.num_slots);
    if !cfg.tie_decoders {
        init_decoder(&mut b, "decoder.intent.stage2", h, cfg.decoder_dim, cfg.num_intents);
        init_decoder(&mut b, "decoder.slot.stage2", h, cfg.decoder_dim, cfg.num_slots);
    }
    b.add(SLOT_LABEL_EMBEDDING, &[cfg.num_slots, cfg.label_dim], cfg.label_dim);
    b.add(INTENT_LABEL_EMBEDDING, &[cfg.num_intents, cfg.label_dim], cfg.label_dim);
    if cfg.label_dim != h {
        b.add(SLOT_ADAPTER, &[h, cfg.label_dim], cfg.label_dim);
        b.add(INTENT_ADAPTER, &[h, cfg.label_dim], cfg.label_dim);
    }
    let hgat = cfg.hgat();
    init_hgat(&mut b, "hgat.s2i", GraphKind::SlotToIntent, h, cfg.gnn_layers, &hgat);
    init_hgat(&mut b, "hgat.i2s", GraphKind::IntentToSlot, h, cfg.gnn_layers, &hgat);
    b.finish()
}

/// Seeded `uniform(-1/sqrt(fan_in), 1/sqrt(fan_in))` initialization.
pub fn init_params(cfg: &ModelConfig, seed: u64) -> ModelParams {
    build_params(cfg, ParamBuilder::seeded(seed))
}

pub fn zero_params(cfg: &ModelConfig) -> ModelParams {
    build_params(cfg, ParamBuilder::zeros())
}

/// Per-stage activations. Probabilities are `n x N_I` / `n x N_S`; features
/// are `n x hidden_dim`.
#[derive(Debug, Clone, Copy)]
pub struct StageOutputs {
    pub intent_probs: Var,
    pub slot_probs: Var,
    pub intent_features: Var,
    pub slot_features: Var,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub intents: Vec<usize>,
    pub slots: Vec<usize>,
}

/// Every intermediate of one utterance's two-stage pass, on its tape.
pub struct ForwardTrace<'p> {
    pub tape: Tape<'p>,
    pub shared: Var,
    pub stage1: StageOutputs,
    pub stage2: StageOutputs,
    /// Intent-aware BiLSTM states, the slot graph's semantic inputs.
    pub slot_aware: Option<Var>,
    pub estimated_slots: Vec<usize>,
    pub estimated_intents: Vec<usize>,
}

impl ForwardTrace<'_> {
    pub fn prediction(&self, threshold: f64) -> Prediction {
        Prediction {
            intents: intent_vote(self.tape.value(self.stage2.intent_probs), threshold),
            slots: argmax_rows(self.tape.value(self.stage2.slot_probs)),
        }
    }

    pub fn stage1_prediction(&self, threshold: f64) -> Prediction {
        Prediction {
            intents: intent_vote(self.tape.value(self.stage1.intent_probs), threshold),
            slots: argmax_rows(self.tape.value(self.stage1.slot_probs)),
        }
    }
}

/// Token-level voting: intent `j` wins if more than half of the tokens give
/// it probability above `threshold`. An empty vote falls back to the intent
/// with the highest mean probability (lowest id on ties).
pub fn intent_vote(probs: &Tensor, threshold: f64) -> Vec<usize> {
    let n = probs.rows();
    let labels = probs.cols();
    let mut chosen = Vec::new();
    for j in 0..labels {
        let votes = (0..n).filter(|&i| probs.get(i, j) > threshold).count();
        if 2 * votes > n {
            chosen.push(j);
        }
    }
    if chosen.is_empty() {
        let mut best = 0;
        let mut best_mean = f64::NEG_INFINITY;
        for j in 0..labels {
            let mean = (0..n).map(|i| probs.get(i, j)).sum::<f64>() / n as f64;
            if mean > best_mean {
                best_mean = mean;
                best = j;
            }
        }
        chosen.push(best);
    }
    chosen
}

/// Row-wise argmax, first index on ties.
pub fn argmax_rows(t: &Tensor) -> Vec<usize> {
    (0..t.rows())
        .map(|r| {
            let row = t.row(r);
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct CoGuidingNet {
    pub config: ModelConfig,
}

impl CoGuidingNet {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        Ok(CoGuidingNet { config })
    }

    /// `[BiLSTM(x) | SelfAttention(x)]` over word embeddings.
    pub fn encode_shared(&self, tape: &mut Tape, word_ids: &[usize]) -> Result<Var> {
        if word_ids.is_empty() {
            return Err(Error::Shape("utterance has no tokens".into()));
        }
        let x = tape.embed(WORD_EMBEDDING, word_ids)?;
        let temporal = birnn_forward(tape, x, "encoder.lstm")?;
        let global = self_attention(tape, x, "encoder.attention")?.output;
        Ok(tape.concat_cols(&[temporal, global]))
    }

    pub fn stage1_forward(&self, tape: &mut Tape, shared: Var) -> Result<StageOutputs> {
        let act = self.config.activation;
        let intent_features = birnn_forward(tape, shared, "intent.lstm")?;
        let intent_probs =
            intent_token_decoder(tape, intent_features, self.config.intent_decoder(1), act)?;
        let slot_features = birnn_forward(tape, shared, "slot.lstm")?;
        let slot_probs = slot_token_decoder(tape, slot_features, self.config.slot_decoder(1), act)?;
        Ok(StageOutputs {
            intent_probs,
            slot_probs,
            intent_features,
            slot_features,
        })
    }

    fn label_nodes(&self, tape: &mut Tape, table: &str, adapter: &str, ids: &[usize]) -> Result<Var> {
        let e = tape.embed(table, ids)?;
        if self.config.label_dim == self.config.hidden_dim {
            Ok(e)
        } else {
            tape.linear(e, adapter, None)
        }
    }

    /// Slot-guided intent decoding. Returns `(probs, intent node states)`.
    pub fn stage2_intent_forward(
        &self,
        tape: &mut Tape,
        stage1: &StageOutputs,
        estimated_slots: &[usize],
    ) -> Result<(Var, Var)> {
        let cfg = &self.config;
        if !cfg.s2i_guidance {
            return Ok((stage1.intent_probs, stage1.intent_features));
        }
        let n = tape.shape(stage1.intent_features).0;
        if estimated_slots.len() != n {
            return Err(Error::Shape(format!(
                "{} estimated slots for {n} tokens",
                estimated_slots.len()
            )));
        }
        let graph = build_s2i_graph(n, cfg.window)?;
        let labels = self.label_nodes(tape, SLOT_LABEL_EMBEDDING, SLOT_ADAPTER, estimated_slots)?;
        let nodes = tape.concat_rows(&[stage1.intent_features, labels]);
        let states = hgat_stack(tape, &graph, nodes, "hgat.s2i", cfg.gnn_layers, &cfg.hgat())?;
        let features = tape.slice_rows(states, 0, n);
        let probs = intent_token_decoder(tape, features, cfg.intent_decoder(2), cfg.activation)?;
        Ok((probs, features))
    }

    /// Intent-aware BiLSTM over `[y_I0 | h_S0]`, then intent-guided slot
    /// decoding. Returns `(probs, slot node states, intent-aware states)`.
    pub fn stage2_slot_forward(
        &self,
        tape: &mut Tape,
        stage1: &StageOutputs,
        estimated_intents: &[usize],
    ) -> Result<(Var, Var, Option<Var>)> {
        let cfg = &self.config;
        if !cfg.i2s_guidance {
            return Ok((stage1.slot_probs, stage1.slot_features, None));
        }
        let n = tape.shape(stage1.slot_features).0;
        let aware_in = tape.concat_cols(&[stage1.intent_probs, stage1.slot_features]);
        let aware = birnn_forward(tape, aware_in, "slot.intent_aware_lstm")?;
        let graph = build_i2s_graph(n, estimated_intents.len(), cfg.window)?;
        let labels =
            self.label_nodes(tape, INTENT_LABEL_EMBEDDING, INTENT_ADAPTER, estimated_intents)?;
        let nodes = tape.concat_rows(&[aware, labels]);
        let states = hgat_stack(tape, &graph, nodes, "hgat.i2s", cfg.gnn_layers, &cfg.hgat())?;
        let features = tape.slice_rows(states, 0, n);
        let probs = slot_token_decoder(tape, features, cfg.slot_decoder(2), cfg.activation)?;
        Ok((probs, features, Some(aware)))
    }

    /// Full two-stage pass. `dropout` supplies the mask stream during
    /// training; inference passes `None`.
    pub fn forward<'p>(
        &self,
        params: &'p ModelParams,
        word_ids: &[usize],
        dropout: Option<&mut ChaCha8Rng>,
    ) -> Result<ForwardTrace<'p>> {
        let mut tape = Tape::new(params);
        let mut shared = self.encode_shared(&mut tape, word_ids)?;
        if let Some(rng) = dropout {
            let p = self.config.dropout;
            if p > 0.0 {
                let (n, m) = tape.shape(shared);
                let keep = 1.0 / (1.0 - p);
                let mask = (0..n * m)
                    .map(|_| if rng.gen::<f64>() < p { 0.0 } else { keep })
                    .collect();
                let mask = tape.constant(Tensor::matrix(n, m, mask));
                shared = tape.mul(shared, mask);
            }
        }
        let stage1 = self.stage1_forward(&mut tape, shared)?;
        let estimated_slots = argmax_rows(tape.value(stage1.slot_probs));
        let estimated_intents = intent_vote(tape.value(stage1.intent_probs), self.config.threshold);
        let (intent_probs, intent_features) =
            self.stage2_intent_forward(&mut tape, &stage1, &estimated_slots)?;
        let (slot_probs, slot_features, slot_aware) =
            self.stage2_slot_forward(&mut tape, &stage1, &estimated_intents)?;
        tape.check_finite()?;
        Ok(ForwardTrace {
            tape,
            shared,
            stage1,
            stage2: StageOutputs {
                intent_probs,
                slot_probs,
                intent_features,
                slot_features,
            },
            slot_aware,
            estimated_slots,
            estimated_intents,
        })
    }

    pub fn predict(&self, params: &ModelParams, word_ids: &[usize]) -> Result<Prediction> {
        let trace = self.forward(params, word_ids, None)?;
        Ok(trace.prediction(self.config.threshold))
    }

    pub fn intent_set(prediction: &Prediction) -> BTreeSet<usize> {
        prediction.intents.iter().copied().collect()
    }
}
