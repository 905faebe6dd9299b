//! Utterance data model, dataset ingestion, label indexing and a seeded
//! synthetic corpus generator.
//!
//! Dataset files use the block layout common to the mixed multi-intent
//! benchmarks: one `token slot_tag` pair per line, then a line holding the
//! intent labels joined by `#`, then a blank line.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const OUTSIDE_TAG: &str = "O";
pub const UNK_TOKEN: &str = "<unk>";
pub const UNK_ID: usize = 0;

/// One utterance with its gold annotation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sample {
    pub tokens: Vec<String>,
    pub slot_tags: Vec<String>,
    pub intents: BTreeSet<String>,
}

/// A BIO tag split into its prefix and type.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BioTag<'a> {
    Outside,
    Begin(&'a str),
    Inside(&'a str),
}

impl<'a> BioTag<'a> {
    pub fn parse(tag: &'a str) -> Option<Self> {
        if tag == OUTSIDE_TAG {
            return Some(BioTag::Outside);
        }
        let (prefix, ty) = tag.split_once('-')?;
        if ty.is_empty() {
            return None;
        }
        match prefix {
            "B" => Some(BioTag::Begin(ty)),
            "I" => Some(BioTag::Inside(ty)),
            _ => None,
        }
    }
}

/// A soft annotation problem: retained in the data but reported.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OrphanInside {
    pub position: usize,
    pub tag: String,
}

impl Sample {
    pub fn new<I, S>(tokens: Vec<String>, slot_tags: Vec<String>, intents: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let intents: BTreeSet<String> = intents.into_iter().map(Into::into).collect();
        let sample = Sample {
            tokens,
            slot_tags,
            intents,
        };
        sample.check_structure()?;
        Ok(sample)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    fn check_structure(&self) -> Result<()> {
        if self.tokens.is_empty() {
            return Err(Error::parse(0, "sample has no tokens"));
        }
        if self.tokens.len() != self.slot_tags.len() {
            return Err(Error::parse(
                0,
                format!(
                    "{} tokens but {} slot tags",
                    self.tokens.len(),
                    self.slot_tags.len()
                ),
            ));
        }
        if let Some(bad) = self.slot_tags.iter().find(|t| BioTag::parse(t).is_none()) {
            return Err(Error::parse(0, format!("malformed slot tag `{bad}`")));
        }
        if self.intents.is_empty() || self.intents.iter().any(|i| i.is_empty()) {
            return Err(Error::parse(0, "sample has an empty intent set"));
        }
        Ok(())
    }

    /// Lists `I-x` tags not continuing a `B-x`/`I-x` run.
    pub fn validate(&self) -> Vec<OrphanInside> {
        let mut open: Option<&str> = None;
        let mut issues = Vec::new();
        for (position, tag) in self.slot_tags.iter().enumerate() {
            match BioTag::parse(tag) {
                Some(BioTag::Begin(ty)) => open = Some(ty),
                Some(BioTag::Inside(ty)) => {
                    if open != Some(ty) {
                        issues.push(OrphanInside {
                            position,
                            tag: tag.clone(),
                        });
                    }
                    open = Some(ty);
                }
                _ => open = None,
            }
        }
        issues
    }
}

fn parse_block(lines: &[(usize, &str)]) -> Result<Sample> {
    let (&(intent_line_no, intent_line), token_lines) = lines
        .split_last()
        .expect("blocks are never constructed empty");
    if token_lines.is_empty() {
        return Err(Error::parse(intent_line_no, "empty block: no token lines"));
    }
    let intent_fields: Vec<&str> = intent_line.split_whitespace().collect();
    if intent_fields.len() != 1 {
        return Err(Error::parse(
            intent_line_no,
            format!(
                "expected one intent field, found {} (block missing its intent line?)",
                intent_fields.len()
            ),
        ));
    }
    let intents: BTreeSet<String> = intent_fields[0]
        .split('#')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(String::from)
        .collect();
    if intents.is_empty() {
        return Err(Error::parse(intent_line_no, "empty intent line"));
    }

    let mut tokens = Vec::with_capacity(token_lines.len());
    let mut slot_tags = Vec::with_capacity(token_lines.len());
    for &(line_no, line) in token_lines {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 2 {
            return Err(Error::parse(
                line_no,
                format!("expected `token slot_tag`, found {} fields", fields.len()),
            ));
        }
        if BioTag::parse(fields[1]).is_none() {
            return Err(Error::parse(
                line_no,
                format!("malformed slot tag `{}`", fields[1]),
            ));
        }
        tokens.push(fields[0].to_string());
        slot_tags.push(fields[1].to_string());
    }
    Ok(Sample {
        tokens,
        slot_tags,
        intents,
    })
}

/// Parses the block-format dataset text. Line numbers in errors are 1-based.
pub fn parse_dataset(text: &str) -> Result<Vec<Sample>> {
    let mut samples = Vec::new();
    let mut block: Vec<(usize, &str)> = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            if !block.is_empty() {
                samples.push(parse_block(&block)?);
                block.clear();
            }
        } else {
            block.push((idx + 1, line));
        }
    }
    if !block.is_empty() {
        samples.push(parse_block(&block)?);
    }
    Ok(samples)
}

/// Inverse of [`parse_dataset`]. Intents are written in sorted order.
pub fn serialize_dataset(samples: &[Sample]) -> String {
    let mut out = String::new();
    for sample in samples {
        for (token, tag) in sample.tokens.iter().zip(&sample.slot_tags) {
            out.push_str(token);
            out.push(' ');
            out.push_str(tag);
            out.push('\n');
        }
        let intents: Vec<&str> = sample.intents.iter().map(String::as_str).collect();
        out.push_str(&intents.join("#"));
        out.push_str("\n\n");
    }
    out
}

#[derive(Debug, Serialize, Deserialize)]
struct JsonSample {
    tokens: Vec<String>,
    slots: Vec<String>,
    intents: Vec<String>,
}

/// One JSON object per line: `{"tokens":[..],"slots":[..],"intents":[..]}`.
pub fn to_jsonl(samples: &[Sample]) -> String {
    let mut out = String::new();
    for sample in samples {
        let row = JsonSample {
            tokens: sample.tokens.clone(),
            slots: sample.slot_tags.clone(),
            intents: sample.intents.iter().cloned().collect(),
        };
        out.push_str(&serde_json::to_string(&row).expect("plain strings serialize"));
        out.push('\n');
    }
    out
}

pub fn from_jsonl(text: &str) -> Result<Vec<Sample>> {
    let mut samples = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: JsonSample =
            serde_json::from_str(line).map_err(|e| Error::parse(idx + 1, e.to_string()))?;
        let sample = Sample::new(row.tokens, row.slots, row.intents)
            .map_err(|e| Error::parse(idx + 1, e.to_string()))?;
        samples.push(sample);
    }
    Ok(samples)
}

/// Dense bidirectional string index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelIndex {
    labels: Vec<String>,
    #[serde(skip)]
    ids: BTreeMap<String, usize>,
}

impl LabelIndex {
    pub fn from_sorted(labels: Vec<String>) -> Self {
        let ids = labels
            .iter()
            .enumerate()
            .map(|(i, l)| (l.clone(), i))
            .collect();
        LabelIndex { labels, ids }
    }

    fn rebuild(&mut self) {
        self.ids = self
            .labels
            .iter()
            .enumerate()
            .map(|(i, l)| (l.clone(), i))
            .collect();
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn id(&self, label: &str) -> Option<usize> {
        self.ids.get(label).copied()
    }

    pub fn label(&self, id: usize) -> Option<&str> {
        self.labels.get(id).map(String::as_str)
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }
}

/// Word, slot-tag and intent indices built from a training split.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabularies {
    pub words: LabelIndex,
    pub slots: LabelIndex,
    pub intents: LabelIndex,
    pub lowercase: bool,
}

impl Vocabularies {
    pub fn build(samples: &[Sample], lowercase: bool) -> Self {
        let mut words = BTreeSet::new();
        let mut slots = BTreeSet::new();
        let mut intents = BTreeSet::new();
        for sample in samples {
            for token in &sample.tokens {
                words.insert(normalize(token, lowercase));
            }
            slots.extend(sample.slot_tags.iter().cloned());
            intents.extend(sample.intents.iter().cloned());
        }
        words.remove(UNK_TOKEN);
        let word_list = std::iter::once(UNK_TOKEN.to_string())
            .chain(words)
            .collect();
        Vocabularies {
            words: LabelIndex::from_sorted(word_list),
            slots: LabelIndex::from_sorted(slots.into_iter().collect()),
            intents: LabelIndex::from_sorted(intents.into_iter().collect()),
            lowercase,
        }
    }

    /// Must be called after deserializing.
    pub fn reindex(&mut self) {
        self.words.rebuild();
        self.slots.rebuild();
        self.intents.rebuild();
    }

    pub fn word_id(&self, token: &str) -> usize {
        self.words
            .id(&normalize(token, self.lowercase))
            .unwrap_or(UNK_ID)
    }

    pub fn word_ids<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        tokens.iter().map(|t| self.word_id(t.as_ref())).collect()
    }

    pub fn outside_id(&self) -> Option<usize> {
        self.slots.id(OUTSIDE_TAG)
    }

    pub fn num_slots(&self) -> usize {
        self.slots.len()
    }

    pub fn num_intents(&self) -> usize {
        self.intents.len()
    }

    pub fn num_words(&self) -> usize {
        self.words.len()
    }
}

/// Builds vocabularies with case preserved. See [`Vocabularies::build`].
pub fn build_vocab(samples: &[Sample]) -> Vocabularies {
    Vocabularies::build(samples, false)
}

fn normalize(token: &str, lowercase: bool) -> String {
    if lowercase {
        token.to_lowercase()
    } else {
        token.to_string()
    }
}

/// Reads a dataset file: `.jsonl` as JSON lines, anything else as blocks.
pub fn read_dataset(path: &std::path::Path) -> Result<Vec<Sample>> {
    let text = std::fs::read_to_string(path)?;
    if path.extension().is_some_and(|e| e == "jsonl") {
        from_jsonl(&text)
    } else {
        parse_dataset(&text)
    }
}

/// Index form of a sample plus its label vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedSample {
    pub word_ids: Vec<usize>,
    pub slot_ids: Vec<usize>,
    pub intent_ids: BTreeSet<usize>,
    pub intent_multi_hot: Vec<f64>,
    pub slot_one_hots: Vec<Vec<f64>>,
}

impl EncodedSample {
    pub fn len(&self) -> usize {
        self.word_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.word_ids.is_empty()
    }
}

pub fn encode_sample(sample: &Sample, vocab: &Vocabularies) -> Result<EncodedSample> {
    let word_ids = vocab.word_ids(&sample.tokens);
    let slot_ids = sample
        .slot_tags
        .iter()
        .map(|tag| {
            vocab.slots.id(tag).ok_or_else(|| Error::UnknownLabel {
                kind: "slot",
                label: tag.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let intent_ids = sample
        .intents
        .iter()
        .map(|intent| {
            vocab.intents.id(intent).ok_or_else(|| Error::UnknownLabel {
                kind: "intent",
                label: intent.clone(),
            })
        })
        .collect::<Result<BTreeSet<_>>>()?;
    let mut intent_multi_hot = vec![0.0; vocab.num_intents()];
    for &id in &intent_ids {
        intent_multi_hot[id] = 1.0;
    }
    let slot_one_hots = slot_ids
        .iter()
        .map(|&id| one_hot(id, vocab.num_slots()))
        .collect();
    Ok(EncodedSample {
        word_ids,
        slot_ids,
        intent_ids,
        intent_multi_hot,
        slot_one_hots,
    })
}

pub fn encode_all(samples: &[Sample], vocab: &Vocabularies) -> Result<Vec<EncodedSample>> {
    samples.iter().map(|s| encode_sample(s, vocab)).collect()
}

pub fn one_hot(id: usize, size: usize) -> Vec<f64> {
    let mut v = vec![0.0; size];
    v[id] = 1.0;
    v
}

struct Template {
    intent: String,
    triggers: Vec<Vec<String>>,
    slot_type: String,
    values: Vec<Vec<String>>,
}

const TEMPLATE_TABLE: &[(&str, &[&str], &str, &[&str])] = &[
    (
        "play_music",
        &["play", "put on"],
        "song",
        &["yesterday", "hey jude", "let it be", "blue in green"],
    ),
    (
        "book_flight",
        &["book a flight to", "fly me to"],
        "toloc.city_name",
        &["dallas", "new york", "boston", "san francisco"],
    ),
    (
        "get_weather",
        &["what is the weather in", "forecast for"],
        "city",
        &["paris", "tokyo", "rome", "los angeles"],
    ),
    (
        "set_alarm",
        &["wake me at", "set an alarm for"],
        "time",
        &["seven am", "noon", "six thirty", "midnight"],
    ),
    (
        "find_restaurant",
        &["find a table at", "reserve"],
        "restaurant_name",
        &["the ivy", "nobu", "chez panisse", "el bulli"],
    ),
    (
        "send_message",
        &["text", "send a message to"],
        "contact_name",
        &["alice", "bob", "mom", "doctor smith"],
    ),
    (
        "check_balance",
        &["check the balance of", "how much is in"],
        "account_type",
        &["checking", "savings", "my credit card", "the joint account"],
    ),
    (
        "order_taxi",
        &["get me a taxi to", "order a cab to"],
        "destination",
        &["the airport", "downtown", "central station", "home"],
    ),
];

fn words(phrase: &str) -> Vec<String> {
    phrase.split_whitespace().map(String::from).collect()
}

fn template(k: usize) -> Template {
    if let Some(&(intent, triggers, slot_type, values)) = TEMPLATE_TABLE.get(k) {
        Template {
            intent: intent.to_string(),
            triggers: triggers.iter().map(|t| words(t)).collect(),
            slot_type: slot_type.to_string(),
            values: values.iter().map(|v| words(v)).collect(),
        }
    } else {
        Template {
            intent: format!("intent_{k}"),
            triggers: vec![words(&format!("do{k}")), words(&format!("please do{k}"))],
            slot_type: format!("arg{k}"),
            values: vec![
                words(&format!("v{k}a")),
                words(&format!("v{k}b c{k}")),
                words(&format!("v{k}d")),
                words(&format!("v{k}e f{k}")),
            ],
        }
    }
}

/// Seeded corpus where each utterance joins one to three intent clauses.
/// Every clause pairs a trigger phrase (`O`) with a typed slot span owned
/// by that intent, so intents and slots are correlated by construction.
pub fn generate_synthetic(n_templates: usize, n_samples: usize, seed: u64) -> Result<Vec<Sample>> {
    if n_templates < 2 {
        return Err(Error::Config("synthetic corpus needs at least 2 templates".into()));
    }
    if n_samples == 0 {
        return Err(Error::Config("synthetic corpus needs at least 1 sample".into()));
    }
    let templates: Vec<Template> = (0..n_templates).map(template).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let max_clauses = n_templates.min(3);
    let mut samples = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        let clauses = rng.gen_range(1..=max_clauses);
        let picked: Vec<&Template> = templates.choose_multiple(&mut rng, clauses).collect();
        let mut tokens = Vec::new();
        let mut tags = Vec::new();
        if rng.gen_bool(0.3) {
            tokens.push("please".to_string());
            tags.push(OUTSIDE_TAG.to_string());
        }
        for (c, tpl) in picked.iter().enumerate() {
            if c > 0 {
                tokens.push("and".to_string());
                tags.push(OUTSIDE_TAG.to_string());
            }
            let trigger = tpl.triggers.choose(&mut rng).expect("non-empty");
            for w in trigger {
                tokens.push(w.clone());
                tags.push(OUTSIDE_TAG.to_string());
            }
            let value = tpl.values.choose(&mut rng).expect("non-empty");
            for (j, w) in value.iter().enumerate() {
                tokens.push(w.clone());
                let prefix = if j == 0 { "B" } else { "I" };
                tags.push(format!("{prefix}-{}", tpl.slot_type));
            }
        }
        let intents = picked.iter().map(|t| t.intent.clone());
        samples.push(Sample::new(tokens, tags, intents)?);
    }
    Ok(samples)
}
