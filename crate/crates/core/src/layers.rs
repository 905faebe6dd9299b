//! Primitive differentiable layers: bidirectional LSTM, scaled dot-product
//! self-attention and the two-layer token decoders. All layers read their
//! weights from the tape by path prefix.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::{ModelParams, Tensor};

pub const LEAKY_SLOPE: f64 = 0.01;

/// Hidden non-linearity inside decoders and graph attention.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    LeakyRelu,
    Relu,
    Tanh,
}

impl Activation {
    pub fn apply(self, tape: &mut Tape, x: Var) -> Var {
        match self {
            Activation::LeakyRelu => tape.leaky_relu(x, LEAKY_SLOPE),
            Activation::Relu => tape.relu(x),
            Activation::Tanh => tape.tanh(x),
        }
    }
}

/// Creates parameters with `uniform(-1/sqrt(fan_in), 1/sqrt(fan_in))`
/// entries, or all zeros.
pub struct ParamBuilder {
    params: ModelParams,
    rng: ChaCha8Rng,
    zeros: bool,
}

impl ParamBuilder {
    pub fn seeded(seed: u64) -> Self {
        ParamBuilder {
            params: ModelParams::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            zeros: false,
        }
    }

    pub fn zeros() -> Self {
        ParamBuilder {
            params: ModelParams::new(),
            rng: ChaCha8Rng::seed_from_u64(0),
            zeros: true,
        }
    }

    pub fn add(&mut self, path: impl Into<String>, shape: &[usize], fan_in: usize) {
        let path = path.into();
        assert!(!self.params.contains(&path), "duplicate parameter `{path}`");
        let numel: usize = shape.iter().product();
        let data = if self.zeros {
            vec![0.0; numel]
        } else {
            let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
            (0..numel).map(|_| self.rng.gen_range(-bound..bound)).collect()
        };
        self.params
            .insert(path, Tensor::new(shape.to_vec(), data).expect("sized"));
    }

    pub fn finish(self) -> ModelParams {
        self.params
    }
}

pub fn init_lstm(b: &mut ParamBuilder, prefix: &str, input: usize, hidden: usize) {
    b.add(format!("{prefix}.w_ih"), &[4 * hidden, input], input);
    b.add(format!("{prefix}.w_hh"), &[4 * hidden, hidden], hidden);
    b.add(format!("{prefix}.bias"), &[4 * hidden], hidden);
}

/// Both directions; `output` is split evenly between them.
pub fn init_birnn(b: &mut ParamBuilder, prefix: &str, input: usize, output: usize) {
    assert!(output.is_multiple_of(2), "bidirectional output width must be even");
    init_lstm(b, &format!("{prefix}.fwd"), input, output / 2);
    init_lstm(b, &format!("{prefix}.bwd"), input, output / 2);
}

pub fn init_attention(b: &mut ParamBuilder, prefix: &str, input: usize, output: usize) {
    for name in ["w_query", "w_key", "w_value"] {
        b.add(format!("{prefix}.{name}"), &[output, input], input);
    }
}

pub fn init_decoder(b: &mut ParamBuilder, prefix: &str, input: usize, hidden: usize, labels: usize) {
    b.add(format!("{prefix}.w_hidden"), &[hidden, input], input);
    b.add(format!("{prefix}.b_hidden"), &[hidden], input);
    b.add(format!("{prefix}.w_out"), &[labels, hidden], hidden);
    b.add(format!("{prefix}.b_out"), &[labels], hidden);
}

/// One LSTM direction over the rows of `inputs`; returns `n x hidden` in
/// position order regardless of direction. Gate order is input, forget,
/// cell, output.
pub fn lstm(tape: &mut Tape, inputs: Var, prefix: &str, reverse: bool) -> Result<Var> {
    let (n, _) = tape.shape(inputs);
    if n == 0 {
        return Err(Error::Shape("empty input sequence".into()));
    }
    let w_hh = format!("{prefix}.w_hh");
    let projected = tape.linear(
        inputs,
        &format!("{prefix}.w_ih"),
        Some(&format!("{prefix}.bias")),
    )?;
    let hidden = tape.shape(projected).1 / 4;
    let recur = tape.param(&w_hh)?;
    if tape.shape(recur) != (4 * hidden, hidden) {
        return Err(Error::Shape(format!("`{w_hh}` must be {}x{hidden}", 4 * hidden)));
    }

    let order: Vec<usize> = if reverse {
        (0..n).rev().collect()
    } else {
        (0..n).collect()
    };
    let mut outputs: Vec<Option<Var>> = vec![None; n];
    let mut state: Option<(Var, Var)> = None;
    for &t in &order {
        let mut pre = tape.slice_rows(projected, t, 1);
        if let Some((h_prev, _)) = state {
            let r = tape.matmul_bt(h_prev, recur);
            pre = tape.add(pre, r);
        }
        let i = tape.slice_cols(pre, 0, hidden);
        let i = tape.sigmoid(i);
        let f = tape.slice_cols(pre, hidden, hidden);
        let f = tape.sigmoid(f);
        let g = tape.slice_cols(pre, 2 * hidden, hidden);
        let g = tape.tanh(g);
        let o = tape.slice_cols(pre, 3 * hidden, hidden);
        let o = tape.sigmoid(o);
        let mut c = tape.mul(i, g);
        if let Some((_, c_prev)) = state {
            let keep = tape.mul(f, c_prev);
            c = tape.add(c, keep);
        }
        let tc = tape.tanh(c);
        let h = tape.mul(o, tc);
        outputs[t] = Some(h);
        state = Some((h, c));
    }
    let rows: Vec<Var> = outputs.into_iter().map(|v| v.expect("every step ran")).collect();
    Ok(tape.concat_rows(&rows))
}

/// Bidirectional LSTM: per-position concatenation `[forward | backward]`.
pub fn birnn_forward(tape: &mut Tape, inputs: Var, prefix: &str) -> Result<Var> {
    let fwd = lstm(tape, inputs, &format!("{prefix}.fwd"), false)?;
    let bwd = lstm(tape, inputs, &format!("{prefix}.bwd"), true)?;
    Ok(tape.concat_cols(&[fwd, bwd]))
}

pub struct AttentionOutput {
    pub output: Var,
    pub weights: Var,
}

/// `softmax(Q K^T / sqrt(d_k)) V` with bias-free projections of `inputs`.
pub fn self_attention(tape: &mut Tape, inputs: Var, prefix: &str) -> Result<AttentionOutput> {
    let q = tape.linear(inputs, &format!("{prefix}.w_query"), None)?;
    let k = tape.linear(inputs, &format!("{prefix}.w_key"), None)?;
    let v = tape.linear(inputs, &format!("{prefix}.w_value"), None)?;
    let d_k = tape.shape(k).1 as f64;
    let scores = tape.matmul_bt(q, k);
    let scores = tape.scale(scores, 1.0 / d_k.sqrt());
    let weights = tape.softmax_rows(scores);
    let output = tape.matmul(weights, v);
    Ok(AttentionOutput { output, weights })
}

fn decoder_logits(tape: &mut Tape, h: Var, prefix: &str, act: Activation) -> Result<Var> {
    let hidden = tape.linear(
        h,
        &format!("{prefix}.w_hidden"),
        Some(&format!("{prefix}.b_hidden")),
    )?;
    let hidden = act.apply(tape, hidden);
    tape.linear(hidden, &format!("{prefix}.w_out"), Some(&format!("{prefix}.b_out")))
}

/// Per-row multi-label probabilities `sigmoid(W1 act(W2 h + b2) + b1)`.
pub fn intent_token_decoder(tape: &mut Tape, h: Var, prefix: &str, act: Activation) -> Result<Var> {
    let logits = decoder_logits(tape, h, prefix, act)?;
    Ok(tape.sigmoid(logits))
}

/// Per-row label distribution `softmax(W1 act(W2 h + b2) + b1)`.
pub fn slot_token_decoder(tape: &mut Tape, h: Var, prefix: &str, act: Activation) -> Result<Var> {
    let logits = decoder_logits(tape, h, prefix, act)?;
    Ok(tape.softmax_rows(logits))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_input(n: usize, d: usize, seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::matrix(n, d, (0..n * d).map(|_| rng.gen_range(-1.0..1.0)).collect())
    }

    #[test]
    fn zero_lstm_outputs_zero() {
        let mut b = ParamBuilder::zeros();
        init_birnn(&mut b, "rnn", 3, 4);
        let p = b.finish();
        let mut tape = Tape::new(&p);
        let x = tape.constant(random_input(5, 3, 1));
        let y = birnn_forward(&mut tape, x, "rnn").unwrap();
        assert_eq!(tape.shape(y), (5, 4));
        assert!(tape.value(y).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_step_sequence_uses_same_input_for_both_halves() {
        let mut b = ParamBuilder::seeded(3);
        init_birnn(&mut b, "rnn", 3, 4);
        let mut p = b.finish();
        // give both directions the same weights
        for name in ["w_ih", "w_hh", "bias"] {
            let fwd = p.get(&format!("rnn.fwd.{name}")).unwrap().clone();
            p.insert(format!("rnn.bwd.{name}"), fwd);
        }
        let mut tape = Tape::new(&p);
        let x = tape.constant(random_input(1, 3, 2));
        let y = birnn_forward(&mut tape, x, "rnn").unwrap();
        let row = tape.value(y).row(0).to_vec();
        assert_eq!(row[..2], row[2..]);
    }

    #[test]
    fn reversing_input_swaps_directions() {
        let mut b = ParamBuilder::seeded(5);
        init_birnn(&mut b, "rnn", 3, 4);
        let mut p = b.finish();
        for name in ["w_ih", "w_hh", "bias"] {
            let fwd = p.get(&format!("rnn.fwd.{name}")).unwrap().clone();
            p.insert(format!("rnn.bwd.{name}"), fwd);
        }
        let x = random_input(3, 3, 9);
        let rows = x.to_rows();
        let reversed = Tensor::from_rows(&[rows[2].clone(), rows[1].clone(), rows[0].clone()]);
        let mut tape = Tape::new(&p);
        let a = tape.constant(x);
        let ya = birnn_forward(&mut tape, a, "rnn").unwrap();
        let b_in = tape.constant(reversed);
        let yb = birnn_forward(&mut tape, b_in, "rnn").unwrap();
        for t in 0..3 {
            let ra = tape.value(ya).row(t).to_vec();
            let rb = tape.value(yb).row(2 - t).to_vec();
            for c in 0..2 {
                assert!((ra[c] - rb[c + 2]).abs() < 1e-14);
                assert!((ra[c + 2] - rb[c]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn lstm_matches_hand_evaluated_cell() {
        // scalar LSTM, one direction, two steps, evaluated directly
        let mut p = ModelParams::new();
        let w_ih = [0.3, -0.2, 0.5, 0.1];
        let w_hh = [0.4, 0.25, -0.6, 0.7];
        let bias = [0.05, -0.1, 0.2, 0.0];
        p.insert("l.w_ih", Tensor::matrix(4, 1, w_ih.to_vec()));
        p.insert("l.w_hh", Tensor::matrix(4, 1, w_hh.to_vec()));
        p.insert("l.bias", Tensor::new(vec![4], bias.to_vec()).unwrap());
        let xs = [0.8, -1.3];
        let mut tape = Tape::new(&p);
        let x = tape.constant(Tensor::matrix(2, 1, xs.to_vec()));
        let y = lstm(&mut tape, x, "l", false).unwrap();

        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let (mut h, mut c) = (0.0, 0.0);
        let mut expected = Vec::new();
        for &xv in &xs {
            let z: Vec<f64> = (0..4).map(|g| w_ih[g] * xv + w_hh[g] * h + bias[g]).collect();
            let (i, f, g, o) = (sig(z[0]), sig(z[1]), z[2].tanh(), sig(z[3]));
            c = f * c + i * g;
            h = o * c.tanh();
            expected.push(h);
        }
        for (a, e) in tape.value(y).data().iter().zip(expected) {
            assert!((a - e).abs() < 1e-15);
        }
    }

    #[test]
    fn attention_rows_are_distributions() {
        let mut b = ParamBuilder::seeded(1);
        init_attention(&mut b, "att", 4, 3);
        let p = b.finish();
        let mut tape = Tape::new(&p);
        let x = tape.constant(random_input(6, 4, 4));
        let out = self_attention(&mut tape, x, "att").unwrap();
        assert_eq!(tape.shape(out.output), (6, 3));
        for r in 0..6 {
            let s: f64 = tape.value(out.weights).row(r).iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn single_key_attention_returns_value_row() {
        let mut b = ParamBuilder::seeded(2);
        init_attention(&mut b, "att", 4, 3);
        let p = b.finish();
        let mut tape = Tape::new(&p);
        let x = tape.constant(random_input(1, 4, 5));
        let out = self_attention(&mut tape, x, "att").unwrap();
        assert_eq!(tape.value(out.weights).data(), &[1.0]);
        let v = tape.linear(x, "att.w_value", None).unwrap();
        assert_eq!(tape.value(out.output).data(), tape.value(v).data());
    }

    #[test]
    fn identical_rows_attend_identically() {
        let mut b = ParamBuilder::seeded(3);
        init_attention(&mut b, "att", 4, 3);
        let p = b.finish();
        let row = random_input(1, 4, 6).into_data();
        let x = Tensor::from_rows(&[row.clone(), row.clone(), row]);
        let mut tape = Tape::new(&p);
        let x = tape.constant(x);
        let out = self_attention(&mut tape, x, "att").unwrap();
        let w = tape.value(out.weights);
        assert_eq!(w.row(0), w.row(1));
        assert_eq!(w.row(1), w.row(2));
    }

    #[test]
    fn zero_decoders() {
        let mut b = ParamBuilder::zeros();
        init_decoder(&mut b, "di", 4, 5, 3);
        init_decoder(&mut b, "ds", 4, 5, 4);
        let p = b.finish();
        let mut tape = Tape::new(&p);
        let h = tape.constant(random_input(2, 4, 7));
        let yi = intent_token_decoder(&mut tape, h, "di", Activation::LeakyRelu).unwrap();
        assert!(tape.value(yi).data().iter().all(|&v| v == 0.5));
        let ys = slot_token_decoder(&mut tape, h, "ds", Activation::LeakyRelu).unwrap();
        assert!(tape.value(ys).data().iter().all(|&v| v == 0.25));
    }

    #[test]
    fn intent_decoder_matches_direct_formula() {
        // 2 labels, 2x2 weights
        let mut p = ModelParams::new();
        p.insert("d.w_hidden", Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]));
        p.insert("d.b_hidden", Tensor::new(vec![2], vec![0.0, -1.0]).unwrap());
        p.insert("d.w_out", Tensor::matrix(2, 2, vec![2.0, 0.0, 0.5, -1.0]));
        p.insert("d.b_out", Tensor::new(vec![2], vec![0.1, 0.2]).unwrap());
        let mut tape = Tape::new(&p);
        let h = tape.constant(Tensor::row_vector(vec![0.5, 0.3]));
        let y = intent_token_decoder(&mut tape, h, "d", Activation::LeakyRelu).unwrap();
        // hidden = leaky([0.5, -0.7]) = [0.5, -0.007]
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let e0 = sig(2.0 * 0.5 + 0.1);
        let e1 = sig(0.5 * 0.5 - 1.0 * -0.007 + 0.2);
        let got = tape.value(y).data();
        assert!((got[0] - e0).abs() < 1e-15);
        assert!((got[1] - e1).abs() < 1e-15);
    }

    #[test]
    fn slot_decoder_is_shift_invariant() {
        let mut b = ParamBuilder::seeded(8);
        init_decoder(&mut b, "ds", 4, 5, 4);
        let p = b.finish();
        let mut shifted = p.clone();
        for v in shifted.get_mut("ds.b_out").unwrap().data_mut() {
            *v += 3.7;
        }
        let x = random_input(3, 4, 8);
        let run = |params: &ModelParams| {
            let mut tape = Tape::new(params);
            let h = tape.constant(x.clone());
            let y = slot_token_decoder(&mut tape, h, "ds", Activation::LeakyRelu).unwrap();
            tape.value(y).clone()
        };
        let a = run(&p);
        let b = run(&shifted);
        for r in 0..3 {
            assert!((a.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let mut b = ParamBuilder::seeded(1);
        init_birnn(&mut b, "rnn", 3, 4);
        let p = b.finish();
        let mut tape = Tape::new(&p);
        let x = tape.constant(random_input(2, 5, 1));
        assert!(matches!(birnn_forward(&mut tape, x, "rnn"), Err(Error::Shape(_))));
    }
}
