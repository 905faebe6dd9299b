//! Tape-based reverse-mode differentiation over row-major matrices.
//!
//! Only the operator set the model needs is provided. Every node stores its
//! value as a 2-D matrix; rank-1 parameters are read as `1 x d` rows.
//! Operators are infallible: the first non-finite value is recorded and
//! surfaced by [`Tape::check_finite`] and [`Tape::backward`].

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::tensor::{GradMap, ModelParams, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Constant,
    Param(usize),
    Embed(usize, Vec<usize>),
    MatMul(Var, Var),
    MatMulBT(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Affine(Var, f64),
    Sigmoid(Var),
    Tanh(Var),
    LeakyRelu(Var, f64),
    Log(Var),
    Clamp(Var, f64, f64),
    SoftmaxRows(Var),
    MaskedSoftmaxRows(Var),
    LogSoftmaxRows(Var),
    NormalizeRows(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceRows(Var, usize),
    SliceCols(Var, usize),
    GatherRows(Var, Vec<usize>),
    SumAll(Var),
    MeanRows(Var),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Constant => "constant",
            Op::Param(_) => "param",
            Op::Embed(..) => "embed",
            Op::MatMul(..) => "matmul",
            Op::MatMulBT(..) => "matmul_bt",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::AddRow(..) => "add_row",
            Op::Affine(..) => "affine",
            Op::Sigmoid(_) => "sigmoid",
            Op::Tanh(_) => "tanh",
            Op::LeakyRelu(..) => "leaky_relu",
            Op::Log(_) => "log",
            Op::Clamp(..) => "clamp",
            Op::SoftmaxRows(_) => "softmax_rows",
            Op::MaskedSoftmaxRows(_) => "masked_softmax_rows",
            Op::LogSoftmaxRows(_) => "log_softmax_rows",
            Op::NormalizeRows(_) => "normalize_rows",
            Op::ConcatCols(_) => "concat_cols",
            Op::ConcatRows(_) => "concat_rows",
            Op::SliceRows(..) => "slice_rows",
            Op::SliceCols(..) => "slice_cols",
            Op::GatherRows(..) => "gather_rows",
            Op::SumAll(_) => "sum_all",
            Op::MeanRows(_) => "mean_rows",
        }
    }
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Records one forward computation against a borrowed parameter store.
pub struct Tape<'p> {
    params: &'p ModelParams,
    nodes: Vec<Node>,
    param_paths: Vec<String>,
    param_vars: HashMap<String, Var>,
    masks: HashMap<usize, Vec<bool>>,
    fault: Option<String>,
    pattern: u64,
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv(mut h: u64, bytes: &[u8]) -> u64 {
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

// a: n x k, b: k x m -> n x m
fn mm_nn(a: &[f64], n: usize, k: usize, b: &[f64], m: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        let row = &mut out[i * m..(i + 1) * m];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * m..(p + 1) * m];
            for (o, bv) in row.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}

// a: n x k, b: m x k -> n x m
fn mm_nt(a: &[f64], n: usize, k: usize, b: &[f64], m: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..m {
            let brow = &b[j * k..(j + 1) * k];
            out[i * m + j] = arow.iter().zip(brow).map(|(x, y)| x * y).sum();
        }
    }
    out
}

// a: n x k, b: n x m -> k x m  (a^T b)
fn mm_tn(a: &[f64], n: usize, k: usize, b: &[f64], m: usize) -> Vec<f64> {
    let mut out = vec![0.0; k * m];
    for i in 0..n {
        let brow = &b[i * m..(i + 1) * m];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let orow = &mut out[p * m..(p + 1) * m];
            for (o, bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable softmax of one row, restricted to `mask` when given.
pub(crate) fn softmax_row(row: &[f64], mask: Option<&[bool]>) -> Vec<f64> {
    let on = |j: usize| mask.is_none_or(|m| m[j]);
    let max = (0..row.len())
        .filter(|&j| on(j))
        .map(|j| row[j])
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return vec![0.0; row.len()];
    }
    let exps: Vec<f64> = (0..row.len())
        .map(|j| if on(j) { (row[j] - max).exp() } else { 0.0 })
        .collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p ModelParams) -> Self {
        Tape {
            params,
            nodes: Vec::new(),
            param_paths: Vec::new(),
            param_vars: HashMap::new(),
            masks: HashMap::new(),
            fault: None,
            pattern: FNV_OFFSET,
        }
    }

    pub fn params(&self) -> &'p ModelParams {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        if self.fault.is_none() && !value.is_finite() {
            self.fault = Some(op.name().to_string());
        }
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    fn mark_pattern(&mut self, bits: impl Iterator<Item = bool>) {
        let mut h = fnv(self.pattern, &(self.nodes.len() as u64).to_le_bytes());
        for b in bits {
            h = fnv(h, &[b as u8]);
        }
        self.pattern = h;
    }

    /// Hash of every piecewise branch taken (activation signs, clamp hits).
    /// Two evaluations with equal signatures lie on the same smooth piece.
    pub fn pattern_signature(&self) -> u64 {
        self.pattern
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        let t = &self.nodes[v.0].value;
        (t.rows(), t.cols())
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.value(v).scalar_value()
    }

    pub fn check_finite(&self) -> Result<()> {
        match &self.fault {
            Some(op) => Err(Error::NonFinite(op.clone())),
            None => Ok(()),
        }
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        let t = t.as_matrix();
        self.push(t, Op::Constant)
    }

    fn param_index(&mut self, path: &str) -> Result<usize> {
        if !self.params.contains(path) {
            return Err(Error::Shape(format!("unknown parameter `{path}`")));
        }
        Ok(match self.param_paths.iter().position(|p| p == path) {
            Some(i) => i,
            None => {
                self.param_paths.push(path.to_string());
                self.param_paths.len() - 1
            }
        })
    }

    /// Leaf for a stored parameter; repeated calls share one node.
    pub fn param(&mut self, path: &str) -> Result<Var> {
        if let Some(&v) = self.param_vars.get(path) {
            return Ok(v);
        }
        let idx = self.param_index(path)?;
        let value = self.params.get(path).expect("checked").as_matrix();
        let v = self.push(value, Op::Param(idx));
        self.param_vars.insert(path.to_string(), v);
        Ok(v)
    }

    /// Rows `ids` of a parameter matrix, without copying the whole table.
    pub fn embed(&mut self, path: &str, ids: &[usize]) -> Result<Var> {
        let idx = self.param_index(path)?;
        let table = self.params.get(path).expect("checked");
        let cols = table.cols();
        let mut data = Vec::with_capacity(ids.len() * cols);
        for &id in ids {
            if id >= table.rows() {
                return Err(Error::Shape(format!(
                    "row {id} out of range for `{path}` with {} rows",
                    table.rows()
                )));
            }
            data.extend_from_slice(table.row(id));
        }
        Ok(self.push(Tensor::matrix(ids.len(), cols, data), Op::Embed(idx, ids.to_vec())))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (n, k) = self.shape(a);
        let (k2, m) = self.shape(b);
        assert_eq!(k, k2, "matmul {n}x{k} by {k2}x{m}");
        let data = mm_nn(self.value(a).data(), n, k, self.value(b).data(), m);
        self.push(Tensor::matrix(n, m, data), Op::MatMul(a, b))
    }

    /// `a * b^T`.
    pub fn matmul_bt(&mut self, a: Var, b: Var) -> Var {
        let (n, k) = self.shape(a);
        let (m, k2) = self.shape(b);
        assert_eq!(k, k2, "matmul_bt {n}x{k} by ({m}x{k2})^T");
        let data = mm_nt(self.value(a).data(), n, k, self.value(b).data(), m);
        self.push(Tensor::matrix(n, m, data), Op::MatMulBT(a, b))
    }

    fn zip_with(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Var {
        let (n, m) = self.shape(a);
        assert_eq!((n, m), self.shape(b), "{} shape mismatch", op.name());
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        self.push(Tensor::matrix(n, m, data), op)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.zip_with(a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.zip_with(a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.zip_with(a, b, |x, y| x * y, Op::Mul(a, b))
    }

    /// Adds the `1 x m` row `b` to every row of `a`.
    pub fn add_row(&mut self, a: Var, b: Var) -> Var {
        let (n, m) = self.shape(a);
        assert_eq!((1, m), self.shape(b), "add_row bias shape");
        let bias = self.value(b).data().to_vec();
        let mut data = self.value(a).data().to_vec();
        for row in data.chunks_mut(m) {
            for (x, bv) in row.iter_mut().zip(&bias) {
                *x += bv;
            }
        }
        self.push(Tensor::matrix(n, m, data), Op::AddRow(a, b))
    }

    /// `scale * a + shift`.
    pub fn affine(&mut self, a: Var, scale: f64, shift: f64) -> Var {
        let (n, m) = self.shape(a);
        let data = self.value(a).data().iter().map(|x| scale * x + shift).collect();
        self.push(Tensor::matrix(n, m, data), Op::Affine(a, scale))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        self.affine(a, s, 0.0)
    }

    fn map(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let (n, m) = self.shape(a);
        let data = self.value(a).data().iter().map(|&x| f(x)).collect();
        self.push(Tensor::matrix(n, m, data), op)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.map(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.map(a, f64::tanh, Op::Tanh(a))
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        let signs: Vec<bool> = self.value(a).data().iter().map(|&x| x > 0.0).collect();
        self.mark_pattern(signs.into_iter());
        self.map(a, |x| if x > 0.0 { x } else { slope * x }, Op::LeakyRelu(a, slope))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.leaky_relu(a, 0.0)
    }

    pub fn log(&mut self, a: Var) -> Var {
        self.map(a, f64::ln, Op::Log(a))
    }

    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let inside: Vec<bool> = self
            .value(a)
            .data()
            .iter()
            .map(|&x| x > lo && x < hi)
            .collect();
        self.mark_pattern(inside.into_iter());
        self.map(a, |x| x.clamp(lo, hi), Op::Clamp(a, lo, hi))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let (n, m) = self.shape(a);
        let mut data = Vec::with_capacity(n * m);
        for r in 0..n {
            data.extend(softmax_row(self.value(a).row(r), None));
        }
        self.push(Tensor::matrix(n, m, data), Op::SoftmaxRows(a))
    }

    /// Row softmax over the entries where `mask` is true; rows with no
    /// admitted entry are all zero.
    pub fn masked_softmax_rows(&mut self, a: Var, mask: Vec<bool>) -> Var {
        let (n, m) = self.shape(a);
        assert_eq!(mask.len(), n * m, "mask size");
        let mut data = Vec::with_capacity(n * m);
        for r in 0..n {
            data.extend(softmax_row(
                self.value(a).row(r),
                Some(&mask[r * m..(r + 1) * m]),
            ));
        }
        let v = self.push(Tensor::matrix(n, m, data), Op::MaskedSoftmaxRows(a));
        self.masks.insert(v.0, mask);
        v
    }

    pub fn log_softmax_rows(&mut self, a: Var) -> Var {
        let (n, m) = self.shape(a);
        let mut data = Vec::with_capacity(n * m);
        for r in 0..n {
            let row = self.value(a).row(r);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
            data.extend(row.iter().map(|x| x - lse));
        }
        self.push(Tensor::matrix(n, m, data), Op::LogSoftmaxRows(a))
    }

    /// Scales each row to unit L2 norm. A zero row yields NaN.
    pub fn normalize_rows(&mut self, a: Var) -> Var {
        let (n, m) = self.shape(a);
        let mut data = Vec::with_capacity(n * m);
        for r in 0..n {
            let row = self.value(a).row(r);
            let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            data.extend(row.iter().map(|x| x / norm));
        }
        self.push(Tensor::matrix(n, m, data), Op::NormalizeRows(a))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat of nothing");
        let n = self.shape(parts[0]).0;
        let widths: Vec<usize> = parts
            .iter()
            .map(|&p| {
                let (r, c) = self.shape(p);
                assert_eq!(r, n, "concat_cols row mismatch");
                c
            })
            .collect();
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(n * total);
        for r in 0..n {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(r));
            }
        }
        self.push(Tensor::matrix(n, total, data), Op::ConcatCols(parts.to_vec()))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat of nothing");
        let m = self.shape(parts[0]).1;
        let mut data = Vec::new();
        let mut n = 0;
        for &p in parts {
            let (r, c) = self.shape(p);
            assert_eq!(c, m, "concat_rows column mismatch");
            n += r;
            data.extend_from_slice(self.value(p).data());
        }
        self.push(Tensor::matrix(n, m, data), Op::ConcatRows(parts.to_vec()))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Var {
        let (n, m) = self.shape(a);
        assert!(start + len <= n, "slice_rows out of range");
        let data = self.value(a).data()[start * m..(start + len) * m].to_vec();
        self.push(Tensor::matrix(len, m, data), Op::SliceRows(a, start))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let (n, m) = self.shape(a);
        assert!(start + len <= m, "slice_cols out of range");
        let mut data = Vec::with_capacity(n * len);
        for r in 0..n {
            data.extend_from_slice(&self.value(a).row(r)[start..start + len]);
        }
        self.push(Tensor::matrix(n, len, data), Op::SliceCols(a, start))
    }

    pub fn gather_rows(&mut self, a: Var, ids: &[usize]) -> Var {
        let m = self.shape(a).1;
        let mut data = Vec::with_capacity(ids.len() * m);
        for &i in ids {
            data.extend_from_slice(self.value(a).row(i));
        }
        self.push(Tensor::matrix(ids.len(), m, data), Op::GatherRows(a, ids.to_vec()))
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        self.push(Tensor::scalar(s), Op::SumAll(a))
    }

    pub fn mean_rows(&mut self, a: Var) -> Var {
        let (n, m) = self.shape(a);
        let mut data = vec![0.0; m];
        for r in 0..n {
            for (d, x) in data.iter_mut().zip(self.value(a).row(r)) {
                *d += x;
            }
        }
        for d in &mut data {
            *d /= n as f64;
        }
        self.push(Tensor::row_vector(data), Op::MeanRows(a))
    }

    /// `x * W^T + b` for `W: out x in`.
    pub fn linear(&mut self, x: Var, weight: &str, bias: Option<&str>) -> Result<Var> {
        let w = self.param(weight)?;
        let (_, in_x) = self.shape(x);
        let (_, in_w) = self.shape(w);
        if in_x != in_w {
            return Err(Error::Shape(format!(
                "`{weight}` expects inputs of width {in_w}, got {in_x}"
            )));
        }
        let y = self.matmul_bt(x, w);
        match bias {
            Some(b) => {
                let b = self.param(b)?;
                Ok(self.add_row(y, b))
            }
            None => Ok(y),
        }
    }

    /// Exact gradients of the scalar `loss` for every parameter.
    pub fn backward(&self, loss: Var) -> Result<GradMap> {
        self.check_finite()?;
        assert_eq!(self.value(loss).len(), 1, "backward needs a scalar loss");
        let mut grads: Vec<Option<Vec<f64>>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);
        let mut out = GradMap::zeros_like(self.params);

        fn acc(grads: &mut [Option<Vec<f64>>], v: Var, g: Vec<f64>) {
            match &mut grads[v.0] {
                Some(existing) => {
                    for (e, x) in existing.iter_mut().zip(g) {
                        *e += x;
                    }
                }
                slot @ None => *slot = Some(g),
            }
        }

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            let y = node.value.data();
            let (n, m) = (node.value.rows(), node.value.cols());
            match &node.op {
                Op::Constant => {}
                Op::Param(p) => out.accumulate(&self.param_paths[*p], &g),
                Op::Embed(p, ids) => {
                    let path = &self.param_paths[*p];
                    let table = self.params.get(path).expect("embedded param");
                    let mut full = vec![0.0; table.len()];
                    for (r, &id) in ids.iter().enumerate() {
                        for c in 0..m {
                            full[id * m + c] += g[r * m + c];
                        }
                    }
                    out.accumulate(path, &full);
                }
                Op::MatMul(a, b) => {
                    let (_, k) = self.shape(*a);
                    let ga = mm_nt(&g, n, m, self.value(*b).data(), k);
                    let gb = mm_tn(self.value(*a).data(), n, k, &g, m);
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::MatMulBT(a, b) => {
                    let (_, k) = self.shape(*a);
                    let ga = mm_nn(&g, n, m, self.value(*b).data(), k);
                    let gb = mm_tn(&g, n, m, self.value(*a).data(), k);
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *a, g.clone());
                    acc(&mut grads, *b, g);
                }
                Op::Sub(a, b) => {
                    acc(&mut grads, *b, g.iter().map(|x| -x).collect());
                    acc(&mut grads, *a, g);
                }
                Op::Mul(a, b) => {
                    let av = self.value(*a).data();
                    let bv = self.value(*b).data();
                    let ga = g.iter().zip(bv).map(|(x, y)| x * y).collect();
                    let gb = g.iter().zip(av).map(|(x, y)| x * y).collect();
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::AddRow(a, b) => {
                    let mut gb = vec![0.0; m];
                    for row in g.chunks(m) {
                        for (s, x) in gb.iter_mut().zip(row) {
                            *s += x;
                        }
                    }
                    acc(&mut grads, *b, gb);
                    acc(&mut grads, *a, g);
                }
                Op::Affine(a, s) => acc(&mut grads, *a, g.iter().map(|x| x * s).collect()),
                Op::Sigmoid(a) => {
                    let ga = g.iter().zip(y).map(|(gx, yv)| gx * yv * (1.0 - yv)).collect();
                    acc(&mut grads, *a, ga);
                }
                Op::Tanh(a) => {
                    let ga = g.iter().zip(y).map(|(gx, yv)| gx * (1.0 - yv * yv)).collect();
                    acc(&mut grads, *a, ga);
                }
                Op::LeakyRelu(a, slope) => {
                    let x = self.value(*a).data();
                    let ga = g
                        .iter()
                        .zip(x)
                        .map(|(gx, &xv)| if xv > 0.0 { *gx } else { gx * slope })
                        .collect();
                    acc(&mut grads, *a, ga);
                }
                Op::Log(a) => {
                    let x = self.value(*a).data();
                    acc(&mut grads, *a, g.iter().zip(x).map(|(gx, xv)| gx / xv).collect());
                }
                Op::Clamp(a, lo, hi) => {
                    let x = self.value(*a).data();
                    let ga = g
                        .iter()
                        .zip(x)
                        .map(|(gx, &xv)| if xv > *lo && xv < *hi { *gx } else { 0.0 })
                        .collect();
                    acc(&mut grads, *a, ga);
                }
                Op::SoftmaxRows(a) | Op::MaskedSoftmaxRows(a) => {
                    let mut ga = vec![0.0; n * m];
                    for r in 0..n {
                        let yr = &y[r * m..(r + 1) * m];
                        let gr = &g[r * m..(r + 1) * m];
                        let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                        for c in 0..m {
                            ga[r * m + c] = yr[c] * (gr[c] - dot);
                        }
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::LogSoftmaxRows(a) => {
                    let mut ga = vec![0.0; n * m];
                    for r in 0..n {
                        let gr = &g[r * m..(r + 1) * m];
                        let gsum: f64 = gr.iter().sum();
                        for c in 0..m {
                            ga[r * m + c] = gr[c] - y[r * m + c].exp() * gsum;
                        }
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::NormalizeRows(a) => {
                    let x = self.value(*a).data();
                    let mut ga = vec![0.0; n * m];
                    for r in 0..n {
                        let xr = &x[r * m..(r + 1) * m];
                        let yr = &y[r * m..(r + 1) * m];
                        let gr = &g[r * m..(r + 1) * m];
                        let norm = xr.iter().map(|v| v * v).sum::<f64>().sqrt();
                        let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                        for c in 0..m {
                            ga[r * m + c] = (gr[c] - yr[c] * dot) / norm;
                        }
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let w = self.shape(p).1;
                        let mut gp = Vec::with_capacity(n * w);
                        for r in 0..n {
                            gp.extend_from_slice(&g[r * m + offset..r * m + offset + w]);
                        }
                        acc(&mut grads, p, gp);
                        offset += w;
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let len = self.value(p).len();
                        acc(&mut grads, p, g[offset..offset + len].to_vec());
                        offset += len;
                    }
                }
                Op::SliceRows(a, start) => {
                    let mut ga = vec![0.0; self.value(*a).len()];
                    ga[start * m..start * m + g.len()].copy_from_slice(&g);
                    acc(&mut grads, *a, ga);
                }
                Op::SliceCols(a, start) => {
                    let full = self.shape(*a).1;
                    let mut ga = vec![0.0; n * full];
                    for r in 0..n {
                        ga[r * full + start..r * full + start + m]
                            .copy_from_slice(&g[r * m..(r + 1) * m]);
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::GatherRows(a, ids) => {
                    let mut ga = vec![0.0; self.value(*a).len()];
                    for (r, &i) in ids.iter().enumerate() {
                        for c in 0..m {
                            ga[i * m + c] += g[r * m + c];
                        }
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::SumAll(a) => {
                    let len = self.value(*a).len();
                    acc(&mut grads, *a, vec![g[0]; len]);
                }
                Op::MeanRows(a) => {
                    let rows = self.shape(*a).0;
                    let mut ga = Vec::with_capacity(rows * m);
                    for _ in 0..rows {
                        ga.extend(g.iter().map(|x| x / rows as f64));
                    }
                    acc(&mut grads, *a, ga);
                }
            }
        }
        out.check_finite()?;
        Ok(out)
    }

    /// Boolean mask recorded for a masked softmax node.
    pub fn mask_of(&self, v: Var) -> Option<&[bool]> {
        self.masks.get(&v.0).map(Vec::as_slice)
    }
}
