//! Dense row-major `f64` tensors, the named parameter store, gradient maps
//! and the binary checkpoint format.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} needs {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; shape.iter().product()],
        }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(rows * cols, data.len(), "matrix {rows}x{cols}");
        Tensor {
            shape: vec![rows, cols],
            data,
        }
    }

    pub fn row_vector(data: Vec<f64>) -> Self {
        Tensor {
            shape: vec![1, data.len()],
            data,
        }
    }

    pub fn scalar(value: f64) -> Self {
        Tensor::matrix(1, 1, vec![value])
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Tensor::matrix(rows.len(), cols, data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Row count when viewed as a matrix; rank-1 tensors are one row.
    pub fn rows(&self) -> usize {
        match self.shape.len() {
            0 => 1,
            1 => 1,
            _ => self.shape[0],
        }
    }

    pub fn cols(&self) -> usize {
        match self.shape.len() {
            0 => 1,
            1 => self.shape[0],
            _ => self.shape[1..].iter().product(),
        }
    }

    /// Same data, viewed as a `rows x cols` matrix.
    pub fn as_matrix(&self) -> Tensor {
        Tensor::matrix(self.rows(), self.cols(), self.data.clone())
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let c = self.cols();
        &self.data[r * c..(r + 1) * c]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols() + c]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows()).map(|r| self.row(r).to_vec()).collect()
    }

    pub fn scalar_value(&self) -> f64 {
        assert_eq!(self.data.len(), 1, "not a scalar: {:?}", self.shape);
        self.data[0]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        assert_eq!(self.data.len(), other.data.len(), "add_assign size");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        for v in &mut self.data {
            *v *= s;
        }
    }
}

/// Every learnable tensor, addressed by a stable path.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ModelParams {
    tensors: BTreeMap<String, Tensor>,
}

impl ModelParams {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, path: impl Into<String>, tensor: Tensor) {
        self.tensors.insert(path.into(), tensor);
    }

    pub fn get(&self, path: &str) -> Option<&Tensor> {
        self.tensors.get(path)
    }

    pub fn get_mut(&mut self, path: &str) -> Option<&mut Tensor> {
        self.tensors.get_mut(path)
    }

    pub fn contains(&self, path: &str) -> bool {
        self.tensors.contains_key(path)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.tensors.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor)> {
        self.tensors.iter_mut()
    }

    pub fn paths(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    /// Zeroes every tensor whose path starts with `prefix`.
    pub fn zero_prefix(&mut self, prefix: &str) {
        for (path, t) in self.tensors.iter_mut() {
            if path.starts_with(prefix) {
                t.data_mut().fill(0.0);
            }
        }
    }

    /// Checks that `self` has exactly the paths and shapes of `expected`.
    pub fn check_layout(&self, expected: &ModelParams) -> Result<()> {
        for (path, t) in &expected.tensors {
            match self.tensors.get(path) {
                None => return Err(Error::Shape(format!("missing parameter `{path}`"))),
                Some(have) if have.shape() != t.shape() => {
                    return Err(Error::Shape(format!(
                        "parameter `{path}` has shape {:?}, expected {:?}",
                        have.shape(),
                        t.shape()
                    )))
                }
                _ => {}
            }
        }
        if let Some(extra) = self.tensors.keys().find(|p| !expected.tensors.contains_key(*p)) {
            return Err(Error::Shape(format!("unexpected parameter `{extra}`")));
        }
        Ok(())
    }
}

/// Gradients keyed like [`ModelParams`]; untouched parameters stay zero.
#[derive(Debug, Clone, PartialEq)]
pub struct GradMap {
    grads: BTreeMap<String, Tensor>,
}

impl GradMap {
    pub fn zeros_like(params: &ModelParams) -> Self {
        GradMap {
            grads: params
                .iter()
                .map(|(p, t)| (p.clone(), Tensor::zeros(t.shape())))
                .collect(),
        }
    }

    pub fn get(&self, path: &str) -> Option<&Tensor> {
        self.grads.get(path)
    }

    pub(crate) fn accumulate(&mut self, path: &str, data: &[f64]) {
        let g = self
            .grads
            .get_mut(path)
            .unwrap_or_else(|| panic!("gradient for unknown parameter `{path}`"));
        for (a, b) in g.data_mut().iter_mut().zip(data) {
            *a += b;
        }
    }

    pub fn add_assign(&mut self, other: &GradMap) {
        for (path, g) in &other.grads {
            self.accumulate(path, g.data());
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.grads.iter()
    }

    pub fn check_finite(&self) -> Result<()> {
        match self.grads.iter().find(|(_, g)| !g.is_finite()) {
            Some((path, _)) => Err(Error::NonFiniteGradient(path.clone())),
            None => Ok(()),
        }
    }
}

const CHECKPOINT_MAGIC: &[u8; 4] = b"CGNB";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Writes `params` as: magic, format version, 32-byte config hash, record
/// count, then per tensor its path, shape and little-endian `f64` data.
pub fn write_checkpoint(path: &Path, params: &ModelParams, config_hash: &[u8; 32]) -> Result<()> {
    let mut buf = Vec::with_capacity(64 + params.num_scalars() * 8);
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.extend_from_slice(config_hash);
    buf.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for (name, t) in params.iter() {
        buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for &d in t.shape() {
            buf.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &v in t.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut file = fs::File::create(path)?;
    file.write_all(&buf)?;
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.pos.checked_add(n)?;
        let slice = self.bytes.get(self.pos..end)?;
        self.pos = end;
        Some(slice)
    }

    fn u32(&mut self) -> Option<u32> {
        self.take(4).map(|b| u32::from_le_bytes(b.try_into().unwrap()))
    }

    fn u64(&mut self) -> Option<u64> {
        self.take(8).map(|b| u64::from_le_bytes(b.try_into().unwrap()))
    }
}

/// Reads a checkpoint written by [`write_checkpoint`], returning the
/// parameters and the stored config hash.
pub fn read_checkpoint(path: &Path) -> Result<(ModelParams, [u8; 32])> {
    let fail = |message: &str| Error::Checkpoint {
        path: path.to_path_buf(),
        message: message.to_string(),
    };
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    let mut cur = Cursor { bytes: &bytes, pos: 0 };
    if cur.take(4) != Some(CHECKPOINT_MAGIC.as_slice()) {
        return Err(fail("bad magic"));
    }
    let version = cur.u32().ok_or_else(|| fail("truncated header"))?;
    if version != CHECKPOINT_VERSION {
        return Err(fail(&format!("unsupported format version {version}")));
    }
    let hash: [u8; 32] = cur
        .take(32)
        .ok_or_else(|| fail("truncated header"))?
        .try_into()
        .unwrap();
    let count = cur.u32().ok_or_else(|| fail("truncated header"))?;
    let mut params = ModelParams::new();
    for _ in 0..count {
        let name_len = cur.u32().ok_or_else(|| fail("truncated record"))? as usize;
        let name = std::str::from_utf8(cur.take(name_len).ok_or_else(|| fail("truncated record"))?)
            .map_err(|_| fail("parameter path is not UTF-8"))?
            .to_string();
        let ndim = cur.u32().ok_or_else(|| fail("truncated record"))? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(cur.u64().ok_or_else(|| fail("truncated record"))? as usize);
        }
        let numel: usize = shape.iter().product();
        let raw = cur
            .take(numel.checked_mul(8).ok_or_else(|| fail("bad shape"))?)
            .ok_or_else(|| fail("truncated tensor data"))?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        params.insert(name, Tensor::new(shape, data)?);
    }
    if cur.pos != bytes.len() {
        return Err(fail("trailing bytes"));
    }
    Ok((params, hash))
}
