//! Binary tensor format, parameter containers, and CSV output.
//!
//! A single tensor is stored as: magic `CFKT`, one dtype byte (0 = f64,
//! 1 = f32), one rank byte, `rank` little-endian u64 extents, then the
//! row-major little-endian payload.
//!
//! A parameter tree is a length-prefixed sequence of named tensors: u64
//! entry count, then per entry a u64 name length, the UTF-8 slash-path
//! name, one trainable flag byte, a u64 blob length, and the tensor in the
//! format above. Entry order is preserved.

use std::collections::HashMap;
use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::scalar::{Dtype, Scalar};
use crate::tensor::Tensor;

const TENSOR_MAGIC: &[u8; 4] = b"CFKT";

/// 64-bit FNV-1a hash, used as the output checksum in run reports.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Serialize one tensor to the binary format.
pub fn tensor_to_bytes<S: Scalar>(t: &Tensor<S>) -> Vec<u8> {
    let mut out = Vec::with_capacity(6 + t.rank() * 8 + t.len() * S::DTYPE.byte_width());
    out.extend_from_slice(TENSOR_MAGIC);
    out.push(S::DTYPE as u8);
    out.push(t.rank() as u8);
    for &d in t.shape() {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for &v in t.data() {
        v.write_le(&mut out);
    }
    out
}

fn take<'a>(bytes: &mut &'a [u8], n: usize, field: &str) -> Result<&'a [u8]> {
    if bytes.len() < n {
        return Err(Error::format(field, "unexpected end of data"));
    }
    let (head, rest) = bytes.split_at(n);
    *bytes = rest;
    Ok(head)
}

fn take_u64(bytes: &mut &[u8], field: &str) -> Result<u64> {
    let raw = take(bytes, 8, field)?;
    Ok(u64::from_le_bytes(raw.try_into().unwrap()))
}

/// Deserialize one tensor; the stored dtype must match `S`.
pub fn tensor_from_bytes<S: Scalar>(mut bytes: &[u8]) -> Result<Tensor<S>> {
    let b = &mut bytes;
    let magic = take(b, 4, "magic")?;
    if magic != TENSOR_MAGIC {
        return Err(Error::format("magic", format!("expected CFKT, got {magic:?}")));
    }
    let dtype_byte = take(b, 1, "dtype")?[0];
    let dtype = Dtype::from_byte(dtype_byte)
        .ok_or_else(|| Error::format("dtype", format!("unknown dtype byte {dtype_byte}")))?;
    if dtype != S::DTYPE {
        return Err(Error::format(
            "dtype",
            format!("tensor stored as {dtype:?}, requested {:?}", S::DTYPE),
        ));
    }
    let rank = take(b, 1, "rank")?[0] as usize;
    let mut shape = Vec::with_capacity(rank);
    for _ in 0..rank {
        let d = take_u64(b, "dims")?;
        shape.push(usize::try_from(d).map_err(|_| Error::format("dims", "extent too large"))?);
    }
    let n: usize = shape.iter().product();
    let width = S::DTYPE.byte_width();
    let payload = take(b, n * width, "payload")?;
    if !b.is_empty() {
        return Err(Error::format("payload", "trailing bytes after tensor"));
    }
    let data: Vec<S> = payload.chunks_exact(width).map(S::read_le).collect();
    if shape.is_empty() {
        // rank-0 scalar: data has exactly one value
        if data.len() != 1 {
            return Err(Error::format("payload", "scalar payload must hold one value"));
        }
        return Ok(Tensor::scalar(data[0]));
    }
    Tensor::new(shape, data)
}

/// Write a tensor to a file in the binary format.
pub fn write_tensor<S: Scalar>(path: &std::path::Path, t: &Tensor<S>) -> Result<()> {
    std::fs::write(path, tensor_to_bytes(t))?;
    Ok(())
}

/// Read a tensor file written by [`write_tensor`].
pub fn read_tensor<S: Scalar>(path: &std::path::Path) -> Result<Tensor<S>> {
    let bytes = std::fs::read(path)?;
    tensor_from_bytes(&bytes)
}

/// Ordered map from slash-path names to tensors, the storage form of all
/// model parameters (including non-trainable running statistics).
#[derive(Debug, Clone, Default)]
pub struct ParamTree<S: Scalar> {
    entries: Vec<ParamEntry<S>>,
    index: HashMap<String, usize>,
}

#[derive(Debug, Clone)]
pub struct ParamEntry<S: Scalar> {
    pub name: String,
    pub tensor: Tensor<S>,
    pub trainable: bool,
}

impl<S: Scalar> ParamTree<S> {
    pub fn new() -> Self {
        ParamTree {
            entries: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor<S>, trainable: bool) -> Result<()> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::Contract(format!("duplicate parameter name {name}")));
        }
        self.index.insert(name.clone(), self.entries.len());
        self.entries.push(ParamEntry {
            name,
            tensor,
            trainable,
        });
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<S>> {
        self.index.get(name).map(|&i| &self.entries[i].tensor)
    }

    pub fn set(&mut self, name: &str, tensor: Tensor<S>) -> Result<()> {
        match self.index.get(name) {
            Some(&i) => {
                if self.entries[i].tensor.shape() != tensor.shape() {
                    return Err(Error::ShapeMismatch {
                        op: "param_tree.set",
                        lhs: self.entries[i].tensor.shape().to_vec(),
                        rhs: tensor.shape().to_vec(),
                    });
                }
                self.entries[i].tensor = tensor;
                Ok(())
            }
            None => Err(Error::Contract(format!("unknown parameter name {name}"))),
        }
    }

    pub fn entries(&self) -> &[ParamEntry<S>] {
        &self.entries
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.name.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total element count of trainable entries.
    pub fn num_trainable(&self) -> usize {
        self.entries
            .iter()
            .filter(|e| e.trainable)
            .map(|e| e.tensor.len())
            .sum()
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(&(self.entries.len() as u64).to_le_bytes())?;
        for e in &self.entries {
            w.write_all(&(e.name.len() as u64).to_le_bytes())?;
            w.write_all(e.name.as_bytes())?;
            w.write_all(&[e.trainable as u8])?;
            let blob = tensor_to_bytes(&e.tensor);
            w.write_all(&(blob.len() as u64).to_le_bytes())?;
            w.write_all(&blob)?;
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        let b = &mut bytes.as_slice();
        let count = take_u64(b, "entry_count")?;
        let mut tree = ParamTree::new();
        for _ in 0..count {
            let name_len = take_u64(b, "name_len")? as usize;
            let name = std::str::from_utf8(take(b, name_len, "name")?)
                .map_err(|_| Error::format("name", "invalid UTF-8"))?
                .to_string();
            let trainable = match take(b, 1, "trainable")?[0] {
                0 => false,
                1 => true,
                other => {
                    return Err(Error::format("trainable", format!("invalid flag byte {other}")))
                }
            };
            let blob_len = take_u64(b, "blob_len")? as usize;
            let blob = take(b, blob_len, "blob")?;
            tree.insert(name, tensor_from_bytes::<S>(blob)?, trainable)?;
        }
        if !b.is_empty() {
            return Err(Error::format("container", "trailing bytes after entries"));
        }
        Ok(tree)
    }
}

/// Write a rank-2 tensor as CSV: header row `c0,c1,...`, one matrix row per
/// line, plain decimal with `.` radix.
pub fn write_csv<S: Scalar>(w: &mut impl Write, t: &Tensor<S>) -> Result<()> {
    if t.rank() != 2 {
        return Err(Error::dimension("write_csv", "tensor must have rank 2"));
    }
    let (rows, cols) = (t.dim(0), t.dim(1));
    let header: Vec<String> = (0..cols).map(|c| format!("c{c}")).collect();
    writeln!(w, "{}", header.join(","))?;
    for r in 0..rows {
        let line: Vec<String> = (0..cols).map(|c| format!("{}", t.at2(r, c).as_f64())).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    Ok(())
}
