//! Named parameter collections and their on-disk "RVPS" format.
//!
//! RVPS layout: magic `RVPS`, version u8 = 1, u32 entry count; per entry a
//! u16 name length, the UTF-8 name, u8 rank, rank x u32 extents, then
//! little-endian f32 values. Entries are sorted by name. The file ends with
//! a u64 FNV-1a checksum over all entry bytes.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use rvid_tensor::{Scalar, Tensor};

use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"RVPS";
const VERSION: u8 = 1;

#[derive(Clone, Debug)]
pub struct Parameter<T: Scalar> {
    pub value: Tensor<T>,
    pub requires_grad: bool,
}

/// Named weight collection; the unit of training, fusion and checkpointing.
/// Iteration order is always name-sorted, which keeps serialization and
/// optimizer updates deterministic.
#[derive(Clone, Default)]
pub struct ParamStore<T: Scalar> {
    entries: BTreeMap<String, Parameter<T>>,
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore { entries: BTreeMap::new() }
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor<T>) -> Result<()> {
        let name = name.into();
        if self.entries.contains_key(&name) {
            return Err(Error::Invalid(format!("duplicate parameter name `{name}`")));
        }
        self.entries.insert(name, Parameter { value, requires_grad: true });
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&Parameter<T>> {
        self.entries.get(name).ok_or_else(|| Error::MissingParam(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn set_value(&mut self, name: &str, value: Tensor<T>) -> Result<()> {
        let p = self
            .entries
            .get_mut(name)
            .ok_or_else(|| Error::MissingParam(name.to_string()))?;
        if p.value.shape() != value.shape() {
            return Err(Error::Invalid(format!(
                "shape change for `{name}`: {:?} -> {:?}",
                p.value.shape(),
                value.shape()
            )));
        }
        p.value = value;
        Ok(())
    }

    pub fn remove(&mut self, name: &str) -> Result<Parameter<T>> {
        self.entries.remove(name).ok_or_else(|| Error::MissingParam(name.to_string()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(|s| s.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Parameter<T>)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total scalar count across all parameters.
    pub fn param_count(&self) -> usize {
        self.entries.values().map(|p| p.value.len()).sum()
    }

    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        ParamStore {
            entries: self
                .entries
                .iter()
                .map(|(k, p)| {
                    (k.clone(), Parameter { value: p.value.cast::<U>(), requires_grad: p.requires_grad })
                })
                .collect(),
        }
    }
}

impl ParamStore<f32> {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut blob = Vec::new();
        for (name, p) in &self.entries {
            blob.extend_from_slice(&(name.len() as u16).to_le_bytes());
            blob.extend_from_slice(name.as_bytes());
            blob.push(p.value.rank() as u8);
            for &e in p.value.shape() {
                blob.extend_from_slice(&(e as u32).to_le_bytes());
            }
            for &v in p.value.data() {
                blob.extend_from_slice(&v.to_le_bytes());
            }
        }
        let mut out = Vec::with_capacity(blob.len() + 17);
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        out.extend_from_slice(&blob);
        out.extend_from_slice(&fnv1a64(&blob).to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Cursor { buf: bytes, pos: 0 };
        if r.take(4)? != &MAGIC[..] {
            return Err(Error::Format("RVPS: bad magic".into()));
        }
        let version = r.u8()?;
        if version != VERSION {
            return Err(Error::Format(format!("RVPS: unsupported version {version}")));
        }
        let count = r.u32()? as usize;
        let blob_start = r.pos;
        let mut entries = BTreeMap::new();
        let mut prev_name: Option<String> = None;
        for _ in 0..count {
            let name_len = r.u16()? as usize;
            let name = String::from_utf8(r.take(name_len)?.to_vec())
                .map_err(|_| Error::Format("RVPS: name is not UTF-8".into()))?;
            if let Some(p) = &prev_name {
                if *p >= name {
                    return Err(Error::Format("RVPS: entries not sorted by name".into()));
                }
            }
            let rank = r.u8()? as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(r.u32()? as usize);
            }
            let n: usize = shape.iter().product();
            let raw = r.take(n * 4)?;
            let data: Vec<f32> = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            let value = Tensor::new(shape, data).map_err(Error::Tensor)?;
            prev_name = Some(name.clone());
            entries.insert(name, Parameter { value, requires_grad: true });
        }
        let blob_end = r.pos;
        let checksum = r.u64()?;
        if r.pos != bytes.len() {
            return Err(Error::Format("RVPS: trailing bytes".into()));
        }
        if checksum != fnv1a64(&bytes[blob_start..blob_end]) {
            return Err(Error::Format("RVPS: checksum mismatch".into()));
        }
        Ok(ParamStore { entries })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        f.write_all(&self.to_bytes())
            .map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut f = std::fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let mut bytes = Vec::new();
        f.read_to_end(&mut bytes)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::from_bytes(&bytes)
    }
}

/// Per-parameter gradients aligned with the store's shapes. Parameters the
/// loss never touched get explicit zero tensors.
pub struct GradientRecord<T: Scalar> {
    grads: BTreeMap<String, Tensor<T>>,
}

impl<T: Scalar> GradientRecord<T> {
    pub fn new(grads: BTreeMap<String, Tensor<T>>) -> Self {
        GradientRecord { grads }
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.grads.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.grads.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Format("RVPS: truncated file".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16> {
        let s = self.take(2)?;
        Ok(u16::from_le_bytes([s[0], s[1]]))
    }
    fn u32(&mut self) -> Result<u32> {
        let s = self.take(4)?;
        Ok(u32::from_le_bytes([s[0], s[1], s[2], s[3]]))
    }
    fn u64(&mut self) -> Result<u64> {
        let s = self.take(8)?;
        Ok(u64::from_le_bytes(s.try_into().unwrap()))
    }
}
