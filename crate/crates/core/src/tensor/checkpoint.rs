//! Named-tensor checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "ICTG" "0001"                       magic + version
//! u32  entry count
//! per entry:
//!   u16 name length, name (UTF-8)
//!   u8  element type (0 = f32, 1 = f64)
//!   u8  rank, rank × u64 dimensions
//!   u64 byte offset into the payload, u64 byte length
//! payload: IEEE-754 little-endian values, entries back to back
//! ```

use std::path::Path;

use thiserror::Error;

use super::{Real, Tensor};

pub const MAGIC: &[u8; 4] = b"ICTG";
pub const VERSION: &[u8; 4] = b"0001";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DType {
    F32,
    F64,
}

impl DType {
    pub fn size(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::F64 => 8,
        }
    }

    fn code(self) -> u8 {
        match self {
            DType::F32 => 0,
            DType::F64 => 1,
        }
    }

    fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(DType::F32),
            1 => Some(DType::F64),
            _ => None,
        }
    }
}

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("not a checkpoint (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0:?}")]
    UnsupportedVersion(String),
    #[error("truncated checkpoint")]
    Truncated,
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
    #[error("checkpoint has no tensor `{0}`")]
    Missing(String),
    #[error("tensor `{name}` is stored as {stored:?}, requested {requested:?}")]
    DTypeMismatch {
        name: String,
        stored: DType,
        requested: DType,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq)]
struct Entry {
    name: String,
    dtype: DType,
    shape: Vec<usize>,
    bytes: Vec<u8>,
}

/// In-memory set of named tensors, serialisable to the `ICTG0001` format.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    entries: Vec<Entry>,
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.name.as_str())
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.iter().any(|e| e.name == name)
    }

    /// Adds or replaces `name`.
    pub fn put<T: Real>(&mut self, name: impl Into<String>, t: &Tensor<T>) {
        let name = name.into();
        let mut bytes = Vec::with_capacity(t.len() * T::DTYPE.size());
        for &v in t.data() {
            v.put_le(&mut bytes);
        }
        let entry = Entry {
            name: name.clone(),
            dtype: T::DTYPE,
            shape: t.shape().to_vec(),
            bytes,
        };
        match self.entries.iter_mut().find(|e| e.name == name) {
            Some(e) => *e = entry,
            None => self.entries.push(entry),
        }
    }

    pub fn put_scalar(&mut self, name: impl Into<String>, v: f64) {
        self.put(name, &Tensor::<f64>::scalar(v));
    }

    pub fn get<T: Real>(&self, name: &str) -> Result<Tensor<T>, CheckpointError> {
        let e = self
            .entries
            .iter()
            .find(|e| e.name == name)
            .ok_or_else(|| CheckpointError::Missing(name.to_string()))?;
        if e.dtype != T::DTYPE {
            return Err(CheckpointError::DTypeMismatch {
                name: name.to_string(),
                stored: e.dtype,
                requested: T::DTYPE,
            });
        }
        let data = e
            .bytes
            .chunks_exact(T::DTYPE.size())
            .map(T::get_le)
            .collect();
        Tensor::new(e.shape.clone(), data)
            .map_err(|err| CheckpointError::Malformed(err.to_string()))
    }

    pub fn get_scalar(&self, name: &str) -> Result<f64, CheckpointError> {
        Ok(self.get::<f64>(name)?.data()[0])
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(VERSION);
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        let mut offset = 0u64;
        for e in &self.entries {
            out.extend_from_slice(&(e.name.len() as u16).to_le_bytes());
            out.extend_from_slice(e.name.as_bytes());
            out.push(e.dtype.code());
            out.push(e.shape.len() as u8);
            for &d in &e.shape {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            out.extend_from_slice(&offset.to_le_bytes());
            out.extend_from_slice(&(e.bytes.len() as u64).to_le_bytes());
            offset += e.bytes.len() as u64;
        }
        for e in &self.entries {
            out.extend_from_slice(&e.bytes);
        }
        out
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self, CheckpointError> {
        let mut r = Reader { buf, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let version = r.take(4)?;
        if version != VERSION {
            return Err(CheckpointError::UnsupportedVersion(
                String::from_utf8_lossy(version).into_owned(),
            ));
        }
        let count = r.u32()? as usize;
        let mut manifest = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let nlen = r.u16()? as usize;
            let name = std::str::from_utf8(r.take(nlen)?)
                .map_err(|_| CheckpointError::Malformed("tensor name is not UTF-8".into()))?
                .to_string();
            let dtype = DType::from_code(r.u8()?).ok_or_else(|| {
                CheckpointError::Malformed(format!("bad element type for `{name}`"))
            })?;
            let rank = r.u8()? as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(r.u64()? as usize);
            }
            let offset = r.u64()? as usize;
            let len = r.u64()? as usize;
            let numel: usize = shape.iter().product();
            if numel * dtype.size() != len {
                return Err(CheckpointError::Malformed(format!(
                    "`{name}`: shape {shape:?} does not match {len} payload bytes"
                )));
            }
            manifest.push((name, dtype, shape, offset, len));
        }
        let payload = &buf[r.pos..];
        let mut entries = Vec::with_capacity(manifest.len());
        for (name, dtype, shape, offset, len) in manifest {
            let end = offset.checked_add(len).ok_or(CheckpointError::Truncated)?;
            if end > payload.len() {
                return Err(CheckpointError::Truncated);
            }
            entries.push(Entry {
                name,
                dtype,
                shape,
                bytes: payload[offset..end].to_vec(),
            });
        }
        Ok(Self { entries })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CheckpointError> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        if self.pos + n > self.buf.len() {
            return Err(CheckpointError::Truncated);
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, CheckpointError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, CheckpointError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_and_roundtrip() {
        let mut ck = Checkpoint::new();
        ck.put(
            "a",
            &Tensor::<f32>::from_f64(&[2, 2], &[1.0, -2.5, 3.25, 1e-7]).unwrap(),
        );
        ck.put(
            "b",
            &Tensor::<f64>::from_f64(&[3], &[0.1, 0.2, 0.3]).unwrap(),
        );
        let bytes = ck.to_bytes();
        assert_eq!(&bytes[..8], b"ICTG0001");
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, ck);
        assert_eq!(
            back.get::<f32>("a").unwrap().data(),
            &[1.0, -2.5, 3.25, 1e-7]
        );
        assert!(matches!(
            back.get::<f64>("a"),
            Err(CheckpointError::DTypeMismatch { .. })
        ));
        assert!(matches!(
            back.get::<f64>("zz"),
            Err(CheckpointError::Missing(_))
        ));
    }

    #[test]
    fn rejects_bad_headers_and_truncation() {
        let mut ck = Checkpoint::new();
        ck.put("a", &Tensor::<f32>::zeros(&[8]));
        let bytes = ck.to_bytes();
        let mut wrong = bytes.clone();
        wrong[0] = b'X';
        assert!(matches!(
            Checkpoint::from_bytes(&wrong),
            Err(CheckpointError::BadMagic)
        ));
        let mut v2 = bytes.clone();
        v2[7] = b'2';
        assert!(matches!(
            Checkpoint::from_bytes(&v2),
            Err(CheckpointError::UnsupportedVersion(_))
        ));
        assert!(matches!(
            Checkpoint::from_bytes(&bytes[..bytes.len() - 3]),
            Err(CheckpointError::Truncated)
        ));
    }
}
