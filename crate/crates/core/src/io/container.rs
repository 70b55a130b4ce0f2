//! Binary tensor container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! b"JEAP"  u32 version  u64 record count
//! per record: u32 name length, UTF-8 name, u32 rank, rank × u64 dims,
//!             u8 element type, raw little-endian payload
//! u64 xxh64 (seed 0) of every preceding byte
//! ```

use std::collections::HashSet;
use std::path::Path;

use twox_hash::XxHash64;

use crate::error::{CoreError, Result};

pub const MAGIC: &[u8; 4] = b"JEAP";
pub const VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ElemType {
    F32 = 1,
    F64 = 2,
    U8 = 3,
}

impl ElemType {
    pub fn size(self) -> usize {
        match self {
            ElemType::F32 => 4,
            ElemType::F64 => 8,
            ElemType::U8 => 1,
        }
    }

    fn from_code(code: u8) -> Result<Self> {
        match code {
            1 => Ok(ElemType::F32),
            2 => Ok(ElemType::F64),
            3 => Ok(ElemType::U8),
            other => Err(format_err(format!("unknown element type code {other}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Payload {
    F32(Vec<f32>),
    F64(Vec<f64>),
    Bytes(Vec<u8>),
}

impl Payload {
    pub fn elem_type(&self) -> ElemType {
        match self {
            Payload::F32(_) => ElemType::F32,
            Payload::F64(_) => ElemType::F64,
            Payload::Bytes(_) => ElemType::U8,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Payload::F32(v) => v.len(),
            Payload::F64(v) => v.len(),
            Payload::Bytes(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Record {
    pub name: String,
    pub dims: Vec<u64>,
    pub payload: Payload,
}

fn format_err(msg: impl Into<String>) -> CoreError {
    CoreError::Format(msg.into())
}

/// Ordered, uniquely named records.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Container {
    records: Vec<Record>,
}

impl Container {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn push(&mut self, name: impl Into<String>, dims: Vec<u64>, payload: Payload) -> Result<()> {
        let name = name.into();
        let expected: u64 = dims.iter().product();
        if expected != payload.len() as u64 {
            return Err(format_err(format!(
                "record `{name}`: dims {dims:?} need {expected} values, got {}",
                payload.len()
            )));
        }
        if self.get(&name).is_some() {
            return Err(format_err(format!("duplicate record `{name}`")));
        }
        self.records.push(Record { name, dims, payload });
        Ok(())
    }

    pub fn push_bytes(&mut self, name: impl Into<String>, bytes: Vec<u8>) -> Result<()> {
        self.push(name, vec![bytes.len() as u64], Payload::Bytes(bytes))
    }

    pub fn get(&self, name: &str) -> Option<&Record> {
        self.records.iter().find(|r| r.name == name)
    }

    pub fn require(&self, name: &str) -> Result<&Record> {
        self.get(name).ok_or_else(|| format_err(format!("missing record `{name}`")))
    }

    pub fn bytes(&self, name: &str) -> Result<&[u8]> {
        match &self.require(name)?.payload {
            Payload::Bytes(b) => Ok(b),
            _ => Err(format_err(format!("record `{name}` is not a byte string"))),
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.records.len() as u64).to_le_bytes());
        for r in &self.records {
            out.extend_from_slice(&(r.name.len() as u32).to_le_bytes());
            out.extend_from_slice(r.name.as_bytes());
            out.extend_from_slice(&(r.dims.len() as u32).to_le_bytes());
            for d in &r.dims {
                out.extend_from_slice(&d.to_le_bytes());
            }
            out.push(r.payload.elem_type() as u8);
            match &r.payload {
                Payload::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
                Payload::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
                Payload::Bytes(v) => out.extend_from_slice(v),
            }
        }
        let sum = XxHash64::oneshot(0, &out);
        out.extend_from_slice(&sum.to_le_bytes());
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() + 4 + 8 + 8 {
            return Err(format_err("file is too short to be a container"));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 8);
        let stored = u64::from_le_bytes(tail.try_into().expect("8-byte tail"));
        if &body[..4] != MAGIC {
            return Err(format_err("bad magic"));
        }
        if XxHash64::oneshot(0, body) != stored {
            return Err(format_err("checksum mismatch"));
        }
        let mut cur = Cursor { data: body, pos: 4 };
        let version = cur.u32()?;
        if version != VERSION {
            return Err(format_err(format!("unsupported version {version} (expected {VERSION})")));
        }
        let count = cur.u64()?;
        let mut container = Container::new();
        let mut names = HashSet::new();
        for _ in 0..count {
            let name_len = cur.u32()? as usize;
            let name = String::from_utf8(cur.take(name_len)?.to_vec()).map_err(|_| format_err("record name is not UTF-8"))?;
            if !names.insert(name.clone()) {
                return Err(format_err(format!("duplicate record `{name}`")));
            }
            let rank = cur.u32()? as usize;
            let dims = (0..rank).map(|_| cur.u64()).collect::<Result<Vec<_>>>()?;
            let elem = ElemType::from_code(cur.take(1)?[0])?;
            let n = dims
                .iter()
                .try_fold(1u64, |acc, &d| acc.checked_mul(d))
                .and_then(|n| usize::try_from(n).ok())
                .ok_or_else(|| format_err(format!("record `{name}` is too large")))?;
            let raw = cur.take(n.checked_mul(elem.size()).ok_or_else(|| format_err("record size overflows"))?)?;
            let payload = match elem {
                ElemType::F32 => Payload::F32(raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect()),
                ElemType::F64 => Payload::F64(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect()),
                ElemType::U8 => Payload::Bytes(raw.to_vec()),
            };
            container.records.push(Record { name, dims, payload });
        }
        if cur.pos != body.len() {
            return Err(format_err(format!("{} trailing bytes after the last record", body.len() - cur.pos)));
        }
        Ok(container)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        super::write_atomic(path, &self.encode())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::decode(&std::fs::read(path)?)
    }
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.data.len()).ok_or_else(|| format_err("truncated container"))?;
        let slice = &self.data[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Container {
        let mut c = Container::new();
        c.push("a", vec![2, 2], Payload::F32(vec![1.0, -2.0, 3.5, 0.0])).unwrap();
        c.push("b", vec![1], Payload::F64(vec![std::f64::consts::PI])).unwrap();
        c.push_bytes("meta", b"hello".to_vec()).unwrap();
        c
    }

    #[test]
    fn round_trip_and_corruption() {
        let bytes = sample().encode();
        assert_eq!(Container::decode(&bytes).unwrap(), sample());
        let mut bad = bytes.clone();
        bad[30] ^= 1;
        assert!(matches!(Container::decode(&bad), Err(CoreError::Format(m)) if m.contains("checksum")));
        assert!(Container::decode(&bytes[..bytes.len() - 3]).is_err());
    }

    #[test]
    fn rejects_duplicates_and_bad_dims() {
        let mut c = sample();
        assert!(c.push("a", vec![1], Payload::F32(vec![0.0])).is_err());
        assert!(c.push("z", vec![3], Payload::F32(vec![0.0])).is_err());
    }
}
