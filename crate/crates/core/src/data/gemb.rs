//! GEMB: contextual embeddings keyed by example id.
//!
//! Layout (little-endian): magic `GEMB` | version u32 = 1 | dim u32 |
//! count u64 | count x (id u64 | dim x f32).

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"GEMB";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 20;

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    vectors: BTreeMap<u64, Vec<f32>>,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 || dim > u32::MAX as usize {
            return Err(Error::Invalid(format!("embedding dim {dim} out of range")));
        }
        Ok(EmbeddingTable {
            dim,
            vectors: BTreeMap::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn insert(&mut self, id: u64, v: Vec<f32>) -> Result<()> {
        if v.len() != self.dim {
            return Err(Error::dim(
                "embedding table",
                format!("vector for id {id}: expected {}, got {}", self.dim, v.len()),
            ));
        }
        if self.vectors.insert(id, v).is_some() {
            return Err(Error::Format(format!("duplicate embedding id {id}")));
        }
        Ok(())
    }

    pub fn get(&self, id: u64) -> Option<&[f32]> {
        self.vectors.get(&id).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (u64, &[f32])> {
        self.vectors.iter().map(|(&k, v)| (k, v.as_slice()))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.len() * (8 + 4 * self.dim));
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.len() as u64).to_le_bytes());
        for (id, v) in &self.vectors {
            out.extend_from_slice(&id.to_le_bytes());
            for x in v {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::Format("GEMB file shorter than its header".into()));
        }
        if &bytes[..4] != MAGIC {
            return Err(Error::Format(format!(
                "bad magic {:?}, expected \"GEMB\"",
                String::from_utf8_lossy(&bytes[..4])
            )));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != VERSION {
            return Err(Error::Format(format!("unsupported GEMB version {version}")));
        }
        let dim = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let count = u64::from_le_bytes(bytes[12..20].try_into().unwrap());
        if dim == 0 {
            return Err(Error::Format("GEMB dim is zero".into()));
        }
        let record = 8 + 4 * dim;
        let expected = (count as u128) * record as u128 + HEADER_LEN as u128;
        if (bytes.len() as u128) < expected {
            return Err(Error::Format(format!(
                "truncated GEMB: {count} records need {expected} bytes, file has {}",
                bytes.len()
            )));
        }
        if (bytes.len() as u128) > expected {
            return Err(Error::Format("trailing bytes after GEMB records".into()));
        }
        let mut table = EmbeddingTable::new(dim)?;
        for rec in bytes[HEADER_LEN..].chunks_exact(record) {
            let id = u64::from_le_bytes(rec[..8].try_into().unwrap());
            let v: Vec<f32> = rec[8..]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            table.insert(id, v)?;
        }
        Ok(table)
    }
}

pub fn write_gemb(table: &EmbeddingTable, path: impl AsRef<Path>) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(&table.to_bytes())?;
    f.flush()?;
    Ok(())
}

pub fn read_gemb(path: impl AsRef<Path>) -> Result<EmbeddingTable> {
    EmbeddingTable::from_bytes(&crate::error::read_bytes(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> EmbeddingTable {
        let mut t = EmbeddingTable::new(4).unwrap();
        t.insert(7, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        t.insert(2, vec![-0.0, f32::MIN_POSITIVE, 1e-30, 5.5]).unwrap();
        t
    }

    #[test]
    fn size_arithmetic() {
        assert_eq!(small().to_bytes().len(), 20 + 2 * (8 + 16));
    }

    #[test]
    fn bad_magic_truncation_duplicates() {
        let mut b = small().to_bytes();
        assert!(EmbeddingTable::from_bytes(&b[..b.len() - 1]).is_err());
        assert!(EmbeddingTable::from_bytes(&b[..10]).is_err());
        let mut dup = b.clone();
        // rewrite record 2's id to equal record 1's
        let rec = 8 + 16;
        let first_id: [u8; 8] = dup[20..28].try_into().unwrap();
        dup[20 + rec..28 + rec].copy_from_slice(&first_id);
        assert!(matches!(EmbeddingTable::from_bytes(&dup), Err(Error::Format(_))));
        b[..4].copy_from_slice(b"XXXX");
        assert!(matches!(EmbeddingTable::from_bytes(&b), Err(Error::Format(_))));
    }

    #[test]
    fn round_trip_bits() {
        let t = small();
        let back = EmbeddingTable::from_bytes(&t.to_bytes()).unwrap();
        for ((ia, va), (ib, vb)) in t.iter().zip(back.iter()) {
            assert_eq!(ia, ib);
            let ba: Vec<u32> = va.iter().map(|x| x.to_bits()).collect();
            let bb: Vec<u32> = vb.iter().map(|x| x.to_bits()).collect();
            assert_eq!(ba, bb);
        }
    }
}
