//! GFCK named-tensor checkpoints.
//!
//! Layout (little-endian): magic `GFCK` | version u32 = 1 | tensor count u32 |
//! per tensor: name length u16, UTF-8 name, rank u8, rank x u32 dims,
//! f32 data in row-major order.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::fusion::{self, ModelConfig};
use crate::params::ModelParams;
use crate::tensor::Tensor;

const MAGIC: &[u8; 4] = b"GFCK";
const VERSION: u32 = 1;

pub fn checkpoint_bytes(params: &ModelParams<f32>) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(12 + params.num_scalars() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let count = u32::try_from(params.len()).map_err(|_| Error::Invalid("too many tensors".into()))?;
    out.extend_from_slice(&count.to_le_bytes());
    for (name, t) in params.iter() {
        let nb = name.as_bytes();
        let nlen = u16::try_from(nb.len()).map_err(|_| Error::Invalid(format!("tensor name too long: {name}")))?;
        out.extend_from_slice(&nlen.to_le_bytes());
        out.extend_from_slice(nb);
        let rank = u8::try_from(t.shape().len()).map_err(|_| Error::Invalid(format!("rank too large for {name}")))?;
        out.push(rank);
        for &d in t.shape() {
            let d = u32::try_from(d).map_err(|_| Error::Invalid(format!("extent too large in {name}")))?;
            out.extend_from_slice(&d.to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'b> {
    buf: &'b [u8],
    pos: usize,
}

impl<'b> Reader<'b> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'b [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Format(format!(
                "truncated checkpoint while reading {what} at byte {}",
                self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

pub fn params_from_bytes(bytes: &[u8]) -> Result<ModelParams<f32>> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::Format("bad magic, expected \"GFCK\"".into()));
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let count = r.u32("tensor count")?;
    let mut params = ModelParams::new();
    for _ in 0..count {
        let nlen = r.u16("name length")? as usize;
        let name = std::str::from_utf8(r.take(nlen, "name")?)
            .map_err(|_| Error::Format("tensor name is not UTF-8".into()))?
            .to_string();
        let rank = r.u8("rank")? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u32("dims")? as usize);
        }
        let n = shape.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d));
        let n = n.ok_or_else(|| Error::Format(format!("tensor `{name}` too large")))?;
        let raw = r.take(n.checked_mul(4).ok_or_else(|| Error::Format("overflow".into()))?, &name)?;
        let data: Vec<f32> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let t = Tensor::new(shape, data).map_err(|e| Error::Format(format!("tensor `{name}`: {e}")))?;
        if params.get(&name).is_some() {
            return Err(Error::Format(format!("duplicate tensor `{name}`")));
        }
        params.insert(name, t);
    }
    if r.pos != bytes.len() {
        return Err(Error::Format("trailing bytes after last tensor".into()));
    }
    Ok(params)
}

pub fn save_checkpoint(params: &ModelParams<f32>, path: impl AsRef<Path>) -> Result<()> {
    let bytes = checkpoint_bytes(params)?;
    let mut f = std::fs::File::create(path)?;
    f.write_all(&bytes)?;
    f.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<ModelParams<f32>> {
    params_from_bytes(&crate::error::read_bytes(path)?)
}

/// Loads and checks every tensor name and shape against `config`.
pub fn load_checkpoint_for(path: impl AsRef<Path>, config: &ModelConfig) -> Result<ModelParams<f32>> {
    let params = load_checkpoint(path)?;
    let template = fusion::init_params::<f32, _>(&mut rand::rngs::mock::StepRng::new(0, 1), config)?;
    params.check_matches(&template)?;
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::CnnConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params(cfg: &ModelConfig) -> ModelParams<f32> {
        fusion::init_params(&mut ChaCha8Rng::seed_from_u64(1), cfg).unwrap()
    }

    #[test]
    fn round_trip_and_truncation() {
        let cfg = ModelConfig {
            context_dim: 8,
            ..Default::default()
        };
        let p = params(&cfg);
        let bytes = checkpoint_bytes(&p).unwrap();
        assert_eq!(params_from_bytes(&bytes).unwrap(), p);
        for cut in [3, 11, 40, bytes.len() - 1] {
            assert!(
                matches!(params_from_bytes(&bytes[..cut]), Err(Error::Format(_))),
                "cut {cut}"
            );
        }
    }

    #[test]
    fn preset_mismatch_names_fc1() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.gfck");
        let preset = ModelConfig {
            cnn: CnnConfig::paper_800(),
            context_dim: 8,
            ..Default::default()
        };
        save_checkpoint(&params(&preset), &path).unwrap();
        let default = ModelConfig {
            context_dim: 8,
            ..Default::default()
        };
        let err = load_checkpoint_for(&path, &default).unwrap_err().to_string();
        assert!(err.contains("cnn.fc1.weight"), "{err}");
        assert!(load_checkpoint_for(&path, &preset).is_ok());
    }
}
