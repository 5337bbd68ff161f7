//! Versioned binary checkpoints.
//!
//! Layout: magic, `u32` version, a TOML header (config, step, RNG state),
//! named tensors as `(name, shape, dtype, little-endian data)`, and a
//! trailing SHA-256 of everything before it.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ModelConfig, ParamLayout, Transformer};
use crate::error::{Error, Result};
use crate::tensor::Real;

const MAGIC: &[u8; 8] = b"PIVOTLM\0";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    step: u64,
    dtype: String,
    rng: Option<RngState>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RngState {
    seed: String,
    stream: u64,
    /// Decimal, since TOML integers stop at 64 bits.
    word_pos: String,
}

impl RngState {
    fn capture(rng: &ChaCha8Rng) -> Self {
        Self {
            seed: hex::encode(rng.get_seed()),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos().to_string(),
        }
    }

    fn restore(&self) -> Result<ChaCha8Rng> {
        let bad = |d: &str| Error::format("checkpoint", format!("rng state: {d}"));
        let seed: [u8; 32] = hex::decode(&self.seed)
            .map_err(|e| bad(&e.to_string()))?
            .try_into()
            .map_err(|_| bad("seed is not 32 bytes"))?;
        let word_pos: u128 = self.word_pos.parse().map_err(|_| bad("word_pos"))?;
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(word_pos);
        Ok(rng)
    }
}

/// Everything needed to resume or reuse a training run.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: Transformer<f32>,
    pub step: u64,
    /// AdamW first and second moments, in parameter layout.
    pub moments: Option<(Vec<f32>, Vec<f32>)>,
    pub rng: Option<ChaCha8Rng>,
}

struct Reader<'a> {
    buf: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.at < n {
            return Err(Error::format("checkpoint", "truncated file"));
        }
        let s = &self.buf[self.at..self.at + n];
        self.at += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::format("checkpoint", "non-UTF-8 string"))
    }
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

fn put_tensor(out: &mut Vec<u8>, name: &str, shape: &[usize], data: &[f32]) {
    put_str(out, name);
    out.extend_from_slice(&(shape.len() as u32).to_le_bytes());
    for &s in shape {
        out.extend_from_slice(&(s as u64).to_le_bytes());
    }
    put_str(out, f32::DTYPE);
    for &x in data {
        x.write_le(out);
    }
}

impl Checkpoint {
    pub fn new(model: Transformer<f32>) -> Self {
        Self {
            model,
            step: 0,
            moments: None,
            rng: None,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            config: self.model.config().clone(),
            step: self.step,
            dtype: f32::DTYPE.into(),
            rng: self.rng.as_ref().map(RngState::capture),
        };
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        put_str(&mut out, &toml::to_string(&header).expect("header serializes"));

        let layout = self.model.layout();
        let mut groups: Vec<(&str, &[f32])> = vec![("", self.model.params())];
        if let Some((m, v)) = &self.moments {
            groups.push(("adam_m.", m));
            groups.push(("adam_v.", v));
        }
        let count = layout.entries().len() * groups.len();
        out.extend_from_slice(&(count as u64).to_le_bytes());
        for (prefix, buf) in groups {
            for e in layout.entries() {
                put_tensor(&mut out, &format!("{prefix}{}", e.name), &e.shape, &buf[e.range()]);
            }
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() + 4 + 32 {
            return Err(Error::format("checkpoint", "file too short"));
        }
        let (body, digest) = bytes.split_at(bytes.len() - 32);
        if Sha256::digest(body).as_slice() != digest {
            return Err(Error::format("checkpoint", "content hash mismatch"));
        }
        let mut r = Reader { buf: body, at: 0 };
        if r.take(MAGIC.len())? != MAGIC {
            return Err(Error::format("checkpoint", "bad magic"));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::format(
                "checkpoint",
                format!("unsupported version {version}, expected {CHECKPOINT_VERSION}"),
            ));
        }
        let header: Header =
            toml::from_str(&r.string()?).map_err(|e| Error::format("checkpoint", format!("header: {e}")))?;
        if header.dtype != f32::DTYPE {
            return Err(Error::format("checkpoint", format!("unsupported dtype {}", header.dtype)));
        }
        header.config.validate()?;
        let layout = ParamLayout::new(&header.config);
        let mut params = vec![0f32; layout.total()];
        let mut m = vec![0f32; layout.total()];
        let mut v = vec![0f32; layout.total()];
        let mut seen_moments = 0usize;
        let mut seen_params = 0usize;
        let count = r.u64()?;
        for _ in 0..count {
            let name = r.string()?;
            let ndim = r.u32()? as usize;
            let shape = (0..ndim).map(|_| r.u64().map(|s| s as usize)).collect::<Result<Vec<_>>>()?;
            let dtype = r.string()?;
            let (buf, base) = if let Some(n) = name.strip_prefix("adam_m.") {
                seen_moments += 1;
                (&mut m, n)
            } else if let Some(n) = name.strip_prefix("adam_v.") {
                seen_moments += 1;
                (&mut v, n)
            } else {
                seen_params += 1;
                (&mut params, name.as_str())
            };
            let entry = layout
                .get(base)
                .ok_or_else(|| Error::format("checkpoint", format!("unknown tensor {name}")))?;
            if entry.shape != shape || dtype != f32::DTYPE {
                return Err(Error::format(
                    "checkpoint",
                    format!("tensor {name}: {dtype} {shape:?}, expected f32 {:?}", entry.shape),
                ));
            }
            let raw = r.take(entry.len() * f32::BYTES)?;
            for (dst, chunk) in buf[entry.range()].iter_mut().zip(raw.chunks_exact(f32::BYTES)) {
                *dst = f32::read_le(chunk);
            }
        }
        let n_entries = layout.entries().len();
        if seen_params != n_entries || !(seen_moments == 0 || seen_moments == 2 * n_entries) {
            return Err(Error::format("checkpoint", "missing tensors"));
        }
        if r.at != body.len() {
            return Err(Error::format("checkpoint", "trailing bytes"));
        }
        Ok(Self {
            model: Transformer::from_params(header.config, params)?,
            step: header.step,
            moments: (seen_moments > 0).then_some((m, v)),
            rng: header.rng.as_ref().map(RngState::restore).transpose()?,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngCore;

    fn sample() -> Checkpoint {
        let model = Transformer::<f32>::new(ModelConfig::toy(50), 3).unwrap();
        let n = model.parameter_count();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        rng.next_u64();
        Checkpoint {
            model,
            step: 17,
            moments: Some(((0..n).map(|i| i as f32).collect(), vec![0.5; n])),
            rng: Some(rng),
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let ck = sample();
        let back = Checkpoint::from_bytes(&ck.to_bytes()).unwrap();
        assert_eq!(back.model.params(), ck.model.params());
        assert_eq!(back.model.config(), ck.model.config());
        assert_eq!(back.step, 17);
        assert_eq!(back.moments, ck.moments);
        let (mut a, mut b) = (ck.rng.unwrap(), back.rng.unwrap());
        assert_eq!(a.next_u64(), b.next_u64());
    }

    #[test]
    fn corruption_is_detected() {
        let mut bytes = sample().to_bytes();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 1;
        assert!(Checkpoint::from_bytes(&bytes).is_err());
    }

    #[test]
    fn version_mismatch_is_rejected() {
        let mut bytes = Checkpoint::new(Transformer::new(ModelConfig::toy(20), 1).unwrap()).to_bytes();
        bytes[8] = 99;
        let body = bytes.len() - 32;
        let digest = Sha256::digest(&bytes[..body]);
        bytes[body..].copy_from_slice(&digest);
        let err = Checkpoint::from_bytes(&bytes).unwrap_err().to_string();
        assert!(err.contains("version"), "{err}");
    }
}
