//! Versioned binary checkpoint container.
//!
//! ```text
//! "PSCK" | version u32 | iteration u64 | optimizer step u64
//! config: u32 length + JSON | rng: u32 length + JSON
//! tensor count u32, then per tensor:
//!   name: u32 length + UTF-8 | 4 × u64 dims | f64 LE values
//! ```
//!
//! Tensors are the parameters in store order followed by `adam.m/<name>` and
//! `adam.v/<name>` for each parameter. All integers are little-endian.

use std::fs;
use std::path::Path;

use pansharp_tensor::{Shape, Tensor};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::params::ParamStore;
use crate::trainer::adamw::OptimizerState;
use crate::trainer::config::TrainConfig;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"PSCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub iteration: u64,
    pub params: ParamStore,
    pub optimizer: OptimizerState,
    pub rng: ChaCha8Rng,
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| format!("truncated at byte {}", self.pos))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> std::result::Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> std::result::Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn string(&mut self) -> std::result::Result<String, String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|e| e.to_string())
    }
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

fn put_tensor(out: &mut Vec<u8>, name: &str, t: &Tensor) {
    put_str(out, name);
    for d in t.shape().dims() {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&self.iteration.to_le_bytes());
        out.extend_from_slice(&self.optimizer.step.to_le_bytes());
        put_str(&mut out, &serde_json::to_string(&self.config)?);
        put_str(&mut out, &serde_json::to_string(&self.rng)?);
        out.extend_from_slice(&(3 * self.params.len() as u32).to_le_bytes());
        for (name, t) in self.params.iter() {
            put_tensor(&mut out, name, t);
        }
        for (prefix, moments) in [("adam.m/", &self.optimizer.m), ("adam.v/", &self.optimizer.v)] {
            for ((name, _), t) in self.params.iter().zip(moments) {
                put_tensor(&mut out, &format!("{prefix}{name}"), t);
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> std::result::Result<Self, String> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != CHECKPOINT_MAGIC {
            return Err("not a checkpoint (bad magic)".into());
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(format!("unsupported checkpoint version {version}"));
        }
        let iteration = r.u64()?;
        let step = r.u64()?;
        let config: TrainConfig = serde_json::from_str(&r.string()?).map_err(|e| format!("config: {e}"))?;
        let rng: ChaCha8Rng = serde_json::from_str(&r.string()?).map_err(|e| format!("rng state: {e}"))?;
        let count = r.u32()? as usize;
        if !count.is_multiple_of(3) {
            return Err(format!("tensor count {count} is not three per parameter"));
        }
        let mut named = Vec::with_capacity(count);
        for _ in 0..count {
            let name = r.string()?;
            let mut dims = [0usize; 4];
            for d in &mut dims {
                *d = usize::try_from(r.u64()?).map_err(|e| e.to_string())?;
            }
            let shape = Shape(dims);
            let n = dims.iter().try_fold(1usize, |a, &d| a.checked_mul(d)).ok_or("tensor too large")?;
            let raw = r.take(n.checked_mul(8).ok_or("tensor too large")?)?;
            let data = raw
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
                .collect();
            named.push((name, Tensor::new(shape, data).map_err(|e| e.to_string())?));
        }
        if r.pos != bytes.len() {
            return Err(format!("{} trailing bytes", bytes.len() - r.pos));
        }

        let n = count / 3;
        let mut params = ParamStore::new();
        for (name, t) in &named[..n] {
            params.insert(name.clone(), t.clone()).map_err(|e| e.to_string())?;
        }
        let moments = |prefix: &str, part: &[(String, Tensor)]| {
            part.iter()
                .zip(params.iter())
                .map(|((name, t), (pname, p))| {
                    if name.strip_prefix(prefix) != Some(pname) || t.shape() != p.shape() {
                        Err(format!("optimizer entry {name} does not match parameter {pname}"))
                    } else {
                        Ok(t.clone())
                    }
                })
                .collect::<std::result::Result<Vec<_>, String>>()
        };
        let m = moments("adam.m/", &named[n..2 * n])?;
        let v = moments("adam.v/", &named[2 * n..])?;
        Ok(Checkpoint {
            config,
            iteration,
            params,
            optimizer: OptimizerState { step, m, v },
            rng,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        // Write-then-rename so an interrupted save never leaves a torn file.
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Checkpoint::from_bytes(&bytes).map_err(|e| Error::format(path, e))
    }
}
