//! Binary checkpoint format. All integers and floats are little-endian.
//!
//! ```text
//! magic        4 bytes  "SCMC"
//! version      u8       1
//! meta_len     u32      length of the metadata blob
//! meta         bytes    UTF-8 (the pipeline stores its JSON run config here)
//! n_params     u32
//! n_params × record:
//!   name_len   u32
//!   name       bytes    UTF-8 parameter identifier
//!   rows       u32
//!   cols       u32
//!   trainable  u8       0 or 1
//!   values     rows·cols × f64
//! has_optim    u8       0 or 1
//! if has_optim:
//!   step       u64      Adam step counter
//!   n_params × (first moment rows·cols × f64, second moment rows·cols × f64)
//! ```

use std::path::Path;

use super::optim::{Adam, AdamConfig};
use super::param::ParamStore;
use super::Matrix;
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"SCMC";
pub const CHECKPOINT_VERSION: u8 = 1;

#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub step_count: u64,
    pub first: Vec<Matrix>,
    pub second: Vec<Matrix>,
}

impl OptimizerState {
    pub fn into_adam(self, config: AdamConfig) -> Adam {
        Adam::from_state(config, self.step_count, self.first, self.second)
    }
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub meta: String,
    pub params: ParamStore,
    pub optimizer: Option<OptimizerState>,
}

pub fn encode_checkpoint(meta: &str, store: &ParamStore, adam: Option<&Adam>) -> Vec<u8> {
    let mut out = Vec::with_capacity(64 + store.num_scalars() * 8 * 3);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.push(CHECKPOINT_VERSION);
    put_u32(&mut out, meta.len());
    out.extend_from_slice(meta.as_bytes());
    put_u32(&mut out, store.len());
    for p in store.iter() {
        put_u32(&mut out, p.name.len());
        out.extend_from_slice(p.name.as_bytes());
        put_u32(&mut out, p.value.rows());
        put_u32(&mut out, p.value.cols());
        out.push(u8::from(p.trainable));
        put_f64s(&mut out, p.value.data());
    }
    match adam {
        Some(adam) => {
            out.push(1);
            out.extend_from_slice(&adam.step_count().to_le_bytes());
            let (first, second) = adam.moments();
            for (m, v) in first.iter().zip(second) {
                put_f64s(&mut out, m.data());
                put_f64s(&mut out, v.data());
            }
        }
        None => out.push(0),
    }
    out
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader {
        bytes,
        pos: 0,
        what: "checkpoint",
    };
    if r.take(4)? != CHECKPOINT_MAGIC {
        return Err(r.error(0, "bad magic, expected SCMC"));
    }
    let version = r.u8()?;
    if version != CHECKPOINT_VERSION {
        return Err(r.error(4, format!("unsupported version {version}")));
    }
    let meta_len = r.u32()? as usize;
    let meta_at = r.pos;
    let meta = std::str::from_utf8(r.take(meta_len)?)
        .map_err(|_| r.error(meta_at, "metadata is not UTF-8"))?
        .to_owned();

    let n = r.u32()? as usize;
    let mut store = ParamStore::new();
    let mut shapes = Vec::with_capacity(n);
    for _ in 0..n {
        let name_len = r.u32()? as usize;
        let name_at = r.pos;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| r.error(name_at, "parameter name is not UTF-8"))?
            .to_owned();
        let rows = r.u32()? as usize;
        let cols = r.u32()? as usize;
        let trainable = match r.u8()? {
            0 => false,
            1 => true,
            other => return Err(r.error(r.pos - 1, format!("trainable flag {other}"))),
        };
        let value = r.matrix(rows, cols)?;
        if store.find(&name).is_some() {
            return Err(r.error(name_at, format!("duplicate parameter {name}")));
        }
        store.add(name, value, trainable);
        shapes.push((rows, cols));
    }

    let optimizer = match r.u8()? {
        0 => None,
        1 => {
            let step_count = r.u64()?;
            let mut first = Vec::with_capacity(n);
            let mut second = Vec::with_capacity(n);
            for &(rows, cols) in &shapes {
                first.push(r.matrix(rows, cols)?);
                second.push(r.matrix(rows, cols)?);
            }
            Some(OptimizerState {
                step_count,
                first,
                second,
            })
        }
        other => return Err(r.error(r.pos - 1, format!("optimizer flag {other}"))),
    };
    if r.pos != bytes.len() {
        return Err(r.error(r.pos, "trailing bytes"));
    }
    Ok(Checkpoint {
        meta,
        params: store,
        optimizer,
    })
}

pub fn write_checkpoint(
    path: &Path,
    meta: &str,
    store: &ParamStore,
    adam: Option<&Adam>,
) -> Result<()> {
    std::fs::write(path, encode_checkpoint(meta, store, adam)).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    let v = u32::try_from(v).expect("checkpoint field exceeds u32");
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f64s(out: &mut Vec<u8>, values: &[f64]) {
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

/// Little-endian cursor that reports the byte offset of any failure.
pub(crate) struct Reader<'a> {
    pub bytes: &'a [u8],
    pub pos: usize,
    pub what: &'static str,
}

impl<'a> Reader<'a> {
    pub fn error(&self, offset: usize, reason: impl Into<String>) -> Error {
        Error::Format {
            what: self.what,
            offset: offset as u64,
            reason: reason.into(),
        }
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(self.error(
                self.pos,
                format!("truncated: need {n} bytes, {} left", self.bytes.len() - self.pos),
            )),
        }
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn matrix(&mut self, rows: usize, cols: usize) -> Result<Matrix> {
        let len = rows
            .checked_mul(cols)
            .and_then(|n| n.checked_mul(8))
            .ok_or_else(|| self.error(self.pos, "matrix size overflows"))?;
        let raw = self.take(len)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Matrix::from_vec(rows, cols, data).expect("length checked"))
    }
}
