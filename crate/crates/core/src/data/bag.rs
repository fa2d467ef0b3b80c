//! "SCMB" patch bag files.
//!
//! ```text
//! magic      4 bytes  "SCMB"
//! version    u8       1
//! n          u32 LE   patch count (≥ 1)
//! d          u32 LE   feature dimension
//! positions  n × 2 f64 LE, row-major (x, y)
//! features   n × d f64 LE, row-major
//! ```
//!
//! The patient id is not stored; it is the file stem.

use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::checkpoint::Reader;
use crate::numerics::Matrix;

pub const BAG_MAGIC: &[u8; 4] = b"SCMB";
pub const BAG_VERSION: u8 = 1;
const HEADER_LEN: usize = 13;

/// One patient's patch features and slide coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchBag {
    pub patient_id: String,
    /// n × d
    pub features: Matrix,
    /// n × 2, arbitrary slide units
    pub positions: Matrix,
}

impl PatchBag {
    pub fn new(patient_id: impl Into<String>, features: Matrix, positions: Matrix) -> Result<Self> {
        if features.rows() == 0 {
            return Err(Error::Config("a bag needs at least one patch".into()));
        }
        if positions.cols() != 2 || positions.rows() != features.rows() {
            return Err(Error::Dimension {
                op: "PatchBag::new",
                left: features.shape(),
                right: positions.shape(),
            });
        }
        Ok(Self {
            patient_id: patient_id.into(),
            features,
            positions,
        })
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.features.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    /// Positions rescaled per axis so the bag's bounding box maps onto
    /// [0,1]². An axis with zero extent maps to 0.5.
    pub fn normalized_positions(&self) -> Matrix {
        let mut out = self.positions.clone();
        for axis in 0..2 {
            let (lo, hi) = (0..out.rows()).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
                let v = out.get(r, axis);
                (lo.min(v), hi.max(v))
            });
            let span = hi - lo;
            for r in 0..out.rows() {
                let v = if span > 0.0 {
                    (out.get(r, axis) - lo) / span
                } else {
                    0.5
                };
                out.set(r, axis, v);
            }
        }
        out
    }
}

pub fn encode_bag(bag: &PatchBag) -> Vec<u8> {
    let (n, d) = (bag.len(), bag.dim());
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * n * (d + 2));
    out.extend_from_slice(BAG_MAGIC);
    out.push(BAG_VERSION);
    out.extend_from_slice(&(n as u32).to_le_bytes());
    out.extend_from_slice(&(d as u32).to_le_bytes());
    for v in bag.positions.data().iter().chain(bag.features.data()) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_bag(patient_id: &str, bytes: &[u8]) -> Result<PatchBag> {
    let fail = |offset: usize, reason: String| Error::Format {
        what: "bag",
        offset: offset as u64,
        reason,
    };
    let mut r = Reader {
        bytes,
        pos: 0,
        what: "bag",
    };
    if r.take(4)? != BAG_MAGIC {
        return Err(fail(0, "bad magic, expected SCMB".into()));
    }
    let version = r.u8()?;
    if version != BAG_VERSION {
        return Err(fail(4, format!("unsupported version {version}")));
    }
    let n = r.u32()? as usize;
    let d = r.u32()? as usize;
    if n == 0 {
        return Err(fail(5, "bag declares zero patches".into()));
    }
    let expected = n
        .checked_mul(d + 2)
        .and_then(|v| v.checked_mul(8))
        .ok_or_else(|| fail(5, "declared size overflows".into()))?;
    let available = bytes.len() - HEADER_LEN;
    if available != expected {
        return Err(fail(
            bytes.len().min(HEADER_LEN + expected),
            format!("header declares n={n}, d={d} ({expected} payload bytes) but {available} present"),
        ));
    }
    let positions = r.matrix(n, 2)?;
    let features = r.matrix(n, d)?;
    if let Some(k) = positions.data().iter().chain(features.data()).position(|v| !v.is_finite()) {
        return Err(fail(HEADER_LEN + 8 * k, "non-finite value".into()));
    }
    PatchBag::new(patient_id, features, positions)
}

pub fn write_bag(bag: &PatchBag, path: &Path) -> Result<()> {
    std::fs::write(path, encode_bag(bag)).map_err(|e| Error::io(path, e))
}

/// Loads a bag; the patient id is taken from the file stem.
pub fn load_bag(path: &Path) -> Result<PatchBag> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    decode_bag(&id, &bytes)
}
