//! Binary checkpoint format.
//!
//! ```text
//! magic       8 bytes   "VECTNCKP"
//! version     u32 LE    1
//! header_len  u64 LE
//! header      JSON      config, backend identity, plan, head shape, projection shape
//! payload     f64 LE    head tensors, then projection v_dt, then v_i (row-major)
//! ```
//!
//! Head tensors are written in this order: gated heads `v_dt, v_ic, b_j, v,
//! b`; linear heads `w, b`.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::alignment::ProjectionParams;
use crate::backend::BackendIdentity;
use crate::error::{Error, Result};
use crate::fusion::{GateMode, GateParams, Head, LinearHead};
use crate::training::{ModelPlan, TrainConfig};

pub const MAGIC: &[u8; 8] = b"VECTNCKP";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum HeadShape {
    Gated { dim: usize, mode: GateMode },
    Linear { inputs: usize },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    config: TrainConfig,
    backend: BackendIdentity,
    plan: ModelPlan,
    head: HeadShape,
    projection_dims: [usize; 2],
    t: f64,
    best_epoch: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub backend: BackendIdentity,
    pub plan: ModelPlan,
    pub head: Head,
    pub projection: ProjectionParams,
    pub best_epoch: usize,
}

fn corrupt(reason: impl Into<String>) -> Error {
    Error::Checkpoint(reason.into())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.bytes.len()).ok_or_else(|| {
            corrupt(format!("truncated: need {n} bytes at offset {}", self.pos))
        })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn floats(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| corrupt("tensor size overflow"))?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect())
    }

    fn matrix(&mut self, rows: usize, cols: usize) -> Result<Array2<f64>> {
        let data = self.floats(rows.checked_mul(cols).ok_or_else(|| corrupt("tensor size overflow"))?)?;
        Array2::from_shape_vec((rows, cols), data).map_err(|e| corrupt(e.to_string()))
    }

    fn vector(&mut self, n: usize) -> Result<Array1<f64>> {
        Ok(Array1::from(self.floats(n)?))
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let head = match &self.head {
            Head::Gated { params, mode } => HeadShape::Gated {
                dim: params.dim(),
                mode: *mode,
            },
            Head::Linear(h) => HeadShape::Linear { inputs: h.inputs() },
        };
        let header = serde_json::to_vec(&Header {
            config: self.config.clone(),
            backend: self.backend.clone(),
            plan: self.plan.clone(),
            head,
            projection_dims: [self.projection.d_embed(), self.projection.d_align()],
            t: self.projection.t,
            best_epoch: self.best_epoch,
        })?;
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        let proj = [&self.projection.v_dt, &self.projection.v_i];
        let tensors = self
            .head
            .tensors()
            .into_iter()
            .map(|(t, _)| t)
            .chain(proj.iter().map(|m| m.as_slice().expect("standard layout")));
        for t in tensors {
            for x in t {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(corrupt("bad magic; not a checkpoint file"));
        }
        let version = u32::from_le_bytes(r.take(4)?.try_into().expect("4 bytes"));
        if version != VERSION {
            return Err(corrupt(format!("unsupported version {version}")));
        }
        let header_len = u64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes"));
        let header_len = usize::try_from(header_len).map_err(|_| corrupt("header length overflow"))?;
        let header: Header =
            serde_json::from_slice(r.take(header_len)?).map_err(|e| corrupt(format!("bad header: {e}")))?;
        let head = match header.head {
            HeadShape::Gated { dim, mode } => Head::Gated {
                params: GateParams {
                    v_dt: r.matrix(dim, dim)?,
                    v_ic: r.matrix(dim, dim)?,
                    b_j: r.vector(dim)?,
                    v: r.matrix(dim, 3)?,
                    b: r.vector(3)?,
                },
                mode,
            },
            HeadShape::Linear { inputs } => Head::Linear(LinearHead {
                w: r.matrix(inputs, 3)?,
                b: r.vector(3)?,
            }),
        };
        let [d_embed, d_align] = header.projection_dims;
        let projection = ProjectionParams {
            v_dt: r.matrix(d_embed, d_align)?,
            v_i: r.matrix(d_embed, d_align)?,
            t: header.t,
        };
        if r.pos != bytes.len() {
            return Err(corrupt(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(Checkpoint {
            config: header.config,
            backend: header.backend,
            plan: header.plan,
            head,
            projection,
            best_epoch: header.best_epoch,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}
