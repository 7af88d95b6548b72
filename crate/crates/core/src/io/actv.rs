//! `ACTV` version 1 activation dumps.
//!
//! ```text
//! "ACTV" | version: u16 = 1 | name_len: u16 | layer name: UTF-8
//! sample_count: u32 | vector_length: u32
//! payload: f32 * sample_count * vector_length (row-major)
//! zero or more gradient blocks:
//!   'G' | class: u16 | f32 * sample_count * vector_length
//! ```

use std::path::Path;

use super::{write_atomic, Reader, Writer};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"ACTV";
const VERSION: u16 = 1;
const FORMAT: &str = "ACTV";
const GRADIENT_TAG: u8 = b'G';

#[derive(Debug, Clone, PartialEq)]
pub struct GradientBlock {
    pub class_k: u16,
    pub payload: Vec<f32>,
}

/// Activations of one layer for a batch of samples, with optional
/// per-class logit gradients of identical dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationDump {
    pub layer_name: String,
    pub sample_count: usize,
    pub vector_length: usize,
    pub payload: Vec<f32>,
    pub gradients: Vec<GradientBlock>,
}

impl ActivationDump {
    pub fn new(layer_name: impl Into<String>, rows: &[Vec<f32>]) -> Result<Self> {
        let layer_name = layer_name.into();
        let vector_length = rows.first().map_or(0, Vec::len);
        let payload = flatten_rows(rows, vector_length)?;
        let dump = Self {
            layer_name,
            sample_count: rows.len(),
            vector_length,
            payload,
            gradients: Vec::new(),
        };
        dump.validate()?;
        Ok(dump)
    }

    pub fn add_gradients(&mut self, class_k: u16, rows: &[Vec<f32>]) -> Result<()> {
        if rows.len() != self.sample_count {
            return Err(Error::LengthMismatch {
                left: self.sample_count,
                right: rows.len(),
            });
        }
        let payload = flatten_rows(rows, self.vector_length)?;
        self.gradients.push(GradientBlock { class_k, payload });
        self.validate()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.payload[i * self.vector_length..(i + 1) * self.vector_length]
    }

    pub fn gradient(&self, class_k: u16) -> Option<&GradientBlock> {
        self.gradients.iter().find(|g| g.class_k == class_k)
    }

    fn validate(&self) -> Result<()> {
        let n = self.sample_count * self.vector_length;
        if self.payload.len() != n || self.gradients.iter().any(|g| g.payload.len() != n) {
            return Err(Error::Format {
                format: FORMAT,
                reason: "payload size differs from sample_count x vector_length".into(),
            });
        }
        let finite = |v: &[f32]| v.iter().all(|x| x.is_finite());
        if !finite(&self.payload) || !self.gradients.iter().all(|g| finite(&g.payload)) {
            return Err(Error::NonFinite(format!(
                "activation dump of `{}`",
                self.layer_name
            )));
        }
        Ok(())
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.bytes(MAGIC);
        w.u16(VERSION);
        w.str16(&self.layer_name);
        w.u32(self.sample_count as u32);
        w.u32(self.vector_length as u32);
        for &v in &self.payload {
            w.f32(v);
        }
        for g in &self.gradients {
            w.u8(GRADIENT_TAG);
            w.u16(g.class_k);
            for &v in &g.payload {
                w.f32(v);
            }
        }
        w.into_inner()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, FORMAT);
        r.magic(MAGIC)?;
        let version = r.u16()?;
        if version != VERSION {
            return Err(r.err(format!("unsupported version {version}")));
        }
        let layer_name = r.str16()?;
        let sample_count = r.u32()? as usize;
        let vector_length = r.u32()? as usize;
        let n = sample_count
            .checked_mul(vector_length)
            .ok_or_else(|| r.err("dimension overflow"))?;
        let payload = r.f32_vec(n)?;
        let mut gradients = Vec::new();
        while !r.at_end() {
            let tag = r.u8()?;
            if tag != GRADIENT_TAG {
                return Err(r.err(format!("unknown block tag {tag:#04x}")));
            }
            let class_k = r.u16()?;
            gradients.push(GradientBlock {
                class_k,
                payload: r.f32_vec(n)?,
            });
        }
        let dump = Self {
            layer_name,
            sample_count,
            vector_length,
            payload,
            gradients,
        };
        dump.validate()?;
        Ok(dump)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path, &self.encode())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes)
    }
}

fn flatten_rows(rows: &[Vec<f32>], width: usize) -> Result<Vec<f32>> {
    let mut out = Vec::with_capacity(rows.len() * width);
    for row in rows {
        if row.len() != width {
            return Err(Error::LengthMismatch {
                left: width,
                right: row.len(),
            });
        }
        out.extend_from_slice(row);
    }
    Ok(out)
}
