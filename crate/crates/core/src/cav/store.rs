//! CVKC: binary store of trained CAVs.
//!
//! Layout (little-endian): magic `CVKC`, `u16` version, `u32` record
//! count, then per record: `u16`-prefixed concept name, `u16`-prefixed
//! layer name, `u32` run id, `u32` vector length, the direction as `f32`,
//! then `f32` bias and `f32` holdout accuracy. Null CAVs are stored under
//! the concept name [`RANDOM_CONCEPT`].

use std::path::Path;

use super::Cav;
use crate::error::{Error, Result};
use crate::io::{write_atomic, Reader, Writer};
use crate::scalar::Scalar;

const MAGIC: &[u8; 4] = b"CVKC";
const VERSION: u16 = 1;
const FORMAT: &str = "CVKC";

/// Concept name reserved for random-random CAVs.
pub const RANDOM_CONCEPT: &str = "random";

pub fn encode_cav_store<T: Scalar>(cavs: &[Cav<T>]) -> Result<Vec<u8>> {
    let mut w = Writer::new();
    w.bytes(MAGIC);
    w.u16(VERSION);
    w.u32(
        u32::try_from(cavs.len())
            .map_err(|_| Error::InvalidConfig("too many CAVs for one store".into()))?,
    );
    for cav in cavs {
        let concept = if cav.is_null {
            RANDOM_CONCEPT
        } else {
            cav.concept_name.as_str()
        };
        if concept.len() > usize::from(u16::MAX) || cav.layer_name.len() > usize::from(u16::MAX) {
            return Err(Error::InvalidConfig(
                "CAV name longer than 65535 bytes".into(),
            ));
        }
        w.str16(concept);
        w.str16(&cav.layer_name);
        w.u32(cav.run_id);
        w.u32(
            u32::try_from(cav.direction.len())
                .map_err(|_| Error::InvalidConfig("CAV too long".into()))?,
        );
        for &v in &cav.direction {
            w.f32(v.as_f32());
        }
        w.f32(cav.bias.as_f32());
        w.f32(cav.holdout_accuracy.as_f32());
    }
    Ok(w.into_inner())
}

/// Decodes a store. The negative-set fingerprint is not persisted and
/// decodes as 0.
pub fn decode_cav_store<T: Scalar>(bytes: &[u8]) -> Result<Vec<Cav<T>>> {
    let mut r = Reader::new(bytes, FORMAT);
    r.magic(MAGIC)?;
    let version = r.u16()?;
    if version != VERSION {
        return Err(r.err(format!("unsupported version {version}")));
    }
    let count = r.u32()? as usize;
    let mut cavs = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let concept_name = r.str16()?;
        let layer_name = r.str16()?;
        let run_id = r.u32()?;
        let len = r.u32()? as usize;
        let direction = r.f32_vec(len)?;
        let bias = r.f32()?;
        let holdout_accuracy = r.f32()?;
        if direction
            .iter()
            .chain([&bias, &holdout_accuracy])
            .any(|v| !v.is_finite())
        {
            return Err(r.err(format!(
                "non-finite value in CAV `{concept_name}` run {run_id}"
            )));
        }
        cavs.push(Cav {
            is_null: concept_name == RANDOM_CONCEPT,
            concept_name,
            layer_name,
            direction: direction
                .into_iter()
                .map(|v| T::lit(f64::from(v)))
                .collect(),
            bias: T::lit(f64::from(bias)),
            holdout_accuracy: T::lit(f64::from(holdout_accuracy)),
            run_id,
            negative_set_fingerprint: 0,
        });
    }
    r.finish()?;
    Ok(cavs)
}

pub fn save_cav_store<T: Scalar>(path: impl AsRef<Path>, cavs: &[Cav<T>]) -> Result<()> {
    write_atomic(path, &encode_cav_store(cavs)?)
}

pub fn load_cav_store<T: Scalar>(path: impl AsRef<Path>) -> Result<Vec<Cav<T>>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_cav_store(&bytes)
}
