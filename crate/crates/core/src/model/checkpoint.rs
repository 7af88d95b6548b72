//! `CVKM` model checkpoints.
//!
//! Layout (little-endian):
//!
//! ```text
//! "CVKM" | version: u16 | layer_count: u32
//! per layer:
//!   name_len: u16 | name: UTF-8
//!   kind: u8 (0 dense, 1 conv2d, 2 relu, 3 flatten)
//!   in_rank: u8 | in_dims: u32 * in_rank
//!   out_rank: u8 | out_dims: u32 * out_rank
//!   param_count: u32 | params: f32 * param_count (weights, then biases)
//! ```

use std::path::Path;

use super::{Layer, LayerKind, LayerOp, LayeredModel};
use crate::error::{Error, Result};
use crate::io::{write_atomic, Reader, Writer};
use crate::scalar::Scalar;

const MAGIC: &[u8; 4] = b"CVKM";
const VERSION: u16 = 1;
const FORMAT: &str = "CVKM";

pub fn encode_checkpoint<T: Scalar>(model: &LayeredModel<T>) -> Vec<u8> {
    let mut w = Writer::new();
    w.bytes(MAGIC);
    w.u16(VERSION);
    w.u32(model.layers().len() as u32);
    for layer in model.layers() {
        w.str16(layer.name());
        w.u8(layer.kind().tag());
        for shape in [layer.input_shape(), layer.output_shape()] {
            w.u8(shape.len() as u8);
            for &d in shape {
                w.u32(d as u32);
            }
        }
        let params = layer.params();
        w.u32(params.len() as u32);
        for p in params {
            w.f32(p.as_f32());
        }
    }
    w.into_inner()
}

pub fn decode_checkpoint<T: Scalar>(bytes: &[u8]) -> Result<LayeredModel<T>> {
    let mut r = Reader::new(bytes, FORMAT);
    r.magic(MAGIC)?;
    let version = r.u16()?;
    if version != VERSION {
        return Err(r.err(format!("unsupported version {version}")));
    }
    let count = r.u32()? as usize;
    let mut layers = Vec::with_capacity(count.min(1024));
    let mut model_input = None;
    for _ in 0..count {
        let name = r.str16()?;
        let tag = r.u8()?;
        let kind =
            LayerKind::from_tag(tag).ok_or_else(|| r.err(format!("unknown layer kind {tag}")))?;
        let mut shapes = [Vec::new(), Vec::new()];
        for shape in shapes.iter_mut() {
            let rank = r.u8()? as usize;
            for _ in 0..rank {
                shape.push(r.u32()? as usize);
            }
        }
        let [input_shape, output_shape] = shapes;
        let n = r.u32()? as usize;
        let mut params = Vec::with_capacity(n.min(1 << 24));
        for _ in 0..n {
            params.push(T::lit(f64::from(r.f32()?)));
        }
        let op = match kind {
            LayerKind::Dense => {
                let outputs = output_shape.first().copied().unwrap_or(0);
                if outputs > n {
                    return Err(r.err(format!("layer `{name}`: {n} params for {outputs} outputs")));
                }
                let bias = params.split_off(n - outputs);
                LayerOp::Dense {
                    weights: params,
                    bias,
                }
            }
            LayerKind::Conv2d => {
                if input_shape.len() != 3
                    || output_shape.len() != 3
                    || output_shape[0] > input_shape[0]
                {
                    return Err(r.err(format!("layer `{name}`: bad convolution shapes")));
                }
                let kernel = input_shape[0] - output_shape[0] + 1;
                let filters = output_shape[2];
                if filters > n {
                    return Err(r.err(format!("layer `{name}`: {n} params for {filters} filters")));
                }
                let bias = params.split_off(n - filters);
                LayerOp::Conv2d {
                    filters,
                    kernel,
                    weights: params,
                    bias,
                }
            }
            LayerKind::Relu => LayerOp::Relu,
            LayerKind::Flatten => LayerOp::Flatten,
        };
        if model_input.is_none() {
            model_input = Some(input_shape.clone());
        }
        layers.push(Layer {
            name,
            op,
            input_shape,
            output_shape,
        });
    }
    r.finish()?;
    let input = model_input.ok_or_else(|| Error::Format {
        format: FORMAT,
        reason: "no layers".into(),
    })?;
    LayeredModel::from_layers(input, layers)
}

pub fn save_checkpoint<T: Scalar>(model: &LayeredModel<T>, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path, &encode_checkpoint(model))
}

pub fn load_checkpoint<T: Scalar>(path: impl AsRef<Path>) -> Result<LayeredModel<T>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::reference_model;

    #[test]
    fn round_trip_preserves_f32_model_exactly() {
        let model: LayeredModel<f32> = reference_model(10, 9, 3, 4, 77).unwrap();
        let bytes = encode_checkpoint(&model);
        let back: LayeredModel<f32> = decode_checkpoint(&bytes).unwrap();
        assert_eq!(back, model);
        assert_eq!(encode_checkpoint(&back), bytes);
    }

    #[test]
    fn f64_model_round_trips_through_f32_quantization() {
        let model: LayeredModel<f64> = reference_model(6, 6, 3, 2, 5).unwrap();
        let once: LayeredModel<f64> = decode_checkpoint(&encode_checkpoint(&model)).unwrap();
        let twice: LayeredModel<f64> = decode_checkpoint(&encode_checkpoint(&once)).unwrap();
        assert_eq!(once, twice);
        assert_eq!(model.cast::<f32>().cast::<f64>(), once);
    }

    #[test]
    fn header_is_bit_exact() {
        let model: LayeredModel<f32> = LayeredModel::builder(vec![1, 1, 2])
            .flatten("f")
            .build(0)
            .unwrap();
        let bytes = encode_checkpoint(&model);
        let mut expected = b"CVKM".to_vec();
        expected.extend_from_slice(&1u16.to_le_bytes());
        expected.extend_from_slice(&1u32.to_le_bytes());
        expected.extend_from_slice(&1u16.to_le_bytes());
        expected.push(b'f');
        expected.push(3);
        expected.push(3);
        for d in [1u32, 1, 2] {
            expected.extend_from_slice(&d.to_le_bytes());
        }
        expected.push(1);
        expected.extend_from_slice(&2u32.to_le_bytes());
        expected.extend_from_slice(&0u32.to_le_bytes());
        assert_eq!(bytes, expected);
    }

    #[test]
    fn rejects_corruption() {
        let model: LayeredModel<f32> = reference_model(6, 6, 3, 2, 5).unwrap();
        let bytes = encode_checkpoint(&model);
        assert!(decode_checkpoint::<f32>(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode_checkpoint::<f32>(&bad).is_err());
        let mut trailing = bytes;
        trailing.push(0);
        assert!(decode_checkpoint::<f32>(&trailing).is_err());
    }
}
