//! Layer primitives with analytic forward and backward passes.
//!
//! Tensors are flat slices in row-major HWC order. Convolutions are 2-D,
//! stride 1, without padding ("valid").

use crate::scalar::{dot, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    Dense,
    Conv2d,
    Relu,
    Flatten,
}

impl LayerKind {
    pub fn tag(self) -> u8 {
        match self {
            LayerKind::Dense => 0,
            LayerKind::Conv2d => 1,
            LayerKind::Relu => 2,
            LayerKind::Flatten => 3,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        Some(match tag {
            0 => LayerKind::Dense,
            1 => LayerKind::Conv2d,
            2 => LayerKind::Relu,
            3 => LayerKind::Flatten,
            _ => return None,
        })
    }
}

/// Operation and parameters of a layer.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerOp<T> {
    /// `out = W · in + b`; `weights` is `outputs × inputs`, row-major.
    Dense {
        weights: Vec<T>,
        bias: Vec<T>,
    },
    /// `weights` is laid out `[filter][ky][kx][channel]`.
    Conv2d {
        filters: usize,
        kernel: usize,
        weights: Vec<T>,
        bias: Vec<T>,
    },
    Relu,
    Flatten,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer<T> {
    pub(crate) name: String,
    pub(crate) op: LayerOp<T>,
    pub(crate) input_shape: Vec<usize>,
    pub(crate) output_shape: Vec<usize>,
}

impl<T: Scalar> Layer<T> {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> LayerKind {
        match self.op {
            LayerOp::Dense { .. } => LayerKind::Dense,
            LayerOp::Conv2d { .. } => LayerKind::Conv2d,
            LayerOp::Relu => LayerKind::Relu,
            LayerOp::Flatten => LayerKind::Flatten,
        }
    }

    pub fn op(&self) -> &LayerOp<T> {
        &self.op
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn output_shape(&self) -> &[usize] {
        &self.output_shape
    }

    pub fn input_len(&self) -> usize {
        self.input_shape.iter().product()
    }

    pub fn output_len(&self) -> usize {
        self.output_shape.iter().product()
    }

    /// Weights followed by biases; empty for parameter-free layers.
    pub fn params(&self) -> Vec<T> {
        match &self.op {
            LayerOp::Dense { weights, bias } | LayerOp::Conv2d { weights, bias, .. } => {
                weights.iter().chain(bias.iter()).copied().collect()
            }
            LayerOp::Relu | LayerOp::Flatten => Vec::new(),
        }
    }

    pub fn param_count(&self) -> usize {
        match &self.op {
            LayerOp::Dense { weights, bias } | LayerOp::Conv2d { weights, bias, .. } => {
                weights.len() + bias.len()
            }
            LayerOp::Relu | LayerOp::Flatten => 0,
        }
    }

    pub(crate) fn params_mut(&mut self) -> Option<(&mut Vec<T>, &mut Vec<T>)> {
        match &mut self.op {
            LayerOp::Dense { weights, bias } | LayerOp::Conv2d { weights, bias, .. } => {
                Some((weights, bias))
            }
            LayerOp::Relu | LayerOp::Flatten => None,
        }
    }

    pub fn forward(&self, input: &[T]) -> Vec<T> {
        debug_assert_eq!(input.len(), self.input_len());
        match &self.op {
            LayerOp::Dense { weights, bias } => {
                let n_in = input.len();
                weights
                    .chunks_exact(n_in)
                    .zip(bias)
                    .map(|(row, &b)| b + dot(row, input))
                    .collect()
            }
            LayerOp::Conv2d {
                filters,
                kernel,
                weights,
                bias,
            } => conv_forward(
                input,
                &self.input_shape,
                &self.output_shape,
                *filters,
                *kernel,
                weights,
                bias,
            ),
            LayerOp::Relu => input
                .iter()
                .map(|&v| if v > T::zero() { v } else { T::zero() })
                .collect(),
            LayerOp::Flatten => input.to_vec(),
        }
    }

    /// Propagates `grad_out` (gradient w.r.t. this layer's output) back to
    /// the layer input. When `param_grad` is given, parameter gradients are
    /// accumulated into it (weights then biases, same layout as [`params`]).
    ///
    /// [`params`]: Layer::params
    pub fn backward(&self, input: &[T], grad_out: &[T], param_grad: Option<&mut [T]>) -> Vec<T> {
        debug_assert_eq!(grad_out.len(), self.output_len());
        match &self.op {
            LayerOp::Dense { weights, .. } => {
                let n_in = input.len();
                let mut grad_in = vec![T::zero(); n_in];
                for (row, &g) in weights.chunks_exact(n_in).zip(grad_out) {
                    if g != T::zero() {
                        axpy(g, row, &mut grad_in);
                    }
                }
                if let Some(pg) = param_grad {
                    let (gw, gb) = pg.split_at_mut(weights.len());
                    for (grow, &g) in gw.chunks_exact_mut(n_in).zip(grad_out) {
                        if g != T::zero() {
                            axpy(g, input, grow);
                        }
                    }
                    for (b, &g) in gb.iter_mut().zip(grad_out) {
                        *b += g;
                    }
                }
                grad_in
            }
            LayerOp::Conv2d {
                filters,
                kernel,
                weights,
                ..
            } => conv_backward(
                input,
                grad_out,
                &self.input_shape,
                &self.output_shape,
                *filters,
                *kernel,
                weights,
                param_grad,
            ),
            LayerOp::Relu => input
                .iter()
                .zip(grad_out)
                .map(|(&x, &g)| if x > T::zero() { g } else { T::zero() })
                .collect(),
            LayerOp::Flatten => grad_out.to_vec(),
        }
    }
}

#[inline]
fn axpy<T: Scalar>(alpha: T, x: &[T], y: &mut [T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn conv_forward<T: Scalar>(
    input: &[T],
    in_shape: &[usize],
    out_shape: &[usize],
    filters: usize,
    kernel: usize,
    weights: &[T],
    bias: &[T],
) -> Vec<T> {
    let (in_w, in_c) = (in_shape[1], in_shape[2]);
    let (out_h, out_w) = (out_shape[0], out_shape[1]);
    let span = kernel * in_c;
    let filter_len = kernel * span;
    let mut out = Vec::with_capacity(out_h * out_w * filters);
    for oy in 0..out_h {
        for ox in 0..out_w {
            for f in 0..filters {
                let wf = &weights[f * filter_len..(f + 1) * filter_len];
                let mut acc = bias[f];
                for ky in 0..kernel {
                    let start = ((oy + ky) * in_w + ox) * in_c;
                    acc += dot(&input[start..start + span], &wf[ky * span..(ky + 1) * span]);
                }
                out.push(acc);
            }
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn conv_backward<T: Scalar>(
    input: &[T],
    grad_out: &[T],
    in_shape: &[usize],
    out_shape: &[usize],
    filters: usize,
    kernel: usize,
    weights: &[T],
    mut param_grad: Option<&mut [T]>,
) -> Vec<T> {
    let (in_w, in_c) = (in_shape[1], in_shape[2]);
    let (out_h, out_w) = (out_shape[0], out_shape[1]);
    let span = kernel * in_c;
    let filter_len = kernel * span;
    let mut grad_in = vec![T::zero(); input.len()];
    for oy in 0..out_h {
        for ox in 0..out_w {
            let g_pix = &grad_out[(oy * out_w + ox) * filters..(oy * out_w + ox + 1) * filters];
            for (f, &g) in g_pix.iter().enumerate() {
                if g == T::zero() {
                    continue;
                }
                let wf = &weights[f * filter_len..(f + 1) * filter_len];
                for ky in 0..kernel {
                    let start = ((oy + ky) * in_w + ox) * in_c;
                    axpy(
                        g,
                        &wf[ky * span..(ky + 1) * span],
                        &mut grad_in[start..start + span],
                    );
                }
                if let Some(pg) = param_grad.as_deref_mut() {
                    let gw = &mut pg[f * filter_len..(f + 1) * filter_len];
                    for ky in 0..kernel {
                        let start = ((oy + ky) * in_w + ox) * in_c;
                        axpy(
                            g,
                            &input[start..start + span],
                            &mut gw[ky * span..(ky + 1) * span],
                        );
                    }
                }
            }
            if let Some(pg) = param_grad.as_deref_mut() {
                let gb = &mut pg[weights.len()..];
                for (b, &g) in gb.iter_mut().zip(g_pix) {
                    *b += g;
                }
            }
        }
    }
    grad_in
}
