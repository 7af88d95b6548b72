//! Sequential differentiable classifier with named cut points.
//!
//! For a cut at layer `l`, [`LayeredModel::forward_to_layer`] evaluates the
//! prefix `f_l` (input to activation), [`LayeredModel::layer_to_logits`] the
//! suffix `h_l` (activation to logits), and
//! [`LayeredModel::grad_logit_wrt_activation`] the gradient of one logit of
//! the suffix, evaluated at `f_l(x)`.

mod checkpoint;
mod layer;
mod train;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint};
pub use layer::{Layer, LayerKind, LayerOp};
pub use train::{evaluate, train_classifier, EpochStats, TrainConfig, TrainTrace};

use std::collections::HashSet;

use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::image::ImageSample;
use crate::rng;
use crate::scalar::{all_finite, Scalar};

/// Activation vector captured at a named layer, flattened row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerActivation<T> {
    pub layer_name: String,
    pub values: Vec<T>,
    pub original_shape: Vec<usize>,
}

impl<T: Scalar> LayerActivation<T> {
    pub fn new(
        layer_name: impl Into<String>,
        values: Vec<T>,
        original_shape: Vec<usize>,
    ) -> Result<Self> {
        let expected: usize = original_shape.iter().product();
        if expected != values.len() {
            return Err(Error::ShapeMismatch {
                expected: original_shape,
                actual: vec![values.len()],
            });
        }
        let layer_name = layer_name.into();
        if !all_finite(&values) {
            return Err(Error::NonFinite(format!(
                "activation of layer `{layer_name}`"
            )));
        }
        Ok(Self {
            layer_name,
            values,
            original_shape,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Softmax output of a forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction<T> {
    pub class: usize,
    pub probabilities: Vec<T>,
}

/// Numerically stable softmax.
pub fn softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax<T: Scalar>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayeredModel<T> {
    input_shape: Vec<usize>,
    layers: Vec<Layer<T>>,
    class_count: usize,
}

impl<T: Scalar> LayeredModel<T> {
    pub fn builder(input_shape: Vec<usize>) -> ModelBuilder<T> {
        ModelBuilder {
            input_shape: input_shape.clone(),
            current_shape: input_shape,
            specs: Vec::new(),
            error: None,
            _marker: std::marker::PhantomData,
        }
    }

    /// Assembles a model from fully specified layers, checking shape chaining,
    /// name uniqueness and parameter sizes.
    pub fn from_layers(input_shape: Vec<usize>, layers: Vec<Layer<T>>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidModel("model has no layers".into()));
        }
        if input_shape.is_empty() || input_shape.contains(&0) {
            return Err(Error::InvalidModel(format!(
                "bad input shape {input_shape:?}"
            )));
        }
        let mut names = HashSet::new();
        let mut shape = input_shape.clone();
        for layer in &layers {
            if layer.name.is_empty() {
                return Err(Error::InvalidModel("empty layer name".into()));
            }
            if !names.insert(layer.name.as_str()) {
                return Err(Error::InvalidModel(format!(
                    "duplicate layer name `{}`",
                    layer.name
                )));
            }
            if layer.input_shape != shape {
                return Err(Error::InvalidModel(format!(
                    "layer `{}` expects input {:?} but receives {:?}",
                    layer.name, layer.input_shape, shape
                )));
            }
            let expected_out = infer_output_shape(&layer.op, &layer.input_shape)
                .map_err(|e| Error::InvalidModel(format!("layer `{}`: {e}", layer.name)))?;
            if expected_out != layer.output_shape {
                return Err(Error::InvalidModel(format!(
                    "layer `{}` declares output {:?}, operation yields {:?}",
                    layer.name, layer.output_shape, expected_out
                )));
            }
            check_param_sizes(layer)?;
            shape = layer.output_shape.clone();
        }
        if shape.len() != 1 {
            return Err(Error::InvalidModel(format!(
                "final layer must output a logit vector, got shape {shape:?}"
            )));
        }
        Ok(Self {
            input_shape,
            class_count: shape[0],
            layers,
        })
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn layer_names(&self) -> Vec<&str> {
        self.layers.iter().map(|l| l.name.as_str()).collect()
    }

    pub fn layer_index(&self, name: &str) -> Result<usize> {
        self.layers
            .iter()
            .position(|l| l.name == name)
            .ok_or_else(|| Error::UnknownLayer(name.to_string()))
    }

    pub fn layer(&self, name: &str) -> Result<&Layer<T>> {
        Ok(&self.layers[self.layer_index(name)?])
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    /// Replaces the parameters of a dense or convolutional layer.
    pub fn set_params(&mut self, name: &str, weights: Vec<T>, bias: Vec<T>) -> Result<()> {
        let idx = self.layer_index(name)?;
        let layer = &mut self.layers[idx];
        let (w, b) = layer
            .params_mut()
            .ok_or_else(|| Error::InvalidModel(format!("layer `{name}` has no parameters")))?;
        if w.len() != weights.len() || b.len() != bias.len() {
            return Err(Error::LengthMismatch {
                left: w.len() + b.len(),
                right: weights.len() + bias.len(),
            });
        }
        *w = weights;
        *b = bias;
        Ok(())
    }

    fn input_values(&self, input: &ImageSample) -> Result<Vec<T>> {
        let shape = input.shape();
        if shape != self.input_shape {
            return Err(Error::ShapeMismatch {
                expected: self.input_shape.clone(),
                actual: shape,
            });
        }
        Ok(input
            .pixels()
            .iter()
            .map(|&p| T::lit(f64::from(p)))
            .collect())
    }

    /// Applies layers `from..to` to `values`.
    fn run(&self, mut values: Vec<T>, from: usize, to: usize) -> Vec<T> {
        for layer in &self.layers[from..to] {
            values = layer.forward(&values);
        }
        values
    }

    /// `f_l(x)`: the activation after the named layer.
    pub fn forward_to_layer(
        &self,
        input: &ImageSample,
        layer_name: &str,
    ) -> Result<LayerActivation<T>> {
        let idx = self.layer_index(layer_name)?;
        let x = self.input_values(input)?;
        let values = self.run(x, 0, idx + 1);
        LayerActivation::new(layer_name, values, self.layers[idx].output_shape.clone())
    }

    /// `h_l`: logits computed from an activation at the named cut point.
    pub fn layer_to_logits(&self, activation: &LayerActivation<T>) -> Result<Vec<T>> {
        let idx = self.layer_index(&activation.layer_name)?;
        self.check_activation_shape(idx, activation)?;
        Ok(self.run(activation.values.clone(), idx + 1, self.layers.len()))
    }

    fn check_activation_shape(&self, idx: usize, activation: &LayerActivation<T>) -> Result<()> {
        let layer = &self.layers[idx];
        if activation.values.len() != layer.output_len()
            || activation.original_shape != layer.output_shape
        {
            return Err(Error::ShapeMismatch {
                expected: layer.output_shape.clone(),
                actual: activation.original_shape.clone(),
            });
        }
        Ok(())
    }

    /// Full forward pass.
    pub fn logits(&self, input: &ImageSample) -> Result<Vec<T>> {
        let x = self.input_values(input)?;
        Ok(self.run(x, 0, self.layers.len()))
    }

    /// Gradient of logit `class_k` with respect to the flattened activation
    /// at `layer_name`, evaluated at `f_l(input)`.
    pub fn grad_logit_wrt_activation(
        &self,
        input: &ImageSample,
        layer_name: &str,
        class_k: usize,
    ) -> Result<Vec<T>> {
        self.check_class(class_k)?;
        let activation = self.forward_to_layer(input, layer_name)?;
        self.grad_logit_at_activation(&activation, class_k)
    }

    /// Gradient of logit `class_k` of the suffix model at an arbitrary
    /// activation of the cut layer.
    pub fn grad_logit_at_activation(
        &self,
        activation: &LayerActivation<T>,
        class_k: usize,
    ) -> Result<Vec<T>> {
        self.check_class(class_k)?;
        let idx = self.layer_index(&activation.layer_name)?;
        self.check_activation_shape(idx, activation)?;
        let tail = &self.layers[idx + 1..];
        let mut inputs = Vec::with_capacity(tail.len());
        let mut values = activation.values.clone();
        for layer in tail {
            let next = layer.forward(&values);
            inputs.push(values);
            values = next;
        }
        let mut grad = vec![T::zero(); self.class_count];
        grad[class_k] = T::one();
        for (layer, input) in tail.iter().zip(&inputs).rev() {
            grad = layer.backward(input, &grad, None);
        }
        Ok(grad)
    }

    pub fn predict(&self, input: &ImageSample) -> Result<Prediction<T>> {
        let logits = self.logits(input)?;
        Ok(Prediction {
            class: argmax(&logits),
            probabilities: softmax(&logits),
        })
    }

    fn check_class(&self, class_k: usize) -> Result<()> {
        if class_k >= self.class_count {
            return Err(Error::ClassOutOfRange {
                index: class_k,
                class_count: self.class_count,
            });
        }
        Ok(())
    }

    /// Forward pass keeping every layer input, for backpropagation.
    pub(crate) fn forward_trace(&self, input: Vec<T>) -> (Vec<Vec<T>>, Vec<T>) {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut values = input;
        for layer in &self.layers {
            let next = layer.forward(&values);
            inputs.push(values);
            values = next;
        }
        (inputs, values)
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [Layer<T>] {
        &mut self.layers
    }

    pub(crate) fn image_values(&self, input: &ImageSample) -> Result<Vec<T>> {
        self.input_values(input)
    }

    /// Converts every parameter to another scalar type.
    pub fn cast<U: Scalar>(&self) -> LayeredModel<U> {
        let conv = |v: &Vec<T>| v.iter().map(|&x| U::lit(x.as_f64())).collect::<Vec<U>>();
        let layers = self
            .layers
            .iter()
            .map(|l| Layer {
                name: l.name.clone(),
                input_shape: l.input_shape.clone(),
                output_shape: l.output_shape.clone(),
                op: match &l.op {
                    LayerOp::Dense { weights, bias } => LayerOp::Dense {
                        weights: conv(weights),
                        bias: conv(bias),
                    },
                    LayerOp::Conv2d {
                        filters,
                        kernel,
                        weights,
                        bias,
                    } => LayerOp::Conv2d {
                        filters: *filters,
                        kernel: *kernel,
                        weights: conv(weights),
                        bias: conv(bias),
                    },
                    LayerOp::Relu => LayerOp::Relu,
                    LayerOp::Flatten => LayerOp::Flatten,
                },
            })
            .collect();
        LayeredModel {
            input_shape: self.input_shape.clone(),
            layers,
            class_count: self.class_count,
        }
    }
}

pub(crate) fn infer_output_shape<T>(
    op: &LayerOp<T>,
    input: &[usize],
) -> std::result::Result<Vec<usize>, String> {
    match op {
        LayerOp::Dense { weights, bias } => {
            let n_in: usize = input.iter().product();
            let n_out = bias.len();
            if n_out == 0 || weights.len() != n_in * n_out {
                return Err(format!(
                    "dense weights {} do not match {n_in} inputs x {n_out} outputs",
                    weights.len()
                ));
            }
            Ok(vec![n_out])
        }
        LayerOp::Conv2d {
            filters, kernel, ..
        } => {
            if input.len() != 3 {
                return Err(format!("convolution needs HxWxC input, got {input:?}"));
            }
            if *kernel == 0 || *filters == 0 || input[0] < *kernel || input[1] < *kernel {
                return Err(format!("kernel {kernel} does not fit input {input:?}"));
            }
            Ok(vec![input[0] - kernel + 1, input[1] - kernel + 1, *filters])
        }
        LayerOp::Relu => Ok(input.to_vec()),
        LayerOp::Flatten => Ok(vec![input.iter().product()]),
    }
}

fn check_param_sizes<T>(layer: &Layer<T>) -> Result<()> {
    if let LayerOp::Conv2d {
        filters,
        kernel,
        weights,
        bias,
    } = &layer.op
    {
        let c = layer.input_shape[2];
        if weights.len() != filters * kernel * kernel * c || bias.len() != *filters {
            return Err(Error::InvalidModel(format!(
                "layer `{}` has {} weights / {} biases, expected {} / {}",
                layer.name,
                weights.len(),
                bias.len(),
                filters * kernel * kernel * c,
                filters
            )));
        }
    }
    Ok(())
}

enum LayerSpec {
    Dense(usize),
    Conv2d { filters: usize, kernel: usize },
    Relu,
    Flatten,
}

/// Incremental construction of a sequential model with He-normal
/// initialization (zero biases).
pub struct ModelBuilder<T> {
    input_shape: Vec<usize>,
    current_shape: Vec<usize>,
    specs: Vec<(String, LayerSpec, Vec<usize>, Vec<usize>)>,
    error: Option<String>,
    _marker: std::marker::PhantomData<T>,
}

impl<T: Scalar> ModelBuilder<T> {
    fn push(mut self, name: &str, spec: LayerSpec) -> Self {
        if self.error.is_some() {
            return self;
        }
        let probe: LayerOp<u8> = match spec {
            LayerSpec::Dense(n) => LayerOp::Dense {
                weights: vec![0; self.current_shape.iter().product::<usize>() * n],
                bias: vec![0; n],
            },
            LayerSpec::Conv2d { filters, kernel } => LayerOp::Conv2d {
                filters,
                kernel,
                weights: Vec::new(),
                bias: Vec::new(),
            },
            LayerSpec::Relu => LayerOp::Relu,
            LayerSpec::Flatten => LayerOp::Flatten,
        };
        match infer_output_shape(&probe, &self.current_shape) {
            Ok(out) => {
                let input = std::mem::replace(&mut self.current_shape, out.clone());
                self.specs.push((name.to_string(), spec, input, out));
            }
            Err(e) => self.error = Some(format!("layer `{name}`: {e}")),
        }
        self
    }

    pub fn dense(self, name: &str, outputs: usize) -> Self {
        self.push(name, LayerSpec::Dense(outputs))
    }

    pub fn conv2d(self, name: &str, filters: usize, kernel: usize) -> Self {
        self.push(name, LayerSpec::Conv2d { filters, kernel })
    }

    pub fn relu(self, name: &str) -> Self {
        self.push(name, LayerSpec::Relu)
    }

    pub fn flatten(self, name: &str) -> Self {
        self.push(name, LayerSpec::Flatten)
    }

    pub fn build(self, seed: u64) -> Result<LayeredModel<T>> {
        if let Some(e) = self.error {
            return Err(Error::InvalidModel(e));
        }
        let mut rng = rng::seeded(seed);
        let mut he = |fan_in: usize, count: usize| -> Vec<T> {
            let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("valid std");
            (0..count)
                .map(|_| T::lit(normal.sample(&mut rng)))
                .collect()
        };
        let layers = self
            .specs
            .into_iter()
            .map(|(name, spec, input_shape, output_shape)| {
                let op = match spec {
                    LayerSpec::Dense(n) => {
                        let fan_in: usize = input_shape.iter().product();
                        LayerOp::Dense {
                            weights: he(fan_in, fan_in * n),
                            bias: vec![T::zero(); n],
                        }
                    }
                    LayerSpec::Conv2d { filters, kernel } => {
                        let fan_in = kernel * kernel * input_shape[2];
                        LayerOp::Conv2d {
                            filters,
                            kernel,
                            weights: he(fan_in, fan_in * filters),
                            bias: vec![T::zero(); filters],
                        }
                    }
                    LayerSpec::Relu => LayerOp::Relu,
                    LayerSpec::Flatten => LayerOp::Flatten,
                };
                Layer {
                    name,
                    op,
                    input_shape,
                    output_shape,
                }
            })
            .collect();
        LayeredModel::from_layers(self.input_shape, layers)
    }
}

/// Layer names of [`reference_model`], in order.
pub const REFERENCE_LAYERS: [&str; 8] = [
    "conv1", "relu1", "conv2", "relu2", "flatten", "dense1", "relu3", "logits",
];

/// The reference architecture: conv(8, 3×3) → ReLU → conv(16, 3×3) → ReLU →
/// flatten → dense(32) → ReLU → dense(`class_count`).
pub fn reference_model<T: Scalar>(
    height: usize,
    width: usize,
    channels: usize,
    class_count: usize,
    seed: u64,
) -> Result<LayeredModel<T>> {
    LayeredModel::builder(vec![height, width, channels])
        .conv2d("conv1", 8, 3)
        .relu("relu1")
        .conv2d("conv2", 16, 3)
        .relu("relu2")
        .flatten("flatten")
        .dense("dense1", 32)
        .relu("relu3")
        .dense("logits", class_count)
        .build(seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn image(h: usize, w: usize, c: usize, seed: u64) -> ImageSample {
        use rand::Rng;
        let mut r = rng::seeded(seed);
        ImageSample::from_fn(h, w, c, |_, _, _| r.gen::<f32>()).unwrap()
    }

    fn dense_model(weights: Vec<f64>, bias: Vec<f64>, n_in: usize) -> LayeredModel<f64> {
        let n_out = bias.len();
        LayeredModel::from_layers(
            vec![1, 1, n_in],
            vec![
                Layer {
                    name: "flat".into(),
                    op: LayerOp::Flatten,
                    input_shape: vec![1, 1, n_in],
                    output_shape: vec![n_in],
                },
                Layer {
                    name: "dense".into(),
                    op: LayerOp::Dense { weights, bias },
                    input_shape: vec![n_in],
                    output_shape: vec![n_out],
                },
            ],
        )
        .unwrap()
    }

    #[test]
    fn identity_layer_returns_flattened_input() {
        let model: LayeredModel<f64> = LayeredModel::builder(vec![2, 3, 2])
            .flatten("id")
            .build(0)
            .unwrap();
        let x = image(2, 3, 2, 1);
        let act = model.forward_to_layer(&x, "id").unwrap();
        let expected: Vec<f64> = x.pixels().iter().map(|&p| f64::from(p)).collect();
        assert_eq!(act.values, expected);
        assert_eq!(act.original_shape, vec![12]);
    }

    #[test]
    fn dense_forward_matches_hand_product() {
        // W is 3x2, x = (0.5, 0.25)
        let w = vec![1.0, 2.0, -1.0, 0.5, 0.0, 3.0];
        let model = dense_model(w, vec![0.0; 3], 2);
        let x = ImageSample::new(1, 1, 2, vec![0.5, 0.25]).unwrap();
        let act = model.forward_to_layer(&x, "dense").unwrap();
        assert_eq!(act.values, vec![1.0, -0.375, 0.75]);
    }

    #[test]
    fn two_layer_linear_logits_match_hand_computation() {
        // W1 = [[1, -1], [2, 0]], b1 = (0.5, 0); W2 = [[1, 1], [0, -2]], b2 = (0, 1)
        let model = LayeredModel::from_layers(
            vec![2],
            vec![
                Layer {
                    name: "d1".into(),
                    op: LayerOp::Dense {
                        weights: vec![1.0, -1.0, 2.0, 0.0],
                        bias: vec![0.5, 0.0],
                    },
                    input_shape: vec![2],
                    output_shape: vec![2],
                },
                Layer {
                    name: "d2".into(),
                    op: LayerOp::Dense {
                        weights: vec![1.0, 1.0, 0.0, -2.0],
                        bias: vec![0.0, 1.0],
                    },
                    input_shape: vec![2],
                    output_shape: vec![2],
                },
            ],
        )
        .unwrap();
        // x = (3, 1): h1 = (2.5, 6); logits = (8.5, -11)
        let act = LayerActivation::new("d1", vec![2.5, 6.0], vec![2]).unwrap();
        assert_eq!(model.layer_to_logits(&act).unwrap(), vec![8.5, -11.0]);
    }

    #[test]
    fn composition_law_holds_at_every_cut() {
        let model: LayeredModel<f64> = reference_model(8, 8, 3, 3, 11).unwrap();
        let x = image(8, 8, 3, 4);
        let full = model.logits(&x).unwrap();
        for name in REFERENCE_LAYERS {
            let act = model.forward_to_layer(&x, name).unwrap();
            assert_eq!(model.layer_to_logits(&act).unwrap(), full, "cut at {name}");
        }
    }

    #[test]
    fn last_layer_cut_returns_activation_unchanged() {
        let model: LayeredModel<f64> = reference_model(6, 6, 3, 2, 2).unwrap();
        let act = model
            .forward_to_layer(&image(6, 6, 3, 9), "logits")
            .unwrap();
        assert_eq!(model.layer_to_logits(&act).unwrap(), act.values);
    }

    #[test]
    fn repeated_forward_is_bit_identical() {
        let model: LayeredModel<f32> = reference_model(8, 8, 3, 2, 3).unwrap();
        let x = image(8, 8, 3, 5);
        let a = model.forward_to_layer(&x, "dense1").unwrap();
        let b = model.forward_to_layer(&x, "dense1").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn unknown_layer_and_shape_errors_name_the_offender() {
        let model: LayeredModel<f64> = reference_model(8, 8, 3, 2, 3).unwrap();
        let err = model
            .forward_to_layer(&image(8, 8, 3, 0), "mixed9")
            .unwrap_err();
        assert!(err.to_string().contains("mixed9"));
        let err = model
            .forward_to_layer(&image(7, 8, 3, 0), "conv1")
            .unwrap_err();
        assert!(err.to_string().contains("[7, 8, 3]"));
        let act = LayerActivation::new("dense1", vec![0.0; 5], vec![5]).unwrap();
        assert!(matches!(
            model.layer_to_logits(&act),
            Err(Error::ShapeMismatch { .. })
        ));
        assert!(matches!(
            model.grad_logit_wrt_activation(&image(8, 8, 3, 0), "dense1", 2),
            Err(Error::ClassOutOfRange {
                index: 2,
                class_count: 2
            })
        ));
    }

    #[test]
    fn linear_tail_gradient_is_weight_row() {
        let w = vec![0.3, -0.7, 1.1, 0.2, 0.0, -0.4];
        let model = dense_model(w, vec![0.1, 0.2], 3);
        for seed in 0..3 {
            let x = image(1, 1, 3, seed);
            let g = model.grad_logit_wrt_activation(&x, "flat", 1).unwrap();
            assert_eq!(g, vec![0.2, 0.0, -0.4]);
        }
    }

    #[test]
    fn rectifier_zeroes_gradient_where_activation_negative() {
        let model: LayeredModel<f64> = reference_model(8, 8, 3, 2, 21).unwrap();
        let x = image(8, 8, 3, 6);
        let act = model.forward_to_layer(&x, "dense1").unwrap();
        let g = model.grad_logit_wrt_activation(&x, "dense1", 0).unwrap();
        for (a, gi) in act.values.iter().zip(&g) {
            if *a < 0.0 {
                assert_eq!(*gi, 0.0);
            }
        }
    }

    #[test]
    #[allow(clippy::needless_range_loop)]
    fn gradient_matches_central_differences() {
        let model: LayeredModel<f64> = reference_model(7, 7, 3, 3, 8).unwrap();
        let x = image(7, 7, 3, 2);
        for layer in ["relu1", "conv2", "dense1"] {
            let act = model.forward_to_layer(&x, layer).unwrap();
            let g = model.grad_logit_at_activation(&act, 2).unwrap();
            let eps = 1e-4;
            for i in 0..act.len() {
                let mut plus = act.clone();
                plus.values[i] += eps;
                let mut minus = act.clone();
                minus.values[i] -= eps;
                let fd = (model.layer_to_logits(&plus).unwrap()[2]
                    - model.layer_to_logits(&minus).unwrap()[2])
                    / (2.0 * eps);
                let scale = g[i].abs().max(fd.abs());
                assert!(
                    (g[i] - fd).abs() <= 1e-3 * scale + 1e-9,
                    "{layer}[{i}]: {} vs {fd}",
                    g[i]
                );
            }
        }
    }

    #[test]
    fn softmax_closed_forms() {
        let p = softmax(&[0.0f64, 3.0f64.ln()]);
        assert_relative_eq!(p[0], 0.25, epsilon = 1e-15);
        assert_relative_eq!(p[1], 0.75, epsilon = 1e-15);
        let model = dense_model(vec![0.0; 8], vec![0.5; 4], 2);
        let pred = model
            .predict(&ImageSample::new(1, 1, 2, vec![0.3, 0.9]).unwrap())
            .unwrap();
        assert_eq!(pred.class, 0);
        for p in pred.probabilities {
            assert_relative_eq!(p, 0.25, epsilon = 1e-15);
        }
    }

    #[test]
    fn builder_rejects_duplicates_and_bad_kernels() {
        assert!(LayeredModel::<f64>::builder(vec![4, 4, 1])
            .flatten("a")
            .dense("a", 2)
            .build(0)
            .is_err());
        assert!(LayeredModel::<f64>::builder(vec![2, 2, 1])
            .conv2d("c", 1, 3)
            .flatten("f")
            .build(0)
            .is_err());
        assert!(LayeredModel::<f64>::builder(vec![4, 4, 1])
            .conv2d("c", 1, 3)
            .build(0)
            .is_err());
    }

    #[test]
    fn reference_model_shapes() {
        let m: LayeredModel<f32> = reference_model(32, 32, 3, 2, 0).unwrap();
        assert_eq!(m.layer_names(), REFERENCE_LAYERS.to_vec());
        assert_eq!(m.layer("conv1").unwrap().output_shape(), &[30, 30, 8]);
        assert_eq!(m.layer("relu2").unwrap().output_shape(), &[28, 28, 16]);
        assert_eq!(m.layer("flatten").unwrap().output_shape(), &[12544]);
        assert_eq!(m.layer("dense1").unwrap().output_shape(), &[32]);
        assert_eq!(m.class_count(), 2);
    }
}
