//! Conceptual sensitivity and TCAV scores.
//!
//! The sensitivity of class `k` to a concept at layer `l` for input `x` is
//! the directional derivative `S = ∇h_{l,k}(f_l(x)) · v`, where `v` is the
//! concept's CAV. The TCAV score is the fraction of inputs with `S > 0`.

mod experiment;
mod nonfinite;

pub use experiment::{
    run_experiment, ExperimentConfig, ExperimentOutput, SignificanceTest, TcavResult,
};

use serde::{Deserialize, Serialize};

use crate::cav::Cav;
use crate::error::{Error, Result};
use crate::image::ImageSample;
use crate::model::LayeredModel;
use crate::scalar::{dot, Scalar};

/// Sensitivity of one input to one concept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityRecord<T> {
    pub input_index: usize,
    pub value: T,
    pub concept_name: String,
    pub class_k: usize,
    pub layer_name: String,
}

pub fn directional_derivative<T: Scalar>(gradient: &[T], cav: &Cav<T>) -> Result<T> {
    if gradient.len() != cav.direction.len() {
        return Err(Error::LengthMismatch {
            left: gradient.len(),
            right: cav.direction.len(),
        });
    }
    Ok(dot(gradient, &cav.direction))
}

/// Fraction of `gradients` whose directional derivative along `cav` is
/// strictly positive.
pub fn score_from_gradients<T: Scalar>(gradients: &[Vec<T>], cav: &Cav<T>) -> Result<T> {
    if gradients.is_empty() {
        return Err(Error::Empty("no class inputs to score".into()));
    }
    let mut positive = 0usize;
    for g in gradients {
        if directional_derivative(g, cav)? > T::zero() {
            positive += 1;
        }
    }
    Ok(T::from_usize_lossy(positive) / T::from_usize_lossy(gradients.len()))
}

/// `∇h_{l,k}(f_l(x))` for every input.
pub fn class_gradients<T: Scalar>(
    model: &LayeredModel<T>,
    layer_name: &str,
    class_k: usize,
    inputs: &[ImageSample],
) -> Result<Vec<Vec<T>>> {
    inputs
        .iter()
        .map(|x| model.grad_logit_wrt_activation(x, layer_name, class_k))
        .collect()
}

fn check_cav_layer<T>(cav: &Cav<T>, layer_name: &str) -> Result<()> {
    if cav.layer_name != layer_name {
        return Err(Error::InvalidConfig(format!(
            "CAV was trained at layer `{}` but scored at `{layer_name}`",
            cav.layer_name
        )));
    }
    Ok(())
}

pub fn sensitivities<T: Scalar>(
    model: &LayeredModel<T>,
    layer_name: &str,
    class_k: usize,
    class_inputs: &[ImageSample],
    cav: &Cav<T>,
) -> Result<Vec<SensitivityRecord<T>>> {
    check_cav_layer(cav, layer_name)?;
    class_gradients(model, layer_name, class_k, class_inputs)?
        .iter()
        .enumerate()
        .map(|(input_index, g)| {
            let value = directional_derivative(g, cav)?;
            if !value.is_finite() {
                return Err(Error::NonFinite(format!(
                    "sensitivity of input {input_index}"
                )));
            }
            Ok(SensitivityRecord {
                input_index,
                value,
                concept_name: cav.concept_name.clone(),
                class_k,
                layer_name: layer_name.to_string(),
            })
        })
        .collect()
}

/// `|{x ∈ X_k : S(x) > 0}| / |X_k|`.
pub fn tcav_score<T: Scalar>(
    model: &LayeredModel<T>,
    layer_name: &str,
    class_k: usize,
    class_inputs: &[ImageSample],
    cav: &Cav<T>,
) -> Result<T> {
    check_cav_layer(cav, layer_name)?;
    if class_inputs.is_empty() {
        return Err(Error::Empty("X_k is empty".into()));
    }
    score_from_gradients(
        &class_gradients(model, layer_name, class_k, class_inputs)?,
        cav,
    )
}
