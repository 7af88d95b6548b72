//! Testing with Concept Activation Vectors on a small differentiable
//! classifier.

pub mod cav;
pub mod concepts;
pub mod error;
pub mod image;
pub mod io;
pub mod model;
pub mod rng;
pub mod scalar;
pub mod stats;
pub mod tcav;

pub use error::{Error, ErrorKind, Result};
pub use image::{Dataset, ImageSample};
pub use model::{LayerActivation, LayeredModel};
pub use scalar::Scalar;

/// Double-precision model, the default for experiments and gradient checks.
pub type Model = LayeredModel<f64>;
/// Single-precision model; parameters match checkpoint storage exactly.
pub type Model32 = LayeredModel<f32>;
