use std::fmt;
use std::str::FromStr;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{check_request, ConceptSet, Provenance};
use crate::error::{Error, Result};
use crate::image::ImageSample;
use crate::rng;

/// The five named color concepts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Color {
    Red,
    Brown,
    Blue,
    Yellow,
    Green,
}

impl Color {
    pub const ALL: [Color; 5] = [
        Color::Red,
        Color::Brown,
        Color::Blue,
        Color::Yellow,
        Color::Green,
    ];

    /// Canonical RGB triplet in `[0, 1]`.
    pub fn reference(self) -> [f64; 3] {
        match self {
            Color::Red => [0.85, 0.1, 0.1],
            Color::Brown => [0.55, 0.27, 0.07],
            Color::Blue => [0.1, 0.2, 0.85],
            Color::Yellow => [0.9, 0.85, 0.1],
            Color::Green => [0.15, 0.65, 0.15],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Color::Red => "red",
            Color::Brown => "brown",
            Color::Blue => "blue",
            Color::Yellow => "yellow",
            Color::Green => "green",
        }
    }

    /// The color whose reference triplet is closest (Euclidean) to `rgb`.
    pub fn nearest(rgb: [f64; 3]) -> Color {
        let dist = |c: Color| {
            let r = c.reference();
            (0..3).map(|i| (rgb[i] - r[i]).powi(2)).sum::<f64>()
        };
        Color::ALL
            .into_iter()
            .min_by(|&a, &b| dist(a).total_cmp(&dist(b)))
            .expect("non-empty palette")
    }
}

impl fmt::Display for Color {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Color {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Color::ALL
            .into_iter()
            .find(|c| c.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidConfig(format!("unknown color `{s}`")))
    }
}

const COLOR_STREAM: u64 = 0xC0_10;
const BASE_JITTER: f64 = 0.1;
const PIXEL_SIGMA: f64 = 0.05;

/// Solid color patches: per image, a base color drawn uniformly within
/// ±0.1 of the reference per channel, then per-pixel Gaussian noise
/// (σ = 0.05), clamped to `[0, 1]`.
pub fn generate_color_concept(
    color: Color,
    count: usize,
    size: (usize, usize),
    seed: u64,
) -> Result<ConceptSet> {
    check_request(count, size)?;
    let noise = Normal::new(0.0, PIXEL_SIGMA).expect("valid sigma");
    let reference = color.reference();
    let images = (0..count)
        .map(|i| {
            let mut r = rng::seeded(rng::derive_seed(
                seed,
                COLOR_STREAM + color as u64,
                i as u64,
            ));
            let base: Vec<f64> = reference
                .iter()
                .map(|&v| (v + r.gen_range(-BASE_JITTER..BASE_JITTER)).clamp(0.0, 1.0))
                .collect();
            ImageSample::from_fn(size.0, size.1, 3, |_, _, c| {
                (base[c] + noise.sample(&mut r)) as f32
            })
        })
        .collect::<Result<Vec<_>>>()?;
    ConceptSet::new(color.name(), images, Provenance::SyntheticColor)
}
