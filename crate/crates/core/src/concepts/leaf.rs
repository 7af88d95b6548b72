//! Synthetic leaves: healthy green leaves, and leaves carrying late-blight
//! style lesions (dark brown blobs ringed by a yellow halo).

use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use super::color::Color;
use super::{check_request, ConceptSet, Provenance};
use crate::error::Result;
use crate::image::{Dataset, ImageSample};
use crate::rng::{self, Rng};

const LEAF_STREAM: u64 = 0x1EAF;
const LESION_STREAM: u64 = 0xB116;
const BASE_JITTER: f64 = 0.05;
const PIXEL_SIGMA: f64 = 0.03;
const RIM_WIDTH: usize = 2;

/// A lesioned leaf with the masks used to paint it.
#[derive(Debug, Clone, PartialEq)]
pub struct LesionedLeaf {
    pub image: ImageSample,
    /// Row-major `height × width`; true inside a lesion.
    pub lesion_mask: Vec<bool>,
    /// True on the yellow halo around the lesions.
    pub rim_mask: Vec<bool>,
}

fn leaf_base(r: &mut Rng) -> [f64; 3] {
    let g = Color::Green.reference();
    [
        g[0] + r.gen_range(-BASE_JITTER..BASE_JITTER),
        g[1] + r.gen_range(-BASE_JITTER..BASE_JITTER),
        g[2] + r.gen_range(-BASE_JITTER..BASE_JITTER),
    ]
}

/// Grows 1–4 blobs by random walks with a plus-shaped brush.
fn lesion_mask(h: usize, w: usize, r: &mut Rng) -> Vec<bool> {
    let mut mask = vec![false; h * w];
    let area = h * w;
    let (lo, hi) = ((area / 24).max(1), (area / 12).max(2));
    for _ in 0..r.gen_range(1..=4) {
        let mut y = r.gen_range(0..h) as i64;
        let mut x = r.gen_range(0..w) as i64;
        for _ in 0..r.gen_range(lo..hi) {
            for (dy, dx) in [(0, 0), (1, 0), (-1, 0), (0, 1), (0, -1)] {
                let (py, px) = (y + dy, x + dx);
                if py >= 0 && px >= 0 && (py as usize) < h && (px as usize) < w {
                    mask[py as usize * w + px as usize] = true;
                }
            }
            match r.gen_range(0..4) {
                0 => y += 1,
                1 => y -= 1,
                2 => x += 1,
                _ => x -= 1,
            }
            y = y.clamp(0, h as i64 - 1);
            x = x.clamp(0, w as i64 - 1);
        }
    }
    mask
}

/// Pixels within Chebyshev distance `width` of the mask, excluding it.
fn rim(mask: &[bool], h: usize, w: usize, width: usize) -> Vec<bool> {
    let k = width as i64;
    let mut out = vec![false; h * w];
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            if mask[(y as usize) * w + x as usize] {
                continue;
            }
            'search: for dy in -k..=k {
                for dx in -k..=k {
                    let (py, px) = (y + dy, x + dx);
                    if py >= 0
                        && px >= 0
                        && (py as usize) < h
                        && (px as usize) < w
                        && mask[py as usize * w + px as usize]
                    {
                        out[y as usize * w + x as usize] = true;
                        break 'search;
                    }
                }
            }
        }
    }
    out
}

fn healthy_leaf(size: (usize, usize), r: &mut Rng) -> Result<ImageSample> {
    let base = leaf_base(r);
    let noise = Normal::new(0.0, PIXEL_SIGMA).expect("valid sigma");
    // a faint darker vein across the leaf
    let theta = r.gen_range(0.0..std::f64::consts::PI);
    let (cy, cx) = (size.0 as f64 / 2.0, size.1 as f64 / 2.0);
    let offset = r.gen_range(-0.2..0.2) * size.0.min(size.1) as f64;
    let (sin, cos) = theta.sin_cos();
    ImageSample::from_fn(size.0, size.1, 3, |y, x, c| {
        let d = ((y as f64 - cy) * cos - (x as f64 - cx) * sin - offset).abs();
        let vein = if d < 0.8 { 0.9 } else { 1.0 };
        (base[c] * vein + noise.sample(r)) as f32
    })
}

fn lesioned_leaf(size: (usize, usize), r: &mut Rng) -> Result<LesionedLeaf> {
    let (h, w) = size;
    let base = leaf_base(r);
    let lesion_mask = lesion_mask(h, w, r);
    let rim_mask = rim(&lesion_mask, h, w, RIM_WIDTH);
    let brown = Color::Brown.reference();
    let yellow = Color::Yellow.reference();
    let darkness = r.gen_range(0.55..0.9);
    let lesion: Vec<f64> = brown.iter().map(|v| v * darkness).collect();
    let halo: Vec<f64> = yellow
        .iter()
        .zip(&base)
        .map(|(y, b)| 0.75 * y + 0.25 * b)
        .collect();
    let noise = Normal::new(0.0, PIXEL_SIGMA).expect("valid sigma");
    let image = ImageSample::from_fn(h, w, 3, |y, x, c| {
        let i = y * w + x;
        let v = if lesion_mask[i] {
            lesion[c]
        } else if rim_mask[i] {
            halo[c]
        } else {
            base[c]
        };
        (v + noise.sample(r)) as f32
    })?;
    Ok(LesionedLeaf {
        image,
        lesion_mask,
        rim_mask,
    })
}

/// Lesioned leaves together with their lesion and halo masks.
pub fn generate_lesioned_leaves(
    count: usize,
    size: (usize, usize),
    seed: u64,
) -> Result<Vec<LesionedLeaf>> {
    check_request(count, size)?;
    (0..count)
        .map(|i| {
            lesioned_leaf(
                size,
                &mut rng::seeded(rng::derive_seed(seed, LESION_STREAM, i as u64)),
            )
        })
        .collect()
}

/// Concept set of disease-pattern images: green leaves bearing 1–4 dark
/// brown random-walk lesions, each ringed by a 2 px yellow halo.
pub fn generate_disease_pattern_concept(
    count: usize,
    size: (usize, usize),
    seed: u64,
) -> Result<ConceptSet> {
    let images = generate_lesioned_leaves(count, size, seed)?
        .into_iter()
        .map(|l| l.image)
        .collect();
    ConceptSet::new("late_blight_pattern", images, Provenance::SyntheticPattern)
}

/// Healthy green leaves: jittered green base, a faint vein, pixel noise.
pub fn generate_healthy_leaves(
    count: usize,
    size: (usize, usize),
    seed: u64,
) -> Result<Vec<ImageSample>> {
    check_request(count, size)?;
    (0..count)
        .map(|i| {
            healthy_leaf(
                size,
                &mut rng::seeded(rng::derive_seed(seed, LEAF_STREAM, i as u64)),
            )
        })
        .collect()
}

/// Class names of [`generate_leaf_dataset`], in label order.
pub const LEAF_CLASSES: [&str; 2] = ["healthy", "late_blight"];

/// Labeled two-class leaf set: `per_class` healthy leaves (label 0)
/// followed by `per_class` lesioned leaves (label 1).
pub fn generate_leaf_dataset(per_class: usize, size: (usize, usize), seed: u64) -> Result<Dataset> {
    let healthy = generate_healthy_leaves(
        per_class,
        size,
        rng::derive_seed(seed, LEAF_STREAM, u64::MAX),
    )?;
    let lesioned = generate_lesioned_leaves(
        per_class,
        size,
        rng::derive_seed(seed, LESION_STREAM, u64::MAX),
    )?;
    let samples = healthy
        .into_iter()
        .map(|img| img.with_label(0))
        .chain(lesioned.into_iter().map(|l| l.image.with_label(1)))
        .collect();
    Dataset::labeled(
        samples,
        LEAF_CLASSES.iter().map(|s| s.to_string()).collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn masked_mean_luma(img: &ImageSample, mask: &[bool]) -> f64 {
        let mut sum = 0.0;
        let mut n = 0usize;
        for y in 0..img.height() {
            for x in 0..img.width() {
                if mask[y * img.width() + x] {
                    sum += f64::from(img.luma(y, x));
                    n += 1;
                }
            }
        }
        sum / n as f64
    }

    #[test]
    fn lesions_are_darker_than_background() {
        for leaf in generate_lesioned_leaves(100, (32, 32), 5).unwrap() {
            let background: Vec<bool> = leaf
                .lesion_mask
                .iter()
                .zip(&leaf.rim_mask)
                .map(|(&l, &r)| !l && !r)
                .collect();
            assert!(leaf.lesion_mask.iter().any(|&b| b));
            assert!(background.iter().any(|&b| b));
            assert!(
                masked_mean_luma(&leaf.image, &leaf.lesion_mask)
                    < masked_mean_luma(&leaf.image, &background)
            );
        }
    }

    #[test]
    fn rim_surrounds_but_excludes_lesion() {
        let leaf = &generate_lesioned_leaves(1, (32, 32), 9).unwrap()[0];
        assert!(leaf.rim_mask.iter().any(|&b| b));
        assert!(leaf
            .lesion_mask
            .iter()
            .zip(&leaf.rim_mask)
            .all(|(&l, &r)| !(l && r)));
    }

    #[test]
    fn count_and_seed_behaviour() {
        let one = generate_disease_pattern_concept(1, (32, 32), 5).unwrap();
        assert_eq!(one.len(), 1);
        let a = generate_lesioned_leaves(3, (32, 32), 1).unwrap();
        let b = generate_lesioned_leaves(3, (32, 32), 2).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_ne!(x.lesion_mask, y.lesion_mask);
            let diff: f32 = x
                .image
                .pixels()
                .iter()
                .zip(y.image.pixels())
                .map(|(p, q)| (p - q).abs())
                .sum();
            assert!(diff > 1.0);
        }
        assert_eq!(a, generate_lesioned_leaves(3, (32, 32), 1).unwrap());
    }

    #[test]
    fn healthy_leaves_are_green() {
        for img in generate_healthy_leaves(20, (16, 16), 4).unwrap() {
            let m = img.channel_means();
            assert_eq!(Color::nearest([m[0], m[1], m[2]]), Color::Green);
        }
    }
}
