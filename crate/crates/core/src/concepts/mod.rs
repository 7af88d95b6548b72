//! Concept example sets, strictly-negative pools and dataset ingestion.

mod color;
mod dataset;
mod leaf;
mod texture;

pub use color::{generate_color_concept, Color};
pub use dataset::{load_image_directory, split_dataset, SplitRatios};
pub use leaf::{
    generate_disease_pattern_concept, generate_healthy_leaves, generate_leaf_dataset,
    generate_lesioned_leaves, LesionedLeaf, LEAF_CLASSES,
};
pub use texture::{dark_fraction, generate_texture_concept, texture_image, TextureKind};

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::ImageSample;
use crate::io::write_atomic;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    SyntheticColor,
    SyntheticTexture,
    SyntheticPattern,
    Directory,
}

/// Named, non-empty set of same-shaped images representing one concept.
#[derive(Debug, Clone, PartialEq)]
pub struct ConceptSet {
    pub concept_name: String,
    pub images: Vec<ImageSample>,
    pub provenance: Provenance,
}

impl ConceptSet {
    pub fn new(
        concept_name: impl Into<String>,
        images: Vec<ImageSample>,
        provenance: Provenance,
    ) -> Result<Self> {
        let concept_name = concept_name.into();
        if concept_name.is_empty() {
            return Err(Error::InvalidConfig("concept name is empty".into()));
        }
        check_same_shape(&images, &concept_name)?;
        Ok(Self {
            concept_name,
            images,
            provenance,
        })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// Writes `<root>/<concept_name>/NNNN.png`.
    pub fn export(&self, root: impl AsRef<Path>) -> Result<()> {
        let dir = root.as_ref().join(&self.concept_name);
        export_images(&self.images, &dir)
    }

    /// Reads a directory written by [`ConceptSet::export`] (or any directory
    /// of PNGs); the directory name becomes the concept name.
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let name = dir.file_name().and_then(|n| n.to_str()).ok_or_else(|| {
            Error::InvalidConfig(format!("bad concept directory {}", dir.display()))
        })?;
        let data = load_image_directory(dir, false)?;
        Self::new(name, data.samples, Provenance::Directory)
    }
}

fn check_same_shape(images: &[ImageSample], what: &str) -> Result<()> {
    let first = images
        .first()
        .ok_or_else(|| Error::Empty(format!("no images for `{what}`")))?;
    if let Some(other) = images.iter().find(|i| i.shape() != first.shape()) {
        return Err(Error::ShapeMismatch {
            expected: first.shape(),
            actual: other.shape(),
        });
    }
    Ok(())
}

/// Writes `dir/NNNN.png` for every image and removes numbered PNGs left
/// over from a larger earlier export.
pub fn export_images(images: &[ImageSample], dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (i, img) in images.iter().enumerate() {
        write_atomic(dir.join(format!("{i:04}.png")), &img.encode_png()?)?;
    }
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let stale = path
            .file_name()
            .and_then(|n| n.to_str())
            .and_then(|n| n.strip_suffix(".png"))
            .filter(|stem| stem.len() >= 4 && stem.bytes().all(|b| b.is_ascii_digit()))
            .and_then(|stem| stem.parse::<usize>().ok())
            .is_some_and(|i| i >= images.len());
        if stale {
            fs::remove_file(&path).map_err(|e| Error::io(&path, e))?;
        }
    }
    Ok(())
}

pub(crate) fn check_request(count: usize, size: (usize, usize)) -> Result<()> {
    if count == 0 {
        return Err(Error::InvalidConfig("requested zero images".into()));
    }
    if size.0 == 0 || size.1 == 0 {
        return Err(Error::InvalidConfig(format!(
            "zero-area image size {}x{}",
            size.0, size.1
        )));
    }
    Ok(())
}

/// Images guaranteed not to contain any concept named in `exclusion_tags`.
#[derive(Debug, Clone, PartialEq)]
pub struct NegativePool {
    pub images: Vec<ImageSample>,
    pub exclusion_tags: BTreeSet<String>,
}

impl NegativePool {
    pub fn new<S: Into<String>>(
        images: Vec<ImageSample>,
        exclusion_tags: impl IntoIterator<Item = S>,
    ) -> Result<Self> {
        check_same_shape(&images, "negative pool")?;
        Ok(Self {
            images,
            exclusion_tags: exclusion_tags.into_iter().map(Into::into).collect(),
        })
    }

    /// Grayscale versions of `images`; a grayscale image carries none of the
    /// color concepts, so all colors are excluded.
    pub fn grayscale(images: &[ImageSample]) -> Result<Self> {
        let gray = images.iter().map(ImageSample::to_grayscale).collect();
        Self::new(gray, Color::ALL.iter().map(|c| c.name()))
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn excludes(&self, concept: &str) -> bool {
        self.exclusion_tags.contains(concept)
    }
}

/// Indices of a uniform sample without replacement from the pool, in
/// random order. Fails if `count` exceeds the pool or the pool does not
/// guarantee the absence of `exclude`.
pub fn sample_negative_indices(
    pool: &NegativePool,
    count: usize,
    seed: u64,
    exclude: &str,
) -> Result<Vec<usize>> {
    if !pool.excludes(exclude) {
        return Err(Error::InvalidConfig(format!(
            "negative pool does not guarantee absence of `{exclude}`"
        )));
    }
    if count > pool.len() {
        return Err(Error::InvalidConfig(format!(
            "requested {count} negatives from a pool of {}",
            pool.len()
        )));
    }
    let mut r = rng::seeded(seed);
    Ok(rand::seq::index::sample(&mut r, pool.len(), count).into_vec())
}

pub fn sample_negative_set(
    pool: &NegativePool,
    count: usize,
    seed: u64,
    exclude: &str,
) -> Result<Vec<ImageSample>> {
    Ok(sample_negative_indices(pool, count, seed, exclude)?
        .into_iter()
        .map(|i| pool.images[i].clone())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pool(n: usize) -> NegativePool {
        let images = (0..n)
            .map(|i| ImageSample::from_fn(2, 2, 3, |_, _, _| i as f32 / n as f32).unwrap())
            .collect();
        NegativePool::new(images, ["red"]).unwrap()
    }

    #[test]
    fn whole_pool_is_a_permutation() {
        let p = pool(20);
        let mut idx = sample_negative_indices(&p, 20, 3, "red").unwrap();
        assert_ne!(idx, (0..20).collect::<Vec<_>>());
        idx.sort_unstable();
        assert_eq!(idx, (0..20).collect::<Vec<_>>());
    }

    #[test]
    fn same_seed_same_sample() {
        let p = pool(50);
        assert_eq!(
            sample_negative_set(&p, 10, 8, "red").unwrap(),
            sample_negative_set(&p, 10, 8, "red").unwrap()
        );
    }

    #[test]
    fn inclusion_frequency_is_binomial() {
        // 30 draws of 10 from 200: each image's inclusion count is
        // Bin(30, 0.05). Its frequency should sit within 3σ of 0.05 for all
        // but a few images (P(outside) ≈ 1.6% per image), and the spread of
        // counts should match the binomial variance.
        let p = pool(200);
        let mut hits = vec![0usize; 200];
        for draw in 0..30 {
            for i in sample_negative_indices(&p, 10, 1000 + draw, "red").unwrap() {
                hits[i] += 1;
            }
        }
        let q: f64 = 10.0 / 200.0;
        let sigma_freq = (q * (1.0 - q) / 30.0).sqrt();
        let outside = hits
            .iter()
            .filter(|&&h| (h as f64 / 30.0 - q).abs() > 3.0 * sigma_freq)
            .count();
        assert!(outside <= 10, "{outside} images outside 3 sigma");
        let mean = 30.0 * q;
        let var = hits.iter().map(|&h| (h as f64 - mean).powi(2)).sum::<f64>() / 199.0;
        let expected_var = 30.0 * q * (1.0 - q);
        assert!(
            (var / expected_var - 1.0).abs() < 0.35,
            "variance {var} vs {expected_var}"
        );
    }

    #[test]
    fn guards() {
        let p = pool(5);
        assert!(sample_negative_set(&p, 6, 0, "red").is_err());
        assert!(sample_negative_set(&p, 2, 0, "blue").is_err());
        assert!(ConceptSet::new("", vec![], Provenance::Directory).is_err());
        assert!(ConceptSet::new("x", vec![], Provenance::Directory).is_err());
    }

    #[test]
    fn grayscale_pool_excludes_all_colors() {
        let imgs =
            vec![ImageSample::from_fn(3, 3, 3, |y, x, c| (y + x * c) as f32 / 10.0).unwrap()];
        let p = NegativePool::grayscale(&imgs).unwrap();
        assert!(p.images.iter().all(ImageSample::is_grayscale));
        for c in Color::ALL {
            assert!(p.excludes(c.name()));
        }
    }

    #[test]
    fn export_then_load_round_trips_quantized_pixels() {
        let set = generate_color_concept(Color::Blue, 3, (4, 4), 2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        set.export(dir.path()).unwrap();
        assert!(dir.path().join("blue/0002.png").exists());
        let back = ConceptSet::load(dir.path().join("blue")).unwrap();
        assert_eq!(back.concept_name, "blue");
        assert_eq!(back.len(), 3);
        for (a, b) in set.images.iter().zip(&back.images) {
            for (p, q) in a.pixels().iter().zip(b.pixels()) {
                assert!((p - q).abs() <= 0.5 / 255.0 + 1e-6);
            }
        }
    }
}
