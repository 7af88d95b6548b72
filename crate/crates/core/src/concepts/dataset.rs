use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{Dataset, ImageSample};
use crate::rng;

/// Train/validation/test fractions, each in `(0, 1)` and summing to 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 0.8,
            val: 0.1,
            test: 0.1,
        }
    }
}

impl SplitRatios {
    pub fn new(train: f64, val: f64, test: f64) -> Result<Self> {
        let r = Self { train, val, test };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.val, self.test];
        if parts.iter().any(|&p| !(p > 0.0 && p < 1.0)) {
            return Err(Error::InvalidConfig(format!(
                "split ratios must lie in (0, 1): {parts:?}"
            )));
        }
        if (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!(
                "split ratios must sum to 1: {parts:?}"
            )));
        }
        Ok(())
    }

    fn as_array(&self) -> [f64; 3] {
        [self.train, self.val, self.test]
    }
}

/// Apportions `n` items by the largest-remainder method; ties in the
/// remainder go to the earlier part (train before val before test).
fn apportion(n: usize, ratios: [f64; 3]) -> [usize; 3] {
    // round away representation noise such as 2.9999999999999996
    let quotas = ratios.map(|r| (r * n as f64 * 1e9).round() / 1e9);
    let mut sizes = quotas.map(|q| q.floor() as usize);
    let mut leftover = n - sizes.iter().sum::<usize>();
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| {
        let fa = quotas[a] - quotas[a].floor();
        let fb = quotas[b] - quotas[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &i in order.iter().cycle() {
        if leftover == 0 {
            break;
        }
        sizes[i] += 1;
        leftover -= 1;
    }
    sizes
}

const SPLIT_STREAM: u64 = 0x5B_17;

/// Stratified partition into (train, val, test). Each class is shuffled
/// with a seed-derived stream and cut by [`apportion`]; within each part
/// samples keep their original order.
pub fn split_dataset(
    data: &Dataset,
    ratios: SplitRatios,
    seed: u64,
) -> Result<(Dataset, Dataset, Dataset)> {
    ratios.validate()?;
    if data.len() < 10 {
        return Err(Error::InvalidConfig(format!(
            "dataset of {} samples is too small to split (need at least 10)",
            data.len()
        )));
    }
    let groups = data.class_count().max(1);
    let mut by_class = vec![Vec::new(); groups];
    for (i, s) in data.samples.iter().enumerate() {
        by_class[s.label.unwrap_or(0).min(groups - 1)].push(i);
    }
    let mut assigned = [Vec::new(), Vec::new(), Vec::new()];
    for (class, mut idx) in by_class.into_iter().enumerate() {
        idx.shuffle(&mut rng::seeded(rng::derive_seed(
            seed,
            SPLIT_STREAM,
            class as u64,
        )));
        let sizes = apportion(idx.len(), ratios.as_array());
        let mut rest = idx.as_slice();
        for (part, &n) in assigned.iter_mut().zip(&sizes) {
            let (head, tail) = rest.split_at(n);
            part.extend_from_slice(head);
            rest = tail;
        }
    }
    if assigned.iter().any(Vec::is_empty) {
        return Err(Error::InvalidConfig(
            "dataset too small for three non-empty splits".into(),
        ));
    }
    let [train, val, test] = assigned.map(|mut idx| {
        idx.sort_unstable();
        Dataset {
            samples: idx.into_iter().map(|i| data.samples[i].clone()).collect(),
            class_names: data.class_names.clone(),
        }
    });
    Ok((train, val, test))
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| !n.starts_with('.'))
        })
        .collect();
    entries.sort();
    Ok(entries)
}

fn load_files(dir: &Path, label: Option<usize>) -> Result<Vec<ImageSample>> {
    let files: Vec<PathBuf> = sorted_entries(dir)?
        .into_iter()
        .filter(|p| p.is_file())
        .collect();
    if files.is_empty() {
        return Err(Error::Empty(format!("no images in {}", dir.display())));
    }
    files
        .iter()
        .map(|f| {
            let img = ImageSample::load_png(f)?;
            Ok(match label {
                Some(l) => img.with_label(l),
                None => img,
            })
        })
        .collect()
}

/// Loads PNG images with pixels scaled to `[0, 1]`.
///
/// Labeled: one subdirectory per class, classes indexed by sorted
/// subdirectory name. Unlabeled: the files directly inside `path`. Files
/// are ordered by name.
pub fn load_image_directory(path: impl AsRef<Path>, labeled: bool) -> Result<Dataset> {
    let path = path.as_ref();
    if !path.is_dir() {
        return Err(Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "directory not found"),
        ));
    }
    let data = if labeled {
        let class_dirs: Vec<PathBuf> = sorted_entries(path)?
            .into_iter()
            .filter(|p| p.is_dir())
            .collect();
        if class_dirs.is_empty() {
            return Err(Error::Empty(format!(
                "no class directories in {}",
                path.display()
            )));
        }
        let mut samples = Vec::new();
        let mut names = Vec::new();
        for (label, dir) in class_dirs.iter().enumerate() {
            samples.extend(load_files(dir, Some(label))?);
            names.push(
                dir.file_name()
                    .and_then(|n| n.to_str())
                    .unwrap_or_default()
                    .to_string(),
            );
        }
        Dataset::labeled(samples, names)?
    } else {
        Dataset::unlabeled(load_files(path, None)?)
    };
    if let Some(first) = data.samples.first() {
        if let Some(bad) = data.samples.iter().find(|s| s.shape() != first.shape()) {
            return Err(Error::ShapeMismatch {
                expected: first.shape(),
                actual: bad.shape(),
            });
        }
    }
    Ok(data)
}
