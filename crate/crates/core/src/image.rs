//! Image samples, labeled datasets and PNG interchange.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// A height × width × channels pixel grid with values in `[0, 1]`, stored
/// row-major in HWC order, optionally carrying a class label.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageSample {
    height: usize,
    width: usize,
    channels: usize,
    pixels: Vec<f32>,
    pub label: Option<usize>,
}

impl ImageSample {
    pub fn new(height: usize, width: usize, channels: usize, pixels: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(Error::InvalidImage(format!(
                "zero-sized image {height}x{width}x{channels}"
            )));
        }
        if pixels.len() != height * width * channels {
            return Err(Error::ShapeMismatch {
                expected: vec![height, width, channels],
                actual: vec![pixels.len()],
            });
        }
        if let Some(bad) = pixels.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::InvalidImage(format!(
                "pixel value {bad} outside [0, 1]"
            )));
        }
        Ok(Self {
            height,
            width,
            channels,
            pixels,
            label: None,
        })
    }

    /// Builds an image by evaluating `f(y, x, c)` for every pixel, clamping
    /// the result into `[0, 1]`.
    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Result<Self> {
        let mut pixels = Vec::with_capacity(height * width * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    pixels.push(f(y, x, c).clamp(0.0, 1.0));
                }
            }
        }
        Self::new(height, width, channels, pixels)
    }

    pub fn with_label(mut self, label: usize) -> Self {
        self.label = Some(label);
        self
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// `[height, width, channels]`
    pub fn shape(&self) -> Vec<usize> {
        vec![self.height, self.width, self.channels]
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    #[inline]
    pub fn at(&self, y: usize, x: usize, c: usize) -> f32 {
        self.pixels[(y * self.width + x) * self.channels + c]
    }

    /// Per-channel mean over all pixels.
    pub fn channel_means(&self) -> Vec<f64> {
        let mut sums = vec![0.0f64; self.channels];
        for px in self.pixels.chunks_exact(self.channels) {
            for (s, &v) in sums.iter_mut().zip(px) {
                *s += f64::from(v);
            }
        }
        let n = (self.height * self.width) as f64;
        sums.iter().map(|s| s / n).collect()
    }

    /// Rec. 601 luma of pixel `(y, x)`; the channel value itself for
    /// single-channel images.
    pub fn luma(&self, y: usize, x: usize) -> f32 {
        if self.channels >= 3 {
            0.299 * self.at(y, x, 0) + 0.587 * self.at(y, x, 1) + 0.114 * self.at(y, x, 2)
        } else {
            self.at(y, x, 0)
        }
    }

    /// Converts to a three-channel image with R = G = B = luma.
    pub fn to_grayscale(&self) -> ImageSample {
        let mut pixels = Vec::with_capacity(self.height * self.width * 3);
        for y in 0..self.height {
            for x in 0..self.width {
                let l = self.luma(y, x).clamp(0.0, 1.0);
                pixels.extend_from_slice(&[l, l, l]);
            }
        }
        ImageSample {
            height: self.height,
            width: self.width,
            channels: 3,
            pixels,
            label: self.label,
        }
    }

    pub fn is_grayscale(&self) -> bool {
        self.channels == 1
            || self
                .pixels
                .chunks_exact(self.channels)
                .all(|px| px.iter().all(|&v| v == px[0]))
    }

    /// Decodes an 8-bit PNG (any color type is converted to RGB).
    pub fn load_png(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let decoded = image::open(path).map_err(|e| Error::Decode {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        let rgb = decoded.to_rgb8();
        let (w, h) = rgb.dimensions();
        let pixels = rgb.as_raw().iter().map(|&b| f32::from(b) / 255.0).collect();
        Self::new(h as usize, w as usize, 3, pixels)
    }

    /// Quantizes to 8 bits per channel and encodes as RGB PNG bytes.
    pub fn encode_png(&self) -> Result<Vec<u8>> {
        if self.channels != 3 {
            return Err(Error::InvalidImage(format!(
                "PNG export needs 3 channels, image has {}",
                self.channels
            )));
        }
        let raw: Vec<u8> = self
            .pixels
            .iter()
            .map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
            .collect();
        let buf = image::RgbImage::from_raw(self.width as u32, self.height as u32, raw)
            .ok_or_else(|| Error::InvalidImage("buffer size mismatch".into()))?;
        let mut out = std::io::Cursor::new(Vec::new());
        buf.write_to(&mut out, image::ImageFormat::Png)
            .map_err(|e| Error::InvalidImage(e.to_string()))?;
        Ok(out.into_inner())
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let bytes = self.encode_png()?;
        fs::write(path.as_ref(), bytes).map_err(|e| Error::io(path, e))
    }
}

/// Images plus the class names their labels index. An unlabeled dataset has
/// no class names and no labels.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub samples: Vec<ImageSample>,
    pub class_names: Vec<String>,
}

impl Dataset {
    /// Every sample must carry a label below `class_names.len()`.
    pub fn labeled(samples: Vec<ImageSample>, class_names: Vec<String>) -> Result<Self> {
        let class_count = class_names.len();
        for s in &samples {
            match s.label {
                Some(l) if l < class_count => {}
                Some(l) => {
                    return Err(Error::ClassOutOfRange {
                        index: l,
                        class_count,
                    })
                }
                None => {
                    return Err(Error::Empty(
                        "sample without label in labeled dataset".into(),
                    ))
                }
            }
        }
        Ok(Self {
            samples,
            class_names,
        })
    }

    pub fn unlabeled(mut samples: Vec<ImageSample>) -> Self {
        for s in &mut samples {
            s.label = None;
        }
        Self {
            samples,
            class_names: Vec::new(),
        }
    }

    pub fn is_labeled(&self) -> bool {
        !self.class_names.is_empty()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn class_count(&self) -> usize {
        self.class_names.len()
    }

    /// Labels of all samples; unlabeled samples count as class 0.
    pub fn labels(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.label.unwrap_or(0)).collect()
    }

    /// Samples whose label equals `class`.
    pub fn of_class(&self, class: usize) -> Vec<ImageSample> {
        self.samples
            .iter()
            .filter(|s| s.label == Some(class))
            .cloned()
            .collect()
    }
}
