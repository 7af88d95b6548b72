//! Procedural stand-ins for describable texture categories. Each recipe
//! paints luminance onto a light-gray canvas, which is then shifted to the
//! kind's characteristic mean luminance and lightly noised.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng as _;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use super::{check_request, ConceptSet, Provenance};
use crate::error::{Error, Result};
use crate::image::ImageSample;
use crate::rng::{self, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TextureKind {
    Blotchy,
    Bumpy,
    Cracked,
    Fibrous,
    Pitted,
    Wrinkled,
}

impl TextureKind {
    pub const ALL: [TextureKind; 6] = [
        TextureKind::Blotchy,
        TextureKind::Bumpy,
        TextureKind::Cracked,
        TextureKind::Fibrous,
        TextureKind::Pitted,
        TextureKind::Wrinkled,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TextureKind::Blotchy => "blotchy",
            TextureKind::Bumpy => "bumpy",
            TextureKind::Cracked => "cracked",
            TextureKind::Fibrous => "fibrous",
            TextureKind::Pitted => "pitted",
            TextureKind::Wrinkled => "wrinkled",
        }
    }

    /// Mean luminance every image of this kind is rendered at.
    pub fn mean_luminance(self) -> f64 {
        match self {
            TextureKind::Pitted => 0.65,
            TextureKind::Bumpy => 0.68,
            TextureKind::Blotchy => 0.71,
            TextureKind::Fibrous => 0.74,
            TextureKind::Cracked => 0.77,
            TextureKind::Wrinkled => 0.80,
        }
    }
}

impl fmt::Display for TextureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TextureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TextureKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidConfig(format!("unknown texture `{s}`")))
    }
}

/// Light-gray level of the blank canvas.
pub const CANVAS_BASE: f64 = 0.8;
const CANVAS_SIGMA: f64 = 0.03;
/// Luminance below which a texture pixel counts as a dark mark.
pub const DARK_THRESHOLD: f32 = 0.5;
const TEXTURE_STREAM: u64 = 0x7E_C5;

/// Single-channel luminance canvas.
pub(crate) struct Canvas {
    pub h: usize,
    pub w: usize,
    pub lum: Vec<f64>,
}

impl Canvas {
    pub fn filled(h: usize, w: usize, v: f64) -> Self {
        Self {
            h,
            w,
            lum: vec![v; h * w],
        }
    }

    pub fn add(&mut self, y: i64, x: i64, dv: f64) {
        if y >= 0 && x >= 0 && (y as usize) < self.h && (x as usize) < self.w {
            self.lum[y as usize * self.w + x as usize] += dv;
        }
    }

    pub fn set(&mut self, y: i64, x: i64, v: f64) {
        if y >= 0 && x >= 0 && (y as usize) < self.h && (x as usize) < self.w {
            self.lum[y as usize * self.w + x as usize] = v;
        }
    }

    /// Sets every pixel within `radius` of the segment `(y0,x0)-(y1,x1)`.
    pub fn stroke(&mut self, p0: (f64, f64), p1: (f64, f64), radius: f64, v: f64) {
        let (ymin, ymax) = (p0.0.min(p1.0) - radius, p0.0.max(p1.0) + radius);
        let (xmin, xmax) = (p0.1.min(p1.1) - radius, p0.1.max(p1.1) + radius);
        for y in ymin.floor() as i64..=ymax.ceil() as i64 {
            for x in xmin.floor() as i64..=xmax.ceil() as i64 {
                if segment_distance((y as f64, x as f64), p0, p1) <= radius {
                    self.set(y, x, v);
                }
            }
        }
    }

    pub fn shift_mean_to(&mut self, target: f64) {
        let mean = self.lum.iter().sum::<f64>() / self.lum.len() as f64;
        for v in &mut self.lum {
            *v += target - mean;
        }
    }

    pub fn add_noise(&mut self, r: &mut Rng, sigma: f64) {
        let normal = Normal::new(0.0, sigma).expect("valid sigma");
        for v in &mut self.lum {
            *v += normal.sample(r);
        }
    }

    pub fn into_gray_image(self) -> Result<ImageSample> {
        let w = self.w;
        ImageSample::from_fn(self.h, self.w, 3, |y, x, _| self.lum[y * w + x] as f32)
    }
}

fn segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dy, dx) = (b.0 - a.0, b.1 - a.1);
    let len2 = dy * dy + dx * dx;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p.0 - a.0) * dy + (p.1 - a.1) * dx) / len2).clamp(0.0, 1.0)
    };
    let (cy, cx) = (a.0 + t * dy, a.1 + t * dx);
    ((p.0 - cy).powi(2) + (p.1 - cx).powi(2)).sqrt()
}

fn smoothstep(e0: f64, e1: f64, x: f64) -> f64 {
    let t = ((x - e0) / (e1 - e0)).clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

/// 5–15 soft-edged dark ellipses.
fn blotchy(c: &mut Canvas, r: &mut Rng) {
    let s = c.h.min(c.w) as f64;
    for _ in 0..r.gen_range(5..=15) {
        let cy = r.gen_range(0.0..c.h as f64);
        let cx = r.gen_range(0.0..c.w as f64);
        let ry = r.gen_range(0.08..0.2) * s;
        let rx = r.gen_range(0.08..0.2) * s;
        let theta = r.gen_range(0.0..PI);
        let depth = r.gen_range(0.15..0.3);
        let (sin, cos) = theta.sin_cos();
        for y in 0..c.h {
            for x in 0..c.w {
                let (dy, dx) = (y as f64 - cy, x as f64 - cx);
                let u = (dx * cos + dy * sin) / rx;
                let v = (-dx * sin + dy * cos) / ry;
                let d = (u * u + v * v).sqrt();
                let weight = 1.0 - smoothstep(0.5, 1.0, d);
                if weight > 0.0 {
                    c.add(y as i64, x as i64, -depth * weight);
                }
            }
        }
    }
}

/// Jittered lattice of domes: bright centers shading to dark rims.
fn bumpy(c: &mut Canvas, r: &mut Rng) {
    let s = c.h.min(c.w) as f64;
    let spacing = (s / 5.0).max(3.0);
    let radius = spacing * 0.5;
    let offset = r.gen_range(0.0..spacing);
    let mut gy = offset - spacing;
    while gy < c.h as f64 + spacing {
        let mut gx = offset - spacing;
        while gx < c.w as f64 + spacing {
            let cy = gy + r.gen_range(-0.2..0.2) * spacing;
            let cx = gx + r.gen_range(-0.2..0.2) * spacing;
            for y in (cy - radius).floor() as i64..=(cy + radius).ceil() as i64 {
                for x in (cx - radius).floor() as i64..=(cx + radius).ceil() as i64 {
                    let d = ((y as f64 - cy).powi(2) + (x as f64 - cx).powi(2)).sqrt() / radius;
                    if d < 1.0 {
                        c.add(y, x, 0.2 * (PI * d).cos() - 0.05);
                    }
                }
            }
            gx += spacing;
        }
        gy += spacing;
    }
}

/// 3–10 dark polylines, 1–2 px wide.
fn cracked(c: &mut Canvas, r: &mut Rng) {
    let s = c.h.min(c.w) as f64;
    for _ in 0..r.gen_range(3..=10) {
        let width = r.gen_range(1..=2);
        let radius = if width == 1 { 0.5 } else { 0.75 };
        let mut p = (r.gen_range(0.0..c.h as f64), r.gen_range(0.0..c.w as f64));
        let mut heading = r.gen_range(0.0..2.0 * PI);
        for _ in 0..r.gen_range(2..=3) {
            heading += r.gen_range(-0.8..0.8);
            let len = r.gen_range(2.0..(s / 8.0).max(2.5));
            let q = (p.0 + len * heading.sin(), p.1 + len * heading.cos());
            c.stroke(p, q, radius, r.gen_range(0.1..0.25));
            p = q;
        }
    }
}

/// Many short, roughly parallel mid-gray strokes.
fn fibrous(c: &mut Canvas, r: &mut Rng) {
    let area = (c.h * c.w) as f64;
    let base_angle = r.gen_range(0.0..PI);
    let n = (area / 20.0).round().max(4.0) as usize;
    let delta = -r.gen_range(0.2..0.3);
    for _ in 0..n {
        let angle = base_angle + r.gen_range(-0.26..0.26);
        let len = r.gen_range(3.0..6.0);
        let p = (r.gen_range(0.0..c.h as f64), r.gen_range(0.0..c.w as f64));
        let q = (p.0 + len * angle.sin(), p.1 + len * angle.cos());
        let steps = (len * 2.0).ceil() as usize;
        for k in 0..=steps {
            let t = k as f64 / steps as f64;
            let (y, x) = (p.0 + t * (q.0 - p.0), p.1 + t * (q.1 - p.1));
            c.add(y.round() as i64, x.round() as i64, delta / 2.0);
        }
    }
}

/// Small dark pits (radius 1–2 px) at Poisson-scattered points.
fn pitted(c: &mut Canvas, r: &mut Rng) {
    let area = (c.h * c.w) as f64;
    let count = Poisson::new(area / 40.0).expect("positive rate").sample(r) as usize;
    for _ in 0..count.max(1) {
        let cy = r.gen_range(0.0..c.h as f64);
        let cx = r.gen_range(0.0..c.w as f64);
        let radius: f64 = r.gen_range(1.0..2.0);
        let v = r.gen_range(0.05..0.2);
        for y in (cy - radius).floor() as i64..=(cy + radius).ceil() as i64 {
            for x in (cx - radius).floor() as i64..=(cx + radius).ceil() as i64 {
                if ((y as f64 - cy).powi(2) + (x as f64 - cx).powi(2)).sqrt() <= radius {
                    c.set(y, x, v);
                }
            }
        }
    }
}

/// Sinusoidal luminance ridges, warped by a slower secondary wave.
fn wrinkled(c: &mut Canvas, r: &mut Rng) {
    let s = c.h.min(c.w) as f64;
    let theta = r.gen_range(0.0..PI);
    let freq = r.gen_range(3.0..6.0) / s;
    let phase = r.gen_range(0.0..2.0 * PI);
    let warp_freq = r.gen_range(0.5..1.5) / s;
    let warp_phase = r.gen_range(0.0..2.0 * PI);
    let amp = r.gen_range(0.12..0.2);
    let (sin, cos) = theta.sin_cos();
    for y in 0..c.h {
        for x in 0..c.w {
            let (yf, xf) = (y as f64, x as f64);
            let along = xf * cos + yf * sin;
            let across = -xf * sin + yf * cos;
            let warp = 2.0 * (2.0 * PI * warp_freq * across + warp_phase).sin();
            c.add(
                y as i64,
                x as i64,
                amp * (2.0 * PI * freq * (along + warp) + phase).sin(),
            );
        }
    }
}

/// One texture image of the given kind.
pub fn texture_image(kind: TextureKind, size: (usize, usize), r: &mut Rng) -> Result<ImageSample> {
    let mut canvas = Canvas::filled(size.0, size.1, CANVAS_BASE);
    match kind {
        TextureKind::Blotchy => blotchy(&mut canvas, r),
        TextureKind::Bumpy => bumpy(&mut canvas, r),
        TextureKind::Cracked => cracked(&mut canvas, r),
        TextureKind::Fibrous => fibrous(&mut canvas, r),
        TextureKind::Pitted => pitted(&mut canvas, r),
        TextureKind::Wrinkled => wrinkled(&mut canvas, r),
    }
    canvas.shift_mean_to(kind.mean_luminance());
    canvas.add_noise(r, CANVAS_SIGMA);
    canvas.into_gray_image()
}

pub fn generate_texture_concept(
    kind: TextureKind,
    count: usize,
    size: (usize, usize),
    seed: u64,
) -> Result<ConceptSet> {
    check_request(count, size)?;
    let images = (0..count)
        .map(|i| {
            let mut r = rng::seeded(rng::derive_seed(
                seed,
                TEXTURE_STREAM + kind as u64,
                i as u64,
            ));
            texture_image(kind, size, &mut r)
        })
        .collect::<Result<Vec<_>>>()?;
    ConceptSet::new(kind.name(), images, Provenance::SyntheticTexture)
}

/// Fraction of pixels whose luminance falls below [`DARK_THRESHOLD`].
pub fn dark_fraction(img: &ImageSample) -> f64 {
    let mut dark = 0usize;
    for y in 0..img.height() {
        for x in 0..img.width() {
            if img.luma(y, x) < DARK_THRESHOLD {
                dark += 1;
            }
        }
    }
    dark as f64 / (img.height() * img.width()) as f64
}
