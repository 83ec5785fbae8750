//! The eight image transformations.
//!
//! Affine transforms move pixels (inverse mapping about the image centre,
//! bilinear sampling, zero fill outside the frame); pixel-value transforms
//! change intensities in place. Every output is rounded and clamped to `u8`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::image::Image;

/// Parameter ranges sampled by the mutator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransformRanges {
    /// Maximum translation as a fraction of width / height.
    pub translation: f32,
    pub scale: (f32, f32),
    pub shear: (f32, f32),
    /// Degrees.
    pub rotation: (f32, f32),
    pub contrast: (f32, f32),
    pub brightness: (i32, i32),
    /// Gaussian sigma of the 3x3 blur kernel.
    pub blur: (f32, f32),
    /// Gaussian sigma of additive noise, in intensity units.
    pub noise: (f32, f32),
}

impl Default for TransformRanges {
    fn default() -> Self {
        Self {
            translation: 0.1,
            scale: (0.9, 1.1),
            shear: (-0.1, 0.1),
            rotation: (-15.0, 15.0),
            contrast: (0.8, 1.2),
            brightness: (-20, 20),
            blur: (0.5, 1.5),
            noise: (1.0, 8.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformKind {
    Translation,
    Scale,
    Shear,
    Rotation,
    Contrast,
    Brightness,
    Blur,
    Noise,
}

impl TransformKind {
    pub const AFFINE: [TransformKind; 4] = [
        TransformKind::Translation,
        TransformKind::Scale,
        TransformKind::Shear,
        TransformKind::Rotation,
    ];
    pub const PIXEL: [TransformKind; 4] = [
        TransformKind::Contrast,
        TransformKind::Brightness,
        TransformKind::Blur,
        TransformKind::Noise,
    ];

    pub fn is_affine(self) -> bool {
        Self::AFFINE.contains(&self)
    }

    /// Draws an in-range parameter for this kind.
    pub fn sample<R: Rng + ?Sized>(self, ranges: &TransformRanges, image: &Image, rng: &mut R) -> Transform {
        let mut pick = |(lo, hi): (f32, f32)| if lo < hi { rng.random_range(lo..=hi) } else { lo };
        match self {
            TransformKind::Translation => {
                let t = ranges.translation;
                let dx = pick((-t, t)) * image.width() as f32;
                let dy = pick((-t, t)) * image.height() as f32;
                Transform::Translation { dx, dy }
            }
            TransformKind::Scale => Transform::Scale {
                factor: pick(ranges.scale),
            },
            TransformKind::Shear => Transform::Shear {
                factor: pick(ranges.shear),
            },
            TransformKind::Rotation => Transform::Rotation {
                degrees: pick(ranges.rotation),
            },
            TransformKind::Contrast => Transform::Contrast {
                gain: pick(ranges.contrast),
            },
            TransformKind::Blur => Transform::Blur {
                sigma: pick(ranges.blur),
            },
            TransformKind::Noise => {
                let sigma = pick(ranges.noise);
                Transform::Noise {
                    sigma,
                    seed: rng.random(),
                }
            }
            TransformKind::Brightness => {
                let (lo, hi) = ranges.brightness;
                Transform::Brightness {
                    delta: if lo < hi { rng.random_range(lo..=hi) } else { lo },
                }
            }
        }
    }
}

/// A transformation together with its parameter. Fully determines the
/// output, so a logged transform can be replayed bit-exactly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Transform {
    /// Shift in pixels; positive moves content right / down.
    Translation { dx: f32, dy: f32 },
    /// Zoom about the centre.
    Scale { factor: f32 },
    /// Horizontal shear about the centre row.
    Shear { factor: f32 },
    /// Counter-clockwise rotation about the centre, in degrees.
    Rotation { degrees: f32 },
    Contrast { gain: f32 },
    Brightness { delta: i32 },
    Blur { sigma: f32 },
    Noise { sigma: f32, seed: u64 },
}

impl Transform {
    pub fn kind(&self) -> TransformKind {
        match self {
            Transform::Translation { .. } => TransformKind::Translation,
            Transform::Scale { .. } => TransformKind::Scale,
            Transform::Shear { .. } => TransformKind::Shear,
            Transform::Rotation { .. } => TransformKind::Rotation,
            Transform::Contrast { .. } => TransformKind::Contrast,
            Transform::Brightness { .. } => TransformKind::Brightness,
            Transform::Blur { .. } => TransformKind::Blur,
            Transform::Noise { .. } => TransformKind::Noise,
        }
    }

    pub fn is_affine(&self) -> bool {
        self.kind().is_affine()
    }

    pub fn apply(&self, img: &Image) -> Image {
        match *self {
            Transform::Translation { dx, dy } => {
                let (dx, dy) = (f64::from(dx), f64::from(dy));
                warp(img, |x, y| (x - dx, y - dy))
            }
            Transform::Scale { factor } => {
                let f = f64::from(factor);
                let (cx, cy) = centre(img);
                warp(img, |x, y| (cx + (x - cx) / f, cy + (y - cy) / f))
            }
            Transform::Shear { factor } => {
                let s = f64::from(factor);
                let (_, cy) = centre(img);
                warp(img, |x, y| (x - s * (y - cy), y))
            }
            Transform::Rotation { degrees } => {
                let (sin, cos) = f64::from(degrees).to_radians().sin_cos();
                let (cx, cy) = centre(img);
                // Image y grows downwards, so a counter-clockwise turn on screen
                // maps output (x, y) back through the opposite rotation.
                warp(img, |x, y| {
                    let (u, v) = (x - cx, y - cy);
                    (cx + cos * u - sin * v, cy + sin * u + cos * v)
                })
            }
            Transform::Contrast { gain } => {
                let g = f64::from(gain);
                map_pixels(img, |p| f64::from(p) * g)
            }
            Transform::Brightness { delta } => map_pixels(img, |p| f64::from(p) + f64::from(delta)),
            Transform::Blur { sigma } => blur3x3(img, f64::from(sigma)),
            Transform::Noise { sigma, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                match Normal::new(0.0, f64::from(sigma)) {
                    Ok(normal) => map_pixels(img, |p| f64::from(p) + normal.sample(&mut rng)),
                    Err(_) => img.clone(),
                }
            }
        }
    }
}

#[inline]
fn to_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

fn centre(img: &Image) -> (f64, f64) {
    ((img.width() as f64 - 1.0) / 2.0, (img.height() as f64 - 1.0) / 2.0)
}

fn map_pixels(img: &Image, f: impl FnMut(u8) -> f64) -> Image {
    let mut f = f;
    let mut out = img.clone();
    for p in out.data_mut() {
        *p = to_u8(f(*p));
    }
    out
}

/// Inverse-mapped bilinear warp; `source(x, y)` gives the sampling position
/// for output pixel `(x, y)`. Out-of-frame neighbours read as zero.
fn warp(img: &Image, source: impl Fn(f64, f64) -> (f64, f64)) -> Image {
    let (h, w, ch) = (img.height(), img.width(), img.channels());
    let mut out = Image::filled(h, w, ch, 0);
    let px = |y: i64, x: i64, c: usize| -> f64 {
        if y < 0 || x < 0 || y >= h as i64 || x >= w as i64 {
            0.0
        } else {
            f64::from(img.get(y as usize, x as usize, c))
        }
    };
    let data = out.data_mut();
    for y in 0..h {
        for x in 0..w {
            let (sx, sy) = source(x as f64, y as f64);
            if !sx.is_finite() || !sy.is_finite() {
                continue;
            }
            let (x0, y0) = (sx.floor(), sy.floor());
            let (fx, fy) = (sx - x0, sy - y0);
            let (x0, y0) = (x0 as i64, y0 as i64);
            for c in 0..ch {
                let mut v = (1.0 - fx) * (1.0 - fy) * px(y0, x0, c);
                if fx > 0.0 {
                    v += fx * (1.0 - fy) * px(y0, x0 + 1, c);
                }
                if fy > 0.0 {
                    v += (1.0 - fx) * fy * px(y0 + 1, x0, c);
                    if fx > 0.0 {
                        v += fx * fy * px(y0 + 1, x0 + 1, c);
                    }
                }
                data[(y * w + x) * ch + c] = to_u8(v);
            }
        }
    }
    out
}

/// 3x3 Gaussian blur with edge replication.
fn blur3x3(img: &Image, sigma: f64) -> Image {
    let mut k = [0.0; 9];
    for dy in 0..3 {
        for dx in 0..3 {
            let (a, b) = (dx as f64 - 1.0, dy as f64 - 1.0);
            k[dy * 3 + dx] = (-(a * a + b * b) / (2.0 * sigma * sigma)).exp();
        }
    }
    let norm: f64 = k.iter().sum();
    let (h, w, ch) = (img.height(), img.width(), img.channels());
    let mut out = img.clone();
    let data = out.data_mut();
    for y in 0..h {
        for x in 0..w {
            for c in 0..ch {
                let mut acc = 0.0;
                for dy in 0..3 {
                    let sy = (y + dy).saturating_sub(1).min(h - 1);
                    for dx in 0..3 {
                        let sx = (x + dx).saturating_sub(1).min(w - 1);
                        acc += k[dy * 3 + dx] * f64::from(img.get(sy, sx, c));
                    }
                }
                data[(y * w + x) * ch + c] = to_u8(acc / norm);
            }
        }
    }
    out
}
