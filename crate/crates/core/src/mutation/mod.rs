//! Metamorphic mutation.
//!
//! A seed may be transformed by at most one affine transform over its whole
//! lineage and by any number of pixel-value transforms. Every accepted mutant
//! must stay close to its *reference* image: the original, or the original
//! put through the lineage's affine transform so that pixels correspond.

mod transform;

pub use transform::{Transform, TransformKind, TransformRanges};

use std::sync::Arc;

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MutationConfig {
    /// Fraction of pixels that may change arbitrarily.
    pub alpha: f64,
    /// Bound on the largest change, as a fraction of 255, once more pixels change.
    pub beta: f64,
    pub try_num: usize,
    pub ranges: TransformRanges,
}

impl Default for MutationConfig {
    fn default() -> Self {
        Self {
            alpha: 0.02,
            beta: 0.20,
            try_num: 50,
            ranges: TransformRanges::default(),
        }
    }
}

impl MutationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0 && self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::Config(format!(
                "alpha = {} and beta = {} must lie in (0, 1)",
                self.alpha, self.beta
            )));
        }
        if self.try_num == 0 {
            return Err(Error::Config("try_num must be at least 1".into()));
        }
        Ok(())
    }
}

/// One test input and its lineage.
#[derive(Debug, Clone, PartialEq)]
pub struct Seed {
    pub image: Image,
    /// The initial-corpus ancestor.
    pub original: Arc<Image>,
    /// What the constraint is checked against.
    pub reference: Arc<Image>,
    /// Whether an affine transform has been applied in this lineage.
    pub affine_used: bool,
    /// Class the model assigned to `original` when the corpus was loaded.
    pub label: usize,
    pub transform_log: Vec<Transform>,
}

impl Seed {
    pub fn new(image: Image, label: usize) -> Self {
        let original = Arc::new(image.clone());
        Self {
            image,
            reference: Arc::clone(&original),
            original,
            affine_used: false,
            label,
            transform_log: Vec::new(),
        }
    }

    pub fn affine_count(&self) -> usize {
        self.transform_log.iter().filter(|t| t.is_affine()).count()
    }
}

/// Pixel-level distance between two same-shaped images.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PixelDiff {
    /// Number of changed values.
    pub l0: usize,
    /// Largest absolute change.
    pub linf: u8,
    /// Sum of absolute changes.
    pub l1: u64,
}

pub fn pixel_diff(a: &Image, b: &Image) -> Result<PixelDiff> {
    if !a.same_shape(b) {
        return Err(Error::Image(format!(
            "shape mismatch {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let mut d = PixelDiff { l0: 0, linf: 0, l1: 0 };
    for (&x, &y) in a.data().iter().zip(b.data()) {
        let delta = x.abs_diff(y);
        if delta != 0 {
            d.l0 += 1;
            d.linf = d.linf.max(delta);
            d.l1 += u64::from(delta);
        }
    }
    Ok(d)
}

/// The semantic-preservation check: few changed pixels may change by any
/// amount; otherwise every change must stay below `beta * 255`.
pub fn constraint_satisfied(reference: &Image, candidate: &Image, cfg: &MutationConfig) -> Result<bool> {
    let d = pixel_diff(reference, candidate)?;
    let size = reference.size() as f64;
    let linf = f64::from(d.linf);
    Ok(if (d.l0 as f64) < cfg.alpha * size {
        linf <= 255.0
    } else {
        linf < cfg.beta * 255.0
    })
}

/// Remaining change budget: `beta * 255 * size - sum|image - reference|`.
pub fn mutation_potential(seed: &Seed, cfg: &MutationConfig) -> f64 {
    let spent: u64 = seed
        .image
        .data()
        .iter()
        .zip(seed.reference.data())
        .map(|(&a, &b)| u64::from(a.abs_diff(b)))
        .sum();
    cfg.beta * 255.0 * seed.image.size() as f64 - spent as f64
}

const ALL_KINDS: [TransformKind; 8] = [
    TransformKind::Translation,
    TransformKind::Scale,
    TransformKind::Shear,
    TransformKind::Rotation,
    TransformKind::Contrast,
    TransformKind::Brightness,
    TransformKind::Blur,
    TransformKind::Noise,
];

/// Tries up to `try_num` random transforms on `seed`, returning the first
/// mutant that satisfies the constraint, or `None` if every trial failed (the
/// caller keeps `seed` as is).
///
/// An affine mutant is checked against, and adopts as its new reference, the
/// same transform applied to the original.
pub fn mutate<R: Rng + ?Sized>(seed: &Seed, cfg: &MutationConfig, rng: &mut R) -> Option<Seed> {
    let kinds: &[TransformKind] = if seed.affine_used {
        &TransformKind::PIXEL
    } else {
        &ALL_KINDS
    };
    for _ in 0..cfg.try_num {
        let kind = *kinds.choose(rng).expect("non-empty transform set");
        let t = kind.sample(&cfg.ranges, &seed.image, rng);
        let candidate = t.apply(&seed.image);

        let reference = if t.is_affine() {
            Arc::new(t.apply(&seed.original))
        } else {
            Arc::clone(&seed.reference)
        };
        // Shapes always agree here, so the check cannot fail.
        if constraint_satisfied(&reference, &candidate, cfg).unwrap_or(false) {
            let mut transform_log = seed.transform_log.clone();
            transform_log.push(t);
            return Some(Seed {
                image: candidate,
                original: Arc::clone(&seed.original),
                reference,
                affine_used: seed.affine_used || t.is_affine(),
                label: seed.label,
                transform_log,
            });
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn digit() -> Image {
        let mut data = vec![0u8; 100];
        for y in 2..8 {
            data[y * 10 + 4] = 220;
            data[y * 10 + 5] = 180;
        }
        Image::new(10, 10, 1, data).unwrap()
    }

    #[test]
    fn constraint_cases() {
        let cfg = MutationConfig::default();
        let img = Image::filled(10, 10, 1, 100);
        assert!(constraint_satisfied(&img, &img, &cfg).unwrap());

        // one pixel changed by 255 out of 100: L0 = 1 < 2
        let mut a = Image::filled(10, 10, 1, 0);
        let mut b = a.clone();
        b.data_mut()[17] = 255;
        assert!(constraint_satisfied(&a, &b, &cfg).unwrap());
        // two pixels: L0 = 2 is not < 2, and L_inf 255 >= 51
        b.data_mut()[18] = 255;
        assert!(!constraint_satisfied(&a, &b, &cfg).unwrap());

        // every pixel changed by 255
        a = Image::filled(10, 10, 1, 0);
        b = Image::filled(10, 10, 1, 255);
        assert!(!constraint_satisfied(&a, &b, &cfg).unwrap());

        // many small changes stay under beta * 255 = 51
        assert!(constraint_satisfied(&a, &Image::filled(10, 10, 1, 50), &cfg).unwrap());
        assert!(!constraint_satisfied(&a, &Image::filled(10, 10, 1, 51), &cfg).unwrap());

        assert!(constraint_satisfied(&a, &Image::filled(5, 20, 1, 0), &cfg).is_err());
    }

    #[test]
    fn potential_formula() {
        let cfg = MutationConfig {
            beta: 0.2,
            ..MutationConfig::default()
        };
        let mut seed = Seed::new(Image::new(2, 2, 1, vec![10, 20, 30, 40]).unwrap(), 0);
        assert_eq!(mutation_potential(&seed, &cfg), 0.2 * 255.0 * 4.0);
        seed.image = Image::new(2, 2, 1, vec![13, 16, 30, 43]).unwrap();
        assert!((mutation_potential(&seed, &cfg) - 194.0).abs() < 1e-9);
    }

    #[test]
    fn impossible_constraint_falls_through() {
        let cfg = MutationConfig {
            alpha: 1e-9,
            beta: 1.0 / 255.0,
            try_num: 50,
            ranges: TransformRanges {
                brightness: (-20, -20),
                contrast: (0.5, 0.5),
                blur: (1.0, 1.0),
                noise: (50.0, 50.0),
                ..TransformRanges::default()
            },
        };
        let checker: Vec<u8> = (0..64).map(|i| if (i / 8 + i % 8) % 2 == 0 { 100 } else { 150 }).collect();
        let mut seed = Seed::new(Image::new(8, 8, 1, checker).unwrap(), 3);
        seed.affine_used = true;
        let mut r = rng::stream(1, &[]);
        for _ in 0..10 {
            assert!(mutate(&seed, &cfg, &mut r).is_none());
        }
    }

    #[test]
    fn affine_pick_switches_reference() {
        let cfg = MutationConfig {
            // accept anything
            alpha: 0.999,
            ..MutationConfig::default()
        };
        let seed = Seed::new(digit(), 4);
        let mut r = rng::stream(5, &[]);
        let m = (0..100)
            .filter_map(|_| mutate(&seed, &cfg, &mut r))
            .find(|m| m.transform_log[0].kind() == TransformKind::Rotation)
            .expect("rotation drawn");
        assert!(m.affine_used);
        assert_eq!(m.affine_count(), 1);
        assert_eq!(*m.reference, m.transform_log[0].apply(&m.original));
        assert_eq!(m.label, 4);
        assert_eq!(m.original, seed.original);
    }

    #[test]
    fn pixel_pick_after_affine_keeps_reference() {
        let cfg = MutationConfig {
            alpha: 0.999,
            ..MutationConfig::default()
        };
        let mut seed = Seed::new(digit(), 1);
        let rot = Transform::Rotation { degrees: 10.0 };
        seed.image = rot.apply(&seed.image);
        seed.reference = Arc::new(seed.image.clone());
        seed.affine_used = true;
        seed.transform_log.push(rot);
        let mut r = rng::stream(9, &[]);
        for _ in 0..50 {
            let m = mutate(&seed, &cfg, &mut r).expect("lenient config accepts");
            assert!(m.affine_used);
            assert!(Arc::ptr_eq(&m.reference, &seed.reference));
            assert!(!m.transform_log.last().unwrap().is_affine());
        }
    }

    #[test]
    fn lineage_invariants_hold_along_chains() {
        let cfg = MutationConfig::default();
        let mut r = rng::stream(77, &[]);
        let mut seed = Seed::new(digit(), 0);
        for _ in 0..500 {
            if let Some(m) = mutate(&seed, &cfg, &mut r) {
                assert!(constraint_satisfied(&m.reference, &m.image, &cfg).unwrap());
                assert!(m.affine_count() <= 1);
                assert_eq!(m.affine_used, m.affine_count() == 1);
                let replay = m
                    .transform_log
                    .iter()
                    .find(|t| t.is_affine())
                    .map_or_else(|| (*m.original).clone(), |t| t.apply(&m.original));
                assert_eq!(*m.reference, replay);
                seed = m;
            }
        }
        assert!(seed.transform_log.len() > 10);
    }
}
