//! Differential testing of a model against its binary16-truncated variant.

use serde::{Deserialize, Serialize};

use crate::corpus::Sample;
use crate::error::Result;
use crate::image::Image;
use crate::model::{quantize_model, Model};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Disagreement {
    /// Name of the test input in its corpus directory.
    pub input: String,
    pub label_full: usize,
    pub label_quant: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantRun {
    pub rng_seed: u64,
    pub disagreements: Vec<Disagreement>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantDiffReport {
    pub ratio: f64,
    pub tests: usize,
    pub runs: Vec<QuantRun>,
    /// Disagreement count of each run.
    pub counts: Vec<usize>,
    pub mean: f64,
}

/// Inputs on which `model` and `quantize_model(model, ratio, rng_seed)` pick
/// different classes, in corpus order.
pub fn quant_diff_run(model: &Model, ratio: f64, rng_seed: u64, tests: &[Sample]) -> Result<Vec<Disagreement>> {
    let quant = quantize_model(model, ratio, rng_seed)?;
    let images: Vec<Image> = tests.iter().map(|s| s.image.clone()).collect();
    let full = model.predict_images(&images)?;
    let truncated = quant.predict_images(&images)?;
    Ok(tests
        .iter()
        .zip(full.into_iter().zip(truncated))
        .filter(|(_, (a, b))| a != b)
        .map(|(s, (label_full, label_quant))| Disagreement {
            input: s.name.clone(),
            label_full,
            label_quant,
        })
        .collect())
}

/// `repeats` runs with seeds `rng_seed, rng_seed + 1, ...`.
pub fn quant_diff_repeated(
    model: &Model,
    ratio: f64,
    rng_seed: u64,
    tests: &[Sample],
    repeats: usize,
) -> Result<QuantDiffReport> {
    let runs = (0..repeats as u64)
        .map(|i| {
            let seed = rng_seed.wrapping_add(i);
            Ok(QuantRun {
                rng_seed: seed,
                disagreements: quant_diff_run(model, ratio, seed, tests)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let counts: Vec<usize> = runs.iter().map(|r| r.disagreements.len()).collect();
    let mean = if counts.is_empty() {
        0.0
    } else {
        counts.iter().sum::<usize>() as f64 / counts.len() as f64
    };
    Ok(QuantDiffReport {
        ratio,
        tests: tests.len(),
        runs,
        counts,
        mean,
    })
}
