//! The fuzz loop: select a batch, sample seeds, power-schedule mutation
//! trials, mutate, predict the surviving mutants in one pass, and keep the new
//! batch only if it adds coverage.

mod quantdiff;
mod report;

pub use quantdiff::{quant_diff_repeated, quant_diff_run, Disagreement, QuantDiffReport, QuantRun};
pub use report::{
    read_failed_dir, read_run, report_lines, write_run, FailedRecord, Fixed6, InitialStats, IterationRecord,
    PersistedLineage, RunData, RunSummary, Totals,
    CONFIG_FILE, FAILED_DIR, FAILED_META, POOL_DIR, REPORT_FILE, SUMMARY_FILE,
};

use std::sync::Arc;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Sample;
use crate::coverage::{Criterion, CriterionConfig, NeuronProfile};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::model::Model;
use crate::mutation::{mutate, MutationConfig, Seed, Transform};
use crate::rng;
use crate::scheduler::{power_schedule, sample_seeds, select_next, Batch, PoolEntry, ScheduleConfig};

// RNG stream tags.
const SELECT_STREAM: u64 = 1;
const MUTATE_STREAM: u64 = 2;

/// Stop after `iterations` loop turns or `seconds` of wall clock, whichever
/// comes first. At least one must be set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Budget {
    pub iterations: Option<u64>,
    pub seconds: Option<f64>,
}

impl Default for Budget {
    fn default() -> Self {
        Self {
            iterations: Some(1000),
            seconds: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FuzzConfig {
    pub criterion: CriterionConfig,
    pub mutation: MutationConfig,
    pub schedule: ScheduleConfig,
    pub budget: Budget,
    pub rng_seed: u64,
    pub batch_size: usize,
    /// When false, every non-empty mutant batch joins the pool regardless of
    /// coverage gain (coverage is still measured).
    pub guided: bool,
}

impl Default for FuzzConfig {
    fn default() -> Self {
        Self {
            criterion: CriterionConfig::default(),
            mutation: MutationConfig::default(),
            schedule: ScheduleConfig::default(),
            budget: Budget::default(),
            rng_seed: 0,
            batch_size: 32,
            guided: true,
        }
    }
}

impl FuzzConfig {
    pub fn validate(&self) -> Result<()> {
        self.criterion.validate()?;
        self.mutation.validate()?;
        self.schedule.validate()?;
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        match (self.budget.iterations, self.budget.seconds) {
            (None, None) => Err(Error::Config("no budget given (iterations or seconds)".into())),
            (_, Some(s)) if s.is_nan() || s <= 0.0 => Err(Error::Config(format!("time budget {s}s must be positive"))),
            _ => Ok(()),
        }
    }
}

/// A constraint-valid mutant the model misclassifies.
#[derive(Debug, Clone, PartialEq)]
pub struct FailedTest {
    pub image: Image,
    pub reference: Arc<Image>,
    pub original: Arc<Image>,
    /// Label of the original seed.
    pub label: usize,
    pub predicted: usize,
    pub transform_log: Vec<Transform>,
    /// Pool batch the parent seed was taken from.
    pub batch_id: u64,
    pub iteration: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FuzzReport {
    pub config: FuzzConfig,
    pub initial: InitialStats,
    pub iterations: Vec<IterationRecord>,
    pub totals: Totals,
}

#[derive(Debug, Clone)]
pub struct FuzzOutcome {
    pub report: FuzzReport,
    pub failed: Vec<FailedTest>,
    pub pool: Vec<PoolEntry>,
    /// Every input whose coverage was folded into the state: the initial
    /// seeds first, then each iteration's mutant batch. Only kept when
    /// requested.
    pub evaluated: Option<Vec<Vec<Image>>>,
}

/// Drops seeds the model misclassifies and groups the rest into batches.
/// Each seed's label is the model's (correct) prediction.
pub fn preprocess_seeds(model: &Model, corpus: &[Sample], batch_size: usize) -> Result<Vec<Batch>> {
    if corpus.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if batch_size == 0 {
        return Err(Error::Config("batch_size must be at least 1".into()));
    }
    let images: Vec<Image> = corpus.iter().map(|s| s.image.clone()).collect();
    let predictions = model.predict_images(&images)?;
    let seeds: Vec<Seed> = corpus
        .iter()
        .zip(predictions)
        .filter(|(s, p)| s.label == *p)
        .map(|(s, p)| Seed::new(s.image.clone(), p))
        .collect();
    if seeds.is_empty() {
        return Err(Error::NoValidSeeds);
    }
    Ok(seeds
        .chunks(batch_size)
        .enumerate()
        .map(|(id, chunk)| Batch {
            id: id as u64,
            seeds: chunk.to_vec(),
        })
        .collect())
}

/// Whether the model's prediction for `mutant` differs from its lineage label.
pub fn is_failed_test(model: &Model, mutant: &Seed) -> Result<bool> {
    Ok(model.predict_images(std::slice::from_ref(&mutant.image))?[0] != mutant.label)
}

/// Runs the loop until the budget is exhausted. Deterministic given
/// `cfg.rng_seed` when only an iteration budget is set.
pub fn fuzz_loop(
    model: &Model,
    profile: Option<&NeuronProfile>,
    corpus: &[Sample],
    cfg: &FuzzConfig,
    record_inputs: bool,
) -> Result<FuzzOutcome> {
    cfg.validate()?;
    let criterion = Criterion::new(cfg.criterion, model, profile.cloned())?;
    let batches = preprocess_seeds(model, corpus, cfg.batch_size)?;
    let mut evaluated = record_inputs.then(Vec::new);

    let mut state = criterion.empty_state();
    let initial_images: Vec<Image> = batches
        .iter()
        .flat_map(|b| b.seeds.iter().map(|s| s.image.clone()))
        .collect();
    state.update(&criterion.batch_items(&model.trace_images(&initial_images)?));
    let initial = InitialStats {
        seeds: initial_images.len(),
        batches: batches.len(),
        coverage: Fixed6::new(state.ratio()),
    };
    if let Some(log) = evaluated.as_mut() {
        log.push(initial_images);
    }

    let mut pool: Vec<PoolEntry> = batches.into_iter().map(PoolEntry::new).collect();
    let mut next_id = pool.len() as u64;
    let mut failed = Vec::new();
    let mut records = Vec::new();
    let mut select_rng = rng::stream(cfg.rng_seed, &[SELECT_STREAM]);
    let start = Instant::now();
    let deadline = cfg.budget.seconds.map(Duration::from_secs_f64);

    for iteration in 1.. {
        if cfg.budget.iterations.is_some_and(|max| iteration > max)
            || deadline.is_some_and(|d| start.elapsed() >= d)
        {
            break;
        }

        let entry = select_next(&mut pool, &cfg.schedule, &mut select_rng)?;
        let batch = &pool[entry].batch;
        let batch_id = batch.id;
        let sampled: Vec<&Seed> = sample_seeds(batch, &cfg.schedule, &mut select_rng)
            .into_iter()
            .map(|i| &batch.seeds[i])
            .collect();
        let trials = power_schedule(&sampled, cfg.schedule.k, &cfg.mutation);

        let jobs: Vec<(usize, usize)> = trials
            .iter()
            .enumerate()
            .flat_map(|(slot, &n)| (0..n).map(move |t| (slot, t)))
            .collect();
        let mutants: Vec<Seed> = jobs
            .par_iter()
            .filter_map(|&(slot, trial)| {
                let parent = sampled[slot];
                let mut r = rng::stream(cfg.rng_seed, &[MUTATE_STREAM, iteration, slot as u64, trial as u64]);
                mutate(parent, &cfg.mutation, &mut r).filter(|m| m.image != parent.image)
            })
            .collect();

        let images: Vec<Image> = mutants.iter().map(|m| m.image.clone()).collect();
        let traces = model.trace_images(&images)?;
        let mut survivors = Vec::with_capacity(mutants.len());
        let mut survivor_traces = Vec::with_capacity(mutants.len());
        let mut new_failed = 0;
        for (m, t) in mutants.into_iter().zip(traces) {
            if t.label != m.label {
                new_failed += 1;
                failed.push(FailedTest {
                    image: m.image,
                    reference: m.reference,
                    original: m.original,
                    label: m.label,
                    predicted: t.label,
                    transform_log: m.transform_log,
                    batch_id,
                    iteration,
                });
            } else {
                survivors.push(m);
                survivor_traces.push(t);
            }
        }

        let gain = !survivors.is_empty() && state.update(&criterion.batch_items(&survivor_traces));
        let mutants_kept = survivors.len();
        if let Some(log) = evaluated.as_mut() {
            log.push(survivors.iter().map(|s| s.image.clone()).collect());
        }
        if gain || (!cfg.guided && !survivors.is_empty()) {
            pool.push(PoolEntry::new(Batch {
                id: next_id,
                seeds: survivors,
            }));
            next_id += 1;
        }

        records.push(IterationRecord {
            iteration,
            batch_id,
            mutants: mutants_kept,
            failed: new_failed,
            gain,
            coverage: Fixed6::new(state.ratio()),
        });
    }

    let totals = Totals {
        iterations: records.len() as u64,
        failed_tests: failed.len(),
        pool_batches: pool.len(),
        final_coverage: Fixed6::new(state.ratio()),
    };
    Ok(FuzzOutcome {
        report: FuzzReport {
            config: cfg.clone(),
            initial,
            iterations: records,
            totals,
        },
        failed,
        pool,
        evaluated,
    })
}
