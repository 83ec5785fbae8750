//! Run directory layout:
//!
//! ```text
//! config.json      the FuzzConfig used
//! summary.json     initial coverage and totals
//! report.jsonl     one record per iteration
//! failed/          failed-test images (+ _ref / _orig companions),
//!                  labels.csv and meta.jsonl
//! pool/            optional per-batch snapshots in the same layout
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{FailedTest, FuzzConfig, FuzzOutcome};
use crate::corpus::LABELS_FILE;
use crate::coverage::CriterionKind;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::mutation::{Seed, Transform};

pub const CONFIG_FILE: &str = "config.json";
pub const SUMMARY_FILE: &str = "summary.json";
pub const REPORT_FILE: &str = "report.jsonl";
pub const FAILED_DIR: &str = "failed";
pub const POOL_DIR: &str = "pool";
pub const FAILED_META: &str = "meta.jsonl";

/// A fraction held and serialized at exactly six decimals, so values compare
/// equal before and after a round trip through JSON.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default)]
pub struct Fixed6(f64);

impl Fixed6 {
    pub fn new(value: f64) -> Self {
        Self(format!("{value:.6}").parse().unwrap_or(value))
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

impl std::fmt::Display for Fixed6 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:.6}", self.0)
    }
}

impl Serialize for Fixed6 {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let raw = serde_json::value::RawValue::from_string(self.to_string()).map_err(serde::ser::Error::custom)?;
        raw.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Fixed6 {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        f64::deserialize(d).map(Fixed6::new)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitialStats {
    pub seeds: usize,
    pub batches: usize,
    pub coverage: Fixed6,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: u64,
    /// Id of the pool batch that was fuzzed.
    pub batch_id: u64,
    /// Changed, correctly classified mutants predicted this iteration.
    pub mutants: usize,
    /// Failed tests found this iteration.
    pub failed: usize,
    pub gain: bool,
    pub coverage: Fixed6,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Totals {
    pub iterations: u64,
    pub failed_tests: usize,
    pub pool_batches: usize,
    pub final_coverage: Fixed6,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub criterion: CriterionKind,
    pub rng_seed: u64,
    pub guided: bool,
    pub initial: InitialStats,
    pub totals: Totals,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunData {
    pub config: FuzzConfig,
    pub summary: RunSummary,
    pub records: Vec<IterationRecord>,
}

/// One line of `failed/meta.jsonl` (also used for pool snapshots).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedRecord {
    pub file: String,
    pub reference: String,
    pub original: String,
    pub label: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predicted: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch_id: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iteration: Option<u64>,
    pub transform_log: Vec<Transform>,
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

struct Lineage<'a> {
    image: &'a Image,
    reference: &'a Image,
    original: &'a Image,
}

/// Writes images with `_ref` / `_orig` companions plus `labels.csv` and `meta.jsonl`.
fn write_lineage_dir<'a>(
    dir: &Path,
    entries: impl Iterator<Item = (Lineage<'a>, FailedRecord)>,
) -> Result<()> {
    create_dir(dir)?;
    let mut labels = String::new();
    let mut meta = String::new();
    for (lineage, mut rec) in entries {
        let ext = lineage.image.netpbm_extension();
        let stem = rec.file.clone();
        rec.file = format!("{stem}.{ext}");
        rec.reference = format!("{stem}_ref.{ext}");
        rec.original = format!("{stem}_orig.{ext}");
        lineage.image.write(&dir.join(&rec.file))?;
        lineage.reference.write(&dir.join(&rec.reference))?;
        lineage.original.write(&dir.join(&rec.original))?;
        let _ = writeln!(labels, "{},{}", rec.file, rec.label);
        meta.push_str(&serde_json::to_string(&rec)?);
        meta.push('\n');
    }
    write_file(&dir.join(LABELS_FILE), labels)?;
    write_file(&dir.join(FAILED_META), meta)
}

fn failed_entry(i: usize, f: &FailedTest) -> (Lineage<'_>, FailedRecord) {
    (
        Lineage {
            image: &f.image,
            reference: &f.reference,
            original: &f.original,
        },
        FailedRecord {
            file: format!("{:06}", i + 1),
            reference: String::new(),
            original: String::new(),
            label: f.label,
            predicted: Some(f.predicted),
            batch_id: Some(f.batch_id),
            iteration: Some(f.iteration),
            transform_log: f.transform_log.clone(),
        },
    )
}

fn seed_entry(i: usize, s: &Seed) -> (Lineage<'_>, FailedRecord) {
    (
        Lineage {
            image: &s.image,
            reference: &s.reference,
            original: &s.original,
        },
        FailedRecord {
            file: format!("{:04}", i + 1),
            reference: String::new(),
            original: String::new(),
            label: s.label,
            predicted: None,
            batch_id: None,
            iteration: None,
            transform_log: s.transform_log.clone(),
        },
    )
}

/// Serializes iteration records, one JSON object per line.
pub fn report_lines(records: &[IterationRecord]) -> Result<String> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn write_run(dir: &Path, outcome: &FuzzOutcome, save_pool: bool) -> Result<()> {
    create_dir(dir)?;
    let report = &outcome.report;
    let mut config = serde_json::to_string_pretty(&report.config)?;
    config.push('\n');
    write_file(&dir.join(CONFIG_FILE), config)?;

    let summary = RunSummary {
        criterion: report.config.criterion.kind,
        rng_seed: report.config.rng_seed,
        guided: report.config.guided,
        initial: report.initial,
        totals: report.totals,
    };
    let mut text = serde_json::to_string_pretty(&summary)?;
    text.push('\n');
    write_file(&dir.join(SUMMARY_FILE), text)?;
    write_file(&dir.join(REPORT_FILE), report_lines(&report.iterations)?)?;

    write_lineage_dir(
        &dir.join(FAILED_DIR),
        outcome.failed.iter().enumerate().map(|(i, f)| failed_entry(i, f)),
    )?;

    if save_pool {
        let pool_dir = dir.join(POOL_DIR);
        create_dir(&pool_dir)?;
        for entry in &outcome.pool {
            write_lineage_dir(
                &pool_dir.join(format!("batch_{:06}", entry.batch.id)),
                entry.batch.seeds.iter().enumerate().map(|(i, s)| seed_entry(i, s)),
            )?;
        }
    }
    Ok(())
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Parses a run directory, naming the offending line of a bad `report.jsonl`.
pub fn read_run(dir: &Path) -> Result<RunData> {
    let config: FuzzConfig = serde_json::from_str(&read_text(&dir.join(CONFIG_FILE))?)
        .map_err(|e| Error::Run(format!("{CONFIG_FILE}: {e}")))?;
    let summary: RunSummary = serde_json::from_str(&read_text(&dir.join(SUMMARY_FILE))?)
        .map_err(|e| Error::Run(format!("{SUMMARY_FILE}: {e}")))?;
    let text = read_text(&dir.join(REPORT_FILE))?;
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let rec: IterationRecord = serde_json::from_str(line)
            .map_err(|e| Error::Run(format!("{REPORT_FILE} line {}: {e}", i + 1)))?;
        if rec.iteration != i as u64 + 1 {
            return Err(Error::Run(format!(
                "{REPORT_FILE} line {}: iteration {} out of sequence",
                i + 1,
                rec.iteration
            )));
        }
        records.push(rec);
    }
    if !text.is_empty() && !text.ends_with('\n') {
        return Err(Error::Run(format!("{REPORT_FILE} line {}: truncated", records.len())));
    }
    if records.len() as u64 != summary.totals.iterations {
        return Err(Error::Run(format!(
            "{REPORT_FILE} has {} records, summary says {}",
            records.len(),
            summary.totals.iterations
        )));
    }
    Ok(RunData {
        config,
        summary,
        records,
    })
}

/// A persisted failed test (or pool seed) with its images.
#[derive(Debug, Clone, PartialEq)]
pub struct PersistedLineage {
    pub record: FailedRecord,
    pub image: Image,
    pub reference: Image,
    pub original: Image,
}

/// Loads every entry of a `failed/` (or pool batch) directory.
pub fn read_failed_dir(dir: &Path) -> Result<Vec<PersistedLineage>> {
    let text = read_text(&dir.join(FAILED_META))?;
    text.lines()
        .enumerate()
        .map(|(i, line)| {
            let record: FailedRecord = serde_json::from_str(line)
                .map_err(|e| Error::Run(format!("{FAILED_META} line {}: {e}", i + 1)))?;
            Ok(PersistedLineage {
                image: Image::read(&dir.join(&record.file))?,
                reference: Image::read(&dir.join(&record.reference))?,
                original: Image::read(&dir.join(&record.original))?,
                record,
            })
        })
        .collect()
}
