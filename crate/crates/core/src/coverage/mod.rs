//! Neuron coverage criteria and the bucketed coverage-gain bookkeeping.
//!
//! Each criterion maps a trace to a set of `(neuron, bucket)` items. A batch
//! is interesting when it contributes at least one item not yet covered.

mod criteria;
mod profile;
mod state;

pub use criteria::Criterion;
pub use profile::{profile_dataset, NeuronProfile, NeuronStats};
pub use state::CoverageState;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Floor for the per-neuron standard deviation used to size corner buckets.
pub const STD_EPSILON: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CriterionKind {
    /// Neuron coverage.
    Nc,
    /// k-multisection neuron coverage.
    Kmnc,
    /// Neuron boundary coverage.
    Nbc,
    /// Strong neuron activation coverage.
    Snac,
    /// Top-k neuron coverage.
    Tknc,
    /// Bottom-k neuron coverage.
    Bknc,
}

impl CriterionKind {
    pub const ALL: [CriterionKind; 6] = [
        CriterionKind::Nc,
        CriterionKind::Kmnc,
        CriterionKind::Nbc,
        CriterionKind::Snac,
        CriterionKind::Tknc,
        CriterionKind::Bknc,
    ];

    /// Whether the criterion is defined relative to profiled neuron ranges.
    pub fn needs_profile(self) -> bool {
        matches!(self, CriterionKind::Kmnc | CriterionKind::Nbc | CriterionKind::Snac)
    }

    pub fn name(self) -> &'static str {
        match self {
            CriterionKind::Nc => "nc",
            CriterionKind::Kmnc => "kmnc",
            CriterionKind::Nbc => "nbc",
            CriterionKind::Snac => "snac",
            CriterionKind::Tknc => "tknc",
            CriterionKind::Bknc => "bknc",
        }
    }
}

impl fmt::Display for CriterionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CriterionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CriterionKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown criterion {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CriterionConfig {
    pub kind: CriterionKind,
    /// NC activation threshold on per-layer min-max scaled values.
    pub t: f64,
    /// KMNC sections per neuron.
    pub k_sections: usize,
    /// TKNC/BKNC neurons per layer.
    pub top_k: usize,
    /// NBC/SNAC buckets per corner region.
    pub overflow_buckets: usize,
}

impl Default for CriterionConfig {
    fn default() -> Self {
        Self {
            kind: CriterionKind::Kmnc,
            t: 0.75,
            k_sections: 100,
            top_k: 2,
            overflow_buckets: 10,
        }
    }
}

impl CriterionConfig {
    pub fn new(kind: CriterionKind) -> Self {
        Self {
            kind,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t > 0.0 && self.t < 1.0) {
            return Err(Error::Config(format!("NC threshold t = {} not in (0, 1)", self.t)));
        }
        if self.k_sections == 0 || self.top_k == 0 || self.overflow_buckets == 0 {
            return Err(Error::Config(
                "k_sections, top_k and overflow_buckets must be at least 1".into(),
            ));
        }
        Ok(())
    }

    /// Item slots per neuron for this criterion.
    pub fn buckets_per_neuron(&self) -> usize {
        match self.kind {
            CriterionKind::Nc | CriterionKind::Tknc | CriterionKind::Bknc => 1,
            CriterionKind::Kmnc => self.k_sections,
            CriterionKind::Nbc => 2 * self.overflow_buckets,
            CriterionKind::Snac => self.overflow_buckets,
        }
    }
}

/// A covered `(neuron, bucket)` pair.
///
/// Bucket ids per kind: NC/TKNC/BKNC use `0`; KMNC uses the section index;
/// NBC uses `0..m` for the lower corner and `m..2m` for the upper corner;
/// SNAC uses `0..m` for the upper corner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Item {
    pub neuron: u32,
    pub bucket: u32,
}

impl Item {
    pub fn new(neuron: usize, bucket: usize) -> Self {
        Self {
            neuron: neuron as u32,
            bucket: bucket as u32,
        }
    }
}
