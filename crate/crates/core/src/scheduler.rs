//! Batch pool prioritisation and power scheduling.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mutation::{mutation_potential, MutationConfig, Seed};

/// Draws attempted by [`select_next`] before it falls back to a uniform pick.
pub const MAX_REJECTIONS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleConfig {
    pub gamma: f64,
    pub p_min: f64,
    /// Mutation trials spread over the seeds sampled from one batch.
    #[serde(rename = "K")]
    pub k: usize,
    pub sample_size: usize,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            gamma: 20.0,
            p_min: 0.1,
            k: 64,
            sample_size: 5,
        }
    }
}

impl ScheduleConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.p_min > 0.0 && self.p_min < 1.0) || self.gamma.is_nan() || self.gamma <= 0.0 {
            return Err(Error::Config(format!(
                "need 0 < p_min < 1 and gamma > 0 (got p_min = {}, gamma = {})",
                self.p_min, self.gamma
            )));
        }
        if self.k == 0 || self.sample_size == 0 {
            return Err(Error::Config("K and sample_size must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub id: u64,
    pub seeds: Vec<Seed>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoolEntry {
    pub batch: Batch,
    /// How many times the batch has been selected.
    pub fuzz_count: u64,
}

impl PoolEntry {
    pub fn new(batch: Batch) -> Self {
        Self { batch, fuzz_count: 0 }
    }
}

/// Selection probability of a batch fuzzed `fuzz_count` times:
/// `1 - f/gamma` while `f < (1 - p_min) * gamma`, else `p_min`.
pub fn batch_probability(fuzz_count: u64, cfg: &ScheduleConfig) -> f64 {
    let f = fuzz_count as f64;
    if f < (1.0 - cfg.p_min) * cfg.gamma {
        1.0 - f / cfg.gamma
    } else {
        cfg.p_min
    }
}

/// Rejection-samples an index from `pool` without touching fuzz counts.
pub fn pick<R: Rng + ?Sized>(pool: &[PoolEntry], cfg: &ScheduleConfig, rng: &mut R) -> Result<usize> {
    if pool.is_empty() {
        return Err(Error::EmptyPool);
    }
    for _ in 0..MAX_REJECTIONS {
        let i = rng.random_range(0..pool.len());
        if rng.random::<f64>() < batch_probability(pool[i].fuzz_count, cfg) {
            return Ok(i);
        }
    }
    Ok(rng.random_range(0..pool.len()))
}

/// Picks the next batch to fuzz and bumps its fuzz count.
pub fn select_next<R: Rng + ?Sized>(pool: &mut [PoolEntry], cfg: &ScheduleConfig, rng: &mut R) -> Result<usize> {
    let i = pick(pool, cfg, rng)?;
    pool[i].fuzz_count += 1;
    Ok(i)
}

/// Indices of up to `sample_size` distinct seeds, uniformly without
/// replacement, in ascending order.
pub fn sample_seeds<R: Rng + ?Sized>(batch: &Batch, cfg: &ScheduleConfig, rng: &mut R) -> Vec<usize> {
    let n = batch.seeds.len();
    if n <= cfg.sample_size {
        return (0..n).collect();
    }
    let mut idx = rand::seq::index::sample(rng, n, cfg.sample_size).into_vec();
    idx.sort_unstable();
    idx
}

/// Splits `k` trials in proportion to `weights` by largest remainder.
///
/// Non-positive weights get nothing; if no weight is positive the split is
/// uniform. Equal remainders favour the larger raw weight, then the earlier
/// index, so a larger weight never receives fewer trials.
pub fn allocate(raw: &[f64], k: usize) -> Vec<usize> {
    if raw.is_empty() {
        return Vec::new();
    }
    let positive: Vec<f64> = raw.iter().map(|&w| if w > 0.0 { w } else { 0.0 }).collect();
    let total: f64 = positive.iter().sum();
    let weights = if total > 0.0 && total.is_finite() {
        positive
    } else {
        vec![1.0; raw.len()]
    };
    let total: f64 = weights.iter().sum();

    let quotas: Vec<f64> = weights.iter().map(|&w| k as f64 * w / total).collect();
    let mut alloc: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = alloc.iter().sum();

    let mut order: Vec<usize> = (0..weights.len()).filter(|&i| weights[i] > 0.0).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra).then(raw[b].total_cmp(&raw[a])).then(a.cmp(&b))
    });
    // Rounding can leave the floors a little off; settle any shortfall in
    // remainder order, cycling if needed.
    let mut left = k.saturating_sub(assigned);
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        alloc[i] += 1;
        left -= 1;
    }
    alloc
}

/// Trials per seed, proportional to mutation potential. Sums to `k`.
pub fn power_schedule(seeds: &[&Seed], k: usize, cfg: &MutationConfig) -> Vec<usize> {
    let potentials: Vec<f64> = seeds.iter().map(|s| mutation_potential(s, cfg)).collect();
    allocate(&potentials, k)
}
