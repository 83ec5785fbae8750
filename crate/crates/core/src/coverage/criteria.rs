use std::ops::Range;

use super::{CoverageState, CriterionConfig, CriterionKind, Item, NeuronProfile, STD_EPSILON};
use crate::error::{Error, Result};
use crate::model::{ActivationTrace, Model};

/// A configured criterion bound to a model's neuron layout (and profile, for
/// the range-based kinds). Computing items is pure and thread-safe.
#[derive(Debug, Clone)]
pub struct Criterion {
    cfg: CriterionConfig,
    layers: Vec<Range<usize>>,
    neuron_count: usize,
    profile: Option<NeuronProfile>,
}

impl Criterion {
    pub fn new(cfg: CriterionConfig, model: &Model, profile: Option<NeuronProfile>) -> Result<Self> {
        cfg.validate()?;
        if cfg.kind.needs_profile() && profile.is_none() {
            return Err(Error::Config(format!("criterion {} requires a neuron profile", cfg.kind)));
        }
        if let Some(p) = &profile {
            if p.len() != model.neuron_count() {
                return Err(Error::Profile(format!(
                    "profile has {} neurons, model has {}",
                    p.len(),
                    model.neuron_count()
                )));
            }
        }
        Ok(Self {
            cfg,
            layers: model.neuron_layers().iter().map(|l| l.range()).collect(),
            neuron_count: model.neuron_count(),
            profile,
        })
    }

    pub fn config(&self) -> &CriterionConfig {
        &self.cfg
    }

    pub fn kind(&self) -> CriterionKind {
        self.cfg.kind
    }

    pub fn neuron_count(&self) -> usize {
        self.neuron_count
    }

    pub fn empty_state(&self) -> CoverageState {
        CoverageState::new(&self.cfg, self.neuron_count)
    }

    /// Items covered by a single trace, sorted by `(neuron, bucket)`.
    pub fn items(&self, trace: &ActivationTrace) -> Vec<Item> {
        let v = &trace.neurons;
        debug_assert_eq!(v.len(), self.neuron_count);
        let mut out = Vec::new();
        match self.cfg.kind {
            CriterionKind::Nc => {
                for layer in &self.layers {
                    let vals = &v[layer.clone()];
                    let lo = vals.iter().copied().fold(f32::INFINITY, f32::min);
                    let hi = vals.iter().copied().fold(f32::NEG_INFINITY, f32::max);
                    if hi <= lo {
                        continue;
                    }
                    let span = f64::from(hi) - f64::from(lo);
                    for (j, &x) in vals.iter().enumerate() {
                        if (f64::from(x) - f64::from(lo)) / span > self.cfg.t {
                            out.push(Item::new(layer.start + j, 0));
                        }
                    }
                }
            }
            CriterionKind::Kmnc => {
                let profile = self.profile();
                for (i, &x) in v.iter().enumerate() {
                    if let Some(s) = kmnc_section(x, profile.get(i).low, profile.get(i).high, self.cfg.k_sections) {
                        out.push(Item::new(i, s));
                    }
                }
            }
            CriterionKind::Nbc | CriterionKind::Snac => {
                let m = self.cfg.overflow_buckets;
                let lower = self.cfg.kind == CriterionKind::Nbc;
                for (i, &x) in v.iter().enumerate() {
                    let s = self.profile().get(i);
                    let step = f64::from(s.std).max(STD_EPSILON) / m as f64;
                    let x = f64::from(x);
                    if x > f64::from(s.high) {
                        let b = corner_bucket(x - f64::from(s.high), step, m);
                        out.push(Item::new(i, if lower { m + b } else { b }));
                    } else if lower && x < f64::from(s.low) {
                        out.push(Item::new(i, corner_bucket(f64::from(s.low) - x, step, m)));
                    }
                }
            }
            CriterionKind::Tknc | CriterionKind::Bknc => {
                let top = self.cfg.kind == CriterionKind::Tknc;
                for layer in &self.layers {
                    let mut ids: Vec<usize> = layer.clone().collect();
                    ids.sort_by(|&a, &b| {
                        let ord = v[a].total_cmp(&v[b]);
                        let ord = if top { ord.reverse() } else { ord };
                        ord.then(a.cmp(&b))
                    });
                    ids.truncate(self.cfg.top_k);
                    ids.sort_unstable();
                    out.extend(ids.into_iter().map(|n| Item::new(n, 0)));
                }
            }
        }
        out
    }

    /// Union of the items of every trace, sorted and deduplicated.
    pub fn batch_items(&self, traces: &[ActivationTrace]) -> Vec<Item> {
        let mut all: Vec<Item> = traces.iter().flat_map(|t| self.items(t)).collect();
        all.sort_unstable();
        all.dedup();
        all
    }

    fn profile(&self) -> &NeuronProfile {
        self.profile
            .as_ref()
            .expect("range-based criteria are constructed with a profile")
    }
}

/// Section index of `x` within `[low, high]` split into `k` equal parts.
pub(crate) fn kmnc_section(x: f32, low: f32, high: f32, k: usize) -> Option<usize> {
    if low < high {
        if x < low || x > high {
            return None;
        }
        let (x, low, high) = (f64::from(x), f64::from(low), f64::from(high));
        let s = ((x - low) / (high - low) * k as f64).floor() as usize;
        Some(s.min(k - 1))
    } else {
        (x == low).then_some(0)
    }
}

fn corner_bucket(distance: f64, step: f64, m: usize) -> usize {
    ((distance / step).floor() as usize).min(m - 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coverage::NeuronStats;
    use crate::model::testing::dense;
    use crate::model::Layer;

    fn trace(neurons: Vec<f32>) -> ActivationTrace {
        ActivationTrace {
            output: neurons.clone(),
            neurons,
            label: 0,
        }
    }

    /// Two dense layers of `sizes[0]` and `sizes[1]` neurons.
    fn model(sizes: [usize; 2]) -> Model {
        let [a, b] = sizes;
        Model::new(
            [1, 1, 1],
            vec![dense(1, a, vec![0.0; a], vec![0.0; a]), Layer::Relu, dense(a, b, vec![0.0; a * b], vec![0.0; b])],
        )
        .unwrap()
    }

    fn profile(stats: &[(f32, f32, f32)]) -> NeuronProfile {
        NeuronProfile::new(
            stats
                .iter()
                .map(|&(low, high, std)| NeuronStats {
                    low,
                    high,
                    mean: (low + high) / 2.0,
                    std,
                })
                .collect(),
        )
        .unwrap()
    }

    fn cfg(kind: CriterionKind) -> CriterionConfig {
        CriterionConfig::new(kind)
    }

    #[test]
    fn kmnc_sections() {
        assert_eq!(kmnc_section(3.9, 0.0, 10.0, 5), Some(1));
        assert_eq!(kmnc_section(10.0, 0.0, 10.0, 5), Some(4));
        assert_eq!(kmnc_section(0.0, 0.0, 10.0, 5), Some(0));
        assert_eq!(kmnc_section(12.0, 0.0, 10.0, 5), None);
        assert_eq!(kmnc_section(-0.1, 0.0, 10.0, 5), None);
        assert_eq!(kmnc_section(2.0, 2.0, 2.0, 5), Some(0));
        assert_eq!(kmnc_section(2.5, 2.0, 2.0, 5), None);
    }

    #[test]
    fn out_of_range_kmnc_value_is_nbc_upper_item() {
        let m = model([1, 1]);
        let p = profile(&[(0.0, 10.0, 2.0), (0.0, 1.0, 1.0)]);
        let kmnc = Criterion::new(CriterionConfig { k_sections: 5, ..cfg(CriterionKind::Kmnc) }, &m, Some(p.clone())).unwrap();
        assert_eq!(kmnc.items(&trace(vec![12.0, 0.5])), vec![Item::new(1, 2)]);
        let nbc = Criterion::new(cfg(CriterionKind::Nbc), &m, Some(p)).unwrap();
        // step = 2.0 / 10 = 0.2; distance 2.0 -> bucket 10 clamped to 9, upper side
        assert_eq!(nbc.items(&trace(vec![12.0, 0.5])), vec![Item::new(0, 19)]);
        // 0.15 below low with a 0.1 step -> lower bucket 1
        assert_eq!(nbc.items(&trace(vec![5.0, -0.15])), vec![Item::new(1, 1)]);
    }

    #[test]
    fn snac_ignores_lower_corner() {
        let m = model([1, 1]);
        let p = profile(&[(0.0, 1.0, 0.5), (0.0, 1.0, 0.5)]);
        let snac = Criterion::new(cfg(CriterionKind::Snac), &m, Some(p)).unwrap();
        assert_eq!(snac.items(&trace(vec![-3.0, 1.06])), vec![Item::new(1, 1)]);
    }

    #[test]
    fn degenerate_neuron_corners_are_strict() {
        let m = model([1, 1]);
        let p = profile(&[(1.0, 1.0, 0.0), (1.0, 1.0, 0.0)]);
        let nbc = Criterion::new(cfg(CriterionKind::Nbc), &m, Some(p)).unwrap();
        assert!(nbc.items(&trace(vec![1.0, 1.0])).is_empty());
        // zero std falls back to the epsilon step
        assert_eq!(nbc.items(&trace(vec![1.0, 1.0 + 1e-3])), vec![Item::new(1, 19)]);
    }

    #[test]
    fn nc_scales_per_layer() {
        let m = model([3, 2]);
        let nc = Criterion::new(CriterionConfig { t: 0.5, ..cfg(CriterionKind::Nc) }, &m, None).unwrap();
        // layer 1 scaled [0, 0.5, 1.0]: only the third neuron is strictly above 0.5;
        // layer 2 is constant and covers nothing
        assert_eq!(nc.items(&trace(vec![0.0, 2.0, 4.0, 7.0, 7.0])), vec![Item::new(2, 0)]);
    }

    #[test]
    fn top_and_bottom_k() {
        let m = model([3, 2]);
        let tk = Criterion::new(cfg(CriterionKind::Tknc), &m, None).unwrap();
        assert_eq!(
            tk.items(&trace(vec![1.0, 3.0, 2.0, 5.0, 4.0])),
            vec![Item::new(1, 0), Item::new(2, 0), Item::new(3, 0), Item::new(4, 0)]
        );
        let bk = Criterion::new(CriterionConfig { top_k: 1, ..cfg(CriterionKind::Bknc) }, &m, None).unwrap();
        // tie between neurons 0 and 2 resolves to the lower id
        assert_eq!(bk.items(&trace(vec![1.0, 3.0, 1.0, 5.0, 4.0])), vec![Item::new(0, 0), Item::new(4, 0)]);
    }

    #[test]
    fn range_criteria_need_profile() {
        let m = model([1, 1]);
        for kind in CriterionKind::ALL {
            assert_eq!(Criterion::new(cfg(kind), &m, None).is_err(), kind.needs_profile(), "{kind}");
        }
        let short = profile(&[(0.0, 1.0, 0.1)]);
        assert!(Criterion::new(cfg(CriterionKind::Kmnc), &m, Some(short)).is_err());
    }
}
