use bitvec::vec::BitVec;

use super::{CriterionConfig, CriterionKind, Item};

/// Covered items for one criterion. Only ever grows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoverageState {
    kind: CriterionKind,
    neuron_count: usize,
    buckets: usize,
    covered: BitVec,
    count: usize,
}

impl CoverageState {
    pub fn new(cfg: &CriterionConfig, neuron_count: usize) -> Self {
        let buckets = cfg.buckets_per_neuron();
        Self {
            kind: cfg.kind,
            neuron_count,
            buckets,
            covered: BitVec::repeat(false, neuron_count * buckets),
            count: 0,
        }
    }

    pub fn kind(&self) -> CriterionKind {
        self.kind
    }

    /// Number of covered items.
    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    fn slot(&self, item: Item) -> usize {
        let (n, b) = (item.neuron as usize, item.bucket as usize);
        assert!(
            n < self.neuron_count && b < self.buckets,
            "item {item:?} invalid for {} with {} neurons",
            self.kind,
            self.neuron_count
        );
        n * self.buckets + b
    }

    pub fn contains(&self, item: Item) -> bool {
        self.covered[self.slot(item)]
    }

    /// Adds `items`, returning whether any of them was new.
    pub fn update(&mut self, items: &[Item]) -> bool {
        let before = self.count;
        for &item in items {
            let slot = self.slot(item);
            if !self.covered.replace(slot, true) {
                self.count += 1;
            }
        }
        self.count > before
    }

    /// Whether `items` contains anything not yet covered, without updating.
    pub fn would_gain(&self, items: &[Item]) -> bool {
        items.iter().any(|&i| !self.contains(i))
    }

    pub fn items(&self) -> impl Iterator<Item = Item> + '_ {
        self.covered
            .iter_ones()
            .map(|slot| Item::new(slot / self.buckets, slot % self.buckets))
    }

    /// Covered fraction of the criterion's item space.
    ///
    /// NBC and SNAC count a neuron's corner region once if any of its buckets
    /// is covered, so NBC is out of `2 * neurons` and SNAC out of `neurons`.
    pub fn ratio(&self) -> f64 {
        if self.neuron_count == 0 {
            return 0.0;
        }
        let n = self.neuron_count as f64;
        match self.kind {
            CriterionKind::Nc | CriterionKind::Tknc | CriterionKind::Bknc => self.count as f64 / n,
            CriterionKind::Kmnc => self.count as f64 / (n * self.buckets as f64),
            CriterionKind::Nbc => {
                let m = self.buckets / 2;
                let sides = self
                    .covered
                    .chunks(m)
                    .filter(|side| side.any())
                    .count();
                sides as f64 / (2.0 * n)
            }
            CriterionKind::Snac => {
                let regions = self
                    .covered
                    .chunks(self.buckets)
                    .filter(|r| r.any())
                    .count();
                regions as f64 / n
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(kind: CriterionKind, k: usize, n: usize) -> CoverageState {
        CoverageState::new(
            &CriterionConfig {
                k_sections: k,
                overflow_buckets: k,
                ..CriterionConfig::new(kind)
            },
            n,
        )
    }

    #[test]
    fn gain_semantics() {
        let mut s = state(CriterionKind::Kmnc, 3, 2);
        assert!(s.update(&[Item::new(0, 1)]));
        assert!(!s.update(&[Item::new(0, 1)]));
        assert!(s.update(&[Item::new(0, 1), Item::new(1, 2)]));
        assert_eq!(s.len(), 2);
        assert!(!s.update(&[]));
    }

    #[test]
    fn kmnc_ratio_counts_sections() {
        let mut s = state(CriterionKind::Kmnc, 3, 2);
        assert_eq!(s.ratio(), 0.0);
        s.update(&[Item::new(0, 0), Item::new(0, 2), Item::new(1, 1)]);
        assert_eq!(s.ratio(), 0.5);
        s.update(&[Item::new(0, 1), Item::new(1, 0), Item::new(1, 2)]);
        assert_eq!(s.ratio(), 1.0);
    }

    #[test]
    fn nbc_ratio_counts_sides() {
        let mut s = state(CriterionKind::Nbc, 4, 2);
        // two buckets on neuron 0's upper side count once
        s.update(&[Item::new(0, 5), Item::new(0, 7)]);
        assert_eq!(s.ratio(), 0.25);
        s.update(&[Item::new(0, 0), Item::new(1, 3), Item::new(1, 4)]);
        assert_eq!(s.ratio(), 1.0);
    }

    #[test]
    fn snac_ratio_counts_neurons() {
        let mut s = state(CriterionKind::Snac, 4, 4);
        s.update(&[Item::new(2, 0), Item::new(2, 3)]);
        assert_eq!(s.ratio(), 0.25);
    }

    #[test]
    fn items_round_trip() {
        let mut s = state(CriterionKind::Nbc, 3, 3);
        let items = vec![Item::new(0, 5), Item::new(2, 0), Item::new(2, 4)];
        s.update(&items);
        assert_eq!(s.items().collect::<Vec<_>>(), items);
    }

    #[test]
    #[should_panic(expected = "invalid")]
    fn rejects_foreign_items() {
        state(CriterionKind::Nc, 1, 2).update(&[Item::new(0, 1)]);
    }
}
