//! Write-once store of constrained-prior samples keyed by the exact
//! threshold they were drawn above.

use std::collections::BTreeMap;

use crate::lrps::WalkResult;

/// Bit pattern of a threshold log-likelihood. Keys compare equal iff the
/// bits do; there is no tolerance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MemoKey(u64);

impl MemoKey {
    pub fn new(l_min: f64) -> Self {
        MemoKey(l_min.to_bits())
    }

    pub fn from_bits(bits: u64) -> Self {
        MemoKey(bits)
    }

    pub fn bits(self) -> u64 {
        self.0
    }

    pub fn threshold(self) -> f64 {
        f64::from_bits(self.0)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MemoTable {
    entries: BTreeMap<MemoKey, WalkResult>,
    n_hits: u64,
    n_misses: u64,
}

impl MemoTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Rebuilds a table from stored parts (used when loading checkpoints).
    pub fn from_parts(entries: BTreeMap<MemoKey, WalkResult>, n_hits: u64, n_misses: u64) -> Self {
        MemoTable {
            entries,
            n_hits,
            n_misses,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn n_hits(&self) -> u64 {
        self.n_hits
    }

    pub fn n_misses(&self) -> u64 {
        self.n_misses
    }

    /// Entries in key order.
    pub fn entries(&self) -> impl Iterator<Item = (&MemoKey, &WalkResult)> {
        self.entries.iter()
    }

    /// Exact-match lookup; counts a hit or a miss.
    pub fn lookup(&mut self, l_min: f64) -> Option<&WalkResult> {
        match self.entries.get(&MemoKey::new(l_min)) {
            Some(w) => {
                self.n_hits += 1;
                Some(w)
            }
            None => {
                self.n_misses += 1;
                None
            }
        }
    }

    /// Stores `result` under `l_min` unless the key is already present, in
    /// which case the first result is kept.
    ///
    /// # Panics
    ///
    /// If the stored point lies below the threshold. Equality is allowed
    /// only because a plateau threshold is met by points on the plateau.
    pub fn put(&mut self, l_min: f64, result: WalkResult) {
        assert!(
            result.point.logl >= l_min,
            "memo put: sample log-likelihood {} is below threshold {l_min}",
            result.point.logl
        );
        self.entries.entry(MemoKey::new(l_min)).or_insert(result);
    }
}
