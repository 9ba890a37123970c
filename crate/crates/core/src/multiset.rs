//! Count-preserving multisets keyed by an ordered identifier.
//!
//! A release snapshot is the multiset sum of its file snapshots; change
//! detection works on the per-identifier count difference between two of them.

use std::collections::btree_map;
use std::collections::BTreeMap;
use std::iter::FromIterator;

use serde::{Deserialize, Serialize};

/// A multiset backed by a `BTreeMap` so iteration order is stable.
///
/// Zero counts are never stored.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Multiset<K: Ord> {
    counts: BTreeMap<K, u64>,
}

impl<K: Ord> Default for Multiset<K> {
    fn default() -> Self {
        Self {
            counts: BTreeMap::new(),
        }
    }
}

impl<K: Ord + Clone> Multiset<K> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, key: K) {
        self.insert_n(key, 1);
    }

    pub fn insert_n(&mut self, key: K, n: u64) {
        if n == 0 {
            return;
        }
        *self.counts.entry(key).or_insert(0) += n;
    }

    /// Removes up to `n` instances and returns how many were removed.
    pub fn remove_n(&mut self, key: &K, n: u64) -> u64 {
        match self.counts.get_mut(key) {
            Some(c) => {
                let taken = n.min(*c);
                *c -= taken;
                if *c == 0 {
                    self.counts.remove(key);
                }
                taken
            }
            None => 0,
        }
    }

    pub fn count(&self, key: &K) -> u64 {
        self.counts.get(key).copied().unwrap_or(0)
    }

    /// Total number of instances.
    pub fn len(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Number of distinct keys.
    pub fn distinct(&self) -> usize {
        self.counts.len()
    }

    pub fn iter(&self) -> btree_map::Iter<'_, K, u64> {
        self.counts.iter()
    }

    pub fn keys(&self) -> btree_map::Keys<'_, K, u64> {
        self.counts.keys()
    }

    /// Multiset sum (`⊎`): counts add.
    pub fn sum(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.extend_sum(other);
        out
    }

    pub fn extend_sum(&mut self, other: &Self) {
        for (k, n) in other.iter() {
            self.insert_n(k.clone(), *n);
        }
    }

    /// Signed count difference `other - self` for every key present in
    /// either multiset. Keys with a zero difference are kept.
    pub fn delta_to(&self, other: &Self) -> BTreeMap<K, i64> {
        let mut out = BTreeMap::new();
        for k in self.counts.keys().chain(other.counts.keys()) {
            out.entry(k.clone())
                .or_insert_with(|| other.count(k) as i64 - self.count(k) as i64);
        }
        out
    }
}

impl<K: Ord + Clone> FromIterator<K> for Multiset<K> {
    fn from_iter<I: IntoIterator<Item = K>>(iter: I) -> Self {
        let mut m = Multiset::new();
        for k in iter {
            m.insert(k);
        }
        m
    }
}

impl<K: Ord + Clone> FromIterator<(K, u64)> for Multiset<K> {
    fn from_iter<I: IntoIterator<Item = (K, u64)>>(iter: I) -> Self {
        let mut m = Multiset::new();
        for (k, n) in iter {
            m.insert_n(k, n);
        }
        m
    }
}

impl<'a, K: Ord> IntoIterator for &'a Multiset<K> {
    type Item = (&'a K, &'a u64);
    type IntoIter = btree_map::Iter<'a, K, u64>;

    fn into_iter(self) -> Self::IntoIter {
        self.counts.iter()
    }
}

/// Convenience constructor used throughout tests: `ms(&[("A", 2), ("B", 1)])`.
pub fn ms(pairs: &[(&str, u64)]) -> Multiset<String> {
    pairs.iter().map(|(k, n)| (k.to_string(), *n)).collect()
}
