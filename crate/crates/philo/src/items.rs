//! Item subsets of `[m]` as 64-bit masks.
//!
//! Items are indexed `0..m` internally and `1..=m` in file formats. The
//! canonical item order used by prefix marginals is the index order.

/// Maximum number of items supported by the bitmask representation.
pub const MAX_ITEMS: usize = 64;

/// A subset of the item universe, stored as a bitmask.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct ItemSet(u64);

impl ItemSet {
    pub const EMPTY: ItemSet = ItemSet(0);

    pub fn from_mask(mask: u64) -> Self {
        ItemSet(mask)
    }

    pub fn mask(self) -> u64 {
        self.0
    }

    /// The full universe `{0, .., m-1}`.
    pub fn full(m: usize) -> Self {
        assert!(m <= MAX_ITEMS, "item universe capped at {MAX_ITEMS}");
        if m == MAX_ITEMS {
            ItemSet(u64::MAX)
        } else {
            ItemSet((1u64 << m) - 1)
        }
    }

    pub fn singleton(i: usize) -> Self {
        assert!(i < MAX_ITEMS);
        ItemSet(1u64 << i)
    }

    /// Items strictly below `i`, i.e. the prefix `{0, .., i-1}`.
    pub fn prefix(i: usize) -> Self {
        Self::full(i)
    }

    pub fn from_items<I: IntoIterator<Item = usize>>(items: I) -> Self {
        let mut mask = 0u64;
        for i in items {
            assert!(i < MAX_ITEMS);
            mask |= 1u64 << i;
        }
        ItemSet(mask)
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn contains(self, i: usize) -> bool {
        i < MAX_ITEMS && self.0 & (1u64 << i) != 0
    }

    pub fn insert(&mut self, i: usize) {
        assert!(i < MAX_ITEMS);
        self.0 |= 1u64 << i;
    }

    pub fn with(self, i: usize) -> Self {
        assert!(i < MAX_ITEMS);
        ItemSet(self.0 | (1u64 << i))
    }

    pub fn union(self, other: ItemSet) -> Self {
        ItemSet(self.0 | other.0)
    }

    pub fn intersect(self, other: ItemSet) -> Self {
        ItemSet(self.0 & other.0)
    }

    pub fn minus(self, other: ItemSet) -> Self {
        ItemSet(self.0 & !other.0)
    }

    pub fn is_subset_of(self, other: ItemSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn is_disjoint(self, other: ItemSet) -> bool {
        self.0 & other.0 == 0
    }

    /// Smallest set bit, if any.
    pub fn min_item(self) -> Option<usize> {
        if self.0 == 0 {
            None
        } else {
            Some(self.0.trailing_zeros() as usize)
        }
    }

    /// Ascending iterator over member indices.
    pub fn iter(self) -> ItemIter {
        ItemIter(self.0)
    }

    /// Iterates all subsets of `self`, including the empty set and `self`.
    pub fn subsets(self) -> SubsetIter {
        SubsetIter { of: self.0, cur: self.0, done: false }
    }

    /// Lexicographic order on the ascending item lists. The smallest element
    /// of the symmetric difference decides.
    pub fn cmp_lex(self, other: ItemSet) -> std::cmp::Ordering {
        use std::cmp::Ordering;
        let diff = self.0 ^ other.0;
        if diff == 0 {
            return Ordering::Equal;
        }
        let low = diff & diff.wrapping_neg();
        if self.0 & low != 0 {
            Ordering::Less
        } else {
            Ordering::Greater
        }
    }

    /// 1-based sorted item list, the file-format encoding.
    pub fn to_one_based(self) -> Vec<usize> {
        self.iter().map(|i| i + 1).collect()
    }

    /// Parses a 1-based item list; items must lie in `1..=m`.
    pub fn from_one_based(items: &[usize], m: usize) -> Result<Self, String> {
        let mut set = ItemSet::EMPTY;
        for &i in items {
            if i == 0 || i > m {
                return Err(format!("item {i} out of range 1..={m}"));
            }
            set.insert(i - 1);
        }
        Ok(set)
    }
}

impl std::fmt::Debug for ItemSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

/// Serialized as the 1-based sorted item list, matching the file formats.
impl serde::Serialize for ItemSet {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_seq(self.iter().map(|i| i + 1))
    }
}

pub struct ItemIter(u64);

impl Iterator for ItemIter {
    type Item = usize;

    fn next(&mut self) -> Option<usize> {
        if self.0 == 0 {
            None
        } else {
            let i = self.0.trailing_zeros() as usize;
            self.0 &= self.0 - 1;
            Some(i)
        }
    }
}

/// Descending submask enumeration: `self, .., empty`.
pub struct SubsetIter {
    of: u64,
    cur: u64,
    done: bool,
}

impl Iterator for SubsetIter {
    type Item = ItemSet;

    fn next(&mut self) -> Option<ItemSet> {
        if self.done {
            return None;
        }
        let out = ItemSet(self.cur);
        if self.cur == 0 {
            self.done = true;
        } else {
            self.cur = (self.cur - 1) & self.of;
        }
        Some(out)
    }
}
