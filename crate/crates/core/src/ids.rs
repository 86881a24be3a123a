//! Processor identities and sets of identities.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Largest processor count a [`SnapshotSet`] can hold.
pub const MAX_PROCESSORS: usize = 64;

/// Identity of one simulated processor, `p0 ..= pn`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProcId(pub usize);

impl ProcId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for ProcId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p{}", self.0)
    }
}

impl From<usize> for ProcId {
    fn from(i: usize) -> Self {
        ProcId(i)
    }
}

/// A set of processor identities, e.g. the ids visible in a snapshot of the
/// `Id` array.
///
/// Stored as a bitmask; serialized as a sorted list of indices.
#[derive(Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "Vec<ProcId>", try_from = "Vec<ProcId>")]
pub struct SnapshotSet(u64);

impl SnapshotSet {
    pub const EMPTY: SnapshotSet = SnapshotSet(0);

    pub fn singleton(p: ProcId) -> Self {
        let mut s = Self::EMPTY;
        s.insert(p);
        s
    }

    pub fn from_bits(bits: u64) -> Self {
        SnapshotSet(bits)
    }

    pub fn bits(self) -> u64 {
        self.0
    }

    pub fn insert(&mut self, p: ProcId) {
        assert!(p.0 < MAX_PROCESSORS, "processor {p} exceeds {MAX_PROCESSORS}");
        self.0 |= 1 << p.0;
    }

    pub fn remove(&mut self, p: ProcId) {
        if p.0 < MAX_PROCESSORS {
            self.0 &= !(1 << p.0);
        }
    }

    pub fn contains(self, p: ProcId) -> bool {
        p.0 < MAX_PROCESSORS && self.0 & (1 << p.0) != 0
    }

    pub fn is_superset(self, other: SnapshotSet) -> bool {
        other.0 & !self.0 == 0
    }

    pub fn is_subset(self, other: SnapshotSet) -> bool {
        other.is_superset(self)
    }

    pub fn union(self, other: SnapshotSet) -> SnapshotSet {
        SnapshotSet(self.0 | other.0)
    }

    pub fn intersection(self, other: SnapshotSet) -> SnapshotSet {
        SnapshotSet(self.0 & other.0)
    }

    pub fn difference(self, other: SnapshotSet) -> SnapshotSet {
        SnapshotSet(self.0 & !other.0)
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    /// Members in ascending order.
    pub fn iter(self) -> impl Iterator<Item = ProcId> {
        let bits = self.0;
        (0..MAX_PROCESSORS)
            .filter(move |i| bits & (1 << i) != 0)
            .map(ProcId)
    }
}

impl FromIterator<ProcId> for SnapshotSet {
    fn from_iter<I: IntoIterator<Item = ProcId>>(iter: I) -> Self {
        let mut s = SnapshotSet::EMPTY;
        for p in iter {
            s.insert(p);
        }
        s
    }
}

impl From<SnapshotSet> for Vec<ProcId> {
    fn from(s: SnapshotSet) -> Self {
        s.iter().collect()
    }
}

impl TryFrom<Vec<ProcId>> for SnapshotSet {
    type Error = String;

    fn try_from(v: Vec<ProcId>) -> Result<Self, Self::Error> {
        if let Some(p) = v.iter().find(|p| p.0 >= MAX_PROCESSORS) {
            return Err(format!("processor {p} exceeds {MAX_PROCESSORS}"));
        }
        Ok(v.into_iter().collect())
    }
}

impl fmt::Debug for SnapshotSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl fmt::Display for SnapshotSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (k, p) in self.iter().enumerate() {
            if k > 0 {
                f.write_str(",")?;
            }
            write!(f, "{p}")?;
        }
        f.write_str("}")
    }
}
