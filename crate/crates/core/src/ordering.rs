//! Timing relations between operation executions.
//!
//! A sequence of `(processor, snapshot)` pairs is *well-ordered* when, for
//! every position `k`, the intersection of the snapshots at positions `≥ k`
//! contains every processor at a position `< k`. Equivalently: each
//! snapshot contains every processor placed before it. That pairwise form
//! drives the backward generation in [`for_each_well_ordered`]: a record may
//! be placed last among a remaining set `R` iff its snapshot contains the
//! other members of `R`.

use std::collections::BTreeSet;
use std::ops::ControlFlow;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::{ProcId, SnapshotSet};
use crate::sim::Trace;

/// Default bound on the number of records a permutation search accepts.
pub const DEFAULT_RECORD_BOUND: usize = 8;

/// The interval of one processor's operation execution, from its first
/// shared step to its output step (absent if it never output).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpexInterval {
    pub proc: ProcId,
    pub start: usize,
    pub end: Option<usize>,
}

/// Strict partial order `i → j`: `i` output before `j` took its first step.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct HappenedBefore {
    pub carrier: BTreeSet<ProcId>,
    pub pairs: BTreeSet<(ProcId, ProcId)>,
}

impl HappenedBefore {
    pub fn from_intervals<'a, I: IntoIterator<Item = &'a OpexInterval>>(intervals: I) -> Self {
        let intervals: Vec<&OpexInterval> = intervals.into_iter().collect();
        let mut hb = HappenedBefore {
            carrier: intervals.iter().map(|iv| iv.proc).collect(),
            ..Default::default()
        };
        for a in &intervals {
            let Some(end) = a.end else { continue };
            for b in &intervals {
                if end < b.start {
                    hb.pairs.insert((a.proc, b.proc));
                }
            }
        }
        hb
    }

    pub fn precedes(&self, a: ProcId, b: ProcId) -> bool {
        self.pairs.contains(&(a, b))
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{count} records exceed the search bound of {bound}")]
pub struct TooManyRecords {
    pub count: usize,
    pub bound: usize,
}

pub fn happened_before(trace: &Trace) -> HappenedBefore {
    HappenedBefore::from_intervals(trace.intervals.values())
}

/// Direct check of the well-ordering predicate.
pub fn check_well_ordering(seq: &[(ProcId, SnapshotSet)]) -> bool {
    let mut before = SnapshotSet::EMPTY;
    for &(p, snap) in seq {
        if !snap.is_superset(before) {
            return false;
        }
        before.insert(p);
    }
    true
}

/// Visits every well-ordered permutation of `records`, generated from the
/// back. Among records eligible for the last position, higher processor ids
/// are tried first, so the first permutation visited is the canonical
/// witness.
pub fn for_each_well_ordered<F>(
    records: &[(ProcId, SnapshotSet)],
    bound: usize,
    mut visit: F,
) -> Result<ControlFlow<()>, TooManyRecords>
where
    F: FnMut(&[ProcId]) -> ControlFlow<()>,
{
    if records.len() > bound {
        return Err(TooManyRecords {
            count: records.len(),
            bound,
        });
    }
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.sort_by(|&a, &b| records[b].0.cmp(&records[a].0));
    let mut suffix: Vec<ProcId> = Vec::with_capacity(records.len());
    let mut used = vec![false; records.len()];
    let remaining: SnapshotSet = records.iter().map(|r| r.0).collect();
    Ok(backward(records, &order, remaining, &mut used, &mut suffix, &mut visit))
}

fn backward<F>(
    records: &[(ProcId, SnapshotSet)],
    order: &[usize],
    remaining: SnapshotSet,
    used: &mut [bool],
    suffix: &mut Vec<ProcId>,
    visit: &mut F,
) -> ControlFlow<()>
where
    F: FnMut(&[ProcId]) -> ControlFlow<()>,
{
    if suffix.len() == records.len() {
        let seq: Vec<ProcId> = suffix.iter().rev().copied().collect();
        return visit(&seq);
    }
    for &i in order {
        if used[i] {
            continue;
        }
        let (p, snap) = records[i];
        let mut others = remaining;
        others.remove(p);
        if !snap.is_superset(others) {
            continue;
        }
        used[i] = true;
        suffix.push(p);
        let flow = backward(records, order, others, used, suffix, visit);
        suffix.pop();
        used[i] = false;
        flow?;
    }
    ControlFlow::Continue(())
}

/// All permutations of `records` passing [`check_well_ordering`], in the
/// order of [`for_each_well_ordered`].
pub fn well_ordered_permutations(
    records: &[(ProcId, SnapshotSet)],
) -> Result<Vec<Vec<ProcId>>, TooManyRecords> {
    let mut out = Vec::new();
    let _ = for_each_well_ordered(records, DEFAULT_RECORD_BOUND, |seq| {
        out.push(seq.to_vec());
        ControlFlow::Continue(())
    })?;
    Ok(out)
}

/// True iff no pair of `hb` appears inverted in `seq`. Pairs naming
/// processors absent from `seq` impose nothing.
pub fn consistent_with(seq: &[ProcId], hb: &HappenedBefore) -> bool {
    hb.pairs.iter().all(|&(a, b)| {
        match (
            seq.iter().position(|&p| p == a),
            seq.iter().position(|&p| p == b),
        ) {
            (Some(i), Some(j)) => i < j,
            _ => true,
        }
    })
}
