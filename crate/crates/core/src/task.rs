//! One-shot objects as tasks.
//!
//! Each processor of the derived task carries its object command as its
//! input and outputs `(response, late-snapshot)`. An output tuple is valid
//! iff some ordering of the processors is well-ordered with respect to the
//! late snapshots and replaying the commands in that order through the
//! object's state machine yields the recorded responses.
//!
//! Processors that started but never output may be *adopted*: inserted
//! anywhere in the ordering with an unconstrained response and no snapshot
//! obligation. This is the usual completion of pending operations in
//! linearizability checking.

use std::collections::{BTreeMap, BTreeSet};
use std::ops::ControlFlow;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::{ProcId, SnapshotSet};
use crate::object::{Command, ObjectSpec, SpecError};
use crate::ordering::{check_well_ordering, consistent_with, for_each_well_ordered, HappenedBefore};
use crate::ordering::DEFAULT_RECORD_BOUND;
use crate::value::Value;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpexRecord {
    pub proc: ProcId,
    pub command: Command,
    pub response: Value,
    pub late_snapshot: SnapshotSet,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PendingRecord {
    pub proc: ProcId,
    pub command: Command,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub valid: bool,
    /// The linearization, including adopted pending processors.
    pub witness: Vec<ProcId>,
    /// Pending processors placed in the witness.
    pub adopted: Vec<ProcId>,
    pub violation: Option<String>,
}

impl Verdict {
    fn invalid(violation: String) -> Self {
        Verdict {
            valid: false,
            witness: Vec::new(),
            adopted: Vec::new(),
            violation: Some(violation),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TaskError {
    #[error("{count} records exceed the validator bound of {bound}")]
    TooManyRecords { count: usize, bound: usize },
    #[error("processor {0} appears more than once in the output tuple")]
    DuplicateProc(ProcId),
    #[error(transparent)]
    Spec(#[from] SpecError),
}

/// Validates a completed/pending output tuple against `spec`.
pub fn validate_output_tuple<S: ObjectSpec + ?Sized>(
    spec: &S,
    completed: &[OpexRecord],
    pending: &[PendingRecord],
) -> Result<Verdict, TaskError> {
    search(spec, completed, pending, None, DEFAULT_RECORD_BOUND)
}

/// As [`validate_output_tuple`], additionally requiring the witness to be a
/// linearization of `hb`.
pub fn validate_consistent_with<S: ObjectSpec + ?Sized>(
    spec: &S,
    completed: &[OpexRecord],
    pending: &[PendingRecord],
    hb: &HappenedBefore,
) -> Result<Verdict, TaskError> {
    search(spec, completed, pending, Some(hb), DEFAULT_RECORD_BOUND)
}

pub fn validate_with_bound<S: ObjectSpec + ?Sized>(
    spec: &S,
    completed: &[OpexRecord],
    pending: &[PendingRecord],
    bound: usize,
) -> Result<Verdict, TaskError> {
    search(spec, completed, pending, None, bound)
}

struct Search<'a, S: ?Sized> {
    spec: &'a S,
    completed: &'a [OpexRecord],
    pending: &'a [PendingRecord],
    hb: Option<&'a HappenedBefore>,
    by_proc: BTreeMap<ProcId, usize>,
}

fn search<S: ObjectSpec + ?Sized>(
    spec: &S,
    completed: &[OpexRecord],
    pending: &[PendingRecord],
    hb: Option<&HappenedBefore>,
    bound: usize,
) -> Result<Verdict, TaskError> {
    let count = completed.len() + pending.len();
    if count > bound {
        return Err(TaskError::TooManyRecords { count, bound });
    }
    let mut seen = BTreeSet::new();
    for p in completed.iter().map(|r| r.proc).chain(pending.iter().map(|r| r.proc)) {
        if !seen.insert(p) {
            return Err(TaskError::DuplicateProc(p));
        }
    }

    let s = Search {
        spec,
        completed,
        pending,
        hb,
        by_proc: completed.iter().enumerate().map(|(i, r)| (r.proc, i)).collect(),
    };
    let pairs: Vec<(ProcId, SnapshotSet)> =
        completed.iter().map(|r| (r.proc, r.late_snapshot)).collect();

    let mut candidates = 0usize;
    let mut hb_rejected = 0usize;
    let mut first_order: Option<Vec<ProcId>> = None;
    let mut found: Option<Vec<ProcId>> = None;
    let mut error: Option<TaskError> = None;

    let _ = for_each_well_ordered(&pairs, bound, |order| {
        candidates += 1;
        if let Some(hb) = hb {
            if !consistent_with(order, hb) {
                hb_rejected += 1;
                return ControlFlow::Continue(());
            }
        }
        if first_order.is_none() {
            first_order = Some(order.to_vec());
        }
        let idx: Vec<usize> = order.iter().map(|p| s.by_proc[p]).collect();
        let mut seq = Vec::with_capacity(count);
        match s.forward(&idx, 0, &spec.initial_state(), 0, &mut seq) {
            Ok(true) => {
                found = Some(seq);
                ControlFlow::Break(())
            }
            Ok(false) => ControlFlow::Continue(()),
            Err(e) => {
                error = Some(e);
                ControlFlow::Break(())
            }
        }
    })
    .map_err(|e| TaskError::TooManyRecords {
        count: e.count,
        bound: e.bound,
    })?;
    if let Some(e) = error {
        return Err(e);
    }

    let Some(witness) = found else {
        let violation = if candidates == 0 {
            format!(
                "well-ordering: no arrangement of the {} completed records is well-ordered by their late snapshots",
                completed.len()
            )
        } else if first_order.is_none() {
            format!(
                "linearization-consistency: all {candidates} well-ordered arrangements invert the happened-before relation"
            )
        } else {
            let order = first_order.expect("checked");
            format!(
                "replay: none of the {} well-ordered arrangements reproduces the recorded responses{}; e.g. {}",
                candidates - hb_rejected,
                if pending.is_empty() { "" } else { " (with any adoption of pending operations)" },
                s.explain_mismatch(&order)?
            )
        };
        return Ok(Verdict::invalid(violation));
    };

    let completed_procs: BTreeSet<ProcId> = completed.iter().map(|r| r.proc).collect();
    let adopted: Vec<ProcId> = witness
        .iter()
        .copied()
        .filter(|p| !completed_procs.contains(p))
        .collect();
    assert!(
        witness_holds(spec, completed, pending, &witness)?,
        "validator produced an unsound witness {witness:?}"
    );
    Ok(Verdict {
        valid: true,
        witness,
        adopted,
        violation: None,
    })
}

impl<S: ObjectSpec + ?Sized> Search<'_, S> {
    /// Extends `seq` following the completed `order`, optionally inserting
    /// pending operations before each completed one.
    fn forward(
        &self,
        order: &[usize],
        at: usize,
        state: &Value,
        used_pending: u64,
        seq: &mut Vec<ProcId>,
    ) -> Result<bool, TaskError> {
        if at == order.len() {
            return Ok(true);
        }
        let rec = &self.completed[order[at]];
        let placeable = self.hb.is_none_or(|hb| {
            self.pending
                .iter()
                .enumerate()
                .all(|(j, pr)| used_pending & (1 << j) == 0 || !hb.precedes(rec.proc, pr.proc))
        });
        if placeable {
            for (next, response) in self.spec.transition(state, &rec.command)? {
                if response == rec.response {
                    seq.push(rec.proc);
                    if self.forward(order, at + 1, &next, used_pending, seq)? {
                        return Ok(true);
                    }
                    seq.pop();
                }
            }
        }
        for (j, pr) in self.pending.iter().enumerate() {
            if used_pending & (1 << j) != 0 {
                continue;
            }
            if let Some(hb) = self.hb {
                let blocked = order[at..]
                    .iter()
                    .any(|&c| hb.precedes(self.completed[c].proc, pr.proc));
                if blocked {
                    continue;
                }
            }
            for (next, _) in self.spec.transition(state, &pr.command)? {
                seq.push(pr.proc);
                if self.forward(order, at, &next, used_pending | (1 << j), seq)? {
                    return Ok(true);
                }
                seq.pop();
            }
        }
        Ok(false)
    }

    fn explain_mismatch(&self, order: &[ProcId]) -> Result<String, TaskError> {
        let mut state = self.spec.initial_state();
        let shown: Vec<String> = order.iter().map(ToString::to_string).collect();
        for p in order {
            let rec = &self.completed[self.by_proc[p]];
            let outcomes = self.spec.transition(&state, &rec.command)?;
            match outcomes.iter().find(|(_, r)| *r == rec.response) {
                Some((next, _)) => state = next.clone(),
                None => {
                    let (_, got) = &outcomes[0];
                    return Ok(format!(
                        "[{}]: {} {} replays to {}, recorded {}",
                        shown.join(", "),
                        rec.proc,
                        rec.command,
                        got,
                        rec.response
                    ));
                }
            }
        }
        Ok(format!("[{}] replays correctly only with adoptions that violate timing", shown.join(", ")))
    }
}

/// True iff `witness` orders every completed record (plus some pending
/// ones), its completed subsequence is well-ordered, and some replay of the
/// witness commands reproduces every completed response.
pub fn witness_holds<S: ObjectSpec + ?Sized>(
    spec: &S,
    completed: &[OpexRecord],
    pending: &[PendingRecord],
    witness: &[ProcId],
) -> Result<bool, SpecError> {
    let by_proc: BTreeMap<ProcId, &OpexRecord> = completed.iter().map(|r| (r.proc, r)).collect();
    let pend: BTreeMap<ProcId, &PendingRecord> = pending.iter().map(|r| (r.proc, r)).collect();
    let distinct: BTreeSet<&ProcId> = witness.iter().collect();
    if distinct.len() != witness.len() || completed.iter().any(|r| !distinct.contains(&r.proc)) {
        return Ok(false);
    }
    let mut commands = Vec::with_capacity(witness.len());
    let mut expected: Vec<Option<&Value>> = Vec::with_capacity(witness.len());
    let mut pairs = Vec::new();
    for p in witness {
        if let Some(r) = by_proc.get(p) {
            commands.push(r.command.clone());
            expected.push(Some(&r.response));
            pairs.push((r.proc, r.late_snapshot));
        } else if let Some(r) = pend.get(p) {
            commands.push(r.command.clone());
            expected.push(None);
        } else {
            return Ok(false);
        }
    }
    if !check_well_ordering(&pairs) {
        return Ok(false);
    }
    let runs = crate::object::replay(spec, &commands)?;
    Ok(runs.iter().any(|responses| {
        responses
            .iter()
            .zip(&expected)
            .all(|(got, want)| want.is_none_or(|w| w == got))
    }))
}

/// The task derived from a one-shot object: each processor's input is its
/// fixed command.
pub struct ObjectTask<S> {
    pub spec: S,
    pub inputs: BTreeMap<ProcId, Command>,
}

impl<S: ObjectSpec> ObjectTask<S> {
    pub fn new(spec: S, inputs: BTreeMap<ProcId, Command>) -> Self {
        ObjectTask { spec, inputs }
    }

    /// Validates outputs `(response, late-snapshot)` of the processors that
    /// finished, treating `started` processors without output as pending.
    pub fn validate(
        &self,
        outputs: &BTreeMap<ProcId, (Value, SnapshotSet)>,
        started: &BTreeSet<ProcId>,
    ) -> Result<Verdict, TaskError> {
        let (completed, pending) = self.records(outputs, started);
        validate_output_tuple(&self.spec, &completed, &pending)
    }

    pub fn records(
        &self,
        outputs: &BTreeMap<ProcId, (Value, SnapshotSet)>,
        started: &BTreeSet<ProcId>,
    ) -> (Vec<OpexRecord>, Vec<PendingRecord>) {
        let completed = outputs
            .iter()
            .filter_map(|(p, (response, late))| {
                Some(OpexRecord {
                    proc: *p,
                    command: self.inputs.get(p)?.clone(),
                    response: response.clone(),
                    late_snapshot: *late,
                })
            })
            .collect();
        let pending = started
            .iter()
            .filter(|p| !outputs.contains_key(p))
            .filter_map(|p| {
                Some(PendingRecord {
                    proc: *p,
                    command: self.inputs.get(p)?.clone(),
                })
            })
            .collect();
        (completed, pending)
    }
}

/// Adaptive renaming: `k` participants output distinct names in `1..=2k-1`.
pub fn renaming_task_validator(outputs: &[(ProcId, i64)]) -> bool {
    let k = outputs.len() as i64;
    if k == 0 {
        return false;
    }
    let names: BTreeSet<i64> = outputs.iter().map(|&(_, n)| n).collect();
    names.len() == outputs.len() && names.iter().all(|&n| (1..=2 * k - 1).contains(&n))
}

/// Ordered adaptive renaming: a renaming output whose snapshots, sorted by
/// name, are well-ordered.
pub fn ordered_renaming_validator(seq: &[(ProcId, i64, SnapshotSet)]) -> bool {
    let names: Vec<(ProcId, i64)> = seq.iter().map(|&(p, n, _)| (p, n)).collect();
    if !renaming_task_validator(&names) {
        return false;
    }
    let mut sorted = seq.to_vec();
    sorted.sort_by_key(|&(_, n, _)| n);
    let strictly_increasing = sorted.windows(2).all(|w| w[0].1 < w[1].1);
    let pairs: Vec<(ProcId, SnapshotSet)> = sorted.iter().map(|&(p, _, s)| (p, s)).collect();
    strictly_increasing && check_well_ordering(&pairs)
}

/// SWAP task: edges `invoker → returned` form one simple directed path over
/// all participants, ending at the unique processor that returned `⊥`.
pub fn swap_task_validator(outputs: &[(ProcId, Option<ProcId>)]) -> bool {
    let participants: BTreeSet<ProcId> = outputs.iter().map(|&(p, _)| p).collect();
    if participants.len() != outputs.len() || outputs.is_empty() {
        return false;
    }
    if outputs.iter().filter(|(_, r)| r.is_none()).count() != 1 {
        return false;
    }
    let returned: Vec<ProcId> = outputs.iter().filter_map(|&(_, r)| r).collect();
    let distinct: BTreeSet<ProcId> = returned.iter().copied().collect();
    if distinct.len() != returned.len() || !distinct.is_subset(&participants) {
        return false;
    }
    // the head is the one participant nobody returned
    let next: BTreeMap<ProcId, Option<ProcId>> = outputs.iter().copied().collect();
    let Some(mut at) = participants.difference(&distinct).next().copied() else {
        return false;
    };
    let mut visited = BTreeSet::from([at]);
    while let Some(Some(to)) = next.get(&at) {
        if !visited.insert(*to) {
            return false;
        }
        at = *to;
    }
    visited.len() == participants.len()
}
