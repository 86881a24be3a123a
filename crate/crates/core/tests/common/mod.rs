//! Independent oracles shared by the integration tests. Nothing here calls
//! the search code under test; the definitions are evaluated directly.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use oneshot_core::object::{replay, Command, ObjectSpec};
use oneshot_core::task::{OpexRecord, PendingRecord};
use oneshot_core::{ProcId, SnapshotSet, Value};
use rand::Rng;

pub fn p(i: usize) -> ProcId {
    ProcId(i)
}

pub fn set(ids: &[usize]) -> SnapshotSet {
    ids.iter().map(|&i| ProcId(i)).collect()
}

/// The well-ordering definition evaluated literally: for every position
/// `k`, the intersection of the snapshots at positions `≥ k` contains every
/// processor at a position `< k`.
pub fn well_ordered_by_definition(seq: &[(usize, BTreeSet<usize>)]) -> bool {
    (0..=seq.len()).all(|k| {
        let earlier: BTreeSet<usize> = seq[..k].iter().map(|(q, _)| *q).collect();
        let mut suffix = seq[k..].iter().map(|(_, s)| s.clone());
        let Some(first) = suffix.next() else {
            return true;
        };
        let meet = suffix.fold(first, |acc, s| acc.intersection(&s).copied().collect());
        earlier.is_subset(&meet)
    })
}

/// Every permutation of `items`, by Heap's algorithm.
pub fn permutations<T: Clone>(items: &[T]) -> Vec<Vec<T>> {
    fn heap<T: Clone>(k: usize, a: &mut Vec<T>, out: &mut Vec<Vec<T>>) {
        if k <= 1 {
            out.push(a.clone());
            return;
        }
        for i in 0..k - 1 {
            heap(k - 1, a, out);
            if k.is_multiple_of(2) {
                a.swap(i, k - 1);
            } else {
                a.swap(0, k - 1);
            }
        }
        heap(k - 1, a, out);
    }
    let mut a = items.to_vec();
    let mut out = Vec::new();
    heap(a.len(), &mut a, &mut out);
    out
}

fn as_std_set(s: SnapshotSet) -> BTreeSet<usize> {
    s.iter().map(|q| q.0).collect()
}

/// Brute-force validity: some subset of the pending processors, together
/// with all completed ones, has an arrangement whose completed subsequence
/// is well-ordered and whose replay reproduces every completed response.
pub fn brute_force_valid<S: ObjectSpec + ?Sized>(
    spec: &S,
    completed: &[OpexRecord],
    pending: &[PendingRecord],
) -> bool {
    let late: BTreeMap<ProcId, BTreeSet<usize>> = completed
        .iter()
        .map(|r| (r.proc, as_std_set(r.late_snapshot)))
        .collect();
    let commands: BTreeMap<ProcId, &Command> = completed
        .iter()
        .map(|r| (r.proc, &r.command))
        .chain(pending.iter().map(|r| (r.proc, &r.command)))
        .collect();
    let responses: BTreeMap<ProcId, &Value> = completed.iter().map(|r| (r.proc, &r.response)).collect();
    for mask in 0u32..(1 << pending.len()) {
        let mut members: Vec<ProcId> = completed.iter().map(|r| r.proc).collect();
        members.extend(
            pending
                .iter()
                .enumerate()
                .filter(|(i, _)| mask & (1 << i) != 0)
                .map(|(_, r)| r.proc),
        );
        for order in permutations(&members) {
            let timing: Vec<(usize, BTreeSet<usize>)> = order
                .iter()
                .filter_map(|q| late.get(q).map(|s| (q.0, s.clone())))
                .collect();
            if !well_ordered_by_definition(&timing) {
                continue;
            }
            let cmds: Vec<Command> = order.iter().map(|q| commands[q].clone()).collect();
            let Ok(outcomes) = replay(spec, &cmds) else {
                continue;
            };
            let matches = outcomes.iter().any(|resp| {
                order
                    .iter()
                    .zip(resp)
                    .all(|(q, got)| responses.get(q).is_none_or(|want| *want == got))
            });
            if matches {
                return true;
            }
        }
    }
    false
}

/// A random MWMR register output tuple over at most `max` processors:
/// writers of small values, readers answering `⊥` or some written value,
/// arbitrary late snapshots, some processors pending.
pub fn random_register_tuple<R: Rng>(rng: &mut R, max: usize) -> (Vec<OpexRecord>, Vec<PendingRecord>) {
    let n = rng.gen_range(1..=max);
    let writers: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.5)).collect();
    let written: Vec<i64> = (0..n).filter(|&i| writers[i]).map(|i| i as i64 + 1).collect();
    let mut completed = Vec::new();
    let mut pending = Vec::new();
    for (i, &writer) in writers.iter().enumerate() {
        let command = if writer {
            Command::Write(Value::Int(i as i64 + 1))
        } else {
            Command::Read
        };
        if rng.gen_bool(0.2) {
            pending.push(PendingRecord { proc: p(i), command });
            continue;
        }
        let response = if writer {
            Value::Ok
        } else if written.is_empty() || rng.gen_bool(0.3) {
            Value::Bot
        } else {
            Value::Int(written[rng.gen_range(0..written.len())])
        };
        let mut late = SnapshotSet::EMPTY;
        for q in 0..n {
            if q == i && rng.gen_bool(0.9) || q != i && rng.gen_bool(0.6) {
                late.insert(p(q));
            }
        }
        completed.push(OpexRecord {
            proc: p(i),
            command,
            response,
            late_snapshot: late,
        });
    }
    (completed, pending)
}
