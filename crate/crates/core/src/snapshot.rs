//! Atomic snapshots over SWMR arrays.
//!
//! Two realizations share one driver interface ([`SnapOp`]):
//!
//! * [`SnapshotImpl::Primitive`]: a scan is a single atomic step and an
//!   update is a single write.
//! * [`SnapshotImpl::Collect`]: the unbounded double-collect construction
//!   built from plain reads and writes. Each cell holds
//!   `(value, seq, embedded-scan)`; an update first scans, then writes its
//!   value tagged with the next sequence number and that scan. A scan
//!   repeats collects until two consecutive ones agree on every sequence
//!   number, or returns the embedded scan of a processor seen moving twice.
//!
//! [`verify_snapshot_linearizable`] checks a finished trace: every scan's
//! view must equal the array contents at some step inside the scan's
//! interval.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::ids::{ProcId, SnapshotSet};
use crate::sim::{ArrayName, OpKind, Port, Schedule, SimError, Trace};
use crate::value::Value;

/// A full copy of one array at a consistent cut.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SnapshotView {
    pub array: ArrayName,
    pub cells: Vec<Value>,
    /// The trace step at which the view is linearized.
    pub cut_index: usize,
}

impl SnapshotView {
    /// Ids posted in the view (cells holding `Proc` values).
    pub fn posted(&self) -> SnapshotSet {
        posted_ids(&self.cells)
    }
}

/// The set of processors whose cell holds a posted id.
pub fn posted_ids(cells: &[Value]) -> SnapshotSet {
    cells
        .iter()
        .filter_map(|c| match c {
            Value::Proc(p) => Some(*p),
            _ => None,
        })
        .collect()
}

/// One-step atomic snapshot: the contents of `array` at the current step.
pub fn atomic_snap(port: &mut Port<'_>, array: &str) -> Result<SnapshotView, SimError> {
    port.snapshot(array)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SnapshotImpl {
    #[default]
    Primitive,
    Collect,
}

impl SnapshotImpl {
    /// Worst-case shared steps for one scan among `processors` processors.
    pub fn max_scan_steps(self, processors: usize) -> usize {
        match self {
            SnapshotImpl::Primitive => 1,
            // at most one failed comparison per other processor before one
            // of them is seen moving twice
            SnapshotImpl::Collect => (processors + 1) * processors,
        }
    }

    pub fn max_update_steps(self, processors: usize) -> usize {
        match self {
            SnapshotImpl::Primitive => 1,
            SnapshotImpl::Collect => self.max_scan_steps(processors) + 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SnapRequest {
    /// Write the caller's own id into its cell.
    Post(ArrayName),
    Update(ArrayName, Value),
    Scan(ArrayName),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SnapOutcome {
    Updated,
    Scanned(Vec<Value>),
}

/// An in-flight snapshot-object operation, advanced one shared step per call.
#[derive(Clone, Debug)]
pub struct SnapOp {
    state: OpState,
}

#[derive(Clone, Debug)]
enum OpState {
    Atomic(SnapRequest),
    Scan(CollectScan),
    UpdateScan {
        kind: OpKind,
        value: Value,
        scan: CollectScan,
    },
    UpdateWrite {
        kind: OpKind,
        array: ArrayName,
        value: Value,
        seq: i64,
        view: Vec<Value>,
    },
    Finished,
}

impl SnapOp {
    pub fn new(imp: SnapshotImpl, request: SnapRequest) -> Self {
        let state = match imp {
            SnapshotImpl::Primitive => OpState::Atomic(request),
            SnapshotImpl::Collect => match request {
                SnapRequest::Scan(array) => OpState::Scan(CollectScan::new(array, false)),
                SnapRequest::Post(array) => OpState::UpdateScan {
                    kind: OpKind::Post,
                    value: Value::Bot,
                    scan: CollectScan::new(array, true),
                },
                SnapRequest::Update(array, value) => OpState::UpdateScan {
                    kind: OpKind::Write,
                    value,
                    scan: CollectScan::new(array, true),
                },
            },
        };
        SnapOp { state }
    }

    /// Performs exactly one shared operation; returns the outcome once the
    /// operation has completed.
    pub fn advance(&mut self, port: &mut Port<'_>) -> Result<Option<SnapOutcome>, SimError> {
        let state = std::mem::replace(&mut self.state, OpState::Finished);
        let (next, outcome) = match state {
            OpState::Atomic(req) => {
                let outcome = match req {
                    SnapRequest::Post(array) => {
                        port.post(array)?;
                        SnapOutcome::Updated
                    }
                    SnapRequest::Update(array, value) => {
                        let me = port.id().index();
                        port.write(array, me, value)?;
                        SnapOutcome::Updated
                    }
                    SnapRequest::Scan(array) => SnapOutcome::Scanned(atomic_snap(port, array)?.cells),
                };
                (OpState::Finished, Some(outcome))
            }
            OpState::Scan(mut scan) => match scan.advance(port)? {
                Some(view) => (OpState::Finished, Some(SnapOutcome::Scanned(view))),
                None => (OpState::Scan(scan), None),
            },
            OpState::UpdateScan {
                kind,
                value,
                mut scan,
            } => match scan.advance(port)? {
                Some(view) => (
                    OpState::UpdateWrite {
                        kind,
                        array: scan.array,
                        value,
                        seq: scan.own_seq + 1,
                        view,
                    },
                    None,
                ),
                None => (OpState::UpdateScan { kind, value, scan }, None),
            },
            OpState::UpdateWrite {
                kind,
                array,
                value,
                seq,
                view,
            } => {
                let me = port.id();
                let logical = match kind {
                    OpKind::Post => Value::Proc(me),
                    _ => value,
                };
                let physical = Value::Tuple(vec![logical.clone(), Value::Int(seq), Value::Tuple(view)]);
                port.write_tagged(kind, array, me.index(), physical, logical)?;
                (OpState::Finished, Some(SnapOutcome::Updated))
            }
            OpState::Finished => panic!("snapshot operation advanced after completion"),
        };
        self.state = next;
        Ok(outcome)
    }
}

/// Sequence number of a tagged cell; `⊥` is sequence 0.
fn cell_seq(cell: &Value) -> i64 {
    match cell {
        Value::Tuple(parts) if parts.len() == 3 => match parts[1] {
            Value::Int(s) => s,
            _ => 0,
        },
        _ => 0,
    }
}

fn cell_value(cell: &Value) -> Value {
    match cell {
        Value::Tuple(parts) if parts.len() == 3 => parts[0].clone(),
        other => other.clone(),
    }
}

fn cell_embedded(cell: &Value) -> Vec<Value> {
    match cell {
        Value::Tuple(parts) if parts.len() == 3 => match &parts[2] {
            Value::Tuple(view) => view.clone(),
            _ => Vec::new(),
        },
        _ => Vec::new(),
    }
}

#[derive(Clone, Debug)]
struct CollectScan {
    array: ArrayName,
    embedded: bool,
    start: Option<usize>,
    prev: Option<Vec<Value>>,
    cur: Vec<Value>,
    moved: Vec<bool>,
    own_seq: i64,
}

impl CollectScan {
    fn new(array: ArrayName, embedded: bool) -> Self {
        CollectScan {
            array,
            embedded,
            start: None,
            prev: None,
            cur: Vec::new(),
            moved: Vec::new(),
            own_seq: 0,
        }
    }

    fn advance(&mut self, port: &mut Port<'_>) -> Result<Option<Vec<Value>>, SimError> {
        let n = port.processors();
        if self.start.is_none() {
            self.start = Some(port.step_index());
            self.moved = vec![false; n];
        }
        let cell = port.read(self.array, self.cur.len())?;
        if self.cur.len() == port.id().index() {
            self.own_seq = cell_seq(&cell);
        }
        self.cur.push(cell);
        if self.cur.len() < n {
            return Ok(None);
        }
        let cur = std::mem::take(&mut self.cur);
        let Some(prev) = self.prev.take() else {
            self.prev = Some(cur);
            return Ok(None);
        };
        let movers: Vec<usize> = (0..n)
            .filter(|&j| cell_seq(&prev[j]) != cell_seq(&cur[j]))
            .collect();
        let view = if movers.is_empty() {
            Some(cur.iter().map(cell_value).collect())
        } else if let Some(&j) = movers.iter().find(|&&j| self.moved[j]) {
            Some(cell_embedded(&cur[j]))
        } else {
            for j in movers {
                self.moved[j] = true;
            }
            None
        };
        match view {
            Some(view) => {
                let start = self.start.expect("set on first read");
                port.complete_scan(self.array, start, view.clone(), self.embedded)?;
                Ok(Some(view))
            }
            None => {
                self.prev = Some(cur);
                Ok(None)
            }
        }
    }
}

fn logical_initial(trace: &Trace, array: &str) -> Vec<Value> {
    trace
        .initial
        .array(array)
        .map(|cells| cells.iter().map(cell_value).collect())
        .unwrap_or_default()
}

/// Assigns each scan of `trace` (in `trace.scans` order) the earliest step
/// inside its interval at which the array contents equal its view, or
/// `None` if some scan admits no such step.
pub fn linearize_scans(trace: &Trace) -> Option<Vec<usize>> {
    let mut updates_by_array: BTreeMap<&str, Vec<(usize, usize, &Value)>> = BTreeMap::new();
    for u in &trace.updates {
        updates_by_array
            .entry(u.array)
            .or_default()
            .push((u.step, u.proc.index(), &u.value));
    }
    let mut cuts = Vec::with_capacity(trace.scans.len());
    for scan in &trace.scans {
        let mut contents = logical_initial(trace, scan.array);
        if contents.len() != scan.view.len() {
            return None;
        }
        let updates = updates_by_array.get(scan.array).map(Vec::as_slice).unwrap_or(&[]);
        let mut pending = updates.iter().peekable();
        while let Some(&&(step, cell, value)) = pending.peek() {
            if step > scan.start {
                break;
            }
            contents[cell] = value.clone();
            pending.next();
        }
        let mut cut = (contents == scan.view).then_some(scan.start);
        while cut.is_none() {
            match pending.next() {
                Some(&(step, cell, value)) if step <= scan.end => {
                    contents[cell] = value.clone();
                    if contents == scan.view {
                        cut = Some(step);
                    }
                }
                _ => break,
            }
        }
        cuts.push(cut?);
    }
    Some(cuts)
}

/// True iff every scan in the trace returned the array contents at some step
/// inside its own interval.
pub fn verify_snapshot_linearizable(trace: &Trace) -> bool {
    linearize_scans(trace).is_some()
}

/// Orders the snapshot-object operations of `trace` by their linearization
/// points (updates at their write step, top-level scans at their cut) and
/// returns the processor of each. Replayed with one-step primitives, this
/// schedule makes every operation observe what it observed in `trace`.
pub fn linearized_schedule(trace: &Trace) -> Option<Schedule> {
    let cuts = linearize_scans(trace)?;
    let mut points: Vec<(usize, u8, ProcId)> = trace
        .updates
        .iter()
        .map(|u| (u.step, 0, u.proc))
        .collect();
    points.extend(
        trace
            .scans
            .iter()
            .zip(&cuts)
            .filter(|(s, _)| !s.embedded)
            .map(|(s, &cut)| (cut, 1, s.proc)),
    );
    points.sort();
    Some(points.into_iter().map(|(_, _, p)| p).collect())
}

/// Checks that the views of each one-shot array are totally ordered by
/// containment of written cells, taking views in the order of `cuts`.
pub fn views_totally_ordered(trace: &Trace, cuts: &[usize]) -> bool {
    let mut by_array: BTreeMap<&str, Vec<(usize, &[Value])>> = BTreeMap::new();
    for (scan, &cut) in trace.scans.iter().zip(cuts) {
        by_array
            .entry(scan.array)
            .or_default()
            .push((cut, scan.view.as_slice()));
    }
    by_array.values_mut().all(|views| {
        views.sort_by_key(|(cut, _)| *cut);
        views.windows(2).all(|w| {
            w[0].1
                .iter()
                .zip(w[1].1)
                .all(|(older, newer)| older.is_bot() || older == newer)
        })
    })
}

/// Processors whose ids were posted to `array` at or before the given step,
/// according to the logical updates of the trace.
pub fn posted_by(trace: &Trace, array: &str, step: usize) -> SnapshotSet {
    trace
        .updates
        .iter()
        .filter(|u| u.array == array && u.step <= step && matches!(u.value, Value::Proc(_)))
        .map(|u| u.proc)
        .collect()
}
