//! One-shot multi-writer register built from two SWMR arrays.
//!
//! ```text
//! Write(v) by p_i:  Id[i] := i;  early := ∪Id;  Value[i] := (v, early);
//!                   late := ∪Id;  output (ok, late)
//! Read by p_j:      Id[j] := j;  view := Value;  pick the cell with the
//!                   largest early snapshot (ties: higher writer id);
//!                   late := ∪Id;  output (value, late)
//! ```
//!
//! Early snapshots of different writers are ordered by containment, so
//! comparing their sizes totally orders the visible writes. A reader that
//! sees no write returns the register's initial value.

use serde::{Deserialize, Serialize};

use crate::ids::{ProcId, SnapshotSet};
use crate::sim::{ArrayName, Port, Protocol, SharedMemory, SimError, Trace};
use crate::snapshot::{posted_ids, SnapOp, SnapOutcome, SnapRequest, SnapshotImpl};
use crate::value::Value;

pub const ID: ArrayName = "Id";
pub const VALUE: ArrayName = "Value";

/// Deliberately broken protocol variants used to check that the validator
/// catches bugs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mutant {
    /// Writers publish their value with an empty early snapshot and skip
    /// the snapshot step.
    WriterSkipsEarly,
    /// Readers break cardinality ties toward the lowest writer id.
    ReaderLowestTie,
    /// Readers take the late snapshot before reading `Value`.
    ReaderLateFirst,
}

impl Mutant {
    pub const ALL: [Mutant; 3] = [
        Mutant::WriterSkipsEarly,
        Mutant::ReaderLowestTie,
        Mutant::ReaderLateFirst,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Mutant::WriterSkipsEarly => "writer-skips-early",
            Mutant::ReaderLowestTie => "reader-lowest-tie",
            Mutant::ReaderLateFirst => "reader-late-first",
        }
    }
}

impl std::str::FromStr for Mutant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Mutant::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown mutant {s:?}"))
    }
}

/// Content of a `Value` cell: the written value and the writer's early
/// snapshot.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ValueCell {
    pub value: Value,
    pub early: SnapshotSet,
}

impl ValueCell {
    pub fn to_value(&self) -> Value {
        Value::pair(self.value.clone(), Value::Set(self.early))
    }

    pub fn from_value(v: &Value) -> Option<ValueCell> {
        match v.as_tuple()? {
            [value, Value::Set(early)] => Some(ValueCell {
                value: value.clone(),
                early: *early,
            }),
            _ => None,
        }
    }
}

/// The cell a reader returns from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Selection {
    /// No write visible: the register's initial value.
    Initial,
    Writer(ProcId),
}

impl Selection {
    /// Ordering key: `(|early|, id)`; the initial cell is `(0, -1)`.
    pub fn key(self, view: &[Value]) -> (usize, i64) {
        match self {
            Selection::Initial => (0, -1),
            Selection::Writer(p) => {
                let early = view
                    .get(p.index())
                    .and_then(ValueCell::from_value)
                    .map_or(0, |c| c.early.len());
                (early, p.index() as i64)
            }
        }
    }
}

/// Picks the written cell with the largest early snapshot, ties to the
/// highest writer id.
pub fn select_latest(view: &[Value]) -> Selection {
    select_by(view, |len, id| (len, id as i64))
}

fn select_lowest_tie(view: &[Value]) -> Selection {
    select_by(view, |len, id| (len, -(id as i64)))
}

fn select_by(view: &[Value], key: impl Fn(usize, usize) -> (usize, i64)) -> Selection {
    view.iter()
        .enumerate()
        .filter_map(|(i, c)| ValueCell::from_value(c).map(|c| (key(c.early.len(), i), i)))
        .max()
        .map_or(Selection::Initial, |(_, i)| Selection::Writer(ProcId(i)))
}

pub fn memory(processors: usize) -> SharedMemory {
    SharedMemory::new(processors).with_array(ID).with_array(VALUE)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum WriterPhase {
    Post,
    Early,
    Write,
    Late,
    Done,
}

pub struct Writer {
    value: Value,
    imp: SnapshotImpl,
    skip_early: bool,
    phase: WriterPhase,
    op: Option<SnapOp>,
    early: SnapshotSet,
}

impl Writer {
    pub fn new(value: Value, imp: SnapshotImpl, mutant: Option<Mutant>) -> Self {
        Writer {
            value,
            imp,
            skip_early: mutant == Some(Mutant::WriterSkipsEarly),
            phase: WriterPhase::Post,
            op: None,
            early: SnapshotSet::EMPTY,
        }
    }

    fn request(&self) -> SnapRequest {
        match self.phase {
            WriterPhase::Post => SnapRequest::Post(ID),
            WriterPhase::Early | WriterPhase::Late => SnapRequest::Scan(ID),
            WriterPhase::Write => SnapRequest::Update(
                VALUE,
                ValueCell {
                    value: self.value.clone(),
                    early: self.early,
                }
                .to_value(),
            ),
            WriterPhase::Done => unreachable!("finished writer stepped"),
        }
    }
}

impl Protocol for Writer {
    fn step(&mut self, port: &mut Port<'_>) -> Result<(), SimError> {
        if self.op.is_none() {
            self.op = Some(SnapOp::new(self.imp, self.request()));
        }
        let op = self.op.as_mut().expect("just set");
        let Some(outcome) = op.advance(port)? else {
            return Ok(());
        };
        self.op = None;
        self.phase = match (self.phase, outcome) {
            (WriterPhase::Post, _) if self.skip_early => WriterPhase::Write,
            (WriterPhase::Post, _) => WriterPhase::Early,
            (WriterPhase::Early, SnapOutcome::Scanned(view)) => {
                self.early = posted_ids(&view);
                WriterPhase::Write
            }
            (WriterPhase::Write, _) => WriterPhase::Late,
            (WriterPhase::Late, SnapOutcome::Scanned(view)) => {
                port.output(Value::pair(Value::Ok, Value::Set(posted_ids(&view))))?;
                WriterPhase::Done
            }
            (phase, outcome) => unreachable!("writer in {phase:?} got {outcome:?}"),
        };
        Ok(())
    }

    fn is_done(&self) -> bool {
        self.phase == WriterPhase::Done
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum ReaderPhase {
    Post,
    View,
    Late,
    Done,
}

pub struct Reader {
    initial: Value,
    imp: SnapshotImpl,
    mutant: Option<Mutant>,
    phase: ReaderPhase,
    op: Option<SnapOp>,
    chosen: Option<Value>,
    late: Option<SnapshotSet>,
}

impl Reader {
    pub fn new(initial: Value, imp: SnapshotImpl, mutant: Option<Mutant>) -> Self {
        Reader {
            initial,
            imp,
            mutant,
            phase: ReaderPhase::Post,
            op: None,
            chosen: None,
            late: None,
        }
    }

    fn late_first(&self) -> bool {
        self.mutant == Some(Mutant::ReaderLateFirst)
    }

    fn after(&self, phase: ReaderPhase) -> ReaderPhase {
        match (phase, self.late_first()) {
            (ReaderPhase::Post, false) => ReaderPhase::View,
            (ReaderPhase::View, false) => ReaderPhase::Late,
            (ReaderPhase::Post, true) => ReaderPhase::Late,
            (ReaderPhase::Late, true) => ReaderPhase::View,
            _ => ReaderPhase::Done,
        }
    }

    fn choose(&self, view: &[Value]) -> Value {
        let selection = if self.mutant == Some(Mutant::ReaderLowestTie) {
            select_lowest_tie(view)
        } else {
            select_latest(view)
        };
        match selection {
            Selection::Initial => self.initial.clone(),
            Selection::Writer(p) => ValueCell::from_value(&view[p.index()])
                .expect("selected cells are written")
                .value,
        }
    }
}

impl Protocol for Reader {
    fn step(&mut self, port: &mut Port<'_>) -> Result<(), SimError> {
        if self.op.is_none() {
            let request = match self.phase {
                ReaderPhase::Post => SnapRequest::Post(ID),
                ReaderPhase::View => SnapRequest::Scan(VALUE),
                ReaderPhase::Late => SnapRequest::Scan(ID),
                ReaderPhase::Done => unreachable!("finished reader stepped"),
            };
            self.op = Some(SnapOp::new(self.imp, request));
        }
        let op = self.op.as_mut().expect("just set");
        let Some(outcome) = op.advance(port)? else {
            return Ok(());
        };
        self.op = None;
        match (self.phase, outcome) {
            (ReaderPhase::View, SnapOutcome::Scanned(view)) => self.chosen = Some(self.choose(&view)),
            (ReaderPhase::Late, SnapOutcome::Scanned(view)) => self.late = Some(posted_ids(&view)),
            _ => {}
        }
        self.phase = self.after(self.phase);
        if self.phase == ReaderPhase::Done {
            let value = self.chosen.take().expect("view taken");
            let late = self.late.expect("late snapshot taken");
            port.output(Value::pair(value, Value::Set(late)))?;
        }
        Ok(())
    }

    fn is_done(&self) -> bool {
        self.phase == ReaderPhase::Done
    }
}

/// Shared steps a writer takes (an upper bound under collect snapshots).
pub fn writer_steps(imp: SnapshotImpl, processors: usize, mutant: Option<Mutant>) -> usize {
    let scans = if mutant == Some(Mutant::WriterSkipsEarly) { 1 } else { 2 };
    2 * imp.max_update_steps(processors) + scans * imp.max_scan_steps(processors)
}

/// Shared steps a reader takes (an upper bound under collect snapshots).
pub fn reader_steps(imp: SnapshotImpl, processors: usize) -> usize {
    imp.max_update_steps(processors) + 2 * imp.max_scan_steps(processors)
}

/// Splits a protocol output into `(response, late-snapshot)`.
pub fn decode_output(v: &Value) -> Option<(Value, SnapshotSet)> {
    match v.as_tuple()? {
        [response, Value::Set(late)] => Some((response.clone(), *late)),
        _ => None,
    }
}

/// The cell `p` wrote to `Value`, if it got that far.
pub fn written_cell(trace: &Trace, p: ProcId) -> Option<ValueCell> {
    trace
        .updates
        .iter()
        .find(|u| u.proc == p && u.array == VALUE)
        .and_then(|u| ValueCell::from_value(&u.value))
}
