//! Deterministic simulator of asynchronous processors over single-writer
//! multi-reader shared arrays.
//!
//! A run is driven by an explicit [`Schedule`]: at step `k` the processor
//! `schedule[k]` performs exactly one shared-memory operation (post, read,
//! write or atomic snapshot). Any local computation, including producing the
//! output, is folded into that step. A processor scheduled after it has
//! output takes a no-op step; a processor that stops appearing in the
//! schedule has crashed.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::ProcId;
use crate::ordering::OpexInterval;
use crate::snapshot::SnapshotView;
use crate::value::Value;

pub type ArrayName = &'static str;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("step {step}: {proc} wrote cell {cell} of array {array}, owned by p{cell}")]
    SingleWriter {
        step: usize,
        proc: ProcId,
        array: ArrayName,
        cell: usize,
    },
    #[error("step {step}: {proc} accessed unknown array {array}")]
    UnknownArray {
        step: usize,
        proc: ProcId,
        array: String,
    },
    #[error("step {step}: {proc} accessed cell {cell} of array {array} (size {size})")]
    CellOutOfRange {
        step: usize,
        proc: ProcId,
        array: ArrayName,
        cell: usize,
        size: usize,
    },
    #[error("step {step}: {proc} performed {ops} shared operations in one step")]
    StepGranularity { step: usize, proc: ProcId, ops: usize },
    #[error("step {step}: {proc} produced a second output")]
    DoubleOutput { step: usize, proc: ProcId },
    #[error("schedule names {0} but no protocol was supplied for it")]
    MissingProtocol(ProcId),
    #[error("schedule names {proc} but memory is sized for {processors} processors")]
    ProcessorOutOfRange { proc: ProcId, processors: usize },
}

/// Named SWMR arrays, one cell per processor.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SharedMemory {
    processors: usize,
    arrays: Vec<(ArrayName, Vec<Value>)>,
}

impl SharedMemory {
    pub fn new(processors: usize) -> Self {
        SharedMemory {
            processors,
            arrays: Vec::new(),
        }
    }

    /// Adds an array with every cell initialised to `⊥`.
    pub fn with_array(mut self, name: ArrayName) -> Self {
        self.arrays.push((name, vec![Value::Bot; self.processors]));
        self
    }

    pub fn with_cells(mut self, name: ArrayName, cells: Vec<Value>) -> Self {
        assert_eq!(cells.len(), self.processors, "array {name} must have one cell per processor");
        self.arrays.push((name, cells));
        self
    }

    pub fn processors(&self) -> usize {
        self.processors
    }

    pub fn array(&self, name: &str) -> Option<&[Value]> {
        self.arrays
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, cells)| cells.as_slice())
    }

    pub fn array_names(&self) -> impl Iterator<Item = ArrayName> + '_ {
        self.arrays.iter().map(|(n, _)| *n)
    }

    fn slot(&self, name: &str) -> Option<usize> {
        self.arrays.iter().position(|(n, _)| *n == name)
    }
}

/// A finite interleaving: the processor that moves at each step.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Schedule(pub Vec<ProcId>);

impl Schedule {
    pub fn steps(&self) -> &[ProcId] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl FromIterator<ProcId> for Schedule {
    fn from_iter<I: IntoIterator<Item = ProcId>>(iter: I) -> Self {
        Schedule(iter.into_iter().collect())
    }
}

impl std::fmt::Display for Schedule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for (k, p) in self.0.iter().enumerate() {
            if k > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{}", p.0)?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OpKind {
    Post,
    Read,
    Write,
    Snapshot,
    Output,
}

impl OpKind {
    pub fn as_str(self) -> &'static str {
        match self {
            OpKind::Post => "post",
            OpKind::Read => "read",
            OpKind::Write => "write",
            OpKind::Snapshot => "snapshot",
            OpKind::Output => "output",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Event {
    pub step: usize,
    pub proc: ProcId,
    pub kind: OpKind,
    /// `None` for output events.
    pub array: Option<ArrayName>,
    /// The value written, read, snapshotted (as a tuple of cells) or output.
    pub value: Value,
}

/// A logical write to a snapshot array, as seen by scanners.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UpdateRecord {
    pub proc: ProcId,
    pub array: ArrayName,
    pub step: usize,
    pub value: Value,
}

/// A completed scan of a snapshot array together with the interval in which
/// it ran. Atomic snapshots have `start == end`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ScanRecord {
    pub proc: ProcId,
    pub array: ArrayName,
    pub start: usize,
    pub end: usize,
    pub view: Vec<Value>,
    /// Scan performed inside an update rather than requested by the protocol.
    pub embedded: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Trace {
    pub schedule: Schedule,
    pub initial: SharedMemory,
    pub memory: SharedMemory,
    pub events: Vec<Event>,
    pub intervals: BTreeMap<ProcId, OpexInterval>,
    pub outputs: BTreeMap<ProcId, Value>,
    pub steps_taken: BTreeMap<ProcId, usize>,
    pub updates: Vec<UpdateRecord>,
    pub scans: Vec<ScanRecord>,
}

impl Trace {
    /// Line-oriented dump, one event per line:
    /// `step=<k> proc=<i> op=<kind> array=<name> val=<json>`.
    /// Output events carry `array=-`.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            let val = serde_json::to_string(&e.value).expect("values always serialize");
            let _ = writeln!(
                out,
                "step={} proc={} op={} array={} val={}",
                e.step,
                e.proc.0,
                e.kind.as_str(),
                e.array.unwrap_or("-"),
                val
            );
        }
        out
    }

    pub fn output_of(&self, p: ProcId) -> Option<&Value> {
        self.outputs.get(&p)
    }

    pub fn events_of(&self, p: ProcId) -> impl Iterator<Item = &Event> {
        self.events.iter().filter(move |e| e.proc == p)
    }
}

/// Handle through which a protocol performs its single shared operation of
/// the current step.
pub struct Port<'a> {
    proc: ProcId,
    step: usize,
    memory: &'a mut SharedMemory,
    events: &'a mut Vec<Event>,
    updates: &'a mut Vec<UpdateRecord>,
    scans: &'a mut Vec<ScanRecord>,
    output: Option<Value>,
    shared_ops: usize,
}

impl<'a> Port<'a> {
    pub fn id(&self) -> ProcId {
        self.proc
    }

    pub fn step_index(&self) -> usize {
        self.step
    }

    pub fn processors(&self) -> usize {
        self.memory.processors()
    }

    fn slot(&self, array: &str) -> Result<usize, SimError> {
        self.memory.slot(array).ok_or_else(|| SimError::UnknownArray {
            step: self.step,
            proc: self.proc,
            array: array.to_string(),
        })
    }

    fn check_cell(&self, slot: usize, cell: usize) -> Result<(), SimError> {
        let (name, cells) = &self.memory.arrays[slot];
        if cell >= cells.len() {
            return Err(SimError::CellOutOfRange {
                step: self.step,
                proc: self.proc,
                array: name,
                cell,
                size: cells.len(),
            });
        }
        Ok(())
    }

    fn store(
        &mut self,
        kind: OpKind,
        array: &str,
        cell: usize,
        physical: Value,
        logical: Value,
    ) -> Result<(), SimError> {
        let slot = self.slot(array)?;
        self.check_cell(slot, cell)?;
        let name = self.memory.arrays[slot].0;
        if cell != self.proc.0 {
            return Err(SimError::SingleWriter {
                step: self.step,
                proc: self.proc,
                array: name,
                cell,
            });
        }
        self.shared_ops += 1;
        self.memory.arrays[slot].1[cell] = physical.clone();
        self.events.push(Event {
            step: self.step,
            proc: self.proc,
            kind,
            array: Some(name),
            value: physical,
        });
        self.updates.push(UpdateRecord {
            proc: self.proc,
            array: name,
            step: self.step,
            value: logical,
        });
        Ok(())
    }

    /// Posts this processor's id into its own cell of `array`.
    pub fn post(&mut self, array: &str) -> Result<(), SimError> {
        let me = self.proc;
        self.store(OpKind::Post, array, me.0, Value::Proc(me), Value::Proc(me))
    }

    /// Writes `value` into `cell` of `array`; only the owner may write.
    pub fn write(&mut self, array: &str, cell: usize, value: Value) -> Result<(), SimError> {
        self.store(OpKind::Write, array, cell, value.clone(), value)
    }

    /// Writes a physical cell encoding whose scanner-visible content is
    /// `logical` (used by snapshot constructions that tag cells).
    pub fn write_tagged(
        &mut self,
        kind: OpKind,
        array: &str,
        cell: usize,
        physical: Value,
        logical: Value,
    ) -> Result<(), SimError> {
        self.store(kind, array, cell, physical, logical)
    }

    pub fn read(&mut self, array: &str, cell: usize) -> Result<Value, SimError> {
        let slot = self.slot(array)?;
        self.check_cell(slot, cell)?;
        self.shared_ops += 1;
        let (name, cells) = &self.memory.arrays[slot];
        let value = cells[cell].clone();
        self.events.push(Event {
            step: self.step,
            proc: self.proc,
            kind: OpKind::Read,
            array: Some(name),
            value: value.clone(),
        });
        Ok(value)
    }

    /// One-step atomic snapshot of a whole array.
    pub fn snapshot(&mut self, array: &str) -> Result<SnapshotView, SimError> {
        let slot = self.slot(array)?;
        self.shared_ops += 1;
        let (name, cells) = &self.memory.arrays[slot];
        let view = SnapshotView {
            array: name,
            cells: cells.clone(),
            cut_index: self.step,
        };
        self.events.push(Event {
            step: self.step,
            proc: self.proc,
            kind: OpKind::Snapshot,
            array: Some(name),
            value: Value::Tuple(view.cells.clone()),
        });
        self.scans.push(ScanRecord {
            proc: self.proc,
            array: name,
            start: self.step,
            end: self.step,
            view: view.cells.clone(),
            embedded: false,
        });
        Ok(view)
    }

    /// Records a multi-step scan that completed at this step.
    pub fn complete_scan(
        &mut self,
        array: &str,
        start: usize,
        view: Vec<Value>,
        embedded: bool,
    ) -> Result<(), SimError> {
        let slot = self.slot(array)?;
        self.scans.push(ScanRecord {
            proc: self.proc,
            array: self.memory.arrays[slot].0,
            start,
            end: self.step,
            view,
            embedded,
        });
        Ok(())
    }

    pub fn output(&mut self, value: Value) -> Result<(), SimError> {
        if self.output.is_some() {
            return Err(SimError::DoubleOutput {
                step: self.step,
                proc: self.proc,
            });
        }
        self.output = Some(value);
        Ok(())
    }
}

/// A per-processor program. Each call to [`Protocol::step`] must perform
/// exactly one shared-memory operation through the port.
pub trait Protocol {
    fn step(&mut self, port: &mut Port<'_>) -> Result<(), SimError>;

    fn is_done(&self) -> bool;
}

impl<P: Protocol + ?Sized> Protocol for Box<P> {
    fn step(&mut self, port: &mut Port<'_>) -> Result<(), SimError> {
        (**self).step(port)
    }

    fn is_done(&self) -> bool {
        (**self).is_done()
    }
}

/// Executes `schedule` against `protocols` starting from `memory`.
pub fn run_schedule<P: Protocol>(
    protocols: &mut BTreeMap<ProcId, P>,
    schedule: &Schedule,
    memory: SharedMemory,
) -> Result<Trace, SimError> {
    for &p in schedule.steps() {
        if p.0 >= memory.processors() {
            return Err(SimError::ProcessorOutOfRange {
                proc: p,
                processors: memory.processors(),
            });
        }
        if !protocols.contains_key(&p) {
            return Err(SimError::MissingProtocol(p));
        }
    }

    let initial = memory.clone();
    let mut memory = memory;
    let mut events = Vec::with_capacity(schedule.len() + protocols.len());
    let mut updates = Vec::new();
    let mut scans = Vec::new();
    let mut intervals: BTreeMap<ProcId, OpexInterval> = BTreeMap::new();
    let mut outputs = BTreeMap::new();
    let mut steps_taken: BTreeMap<ProcId, usize> = BTreeMap::new();

    for (step, &p) in schedule.steps().iter().enumerate() {
        let protocol = protocols.get_mut(&p).expect("checked above");
        if protocol.is_done() {
            continue;
        }
        let mut port = Port {
            proc: p,
            step,
            memory: &mut memory,
            events: &mut events,
            updates: &mut updates,
            scans: &mut scans,
            output: None,
            shared_ops: 0,
        };
        protocol.step(&mut port)?;
        let Port {
            shared_ops, output, ..
        } = port;
        if shared_ops != 1 {
            return Err(SimError::StepGranularity {
                step,
                proc: p,
                ops: shared_ops,
            });
        }
        *steps_taken.entry(p).or_default() += 1;
        let interval = intervals.entry(p).or_insert(OpexInterval {
            proc: p,
            start: step,
            end: None,
        });
        if let Some(value) = output {
            if interval.end.is_some() {
                return Err(SimError::DoubleOutput { step, proc: p });
            }
            interval.end = Some(step);
            events.push(Event {
                step,
                proc: p,
                kind: OpKind::Output,
                array: None,
                value: value.clone(),
            });
            outputs.insert(p, value);
        }
    }

    Ok(Trace {
        schedule: schedule.clone(),
        initial,
        memory,
        events,
        intervals,
        outputs,
        steps_taken,
        updates,
        scans,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Posts, snapshots, writes, snapshots, outputs.
    struct Scripted {
        pc: usize,
    }

    impl Protocol for Scripted {
        fn step(&mut self, port: &mut Port<'_>) -> Result<(), SimError> {
            let me = port.id();
            match self.pc {
                0 => port.post("Id")?,
                1 => {
                    port.snapshot("Id")?;
                }
                2 => port.write("Value", me.0, Value::Int(7))?,
                _ => {
                    let v = port.snapshot("Id")?;
                    port.output(Value::Tuple(v.cells))?;
                }
            }
            self.pc += 1;
            Ok(())
        }

        fn is_done(&self) -> bool {
            self.pc >= 4
        }
    }

    struct Trespasser;

    impl Protocol for Trespasser {
        fn step(&mut self, port: &mut Port<'_>) -> Result<(), SimError> {
            port.write("Value", 0, Value::Ok)
        }

        fn is_done(&self) -> bool {
            false
        }
    }

    struct Idle;

    impl Protocol for Idle {
        fn step(&mut self, _port: &mut Port<'_>) -> Result<(), SimError> {
            Ok(())
        }

        fn is_done(&self) -> bool {
            false
        }
    }

    fn memory(n: usize) -> SharedMemory {
        SharedMemory::new(n).with_array("Id").with_array("Value")
    }

    fn scripted(n: usize) -> BTreeMap<ProcId, Scripted> {
        (0..n).map(|i| (ProcId(i), Scripted { pc: 0 })).collect()
    }

    fn sched(ids: &[usize]) -> Schedule {
        ids.iter().map(|&i| ProcId(i)).collect()
    }

    #[test]
    fn solo_run_records_four_operations_then_output() {
        let trace = run_schedule(&mut scripted(1), &sched(&[0, 0, 0, 0]), memory(1)).unwrap();
        let kinds: Vec<_> = trace.events.iter().map(|e| e.kind).collect();
        assert_eq!(
            kinds,
            [OpKind::Post, OpKind::Snapshot, OpKind::Write, OpKind::Snapshot, OpKind::Output]
        );
        let iv = trace.intervals[&ProcId(0)];
        assert_eq!((iv.start, iv.end), (0, Some(3)));
        assert_eq!(trace.events.last().unwrap().step, 3);
    }

    #[test]
    fn steps_after_termination_are_noops() {
        let trace = run_schedule(&mut scripted(1), &sched(&[0; 7]), memory(1)).unwrap();
        assert_eq!(trace.events.len(), 5);
        assert_eq!(trace.steps_taken[&ProcId(0)], 4);
    }

    #[test]
    fn truncated_processor_has_start_but_no_end() {
        let trace = run_schedule(&mut scripted(2), &sched(&[0, 1, 0, 0, 0]), memory(2)).unwrap();
        let iv = trace.intervals[&ProcId(1)];
        assert_eq!((iv.start, iv.end), (1, None));
        assert!(trace.output_of(ProcId(1)).is_none());
        assert!(trace.output_of(ProcId(0)).is_some());
    }

    #[test]
    fn identical_inputs_give_identical_traces() {
        let s = sched(&[0, 1, 1, 0, 1, 0, 0, 1]);
        let a = run_schedule(&mut scripted(2), &s, memory(2)).unwrap();
        let b = run_schedule(&mut scripted(2), &s, memory(2)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.dump(), b.dump());
    }

    #[test]
    fn single_writer_violation_names_the_step() {
        let mut protos: BTreeMap<ProcId, Box<dyn Protocol>> = BTreeMap::new();
        protos.insert(ProcId(0), Box::new(Scripted { pc: 0 }));
        protos.insert(ProcId(1), Box::new(Trespasser));
        let err = run_schedule(&mut protos, &sched(&[0, 1]), memory(2)).unwrap_err();
        assert_eq!(
            err,
            SimError::SingleWriter {
                step: 1,
                proc: ProcId(1),
                array: "Value",
                cell: 0
            }
        );
    }

    #[test]
    fn step_without_shared_operation_is_rejected() {
        let mut protos = BTreeMap::from([(ProcId(0), Idle)]);
        let err = run_schedule(&mut protos, &sched(&[0]), memory(1)).unwrap_err();
        assert!(matches!(err, SimError::StepGranularity { ops: 0, .. }));
    }

    #[test]
    fn missing_protocol_is_rejected() {
        let err = run_schedule(&mut scripted(1), &sched(&[0, 1]), memory(2)).unwrap_err();
        assert_eq!(err, SimError::MissingProtocol(ProcId(1)));
    }

    #[test]
    fn dump_format_is_line_per_event() {
        let trace = run_schedule(&mut scripted(1), &sched(&[0, 0, 0, 0]), memory(1)).unwrap();
        let dump = trace.dump();
        let lines: Vec<_> = dump.lines().collect();
        assert_eq!(lines[0], r#"step=0 proc=0 op=post array=Id val={"proc":0}"#);
        assert_eq!(lines[1], r#"step=1 proc=0 op=snapshot array=Id val={"tuple":[{"proc":0}]}"#);
        assert_eq!(lines[2], r#"step=2 proc=0 op=write array=Value val={"int":7}"#);
        assert_eq!(
            lines[4],
            r#"step=3 proc=0 op=output array=- val={"tuple":[{"proc":0}]}"#
        );
    }
}
