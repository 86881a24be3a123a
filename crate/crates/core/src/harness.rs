//! Checking campaigns: enumerate or sample schedules, run the register
//! protocol, validate the resulting output tuples and aggregate a report.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::ids::ProcId;
use crate::mwmr::{self, Mutant, Reader, Writer};
use crate::object::{object_by_name, Command, ObjectSpec};
use crate::ordering::{consistent_with, happened_before};
use crate::schedule::{interleaving_count, nth_schedule, random_schedule_with, Interleavings, StepCounts};
use crate::sim::{run_schedule, Protocol, Schedule, Trace};
use crate::snapshot::SnapshotImpl;
use crate::task::{validate_consistent_with, validate_output_tuple, OpexRecord, PendingRecord, Verdict};
use crate::value::Value;

pub const SCHEMA: u32 = 1;
pub const DEFAULT_RUN_CAP: u64 = 5_000_000;
/// Failures kept in a report (lowest run indices); the total is always exact.
pub const FAILURE_LIMIT: usize = 64;
pub const WITNESS_SAMPLES: usize = 8;
const CHUNK: u64 = 4096;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("report has no failures")]
    NoFailures,
    #[error("failure index {index} out of range (report holds {len})")]
    FailureIndex { index: usize, len: usize },
    #[error("report schema {0} is not supported")]
    Schema(u32),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn config_error(msg: impl Into<String>) -> HarnessError {
    HarnessError::Config(msg.into())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Exhaustive,
    Random,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProcessorConfig {
    pub proc: ProcId,
    pub command: Command,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CampaignConfig {
    pub object: String,
    pub processors: Vec<ProcessorConfig>,
    pub mode: Mode,
    #[serde(default)]
    pub trials: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub snapshot: SnapshotImpl,
    #[serde(default)]
    pub crash: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mutant: Option<Mutant>,
    #[serde(default)]
    pub allow_duplicate_values: bool,
    #[serde(default = "default_run_cap")]
    pub run_cap: u64,
}

fn default_run_cap() -> u64 {
    DEFAULT_RUN_CAP
}

impl CampaignConfig {
    /// `writers` writers `p0..` writing their own index, then `readers`
    /// readers; exhaustive, primitive snapshots.
    pub fn mwmr(writers: usize, readers: usize) -> Self {
        let processors = (0..writers + readers)
            .map(|i| ProcessorConfig {
                proc: ProcId(i),
                command: if i < writers {
                    Command::Write(Value::Int(i as i64))
                } else {
                    Command::Read
                },
            })
            .collect();
        CampaignConfig {
            object: "mwmr".into(),
            processors,
            mode: Mode::Exhaustive,
            trials: 0,
            seed: 0,
            snapshot: SnapshotImpl::Primitive,
            crash: false,
            mutant: None,
            allow_duplicate_values: false,
            run_cap: DEFAULT_RUN_CAP,
        }
    }

    pub fn with_crash(mut self, crash: bool) -> Self {
        self.crash = crash;
        self
    }

    pub fn with_mutant(mut self, mutant: Option<Mutant>) -> Self {
        self.mutant = mutant;
        self
    }

    pub fn random(mut self, trials: u64, seed: u64) -> Self {
        self.mode = Mode::Random;
        self.trials = trials;
        self.seed = seed;
        self
    }

    pub fn with_snapshot(mut self, snapshot: SnapshotImpl) -> Self {
        self.snapshot = snapshot;
        self
    }

    pub fn inputs(&self) -> BTreeMap<ProcId, Command> {
        self.processors.iter().map(|pc| (pc.proc, pc.command.clone())).collect()
    }

    /// Per-processor step counts of a complete run (bounds under collect
    /// snapshots).
    pub fn step_counts(&self) -> StepCounts {
        let n = self.processors.len();
        self.processors
            .iter()
            .map(|pc| {
                let steps = match pc.command {
                    Command::Write(_) => mwmr::writer_steps(self.snapshot, n, self.mutant),
                    _ => mwmr::reader_steps(self.snapshot, n),
                };
                (pc.proc, steps)
            })
            .collect()
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        object_by_name(&self.object).map_err(|e| config_error(e.to_string()))?;
        if self.object != "mwmr" {
            return Err(config_error(format!(
                "no shared-memory protocol exists for object {:?}; campaigns support mwmr only",
                self.object
            )));
        }
        if self.processors.is_empty() {
            return Err(config_error("at least one processor is required"));
        }
        if self.processors.len() > crate::ordering::DEFAULT_RECORD_BOUND {
            return Err(config_error(format!(
                "{} processors exceed the validator bound of {}",
                self.processors.len(),
                crate::ordering::DEFAULT_RECORD_BOUND
            )));
        }
        for (i, pc) in self.processors.iter().enumerate() {
            if pc.proc != ProcId(i) {
                return Err(config_error(format!(
                    "processors must be listed as p0..p{} in order; found {} at position {i}",
                    self.processors.len() - 1,
                    pc.proc
                )));
            }
            if !matches!(pc.command, Command::Write(_) | Command::Read) {
                return Err(config_error(format!("{} has command {} which mwmr does not accept", pc.proc, pc.command)));
            }
        }
        if !self.allow_duplicate_values {
            let mut seen = BTreeSet::new();
            for pc in &self.processors {
                if let Command::Write(v) = &pc.command {
                    if !seen.insert(v) {
                        return Err(config_error(format!(
                            "write value {v} used twice; set allow_duplicate_values to permit it"
                        )));
                    }
                }
            }
        }
        match self.mode {
            Mode::Exhaustive => {
                if self.snapshot == SnapshotImpl::Collect {
                    return Err(config_error("collect snapshots are only supported in random mode"));
                }
                let runs = self.exhaustive_runs();
                if runs > self.run_cap as u128 {
                    return Err(config_error(format!(
                        "exhaustive mode would execute {runs} runs, above the cap of {}",
                        self.run_cap
                    )));
                }
            }
            Mode::Random => {}
        }
        Ok(())
    }

    /// The step-count vectors an exhaustive campaign enumerates: the full
    /// counts, or with crashes every per-processor truncation of them.
    pub fn segments(&self) -> Vec<StepCounts> {
        let full = self.step_counts();
        if !self.crash {
            return vec![full];
        }
        // every per-processor truncation 0..=full, lexicographic
        let mut out = vec![StepCounts::new()];
        for (&p, &max) in &full {
            out = out
                .into_iter()
                .flat_map(|prefix| {
                    (0..=max).map(move |c| {
                        let mut next = prefix.clone();
                        next.insert(p, c);
                        next
                    })
                })
                .collect();
        }
        out
    }

    /// Number of runs an exhaustive campaign executes.
    pub fn exhaustive_runs(&self) -> u128 {
        self.segments()
            .iter()
            .map(interleaving_count)
            .fold(0u128, |a, b| a.saturating_add(b))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerdictCounts {
    pub valid: u64,
    pub invalid: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Failure {
    pub run: u64,
    pub schedule: Schedule,
    pub trace_digest: String,
    pub violation: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WitnessSample {
    pub run: u64,
    pub schedule: Schedule,
    pub witness: Vec<ProcId>,
    pub adopted: Vec<ProcId>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Report {
    pub schema: u32,
    pub config: CampaignConfig,
    pub runs_executed: u64,
    pub verdicts: VerdictCounts,
    /// Valid runs whose witness adopted a crashed processor's operation.
    pub pending_adoptions: u64,
    pub failures_total: u64,
    pub failures: Vec<Failure>,
    pub witness_samples: Vec<WitnessSample>,
    pub wall_time_ms: u64,
}

impl Report {
    pub fn all_valid(&self) -> bool {
        self.failures_total == 0
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports always serialize")
    }

    pub fn load(path: &Path) -> Result<Report, HarnessError> {
        let report: Report = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if report.schema != SCHEMA {
            return Err(HarnessError::Schema(report.schema));
        }
        Ok(report)
    }
}

/// Result of executing and checking one schedule.
#[derive(Clone, Debug)]
pub struct RunCheck {
    pub trace: Option<Trace>,
    pub verdict: Verdict,
}

impl RunCheck {
    fn failed(trace: Option<Trace>, violation: String) -> Self {
        RunCheck {
            trace,
            verdict: Verdict {
                valid: false,
                witness: Vec::new(),
                adopted: Vec::new(),
                violation: Some(violation),
            },
        }
    }
}

pub fn build_protocols(config: &CampaignConfig) -> BTreeMap<ProcId, Box<dyn Protocol>> {
    let initial = Value::Bot;
    config
        .processors
        .iter()
        .map(|pc| {
            let proto: Box<dyn Protocol> = match &pc.command {
                Command::Write(v) => Box::new(Writer::new(v.clone(), config.snapshot, config.mutant)),
                _ => Box::new(Reader::new(initial.clone(), config.snapshot, config.mutant)),
            };
            (pc.proc, proto)
        })
        .collect()
}

/// Completed and pending records of a finished trace.
pub fn records_of(
    trace: &Trace,
    inputs: &BTreeMap<ProcId, Command>,
) -> Result<(Vec<OpexRecord>, Vec<PendingRecord>), String> {
    let mut completed = Vec::new();
    let mut pending = Vec::new();
    for (&p, interval) in &trace.intervals {
        let command = inputs
            .get(&p)
            .ok_or_else(|| format!("{p} has no configured command"))?
            .clone();
        match interval.end {
            Some(_) => {
                let (response, late_snapshot) = mwmr::decode_output(&trace.outputs[&p])
                    .ok_or_else(|| format!("{p} output malformed: {}", trace.outputs[&p]))?;
                completed.push(OpexRecord {
                    proc: p,
                    command,
                    response,
                    late_snapshot,
                });
            }
            None => pending.push(PendingRecord { proc: p, command }),
        }
    }
    Ok((completed, pending))
}

/// Runs `schedule` under `config` and checks it: simulator errors,
/// wait-freedom, the task verdict and the existence of a witness that
/// respects happened-before.
pub fn execute(config: &CampaignConfig, spec: &dyn ObjectSpec, schedule: &Schedule) -> RunCheck {
    let mut protocols = build_protocols(config);
    let trace = match run_schedule(&mut protocols, schedule, mwmr::memory(config.processors.len())) {
        Ok(t) => t,
        Err(e) => return RunCheck::failed(None, format!("simulator: {e}")),
    };
    let full = config.step_counts();
    for (&p, &needed) in &full {
        let scheduled = schedule.steps().iter().filter(|&&q| q == p).count();
        if scheduled >= needed && !trace.outputs.contains_key(&p) {
            return RunCheck::failed(
                Some(trace),
                format!("wait-freedom: {p} took {scheduled} steps without output"),
            );
        }
    }
    let (completed, pending) = match records_of(&trace, &config.inputs()) {
        Ok(r) => r,
        Err(e) => return RunCheck::failed(Some(trace), format!("records: {e}")),
    };
    let verdict = match validate_output_tuple(spec, &completed, &pending) {
        Ok(v) => v,
        Err(e) => return RunCheck::failed(Some(trace), format!("validator: {e}")),
    };
    if !verdict.valid {
        return RunCheck {
            trace: Some(trace),
            verdict,
        };
    }
    let hb = happened_before(&trace);
    if !consistent_with(&verdict.witness, &hb) {
        match validate_consistent_with(spec, &completed, &pending, &hb) {
            Ok(v) if v.valid => {}
            Ok(v) => {
                let why = v.violation.unwrap_or_default();
                return RunCheck::failed(
                    Some(trace),
                    format!("linearization-consistency: no witness respects happened-before ({why})"),
                );
            }
            Err(e) => return RunCheck::failed(Some(trace), format!("validator: {e}")),
        }
    }
    RunCheck {
        trace: Some(trace),
        verdict,
    }
}

pub fn trace_digest(trace: Option<&Trace>) -> String {
    match trace {
        Some(t) => hex::encode(Sha256::digest(t.dump().as_bytes())),
        None => String::from("-"),
    }
}

#[derive(Default)]
struct Partial {
    runs: u64,
    valid: u64,
    invalid: u64,
    adoptions: u64,
    failures: Vec<Failure>,
    samples: Vec<WitnessSample>,
}

impl Partial {
    fn record(&mut self, run: u64, schedule: &Schedule, check: RunCheck) {
        self.runs += 1;
        if check.verdict.valid {
            self.valid += 1;
            if !check.verdict.adopted.is_empty() {
                self.adoptions += 1;
            }
            if self.samples.len() < WITNESS_SAMPLES {
                self.samples.push(WitnessSample {
                    run,
                    schedule: schedule.clone(),
                    witness: check.verdict.witness,
                    adopted: check.verdict.adopted,
                });
            }
        } else {
            self.invalid += 1;
            if self.failures.len() < FAILURE_LIMIT {
                self.failures.push(Failure {
                    run,
                    schedule: schedule.clone(),
                    trace_digest: trace_digest(check.trace.as_ref()),
                    violation: check.verdict.violation.unwrap_or_default(),
                });
            }
        }
    }

    fn merge(mut self, other: Partial) -> Partial {
        self.runs += other.runs;
        self.valid += other.valid;
        self.invalid += other.invalid;
        self.adoptions += other.adoptions;
        self.failures.extend(other.failures);
        self.failures.sort_by_key(|f| f.run);
        self.failures.truncate(FAILURE_LIMIT);
        self.samples.extend(other.samples);
        self.samples.sort_by_key(|s| s.run);
        self.samples.truncate(WITNESS_SAMPLES);
        self
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// The schedule of random trial `trial` for `config`.
pub fn random_trial_schedule(config: &CampaignConfig, trial: u64) -> Schedule {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(config.seed ^ splitmix64(trial)));
    let mut counts = config.step_counts();
    if config.crash {
        for c in counts.values_mut() {
            *c = rng.gen_range(0..=*c);
        }
    }
    random_schedule_with(&counts, &mut rng)
}

/// Executes a campaign and aggregates its report.
pub fn run_campaign(config: &CampaignConfig) -> Result<Report, HarnessError> {
    config.validate()?;
    let started = Instant::now();
    let spec = object_by_name(&config.object).map_err(|e| config_error(e.to_string()))?;
    let spec: &dyn ObjectSpec = spec.as_ref();

    let total = match config.mode {
        Mode::Exhaustive => {
            let segments = config.segments();
            let mut chunks = Vec::new();
            let mut offset = 0u64;
            for (si, counts) in segments.iter().enumerate() {
                let len = interleaving_count(counts) as u64;
                let mut start = 0;
                while start < len {
                    chunks.push((si, offset + start, start, CHUNK.min(len - start)));
                    start += CHUNK;
                }
                offset += len;
            }
            chunks
                .into_par_iter()
                .map(|(si, run0, start, len)| {
                    let counts = &segments[si];
                    let first = nth_schedule(counts, start as u128).expect("index within segment");
                    let mut part = Partial::default();
                    for (k, schedule) in Interleavings::starting_at(first).take(len as usize).enumerate() {
                        let check = execute(config, spec, &schedule);
                        part.record(run0 + k as u64, &schedule, check);
                    }
                    part
                })
                .collect::<Vec<_>>()
        }
        Mode::Random => {
            let mut chunks = Vec::new();
            let mut start = 0;
            while start < config.trials {
                chunks.push((start, CHUNK.min(config.trials - start)));
                start += CHUNK;
            }
            chunks
                .into_par_iter()
                .map(|(start, len)| {
                    let mut part = Partial::default();
                    for trial in start..start + len {
                        let schedule = random_trial_schedule(config, trial);
                        let check = execute(config, spec, &schedule);
                        part.record(trial, &schedule, check);
                    }
                    part
                })
                .collect::<Vec<_>>()
        }
    }
    .into_iter()
    .fold(Partial::default(), Partial::merge);

    Ok(Report {
        schema: SCHEMA,
        config: config.clone(),
        runs_executed: total.runs,
        verdicts: VerdictCounts {
            valid: total.valid,
            invalid: total.invalid,
        },
        pending_adoptions: total.adoptions,
        failures_total: total.invalid,
        failures: total.failures,
        witness_samples: total.samples,
        wall_time_ms: started.elapsed().as_millis() as u64,
    })
}

/// Re-execution of one reported failure.
#[derive(Clone, Debug)]
pub struct Replay {
    pub failure: Failure,
    pub dump: String,
    pub trace_digest: String,
    pub violation: String,
}

impl std::fmt::Display for Replay {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "# run {} schedule: {}", self.failure.run, self.failure.schedule)?;
        f.write_str(&self.dump)?;
        writeln!(f, "# trace digest: {}", self.trace_digest)?;
        writeln!(f, "# violation: {}", self.violation)
    }
}

pub fn replay_report_failure(report: &Report, index: usize) -> Result<Replay, HarnessError> {
    if report.failures.is_empty() {
        return Err(HarnessError::NoFailures);
    }
    let failure = report.failures.get(index).ok_or(HarnessError::FailureIndex {
        index,
        len: report.failures.len(),
    })?;
    report.config.validate()?;
    let spec = object_by_name(&report.config.object).map_err(|e| config_error(e.to_string()))?;
    let check = execute(&report.config, spec.as_ref(), &failure.schedule);
    Ok(Replay {
        failure: failure.clone(),
        dump: check.trace.as_ref().map(Trace::dump).unwrap_or_default(),
        trace_digest: trace_digest(check.trace.as_ref()),
        violation: check
            .verdict
            .violation
            .unwrap_or_else(|| "none: the schedule now yields a valid verdict".into()),
    })
}

/// Loads a report and re-executes failure `index`.
pub fn replay_failure(report_path: &Path, index: usize) -> Result<Replay, HarnessError> {
    replay_report_failure(&Report::load(report_path)?, index)
}
