//! One-shot objects checked as tasks.
//!
//! The crate simulates asynchronous processors over single-writer shared
//! arrays ([`sim`]), provides atomic snapshots in primitive and collect-based
//! form ([`snapshot`]), the timing relations between operation executions
//! ([`ordering`]), sequential object specifications ([`object`]), the
//! derived task and its validators ([`task`]), a one-shot multi-writer
//! register protocol ([`mwmr`]) and exhaustive/random checking campaigns
//! ([`harness`]).

pub mod harness;
pub mod ids;
pub mod mwmr;
pub mod object;
pub mod ordering;
pub mod schedule;
pub mod sim;
pub mod snapshot;
pub mod task;
pub mod value;

pub use ids::{ProcId, SnapshotSet};
pub use value::Value;
