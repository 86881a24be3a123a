//! Opaque values held in shared memory cells, object states, commands'
//! payloads and responses. Equality is structural.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::ids::{ProcId, SnapshotSet};

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Value {
    /// The distinguished empty value `⊥`.
    Bot,
    Ok,
    Int(i64),
    Proc(ProcId),
    Set(SnapshotSet),
    Tuple(Vec<Value>),
}

impl Value {
    pub fn is_bot(&self) -> bool {
        matches!(self, Value::Bot)
    }

    pub fn as_set(&self) -> Option<SnapshotSet> {
        match self {
            Value::Set(s) => Some(*s),
            _ => None,
        }
    }

    pub fn as_tuple(&self) -> Option<&[Value]> {
        match self {
            Value::Tuple(v) => Some(v),
            _ => None,
        }
    }

    pub fn pair(a: Value, b: Value) -> Value {
        Value::Tuple(vec![a, b])
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Bot => f.write_str("⊥"),
            Value::Ok => f.write_str("ok"),
            Value::Int(i) => write!(f, "{i}"),
            Value::Proc(p) => write!(f, "{p}"),
            Value::Set(s) => write!(f, "{s}"),
            Value::Tuple(items) => {
                f.write_str("(")?;
                for (k, v) in items.iter().enumerate() {
                    if k > 0 {
                        f.write_str(",")?;
                    }
                    write!(f, "{v}")?;
                }
                f.write_str(")")
            }
        }
    }
}
