//! Sequential specifications of one-shot objects as state machines.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::value::Value;

/// The single command a processor carries into a one-shot object.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Write(Value),
    Read,
    Enqueue(Value),
    Dequeue,
    Swap(Value),
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Command::Write(v) => write!(f, "write({v})"),
            Command::Read => f.write_str("read"),
            Command::Enqueue(v) => write!(f, "enqueue({v})"),
            Command::Dequeue => f.write_str("dequeue"),
            Command::Swap(v) => write!(f, "swap({v})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SpecError {
    #[error("{object}: transition undefined for command {command} in state {state}")]
    Undefined {
        object: &'static str,
        state: Value,
        command: Command,
    },
    #[error("unknown object {0:?} (expected mwmr, queue or swap)")]
    UnknownObject(String),
}

/// A state machine over commands. `transition` returns every
/// `(next-state, response)` pair the object may take; deterministic objects
/// return exactly one.
pub trait ObjectSpec: Send + Sync {
    fn name(&self) -> &'static str;

    fn initial_state(&self) -> Value;

    fn transition(&self, state: &Value, command: &Command) -> Result<Vec<(Value, Value)>, SpecError>;
}

fn undefined(object: &'static str, state: &Value, command: &Command) -> SpecError {
    SpecError::Undefined {
        object,
        state: state.clone(),
        command: command.clone(),
    }
}

/// Multi-writer register: `write(v)` holds `v` and answers `ok`; `read`
/// answers the held value.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MwmrRegister {
    pub initial: Value,
}

impl ObjectSpec for MwmrRegister {
    fn name(&self) -> &'static str {
        "mwmr"
    }

    fn initial_state(&self) -> Value {
        self.initial.clone()
    }

    fn transition(&self, state: &Value, command: &Command) -> Result<Vec<(Value, Value)>, SpecError> {
        match command {
            Command::Write(v) => Ok(vec![(v.clone(), Value::Ok)]),
            Command::Read => Ok(vec![(state.clone(), state.clone())]),
            _ => Err(undefined(self.name(), state, command)),
        }
    }
}

/// FIFO queue; the state is a tuple of items, head first. Dequeue on an
/// empty queue answers `⊥`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Queue;

impl ObjectSpec for Queue {
    fn name(&self) -> &'static str {
        "queue"
    }

    fn initial_state(&self) -> Value {
        Value::Tuple(Vec::new())
    }

    fn transition(&self, state: &Value, command: &Command) -> Result<Vec<(Value, Value)>, SpecError> {
        let Value::Tuple(items) = state else {
            return Err(undefined(self.name(), state, command));
        };
        match command {
            Command::Enqueue(x) => {
                let mut next = items.clone();
                next.push(x.clone());
                Ok(vec![(Value::Tuple(next), Value::Ok)])
            }
            Command::Dequeue => match items.split_first() {
                Some((head, rest)) => Ok(vec![(Value::Tuple(rest.to_vec()), head.clone())]),
                None => Ok(vec![(state.clone(), Value::Bot)]),
            },
            _ => Err(undefined(self.name(), state, command)),
        }
    }
}

/// `swap(x)` answers the previous state and installs `x`; starts at `⊥`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SwapObject;

impl ObjectSpec for SwapObject {
    fn name(&self) -> &'static str {
        "swap"
    }

    fn initial_state(&self) -> Value {
        Value::Bot
    }

    fn transition(&self, state: &Value, command: &Command) -> Result<Vec<(Value, Value)>, SpecError> {
        match command {
            Command::Swap(x) => Ok(vec![(x.clone(), state.clone())]),
            _ => Err(undefined(self.name(), state, command)),
        }
    }
}

pub fn mwmr_register_spec(initial: Value) -> MwmrRegister {
    MwmrRegister { initial }
}

pub fn queue_spec() -> Queue {
    Queue
}

pub fn swap_object_spec() -> SwapObject {
    SwapObject
}

/// Looks up a built-in spec by its configuration name.
pub fn object_by_name(name: &str) -> Result<Box<dyn ObjectSpec>, SpecError> {
    match name {
        "mwmr" => Ok(Box::new(mwmr_register_spec(Value::Bot))),
        "queue" => Ok(Box::new(queue_spec())),
        "swap" => Ok(Box::new(swap_object_spec())),
        other => Err(SpecError::UnknownObject(other.to_string())),
    }
}

/// Every response sequence reachable by threading the state through
/// `commands`.
pub fn replay<S: ObjectSpec + ?Sized>(
    spec: &S,
    commands: &[Command],
) -> Result<BTreeSet<Vec<Value>>, SpecError> {
    let mut frontier: BTreeSet<(Value, Vec<Value>)> =
        BTreeSet::from([(spec.initial_state(), Vec::new())]);
    for command in commands {
        let mut next = BTreeSet::new();
        for (state, responses) in &frontier {
            for (s, r) in spec.transition(state, command)? {
                let mut rs = responses.clone();
                rs.push(r);
                next.insert((s, rs));
            }
        }
        frontier = next;
    }
    Ok(frontier.into_iter().map(|(_, rs)| rs).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ids::ProcId;
    use proptest::prelude::*;

    fn one<S: ObjectSpec>(spec: &S, commands: &[Command]) -> Vec<Value> {
        let all = replay(spec, commands).unwrap();
        assert_eq!(all.len(), 1);
        all.into_iter().next().unwrap()
    }

    fn proc(i: usize) -> Value {
        Value::Proc(ProcId(i))
    }

    #[test]
    fn register_write_then_read() {
        let reg = mwmr_register_spec(Value::Bot);
        assert_eq!(
            one(&reg, &[Command::Write(Value::Int(3)), Command::Read]),
            vec![Value::Ok, Value::Int(3)]
        );
        assert_eq!(one(&reg, &[Command::Read]), vec![Value::Bot]);
        assert_eq!(
            one(
                &reg,
                &[
                    Command::Write(Value::Int(5)),
                    Command::Write(Value::Int(7)),
                    Command::Read
                ]
            ),
            vec![Value::Ok, Value::Ok, Value::Int(7)]
        );
        assert_eq!(
            one(&reg, &[Command::Read, Command::Write(Value::Int(5))]),
            vec![Value::Bot, Value::Ok]
        );
    }

    #[test]
    fn queue_behaviour() {
        let x = Value::Int(9);
        assert_eq!(
            one(&queue_spec(), &[Command::Enqueue(x.clone()), Command::Dequeue, Command::Dequeue]),
            vec![Value::Ok, x, Value::Bot]
        );
        assert_eq!(one(&queue_spec(), &[Command::Dequeue]), vec![Value::Bot]);
    }

    #[test]
    fn swap_behaviour() {
        assert_eq!(
            one(&swap_object_spec(), &[Command::Swap(proc(0)), Command::Swap(proc(1))]),
            vec![Value::Bot, proc(0)]
        );
        assert_eq!(one(&swap_object_spec(), &[Command::Swap(proc(0))]), vec![Value::Bot]);
    }

    #[test]
    fn empty_sequence_replays_to_empty() {
        for name in ["mwmr", "queue", "swap"] {
            let spec = object_by_name(name).unwrap();
            assert_eq!(replay(spec.as_ref(), &[]).unwrap(), BTreeSet::from([vec![]]));
        }
    }

    #[test]
    fn undefined_transition_names_the_pair() {
        let err = replay(&queue_spec(), &[Command::Read]).unwrap_err();
        assert_eq!(
            err,
            SpecError::Undefined {
                object: "queue",
                state: Value::Tuple(vec![]),
                command: Command::Read
            }
        );
        assert!(err.to_string().contains("read"));
    }

    #[test]
    fn unknown_object_name() {
        assert!(matches!(object_by_name("stack"), Err(SpecError::UnknownObject(_))));
    }

    /// Coin: answers either 0 or 1 and stays put.
    struct Coin;

    impl ObjectSpec for Coin {
        fn name(&self) -> &'static str {
            "coin"
        }

        fn initial_state(&self) -> Value {
            Value::Bot
        }

        fn transition(&self, state: &Value, _: &Command) -> Result<Vec<(Value, Value)>, SpecError> {
            Ok(vec![(state.clone(), Value::Int(0)), (state.clone(), Value::Int(1))])
        }
    }

    #[test]
    fn nondeterministic_specs_yield_every_branch() {
        assert_eq!(replay(&Coin, &[Command::Read, Command::Read]).unwrap().len(), 4);
    }

    fn register_command() -> impl Strategy<Value = Command> {
        prop_oneof![
            Just(Command::Read),
            (0i64..4).prop_map(|v| Command::Write(Value::Int(v))),
        ]
    }

    proptest! {
        #[test]
        fn register_reads_nearest_preceding_write(cmds in prop::collection::vec(register_command(), 0..10)) {
            let got = one(&mwmr_register_spec(Value::Bot), &cmds);
            for (i, c) in cmds.iter().enumerate() {
                let expected = match c {
                    Command::Write(_) => Value::Ok,
                    _ => cmds[..i]
                        .iter()
                        .rev()
                        .find_map(|c| match c {
                            Command::Write(v) => Some(v.clone()),
                            _ => None,
                        })
                        .unwrap_or(Value::Bot),
                };
                prop_assert_eq!(&got[i], &expected);
            }
        }

        #[test]
        fn builtins_are_deterministic(kinds in prop::collection::vec(0u8..5, 0..8)) {
            let queue_cmds: Vec<_> = kinds.iter().map(|&k| if k % 2 == 0 { Command::Dequeue } else { Command::Enqueue(Value::Int(k.into())) }).collect();
            prop_assert_eq!(replay(&queue_spec(), &queue_cmds).unwrap().len(), 1);
            let swap_cmds: Vec<_> = kinds.iter().map(|&k| Command::Swap(Value::Int(k.into()))).collect();
            prop_assert_eq!(replay(&swap_object_spec(), &swap_cmds).unwrap().len(), 1);
        }
    }
}
