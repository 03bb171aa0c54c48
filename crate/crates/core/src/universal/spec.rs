//! Sequential specifications and the registry of named ones.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value as Json};

use crate::substrate::{Detail, Value};
use crate::weaklog::{Entry, Token};

/// Object state. Built-in specs encode their state as a vector of integers
/// (a counter is `[n]`, a queue its items front first, ...).
pub type State = Vec<i64>;

/// An operation invocation: name, optional argument, unique token.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Invocation {
    pub token: Token,
    pub op: Arc<str>,
    pub arg: Option<i64>,
}

impl Invocation {
    pub fn new(token: u64, op: &str, arg: Option<i64>) -> Self {
        Invocation {
            token: Token(token),
            op: op.into(),
            arg,
        }
    }
}

impl fmt::Display for Invocation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.arg {
            Some(a) => write!(f, "{}({a})#{}", self.op, self.token),
            None => write!(f, "{}()#{}", self.op, self.token),
        }
    }
}

impl Value for Invocation {
    fn trace(&self, detail: Detail) -> Json {
        match detail {
            Detail::Full => json!({ "token": self.token, "op": &*self.op, "arg": self.arg }),
            Detail::Compact => Json::Null,
        }
    }
}

impl Entry for Invocation {
    fn token(&self) -> Token {
        self.token
    }
}

/// What an operation returns.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Response {
    Ok,
    Value(i64),
    /// Returned by removals on an empty container.
    Empty,
    /// The spec has no operation of that name; the state is unchanged.
    Unsupported,
}

impl fmt::Display for Response {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Response::Ok => write!(f, "ok"),
            Response::Value(v) => write!(f, "{v}"),
            Response::Empty => write!(f, "empty"),
            Response::Unsupported => write!(f, "unsupported"),
        }
    }
}

pub type Transition = Arc<dyn Fn(&State, &Invocation) -> (State, Response) + Send + Sync>;

/// An operation a spec offers to workload generators.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OpTemplate {
    pub name: String,
    pub takes_arg: bool,
}

/// A total, deterministic sequential object.
#[derive(Clone)]
pub struct SequentialSpec {
    name: String,
    initial: State,
    transition: Transition,
    ops: Vec<OpTemplate>,
}

impl fmt::Debug for SequentialSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SequentialSpec")
            .field("name", &self.name)
            .field("initial", &self.initial)
            .finish()
    }
}

impl SequentialSpec {
    pub fn new(name: impl Into<String>, initial: State, transition: Transition) -> Self {
        SequentialSpec {
            name: name.into(),
            initial,
            transition,
            ops: Vec::new(),
        }
    }

    /// Declares the operations random workloads may draw from.
    pub fn with_ops(mut self, ops: &[(&str, bool)]) -> Self {
        self.ops = ops
            .iter()
            .map(|&(n, a)| OpTemplate {
                name: n.into(),
                takes_arg: a,
            })
            .collect();
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn initial(&self) -> &State {
        &self.initial
    }

    pub fn ops(&self) -> &[OpTemplate] {
        &self.ops
    }

    pub fn apply(&self, state: &State, invocation: &Invocation) -> (State, Response) {
        (self.transition)(state, invocation)
    }

    /// Replays `invocations` from the initial state.
    pub fn replay<'a>(
        &self,
        invocations: impl IntoIterator<Item = &'a Invocation>,
    ) -> (State, Vec<Response>) {
        let mut state = self.initial.clone();
        let mut out = Vec::new();
        for inv in invocations {
            let (next, r) = self.apply(&state, inv);
            state = next;
            out.push(r);
        }
        (state, out)
    }

    /// Draws one operation; `arg` is used if the operation takes an argument.
    pub fn sample_op<R: Rng>(&self, rng: &mut R, token: u64, arg: i64) -> Invocation {
        let t = &self.ops[rng.gen_range(0..self.ops.len())];
        Invocation::new(token, &t.name, t.takes_arg.then_some(arg))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RegistryError {
    #[error("a specification named {0:?} is already registered")]
    Duplicate(String),
}

/// Named specifications, addressable from configurations and the CLI.
#[derive(Clone, Debug, Default)]
pub struct SpecRegistry {
    specs: BTreeMap<String, Arc<SequentialSpec>>,
}

impl SpecRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// A registry holding `counter`, `queue`, `stack` and `rwcell`.
    pub fn builtin() -> Self {
        let mut r = Self::new();
        for spec in [counter(), queue(), stack(), rwcell()] {
            r.insert(spec).expect("builtin names are distinct");
        }
        r
    }

    pub fn register_spec(
        &mut self,
        name: &str,
        initial: State,
        transition: Transition,
    ) -> Result<Arc<SequentialSpec>, RegistryError> {
        self.insert(SequentialSpec::new(name, initial, transition))
    }

    pub fn insert(&mut self, spec: SequentialSpec) -> Result<Arc<SequentialSpec>, RegistryError> {
        if self.specs.contains_key(spec.name()) {
            return Err(RegistryError::Duplicate(spec.name().to_string()));
        }
        let spec = Arc::new(spec);
        self.specs.insert(spec.name().to_string(), spec.clone());
        Ok(spec)
    }

    pub fn get(&self, name: &str) -> Option<Arc<SequentialSpec>> {
        self.specs.get(name).cloned()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.specs.keys().map(String::as_str)
    }
}

/// `inc` returns the incremented count; `read` returns the count.
pub fn counter() -> SequentialSpec {
    SequentialSpec::new(
        "counter",
        vec![0],
        Arc::new(|s: &State, inv: &Invocation| match &*inv.op {
            "inc" => (vec![s[0] + 1], Response::Value(s[0] + 1)),
            "read" => (s.clone(), Response::Value(s[0])),
            _ => (s.clone(), Response::Unsupported),
        }),
    )
    .with_ops(&[("inc", false)])
}

/// FIFO queue: `enq(x)` returns ok, `deq` the front item or empty.
pub fn queue() -> SequentialSpec {
    SequentialSpec::new(
        "queue",
        vec![],
        Arc::new(|s: &State, inv: &Invocation| match (&*inv.op, inv.arg) {
            ("enq", Some(x)) => {
                let mut n = s.clone();
                n.push(x);
                (n, Response::Ok)
            }
            ("deq", _) if s.is_empty() => (s.clone(), Response::Empty),
            ("deq", _) => (s[1..].to_vec(), Response::Value(s[0])),
            _ => (s.clone(), Response::Unsupported),
        }),
    )
    .with_ops(&[("enq", true), ("deq", false)])
}

/// LIFO stack: `push(x)` returns ok, `pop` the top item or empty.
pub fn stack() -> SequentialSpec {
    SequentialSpec::new(
        "stack",
        vec![],
        Arc::new(|s: &State, inv: &Invocation| match (&*inv.op, inv.arg) {
            ("push", Some(x)) => {
                let mut n = s.clone();
                n.push(x);
                (n, Response::Ok)
            }
            ("pop", _) => match s.split_last() {
                Some((top, rest)) => (rest.to_vec(), Response::Value(*top)),
                None => (s.clone(), Response::Empty),
            },
            _ => (s.clone(), Response::Unsupported),
        }),
    )
    .with_ops(&[("push", true), ("pop", false)])
}

/// Read/write cell initialised to 0.
pub fn rwcell() -> SequentialSpec {
    SequentialSpec::new(
        "rwcell",
        vec![0],
        Arc::new(|s: &State, inv: &Invocation| match (&*inv.op, inv.arg) {
            ("write", Some(x)) => (vec![x], Response::Ok),
            ("read", _) => (s.clone(), Response::Value(s[0])),
            _ => (s.clone(), Response::Unsupported),
        }),
    )
    .with_ops(&[("write", true), ("read", false)])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counter_increments() {
        let c = counter();
        let (s, r) = c.apply(c.initial(), &Invocation::new(0, "inc", None));
        assert_eq!((s, r), (vec![1], Response::Value(1)));
    }

    #[test]
    fn queue_is_fifo() {
        let q = queue();
        let invs = [
            Invocation::new(0, "enq", Some(1)),
            Invocation::new(1, "enq", Some(2)),
            Invocation::new(2, "deq", None),
            Invocation::new(3, "deq", None),
        ];
        let (_, out) = q.replay(&invs);
        assert_eq!(
            out,
            vec![
                Response::Ok,
                Response::Ok,
                Response::Value(1),
                Response::Value(2)
            ]
        );
    }

    #[test]
    fn stack_pops_empty_marker() {
        let s = stack();
        let (_, out) = s.replay(&[
            Invocation::new(0, "pop", None),
            Invocation::new(1, "push", Some(4)),
            Invocation::new(2, "pop", None),
        ]);
        assert_eq!(out, vec![Response::Empty, Response::Ok, Response::Value(4)]);
    }

    #[test]
    fn unknown_op_is_total() {
        let c = counter();
        let (s, r) = c.apply(c.initial(), &Invocation::new(0, "frobnicate", None));
        assert_eq!((s, r), (vec![0], Response::Unsupported));
    }

    #[test]
    fn registry_rejects_duplicates() {
        let mut r = SpecRegistry::builtin();
        assert_eq!(
            r.names().collect::<Vec<_>>(),
            ["counter", "queue", "rwcell", "stack"]
        );
        let err = r
            .register_spec(
                "counter",
                vec![0],
                Arc::new(|s: &State, _: &Invocation| (s.clone(), Response::Ok)),
            )
            .unwrap_err();
        assert_eq!(err, RegistryError::Duplicate("counter".into()));
        r.register_spec(
            "noop",
            vec![],
            Arc::new(|s: &State, _: &Invocation| (s.clone(), Response::Ok)),
        )
        .unwrap();
        assert!(r.get("noop").is_some());
    }
}
