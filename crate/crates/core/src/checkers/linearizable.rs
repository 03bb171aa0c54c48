//! Linearizability of small histories against a sequential spec.
//!
//! Depth-first search over orders that respect real time: an operation can
//! go next only if no pending completed operation responded before it was
//! invoked. Operations that never responded may be placed anywhere or left
//! out. Failed `(placed set, state)` pairs are memoized.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value as Json};

use super::verdict::Verdict;
use crate::harness::History;
use crate::universal::{Invocation, Response, SequentialSpec, State};
use crate::weaklog::Token;

/// Largest history the search accepts.
pub const SEARCH_BOUND: usize = 10;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpRecord {
    pub invocation: Invocation,
    /// Event index (or timestamp) of the invocation.
    pub invoke: u64,
    pub respond: Option<u64>,
    pub response: Option<Response>,
}

impl OpRecord {
    pub fn completed(&self) -> bool {
        self.response.is_some()
    }

    /// Whether `self` responded before `other` was invoked.
    pub fn precedes(&self, other: &OpRecord) -> bool {
        self.respond.is_some_and(|r| r < other.invoke)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{ops} operations exceed the search bound of {bound}")]
pub struct TooManyOps {
    pub ops: usize,
    pub bound: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Linearization {
    /// Tokens in linearization order.
    Witness(Vec<Token>),
    /// No order exists. `prefix` is the longest order that replayed
    /// correctly; `blocked` lists the operations that could go next there,
    /// each with the response the sequential specification would give.
    Conflict {
        prefix: Vec<Token>,
        blocked: Vec<(Token, Response)>,
    },
}

/// Operations of a universal-object history, in invocation order.
pub fn operations_from_history(history: &History) -> Vec<OpRecord> {
    history
        .operations()
        .iter()
        .map(|op| {
            let input = &op.invoke.input;
            OpRecord {
                invocation: Invocation::new(
                    input["token"].as_u64().unwrap_or(0),
                    input["op"].as_str().unwrap_or(""),
                    input["arg"].as_i64(),
                ),
                invoke: op.invoke.i,
                respond: op.respond.map(|r| r.i),
                response: op
                    .respond
                    .and_then(|r| serde_json::from_value(r.out.clone()).ok()),
            }
        })
        .collect()
}

struct Search<'a> {
    ops: &'a [OpRecord],
    spec: &'a SequentialSpec,
    required: u32,
    failed: HashSet<(u32, State)>,
    order: Vec<usize>,
    best: Vec<usize>,
    best_blocked: Vec<(usize, Response)>,
}

impl Search<'_> {
    fn ready(&self, placed: u32, i: usize) -> bool {
        placed & (1 << i) == 0
            && (0..self.ops.len())
                .all(|j| j == i || placed & (1 << j) != 0 || !self.ops[j].precedes(&self.ops[i]))
    }

    fn go(&mut self, placed: u32, state: &State) -> bool {
        if placed & self.required == self.required {
            return true;
        }
        if self.failed.contains(&(placed, state.clone())) {
            return false;
        }
        let mut blocked = Vec::new();
        for i in 0..self.ops.len() {
            if !self.ready(placed, i) {
                continue;
            }
            let (next, got) = self.spec.apply(state, &self.ops[i].invocation);
            if self.ops[i].response.is_some_and(|want| want != got) {
                blocked.push((i, got));
                continue;
            }
            self.order.push(i);
            if self.go(placed | (1 << i), &next) {
                return true;
            }
            self.order.pop();
        }
        if self.order.len() >= self.best.len() && !blocked.is_empty() {
            self.best = self.order.clone();
            self.best_blocked = blocked;
        }
        self.failed.insert((placed, state.clone()));
        false
    }
}

/// Searches for a linearization of `ops` starting from `initial`.
pub fn linearize(
    ops: &[OpRecord],
    spec: &SequentialSpec,
    initial: &State,
) -> Result<Linearization, TooManyOps> {
    if ops.len() > SEARCH_BOUND {
        return Err(TooManyOps {
            ops: ops.len(),
            bound: SEARCH_BOUND,
        });
    }
    let required = ops
        .iter()
        .enumerate()
        .filter(|(_, o)| o.completed())
        .fold(0u32, |m, (i, _)| m | 1 << i);
    let mut s = Search {
        ops,
        spec,
        required,
        failed: HashSet::new(),
        order: Vec::new(),
        best: Vec::new(),
        best_blocked: Vec::new(),
    };
    let tok = |i: usize| ops[i].invocation.token;
    if s.go(0, initial) {
        return Ok(Linearization::Witness(
            s.order.iter().map(|&i| tok(i)).collect(),
        ));
    }
    Ok(Linearization::Conflict {
        prefix: s.best.iter().map(|&i| tok(i)).collect(),
        blocked: s.best_blocked.iter().map(|&(i, r)| (tok(i), r)).collect(),
    })
}

/// Property `linearizable`, with the witness order on pass.
pub fn check_linearizable(ops: &[OpRecord], spec: &SequentialSpec) -> Result<Verdict, TooManyOps> {
    check_linearizable_from(ops, spec, spec.initial())
}

pub fn check_linearizable_from(
    ops: &[OpRecord],
    spec: &SequentialSpec,
    initial: &State,
) -> Result<Verdict, TooManyOps> {
    let mut v = Verdict::new();
    match linearize(ops, spec, initial)? {
        Linearization::Witness(order) => {
            v.pass("linearizable");
            v.properties.get_mut("linearizable").expect("just set").witness = Some(json!({ "order": order }));
        }
        Linearization::Conflict { prefix, blocked } => v.fail(
            "linearizable",
            json!({
                "longest-prefix": prefix,
                "blocked": blocked.iter().map(|(t, r)| json!({ "token": t, "spec-response": r })).collect::<Vec<_>>(),
            }),
        ),
    }
    v.count("ops", ops.len() as u64);
    Ok(v)
}

/// Checks that `order` is itself a linearization: it holds every completed
/// operation once, possibly some incomplete ones, respects real time, and
/// replaying it reproduces every response.
pub fn validate_witness(
    ops: &[OpRecord],
    spec: &SequentialSpec,
    initial: &State,
    order: &[Token],
) -> Result<(), Json> {
    let index: std::collections::HashMap<Token, usize> = ops
        .iter()
        .enumerate()
        .map(|(i, o)| (o.invocation.token, i))
        .collect();
    let mut seen = HashSet::new();
    let mut placed: Vec<usize> = Vec::with_capacity(order.len());
    for t in order {
        let &i = index.get(t).ok_or_else(|| json!({ "unknown-token": t }))?;
        if !seen.insert(i) {
            return Err(json!({ "repeated-token": t }));
        }
        placed.push(i);
    }
    if let Some(o) = ops
        .iter()
        .enumerate()
        .find(|(i, o)| o.completed() && !seen.contains(i))
    {
        return Err(json!({ "missing-completed": o.1.invocation.token }));
    }
    // An operation placed later must not respond before any earlier one was
    // invoked; tracking the latest invocation so far suffices.
    let mut latest: Option<usize> = None;
    for &j in &placed {
        if let Some(i) = latest.filter(|&i| ops[j].precedes(&ops[i])) {
            return Err(json!({ "real-time": [ops[j].invocation.token, ops[i].invocation.token] }));
        }
        if latest.is_none_or(|i| ops[j].invoke > ops[i].invoke) {
            latest = Some(j);
        }
    }
    let mut state = initial.clone();
    for &i in &placed {
        let (next, got) = spec.apply(&state, &ops[i].invocation);
        if let Some(want) = ops[i].response {
            if want != got {
                return Err(
                    json!({ "token": ops[i].invocation.token, "returned": want, "replay": got }),
                );
            }
        }
        state = next;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::checkers::verdict::Status;
    use crate::universal::spec;

    fn op(token: u64, name: &str, arg: Option<i64>, span: (u64, u64), r: Response) -> OpRecord {
        OpRecord {
            invocation: Invocation::new(token, name, arg),
            invoke: span.0,
            respond: Some(span.1),
            response: Some(r),
        }
    }

    #[test]
    fn sequential_enqueue_dequeue() {
        let q = spec::queue();
        let ops = [
            op(0, "enq", Some(1), (0, 1), Response::Ok),
            op(1, "deq", None, (2, 3), Response::Value(1)),
        ];
        assert_eq!(
            linearize(&ops, &q, q.initial()).unwrap(),
            Linearization::Witness(vec![Token(0), Token(1)])
        );
    }

    #[test]
    fn dequeue_of_unknown_value_fails() {
        let q = spec::queue();
        let ops = [
            op(0, "enq", Some(1), (0, 1), Response::Ok),
            op(1, "deq", None, (2, 3), Response::Value(2)),
        ];
        let v = check_linearizable(&ops, &q).unwrap();
        assert_eq!(v.status("linearizable"), Some(Status::Fail));
    }

    #[test]
    fn concurrent_enqueues_order_by_dequeues() {
        let q = spec::queue();
        let ops = [
            op(0, "enq", Some(10), (0, 3), Response::Ok),
            op(1, "enq", Some(20), (1, 2), Response::Ok),
            op(2, "deq", None, (4, 5), Response::Value(20)),
            op(3, "deq", None, (6, 7), Response::Value(10)),
        ];
        assert_eq!(
            linearize(&ops, &q, q.initial()).unwrap(),
            Linearization::Witness(vec![Token(1), Token(0), Token(2), Token(3)])
        );
    }

    #[test]
    fn incomplete_operation_may_take_effect() {
        let c = spec::counter();
        let pending = OpRecord {
            invocation: Invocation::new(0, "inc", None),
            invoke: 0,
            respond: None,
            response: None,
        };
        let ops = [
            pending.clone(),
            op(1, "inc", None, (1, 2), Response::Value(2)),
        ];
        assert!(matches!(
            linearize(&ops, &c, c.initial()).unwrap(),
            Linearization::Witness(_)
        ));
        let ops = [pending, op(1, "inc", None, (1, 2), Response::Value(1))];
        assert!(matches!(
            linearize(&ops, &c, c.initial()).unwrap(),
            Linearization::Witness(_)
        ));
    }

    #[test]
    fn real_time_is_respected() {
        let c = spec::counter();
        let ops = [
            op(0, "inc", None, (0, 1), Response::Value(2)),
            op(1, "inc", None, (2, 3), Response::Value(1)),
        ];
        assert!(matches!(
            linearize(&ops, &c, c.initial()).unwrap(),
            Linearization::Conflict { .. }
        ));
    }

    #[test]
    fn bound_is_enforced() {
        let c = spec::counter();
        let ops: Vec<_> = (0..11)
            .map(|i| op(i, "inc", None, (i, i), Response::Value(i as i64 + 1)))
            .collect();
        assert_eq!(
            linearize(&ops, &c, c.initial()).unwrap_err(),
            TooManyOps { ops: 11, bound: 10 }
        );
    }

    #[test]
    fn witness_validation() {
        let c = spec::counter();
        let ops = [
            op(0, "inc", None, (0, 3), Response::Value(2)),
            op(1, "inc", None, (1, 2), Response::Value(1)),
        ];
        assert!(validate_witness(&ops, &c, c.initial(), &[Token(1), Token(0)]).is_ok());
        assert!(validate_witness(&ops, &c, c.initial(), &[Token(0), Token(1)]).is_err());
        assert!(validate_witness(&ops, &c, c.initial(), &[Token(1)]).is_err());
    }
}
