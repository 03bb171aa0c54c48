//! Checks for the weak-log task.
//!
//! Validity, suffixing and total order are checked exactly. Eventual
//! visibility only constrains infinite executions, so it is reported as a
//! count: for each value `v` whose append returned, the number of sequences
//! returned by appends invoked after that point which do not contain `v`.
//!
//! Two schedule-specific zero-miss claims hold on top of that. For the
//! consensus log, if reading `last`, proposing on the spine and writing
//! `last` back always run as one block, then `last` always names the first
//! undecided spine cell, every append wins its spine propose and every
//! collect sees a prefix of the spine. For the CAS log, an append that
//! starts after another returned reads a chain that already holds it.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::precedence::precedence_order;
use super::verdict::Verdict;
use crate::harness::History;
use crate::weaklog::{Snapshot, Token};

/// One append as recorded in a history.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AppendRecord {
    pub pid: usize,
    pub token: Token,
    /// Event index (or timestamp) of the invocation.
    pub invoke: u64,
    pub respond: Option<u64>,
    /// The returned sequence; `None` if the append did not return.
    pub sequence: Option<Vec<Token>>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeakLogRunRecord {
    pub appends: Vec<AppendRecord>,
    pub snapshot: Option<Snapshot>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("malformed record: {0}")]
pub struct RecordError(pub String);

impl WeakLogRunRecord {
    pub fn from_history(history: &History) -> Result<Self, RecordError> {
        let mut appends = Vec::new();
        for op in history.operations() {
            let token = op.invoke.input["token"]
                .as_u64()
                .ok_or_else(|| RecordError(format!("invocation {} has no token", op.invoke.i)))?;
            let sequence = match op.respond {
                Some(r) => Some(serde_json::from_value::<Vec<Token>>(r.out.clone()).map_err(
                    |e| RecordError(format!("response {} is not a token sequence: {e}", r.i)),
                )?),
                None => None,
            };
            appends.push(AppendRecord {
                pid: op.pid,
                token: Token(token),
                invoke: op.invoke.i,
                respond: op.respond.map(|r| r.i),
                sequence,
            });
        }
        let snapshot = serde_json::from_value(history.outcome.snapshot.clone()).ok();
        Ok(WeakLogRunRecord { appends, snapshot })
    }
}

/// Position of every value of `seq`.
fn positions(seq: &[Token]) -> HashMap<Token, usize> {
    seq.iter().enumerate().map(|(i, t)| (*t, i)).collect()
}

/// First pair ordered one way in `a` and the other way in `b`.
pub fn first_inversion(a: &[Token], b_pos: &HashMap<Token, usize>) -> Option<(Token, Token)> {
    let mut max: Option<(Token, usize)> = None;
    for t in a {
        if let Some(&p) = b_pos.get(t) {
            match max {
                Some((m, mp)) if p < mp => return Some((m, *t)),
                Some((_, mp)) if p <= mp => {}
                _ => max = Some((*t, p)),
            }
        }
    }
    None
}

pub fn check_weak_log(record: &WeakLogRunRecord) -> Result<Verdict, RecordError> {
    let mut v = Verdict::new();
    let invoked: HashMap<Token, u64> = record.appends.iter().map(|a| (a.token, a.invoke)).collect();
    if invoked.len() != record.appends.len() {
        return Err(RecordError("two appends share a token".into()));
    }
    let returned: Vec<(&AppendRecord, &Vec<Token>)> = record
        .appends
        .iter()
        .filter_map(|a| a.sequence.as_ref().map(|s| (a, s)))
        .collect();
    v.count("appends", record.appends.len() as u64);
    v.count("sequences", returned.len() as u64);

    v.pass("validity");
    v.pass("suffixing");
    for (a, seq) in &returned {
        let respond = a.respond.unwrap_or(u64::MAX);
        let mut seen = HashSet::new();
        for t in seq.iter() {
            match invoked.get(t) {
                None => v.fail("validity", json!({ "append": a.token, "value": t, "reason": "never appended" })),
                Some(&i) if i > respond => v.fail(
                    "validity",
                    json!({ "append": a.token, "value": t, "reason": "appended after the sequence was returned" }),
                ),
                _ => {}
            }
            if !seen.insert(*t) {
                v.fail(
                    "validity",
                    json!({ "append": a.token, "value": t, "reason": "repeated" }),
                );
            }
        }
        if seq.last() != Some(&a.token) {
            v.fail(
                "suffixing",
                json!({ "append": a.token, "last": seq.last() }),
            );
        }
    }

    let maps: Vec<HashMap<Token, usize>> = returned.iter().map(|(_, s)| positions(s)).collect();
    v.pass("total-order");
    'pairs: for i in 0..returned.len() {
        for j in i + 1..returned.len() {
            if let Some((x, y)) = first_inversion(returned[i].1, &maps[j]) {
                v.fail(
                    "total-order",
                    json!({ "pair": [x, y], "sequences": [returned[i].0.token, returned[j].0.token] }),
                );
                break 'pairs;
            }
        }
    }

    match &record.snapshot {
        None => {
            v.not_applicable("precedence");
            v.not_applicable("completed-in-structure");
        }
        Some(snap) => match precedence_order(snap) {
            Err(e) => {
                v.fail("precedence", json!({ "corruption": e.to_string() }));
                v.fail(
                    "completed-in-structure",
                    json!({ "corruption": e.to_string() }),
                );
            }
            Ok(order) => {
                let pos = positions(&order);
                v.pass("precedence");
                for (a, seq) in &returned {
                    let mut prev: Option<usize> = None;
                    for t in seq.iter() {
                        match pos.get(t) {
                            None => {
                                v.fail("precedence", json!({ "append": a.token, "missing": t }));
                                break;
                            }
                            Some(&p) if prev.is_some_and(|q| p <= q) => {
                                v.fail(
                                    "precedence",
                                    json!({ "append": a.token, "out-of-order": t }),
                                );
                                break;
                            }
                            Some(&p) => prev = Some(p),
                        }
                    }
                }
                v.pass("completed-in-structure");
                if let Some((a, _)) = returned.iter().find(|(a, _)| !pos.contains_key(&a.token)) {
                    v.fail("completed-in-structure", json!({ "append": a.token }));
                }
            }
        },
    }

    let sets: Vec<HashSet<Token>> = returned
        .iter()
        .map(|(_, s)| s.iter().copied().collect())
        .collect();
    let mut total = 0;
    for (a, _) in &returned {
        let done = a.respond.expect("returned appends responded");
        let misses = returned
            .iter()
            .zip(&sets)
            .filter(|((b, _), set)| b.invoke > done && !set.contains(&a.token))
            .count() as u64;
        total += misses;
        v.count("visibility-misses-max", misses);
    }
    v.count("visibility-misses", total);
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::checkers::verdict::Status;

    fn t(x: u64) -> Token {
        Token(x)
    }

    fn rec(token: u64, invoke: u64, respond: u64, seq: &[u64]) -> AppendRecord {
        AppendRecord {
            pid: token as usize,
            token: t(token),
            invoke,
            respond: Some(respond),
            sequence: Some(seq.iter().map(|&x| t(x)).collect()),
        }
    }

    fn check(appends: Vec<AppendRecord>) -> Verdict {
        check_weak_log(&WeakLogRunRecord {
            appends,
            snapshot: None,
        })
        .unwrap()
    }

    #[test]
    fn prefix_sequences_pass() {
        let v = check(vec![rec(1, 0, 1, &[1]), rec(2, 2, 3, &[1, 2])]);
        assert!(v.passed());
        assert_eq!(v.counter("visibility-misses"), 0);
    }

    #[test]
    fn wrong_last_element_breaks_suffixing() {
        let v = check(vec![rec(1, 0, 3, &[1]), rec(2, 1, 2, &[2, 1])]);
        assert_eq!(v.status("suffixing"), Some(Status::Fail));
        assert_eq!(
            v.properties["suffixing"].witness,
            Some(json!({ "append": 2, "last": 1 }))
        );
    }

    #[test]
    fn opposite_orders_break_total_order() {
        let v = check(vec![rec(1, 0, 5, &[2, 1]), rec(2, 1, 4, &[1, 2])]);
        assert_eq!(v.status("total-order"), Some(Status::Fail));
        assert_eq!(
            v.properties["total-order"].witness.as_ref().unwrap()["pair"],
            json!([2, 1])
        );
    }

    #[test]
    fn unknown_value_breaks_validity() {
        let v = check(vec![rec(1, 0, 1, &[7, 1])]);
        assert_eq!(v.status("validity"), Some(Status::Fail));
    }

    #[test]
    fn misses_are_counted_not_failed() {
        let v = check(vec![
            rec(1, 0, 1, &[1]),
            rec(2, 2, 3, &[2]),
            rec(3, 4, 5, &[1, 3]),
        ]);
        assert!(v.passed());
        assert_eq!(v.counter("visibility-misses"), 2);
        assert_eq!(v.counter("visibility-misses-max"), 1);
    }

    #[test]
    fn subsequence_of_structure_order() {
        let snapshot = Some(Snapshot::Chain {
            nodes: vec![t(3), t(2), t(1)],
        });
        let ok = WeakLogRunRecord {
            appends: vec![rec(1, 0, 1, &[1]), rec(3, 2, 3, &[1, 3])],
            snapshot: snapshot.clone(),
        };
        assert_eq!(
            check_weak_log(&ok).unwrap().status("precedence"),
            Some(Status::Pass)
        );
        let bad = WeakLogRunRecord {
            appends: vec![rec(1, 0, 5, &[3, 1]), rec(3, 2, 3, &[3])],
            snapshot,
        };
        assert_eq!(
            check_weak_log(&bad).unwrap().status("precedence"),
            Some(Status::Fail)
        );
    }

    #[test]
    fn inversion_search() {
        let b = positions(&[t(1), t(2), t(3)]);
        assert_eq!(first_inversion(&[t(1), t(3), t(2)], &b), Some((t(3), t(2))));
        assert_eq!(first_inversion(&[t(1), t(9), t(3)], &b), None);
    }
}
