//! Step bounds and per-operation accounting.
//!
//! Wait-freedom cannot be observed on a finite run, so each completed
//! operation's step count is held against a bound that grows with the
//! number of arrived processes and inserted values. The defaults are
//! derived from the algorithms' own accounting, with slack:
//!
//! * consensus log: 3 fixed steps, at most one side propose per other
//!   reader of the same `last` value, and a collect of at most two reads
//!   per value;
//! * CAS log: a read and a CAS, then at most three steps per competing
//!   insertion (a failed CAS, a read, and one read-phase load);
//! * universal object: the announcement append plus one propose per
//!   helped operation.
//!
//! Emulated consensus doubles the cost of each propose.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value as Json};

use super::verdict::Verdict;
use crate::harness::{Algorithm, ConsensusImpl, EventKind, History, OperationSpan, RunConfig};
use crate::substrate::MemOp;
use crate::weaklog::LogKind;

/// `constant + per_arrival * arrived + per_insert * inserted` steps.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepBound {
    pub constant: u64,
    pub per_arrival: u64,
    pub per_insert: u64,
}

impl StepBound {
    pub fn limit(&self, arrived: u64, inserted: u64) -> u64 {
        self.constant + self.per_arrival * arrived + self.per_insert * inserted
    }

    pub fn for_config(config: &RunConfig) -> Self {
        let emulated = config.consensus == ConsensusImpl::OverCas;
        let x = if emulated { 2 } else { 1 };
        match &config.algorithm {
            Algorithm::Consensus => StepBound {
                constant: 2 * x,
                per_arrival: 0,
                per_insert: 0,
            },
            Algorithm::WeaklogCons => StepBound {
                constant: 2 + x,
                per_arrival: x,
                per_insert: 2,
            },
            Algorithm::WeaklogCas => StepBound {
                constant: 2,
                per_arrival: 0,
                per_insert: 3,
            },
            Algorithm::Universal(_) => match config.announcements {
                LogKind::Consensus => StepBound {
                    constant: 2 + x,
                    per_arrival: x,
                    per_insert: 2 + x,
                },
                LogKind::Cas => StepBound {
                    constant: 2,
                    per_arrival: 0,
                    per_insert: 3 + x,
                },
            },
        }
    }
}

/// Property `step-bound` over completed operations. Crashed and
/// unfinished operations are not bounded.
pub fn check_progress(history: &History, bound: &StepBound) -> Verdict {
    let mut v = Verdict::new();
    let arrived = history.arrived() as u64;
    let inserted = history
        .events
        .iter()
        .filter(|e| e.kind == EventKind::Invoke)
        .count() as u64;
    let limit = bound.limit(arrived, inserted);
    v.pass("step-bound");
    for op in history.operations().iter().filter(|o| o.completed()) {
        let steps = op.steps.len() as u64;
        v.count("op-steps-max", steps);
        if steps > limit {
            v.fail(
                "step-bound",
                json!({ "token": op.invoke.input["token"], "steps": steps, "bound": limit }),
            );
        }
    }
    v.count("mem-steps", history.mem_steps().count() as u64);
    v
}

fn cell_id(j: &Json) -> Option<u64> {
    j.as_u64()
}

/// Side proposes of each completed append are at most the number of other
/// appends whose first read of `last` returned the same spine cell, and
/// collects read at most two cells per inserted value.
///
/// Relies on the step layout of an append over native consensus: read
/// `last`, propose, write `last`, then side proposes and collect reads.
pub fn check_consensus_log_accounting(history: &History) -> Verdict {
    let mut v = Verdict::new();
    let ops = history.operations();
    let inserted = ops.len() as u64;
    let mut readers: HashMap<u64, u64> = HashMap::new();
    for op in &ops {
        if let Some(c) = op.steps.first().and_then(|s| cell_id(&s.out)) {
            *readers.entry(c).or_default() += 1;
        }
    }
    v.pass("side-propose-accounting");
    v.pass("collect-bound");
    for op in ops.iter().filter(|o| o.completed()) {
        let Some(spine) = op.steps.first().and_then(|s| cell_id(&s.out)) else {
            v.fail(
                "side-propose-accounting",
                json!({ "token": op.invoke.input["token"], "reason": "no read of last" }),
            );
            continue;
        };
        let tail = op.steps.get(3..).unwrap_or(&[]);
        let side = tail.iter().filter(|s| s.op == Some(MemOp::Propose)).count() as u64;
        let reads = tail.iter().filter(|s| s.op == Some(MemOp::Read)).count() as u64;
        let same = readers[&spine];
        v.count("side-proposes", side);
        v.count("side-proposes-max", side);
        if side + 1 > same {
            v.fail(
                "side-propose-accounting",
                json!({ "token": op.invoke.input["token"], "side-proposes": side, "same-last-readers": same }),
            );
        }
        if reads > 2 * inserted {
            v.fail(
                "collect-bound",
                json!({ "token": op.invoke.input["token"], "reads": reads, "inserted": inserted }),
            );
        }
    }
    v
}

/// Per CAS cell, the event indices and pids of successful CAS steps.
fn successful_cas(history: &History) -> HashMap<u64, Vec<(u64, usize)>> {
    let mut by_cell: HashMap<u64, Vec<(u64, usize)>> = HashMap::new();
    for e in history.mem_steps() {
        if e.op == Some(MemOp::Cas) && e.out == Json::Bool(true) {
            by_cell
                .entry(e.cell.expect("mem-steps name a cell"))
                .or_default()
                .push((e.i, e.pid));
        }
    }
    by_cell
}

/// For the CAS log:
///
/// * `failed-cas-accounting`: every failed CAS is explained by a successful
///   CAS of another process on the same cell after this process last read
///   it, distinct per failure, and attempts are at most one plus the number
///   of competing insertions during the append;
/// * `read-replay`: each returned sequence is the reverse of the nodes read
///   below the insertion point.
///
/// Counts failed CASes and those that expected `Empty`.
pub fn check_cas_log_accounting(history: &History) -> Verdict {
    let mut v = Verdict::new();
    let wins = successful_cas(history);
    let ops = history.operations();
    v.pass("failed-cas-accounting");
    for op in &ops {
        check_failed_cas(op, &wins, history, &mut v);
    }

    // Node reference -> token of the append that published it.
    let mut node_token: HashMap<u64, Json> = HashMap::new();
    for op in &ops {
        if let Some(win) = op
            .steps
            .iter()
            .find(|s| s.op == Some(MemOp::Cas) && s.out == Json::Bool(true))
        {
            if let Some(node) = cell_id(&win.input["update"]) {
                node_token.insert(node, op.invoke.input["token"].clone());
            }
        }
    }
    v.pass("read-replay");
    for op in ops.iter().filter(|o| o.completed()) {
        let Some(k) = op
            .steps
            .iter()
            .position(|s| s.op == Some(MemOp::Cas) && s.out == Json::Bool(true))
        else {
            v.fail(
                "read-replay",
                json!({ "token": op.invoke.input["token"], "reason": "no successful cas" }),
            );
            continue;
        };
        let mut below = vec![op.steps[k].input["expect"].clone()];
        below.extend(op.steps[k + 1..].iter().map(|s| s.out.clone()));
        let mut expected: Vec<Json> = below
            .iter()
            .take_while(|n| !n.is_null())
            .map(|n| {
                cell_id(n)
                    .and_then(|id| node_token.get(&id).cloned())
                    .unwrap_or(Json::Null)
            })
            .collect();
        expected.reverse();
        expected.push(op.invoke.input["token"].clone());
        let returned = op.respond.map(|r| r.out.clone()).unwrap_or(Json::Null);
        if returned != Json::Array(expected.clone()) {
            v.fail("read-replay", json!({ "token": op.invoke.input["token"], "returned": returned, "replayed": expected }));
        }
    }
    v
}

fn check_failed_cas(
    op: &OperationSpan<'_>,
    wins: &HashMap<u64, Vec<(u64, usize)>>,
    history: &History,
    v: &mut Verdict,
) {
    let mut last_read: HashMap<u64, u64> = HashMap::new();
    let mut matched = Vec::new();
    let mut attempts = 0u64;
    for s in &op.steps {
        let cell = s.cell.expect("mem-steps name a cell");
        match s.op {
            Some(MemOp::Read) => {
                last_read.insert(cell, s.i);
            }
            Some(MemOp::Cas) => {
                attempts += 1;
                if s.out == Json::Bool(true) {
                    continue;
                }
                v.count("cas-failures", 1);
                if s.input["expect"].is_null() {
                    v.count("empty-retries", 1);
                }
                let from = last_read.get(&cell).copied().unwrap_or(0);
                let culprit = wins.get(&cell).and_then(|w| {
                    w.iter().find(|&&(i, pid)| {
                        i > from && i < s.i && pid != op.pid && !matched.contains(&i)
                    })
                });
                match culprit {
                    Some(&(i, _)) => matched.push(i),
                    None => v.fail(
                        "failed-cas-accounting",
                        json!({ "token": op.invoke.input["token"], "failed-cas": s.i, "reason": "no competing insertion" }),
                    ),
                }
            }
            _ => {}
        }
    }
    let start = op.invoke.i;
    let end = op.respond.map_or(history.events.len() as u64, |r| r.i);
    let competitors = wins
        .values()
        .flatten()
        .filter(|&&(i, pid)| pid != op.pid && i > start && i < end)
        .count() as u64;
    v.count("cas-attempts-max", attempts);
    if attempts > 1 + competitors {
        v.fail(
            "failed-cas-accounting",
            json!({ "token": op.invoke.input["token"], "attempts": attempts, "competitors": competitors }),
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{run, Strategy};

    #[test]
    fn solo_cas_append_is_two_steps() {
        let h = run(&RunConfig::new(Algorithm::WeaklogCas, 1)).unwrap();
        let bound = StepBound::for_config(&RunConfig::new(Algorithm::WeaklogCas, 1));
        let v = check_progress(&h, &bound);
        assert!(v.passed());
        assert_eq!(v.counter("op-steps-max"), 2);
        assert!(2 <= bound.limit(1, 1));
    }

    #[test]
    fn crashed_operations_are_not_bounded() {
        let c = RunConfig::new(Algorithm::WeaklogCons, 3).crash(0, 2);
        let h = run(&c).unwrap();
        let tight = StepBound {
            constant: 1_000,
            per_arrival: 0,
            per_insert: 0,
        };
        assert!(check_progress(&h, &tight).passed());
        let v = check_progress(
            &h,
            &StepBound {
                constant: 0,
                per_arrival: 0,
                per_insert: 0,
            },
        );
        assert!(!v.passed());
        let witness = &v.properties["step-bound"].witness.as_ref().unwrap()["token"];
        assert_ne!(witness, 0);
    }

    #[test]
    fn accounting_holds_on_random_runs() {
        for seed in 0..50 {
            let cons = run(&RunConfig::new(Algorithm::WeaklogCons, 5).seed(seed)).unwrap();
            assert!(
                check_consensus_log_accounting(&cons).passed(),
                "seed {seed}"
            );
            let cas = run(&RunConfig::new(Algorithm::WeaklogCas, 5).seed(seed)).unwrap();
            let v = check_cas_log_accounting(&cas);
            assert!(v.passed(), "seed {seed}: {v}");
        }
    }

    #[test]
    fn round_robin_forces_cas_failures() {
        let h =
            run(&RunConfig::new(Algorithm::WeaklogCas, 4).strategy(Strategy::RoundRobin)).unwrap();
        let v = check_cas_log_accounting(&h);
        assert!(v.passed(), "{v}");
        assert!(v.counter("cas-failures") > 0);
    }
}
