//! Cell-level replay checks and the consensus-object checks.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde_json::{json, Value as Json};

use super::verdict::Verdict;
use crate::harness::{Event, History};
use crate::substrate::MemOp;

/// Per consensus cell (any cell with a propose step): every non-undecided
/// value observed is the same, it was proposed, and the first propose
/// decided its own value. Compact histories render compound values as
/// `null`, which makes the value comparisons vacuous for them.
pub fn check_consensus_cells(history: &History) -> Verdict {
    let mut v = Verdict::new();
    let mut cells: BTreeMap<u64, Vec<&Event>> = BTreeMap::new();
    for e in history.mem_steps() {
        cells
            .entry(e.cell.expect("mem-steps name a cell"))
            .or_default()
            .push(e);
    }
    v.pass("consensus-cells");
    let mut checked = 0;
    for (cell, events) in cells {
        if !events.iter().any(|e| e.op == Some(MemOp::Propose)) {
            continue;
        }
        checked += 1;
        let proposed: Vec<&Json> = events
            .iter()
            .filter(|e| e.op == Some(MemOp::Propose))
            .map(|e| &e.input)
            .collect();
        let observed: Vec<&Json> = events
            .iter()
            .map(|e| &e.out)
            .filter(|o| !o.is_null())
            .collect();
        if let Some(first) = events.iter().find(|e| e.op == Some(MemOp::Propose)) {
            if first.out != first.input {
                v.fail("consensus-cells", json!({ "cell": cell, "reason": "first propose did not decide", "event": first.i }));
            }
        }
        if observed.windows(2).any(|w| w[0] != w[1]) {
            v.fail(
                "consensus-cells",
                json!({ "cell": cell, "reason": "disagreement" }),
            );
        }
        if observed.first().is_some_and(|d| !proposed.contains(d)) {
            v.fail(
                "consensus-cells",
                json!({ "cell": cell, "reason": "decided value never proposed" }),
            );
        }
    }
    v.count("consensus-cells", checked);
    v
}

/// Replays reads, writes and CASes of every word cell (cells without
/// proposes) and checks each returned value and CAS outcome. Contents
/// before a cell's first recorded step are inferred from that step.
pub fn check_word_replay(history: &History) -> Verdict {
    let mut v = Verdict::new();
    let mut proposed = HashSet::new();
    for e in history.mem_steps() {
        if e.op == Some(MemOp::Propose) {
            proposed.insert(e.cell);
        }
    }
    let mut content: HashMap<u64, Json> = HashMap::new();
    v.pass("register-replay");
    for e in history.mem_steps().filter(|e| !proposed.contains(&e.cell)) {
        let cell = e.cell.expect("mem-steps name a cell");
        let known = content.get(&cell);
        let ok = match e.op {
            Some(MemOp::Read) => {
                let ok = known.is_none_or(|k| *k == e.out);
                content.insert(cell, e.out.clone());
                ok
            }
            Some(MemOp::Write) => {
                content.insert(cell, e.input.clone());
                true
            }
            Some(MemOp::Cas) => {
                let expect = &e.input["expect"];
                if e.out == Json::Bool(true) {
                    let ok = known.is_none_or(|k| k == expect);
                    content.insert(cell, e.input["update"].clone());
                    ok
                } else {
                    known.is_none_or(|k| k != expect)
                }
            }
            _ => true,
        };
        if !ok {
            v.fail("register-replay", json!({ "event": e.i, "cell": cell }));
        }
    }
    v
}

/// Agreement and validity over the proposals of a consensus run, and every
/// returned value equal to the value the cell finally holds.
pub fn check_consensus_run(history: &History) -> Verdict {
    let mut v = Verdict::new();
    let ops = history.operations();
    let proposed: HashSet<i64> = ops
        .iter()
        .filter_map(|o| o.invoke.input["arg"].as_i64())
        .collect();
    let decided: Vec<(Json, i64)> = ops
        .iter()
        .filter_map(|o| {
            o.respond.map(|r| {
                (
                    o.invoke.input["token"].clone(),
                    r.out.as_i64().unwrap_or(i64::MIN),
                )
            })
        })
        .collect();
    v.pass("agreement");
    v.pass("validity");
    v.pass("propose-returns-decided");
    if let Some(w) = decided.windows(2).find(|w| w[0].1 != w[1].1) {
        v.fail(
            "agreement",
            json!({ "tokens": [w[0].0, w[1].0], "decided": [w[0].1, w[1].1] }),
        );
    }
    if let Some((t, d)) = decided.iter().find(|(_, d)| !proposed.contains(d)) {
        v.fail("validity", json!({ "token": t, "decided": d }));
    }
    match history.outcome.snapshot["decided"].as_i64() {
        Some(cell) => {
            if let Some((t, d)) = decided.iter().find(|(_, d)| *d != cell) {
                v.fail(
                    "propose-returns-decided",
                    json!({ "token": t, "returned": d, "cell": cell }),
                );
            }
        }
        None if !decided.is_empty() => v.fail(
            "propose-returns-decided",
            json!({ "reason": "cell undecided after a propose returned" }),
        ),
        None => {}
    }
    v.count("proposals", ops.len() as u64);
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{run, Algorithm, RunConfig};

    #[test]
    fn replay_holds_on_random_runs() {
        for seed in 0..50 {
            let cons = run(&RunConfig::new(Algorithm::WeaklogCons, 5).seed(seed)).unwrap();
            assert!(check_consensus_cells(&cons).passed(), "seed {seed}");
            assert!(check_word_replay(&cons).passed(), "seed {seed}");
            let cas = run(&RunConfig::new(Algorithm::WeaklogCas, 5).seed(seed)).unwrap();
            assert!(check_word_replay(&cas).passed(), "seed {seed}");
            let one = run(&RunConfig::new(Algorithm::Consensus, 4).seed(seed)).unwrap();
            let v = check_consensus_run(&one);
            assert!(v.passed(), "seed {seed}: {v}");
            assert!(check_consensus_cells(&one).passed());
        }
    }

    #[test]
    fn tampered_read_is_caught() {
        let mut h = run(&RunConfig::new(Algorithm::WeaklogCas, 3).seed(1)).unwrap();
        let e = h
            .events
            .iter_mut()
            .filter(|e| e.op == Some(MemOp::Read))
            .nth(1)
            .unwrap();
        e.out = json!(12345);
        assert!(!check_word_replay(&h).passed());
    }

    #[test]
    fn disagreement_is_caught() {
        let mut h = run(&RunConfig::new(Algorithm::Consensus, 3).seed(2)).unwrap();
        let r = h
            .events
            .iter_mut()
            .filter(|e| e.kind == crate::harness::EventKind::Respond)
            .last()
            .unwrap();
        r.out = json!(-7);
        let v = check_consensus_run(&h);
        assert!(!v.passed());
        assert!(v.status("agreement") == Some(super::super::verdict::Status::Fail));
    }
}
