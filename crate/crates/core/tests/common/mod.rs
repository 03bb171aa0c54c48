//! Shared test helpers: a brute-force linearizability oracle and a
//! generator of small random histories.

#![allow(dead_code)]

use infinilog::checkers::OpRecord;
use infinilog::universal::{Invocation, Response, SequentialSpec};
use rand::seq::SliceRandom;
use rand::Rng;

/// Tries every subset of the incomplete operations and every permutation
/// of the chosen operations. Shares nothing with the checker's search.
pub fn naive_linearizable(ops: &[OpRecord], spec: &SequentialSpec) -> bool {
    let pending: Vec<usize> = (0..ops.len())
        .filter(|&i| ops[i].response.is_none())
        .collect();
    let done: Vec<usize> = (0..ops.len())
        .filter(|&i| ops[i].response.is_some())
        .collect();
    (0u32..1 << pending.len()).any(|mask| {
        let mut chosen = done.clone();
        chosen.extend(
            pending
                .iter()
                .enumerate()
                .filter(|(b, _)| mask & (1 << b) != 0)
                .map(|(_, &i)| i),
        );
        permutations(&chosen)
            .iter()
            .any(|perm| valid_order(ops, spec, perm))
    })
}

fn valid_order(ops: &[OpRecord], spec: &SequentialSpec, perm: &[usize]) -> bool {
    for a in 0..perm.len() {
        for b in a + 1..perm.len() {
            // A later operation that finished before an earlier one started.
            if let Some(r) = ops[perm[b]].respond {
                if r < ops[perm[a]].invoke {
                    return false;
                }
            }
        }
    }
    let mut state = spec.initial().clone();
    for &i in perm {
        let (next, got) = spec.apply(&state, &ops[i].invocation);
        if ops[i].response.is_some_and(|want| want != got) {
            return false;
        }
        state = next;
    }
    true
}

fn permutations(items: &[usize]) -> Vec<Vec<usize>> {
    if items.is_empty() {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for (k, &x) in items.iter().enumerate() {
        let mut rest = items.to_vec();
        rest.remove(k);
        for mut p in permutations(&rest) {
            p.insert(0, x);
            out.push(p);
        }
    }
    out
}

/// Up to `max_ops` operations with random intervals. Responses come from
/// applying the operations at random points inside their intervals, so the
/// history starts out linearizable; a third of the histories then get one
/// response replaced. Some operations never respond, and those take effect
/// or not at random.
pub fn random_history<R: Rng>(rng: &mut R, spec: &SequentialSpec, max_ops: usize) -> Vec<OpRecord> {
    let n = rng.gen_range(1..=max_ops);
    struct Draft {
        inv: Invocation,
        invoke: u64,
        respond: Option<u64>,
        point: Option<u64>,
    }
    let mut drafts: Vec<Draft> = (0..n)
        .map(|t| {
            let invoke = rng.gen_range(0..40) * 3;
            let len = rng.gen_range(0..20) * 3 + 2;
            let arg = rng.gen_range(1..5);
            let inv = if spec.name() == "counter" && rng.gen_bool(0.3) {
                Invocation::new(t as u64, "read", None)
            } else {
                spec.sample_op(rng, t as u64, arg)
            };
            if rng.gen_bool(0.15) {
                let point = rng
                    .gen_bool(0.5)
                    .then(|| invoke + 1 + rng.gen_range(0..len));
                Draft {
                    inv,
                    invoke,
                    respond: None,
                    point,
                }
            } else {
                Draft {
                    inv,
                    invoke,
                    respond: Some(invoke + len),
                    point: Some(invoke + 1 + rng.gen_range(0..len - 1)),
                }
            }
        })
        .collect();
    let mut order: Vec<usize> = (0..n).filter(|&i| drafts[i].point.is_some()).collect();
    order.sort_by_key(|&i| drafts[i].point);
    let mut responses = vec![None; n];
    let mut state = spec.initial().clone();
    for i in order {
        let (next, r) = spec.apply(&state, &drafts[i].inv);
        state = next;
        responses[i] = Some(r);
    }
    let mut ops: Vec<OpRecord> = drafts
        .drain(..)
        .zip(responses)
        .map(|(d, r)| OpRecord {
            invocation: d.inv,
            invoke: d.invoke,
            respond: d.respond,
            response: d.respond.and(r),
        })
        .collect();
    if rng.gen_bool(1.0 / 3.0) {
        let completed: Vec<usize> = (0..n).filter(|&i| ops[i].response.is_some()).collect();
        if let Some(&i) = completed.choose(rng) {
            ops[i].response = Some(
                *[
                    Response::Ok,
                    Response::Empty,
                    Response::Value(rng.gen_range(0..5)),
                ]
                .choose(rng)
                .unwrap(),
            );
        }
    }
    ops
}
