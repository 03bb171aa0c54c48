// Any total sequential specification can be registered by name and run
// through the universal construction. Here: a register with max-write.

use std::sync::Arc;

use infinilog::checkers::{check_history_in, CheckOptions};
use infinilog::harness::{run_in, Algorithm, RunConfig};
use infinilog::universal::{Invocation, Response, SequentialSpec, SpecRegistry, State};

fn main() {
    let max_register = SequentialSpec::new(
        "max",
        vec![0],
        Arc::new(|s: &State, inv: &Invocation| match (&*inv.op, inv.arg) {
            ("write", Some(x)) => (vec![s[0].max(x)], Response::Ok),
            ("read", _) => (s.clone(), Response::Value(s[0])),
            _ => (s.clone(), Response::Unsupported),
        }),
    )
    .with_ops(&[("write", true), ("read", false)]);

    let mut registry = SpecRegistry::builtin();
    registry.insert(max_register).expect("new name");

    let config = RunConfig::new(Algorithm::Universal("max".into()), 3)
        .ops_per_proc(2)
        .seed(5);
    let history = run_in(&config, &registry).expect("spec is registered");
    for op in history.operations() {
        println!(
            "p{} {} -> {}",
            op.pid,
            op.invoke.input,
            op.respond.expect("finishes").out
        );
    }
    let verdict =
        check_history_in(&history, &registry, &CheckOptions::default()).expect("well-formed");
    print!("{verdict}");
    assert!(verdict.passed());
}
