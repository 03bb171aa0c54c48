// CAS log: p4 and p5 read the same top node v3. p4 wins the CAS on `last`;
// p5's CAS fails, so it moves one node down and splices itself in below v3.

use infinilog::checkers::{check_history, precedence_order};
use infinilog::harness::{run, Algorithm, RunConfig, ScriptStep as S, Strategy};
use infinilog::weaklog::Snapshot;

fn main() {
    let script = vec![
        S::finish(0),
        S::finish(1),
        S::finish(2),
        S::run(3, 1),
        S::run(4, 1),
        S::finish(3),
        S::finish(4),
    ];
    let config = RunConfig::new(Algorithm::WeaklogCas, 5).strategy(Strategy::Scripted { script });
    let history = run(&config).expect("valid config");

    for op in history.operations() {
        println!(
            "p{} returned {}",
            op.pid + 1,
            op.respond.expect("all finish").out
        );
    }
    let snapshot: Snapshot =
        serde_json::from_value(history.outcome.snapshot.clone()).expect("chain snapshot");
    let order = precedence_order(&snapshot).expect("no corruption");
    println!(
        "log order: {}",
        order
            .iter()
            .map(|t| format!("v{}", t.0 + 1))
            .collect::<Vec<_>>()
            .join(" ")
    );
    let verdict = check_history(&history).expect("well-formed history");
    print!("{verdict}");
    assert!(verdict.passed());
}
