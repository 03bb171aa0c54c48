// Six appends to the consensus log. p2/p3 and p5/p6 each read the same
// `last`; the losers land in the winners' side lists, so the spine holds
// four lists: [v1] [v2 v3] [v4] [v5 v6].

use infinilog::checkers::check_history;
use infinilog::harness::{run, Algorithm, RunConfig, ScriptStep as S, Strategy};
use infinilog::weaklog::Snapshot;

fn main() {
    let script = vec![
        S::finish(0),
        S::run(1, 1),
        S::run(2, 1),
        S::run(1, 1),
        S::run(2, 1),
        S::finish(1),
        S::finish(2),
        S::finish(3),
        S::run(4, 1),
        S::run(5, 1),
        S::run(4, 1),
        S::run(5, 1),
        S::finish(4),
        S::finish(5),
    ];
    let config = RunConfig::new(Algorithm::WeaklogCons, 6).strategy(Strategy::Scripted { script });
    let history = run(&config).expect("valid config");

    let snapshot: Snapshot =
        serde_json::from_value(history.outcome.snapshot.clone()).expect("spine snapshot");
    if let Snapshot::Spine { lists, .. } = &snapshot {
        for list in lists {
            let values: Vec<String> = list
                .values
                .iter()
                .map(|t| format!("v{}", t.0 + 1))
                .collect();
            println!("spine cell {:>3}: {}", list.cell, values.join(" -> "));
        }
    }
    for op in history.operations() {
        println!(
            "p{} returned {}",
            op.pid + 1,
            op.respond.expect("all finish").out
        );
    }
    let verdict = check_history(&history).expect("well-formed history");
    print!("{verdict}");
    assert!(verdict.passed());
}
