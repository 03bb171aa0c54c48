// The adversary holds a process between its spine propose and its write
// of `last` while others keep appending. When it finally writes, `last`
// moves back to an old spine cell; later appends pile into side lists and
// some sequences miss values that were already returned.

use infinilog::checkers::check_history;
use infinilog::harness::{run, Algorithm, RunConfig, Strategy};
use infinilog::weaklog::Snapshot;

fn main() {
    for k in [1, 4, 16] {
        let config = RunConfig::new(Algorithm::WeaklogCons, 24)
            .strategy(Strategy::StaleLast { k })
            .seed(3);
        let history = run(&config).expect("valid config");
        let verdict = check_history(&history).expect("well-formed history");
        assert!(verdict.passed(), "{verdict}");
        let snapshot: Snapshot =
            serde_json::from_value(history.outcome.snapshot.clone()).expect("spine");
        let longest = match &snapshot {
            Snapshot::Spine { lists, .. } => {
                lists.iter().map(|l| l.values.len()).max().unwrap_or(0)
            }
            Snapshot::Chain { .. } => unreachable!(),
        };
        println!(
            "k={k:>2}: side proposes {:>3}, longest list {longest:>2}, visibility misses {}",
            verdict.counter("side-proposes"),
            verdict.counter("visibility-misses")
        );
    }
}
