// Every interleaving of three processes appending once to the CAS log,
// checked one by one, with and without sleep-set reduction.

use infinilog::checkers::{check_history_in, CheckOptions, Verdict};
use infinilog::harness::{explore, Algorithm, ExploreOptions, Reduction, RunConfig};
use infinilog::universal::SpecRegistry;

fn main() {
    let registry = SpecRegistry::builtin();
    let options = CheckOptions {
        allow_truncation: true,
        step_bound: None,
    };
    for reduction in [Reduction::None, Reduction::SleepSets] {
        let config = RunConfig::new(Algorithm::WeaklogCas, 3);
        let mut explorer = explore(
            &config,
            ExploreOptions {
                reduction,
                ..ExploreOptions::default()
            },
        );
        let mut total = Verdict::new();
        for history in explorer.by_ref() {
            let history = history.expect("under the limit");
            total.merge(check_history_in(&history, &registry, &options).expect("well-formed"));
        }
        let stats = explorer.stats();
        println!(
            "{reduction:?}: {} schedules, {} pruned, {} empty retries, {}",
            stats.schedules,
            stats.pruned,
            total.counter("empty-retries"),
            if total.passed() {
                "all pass"
            } else {
                "FAILURES"
            }
        );
        assert!(total.passed(), "{total}");
    }
}
