// A consensus cell decides the first proposal it sees. This runs every
// interleaving of two processes proposing twice each, once with native
// cells and once with cells emulated by a CAS word, and checks each.

use infinilog::checkers::check_history;
use infinilog::harness::{explore, Algorithm, ConsensusImpl, ExploreOptions, RunConfig};
use std::collections::BTreeSet;

fn main() {
    for imp in [ConsensusImpl::Native, ConsensusImpl::OverCas] {
        let config = RunConfig::new(Algorithm::Consensus, 2)
            .ops_per_proc(2)
            .consensus(imp);
        let mut decided = BTreeSet::new();
        let mut schedules = 0;
        for history in explore(&config, ExploreOptions::default()) {
            let history = history.expect("small enough to enumerate");
            let verdict = check_history(&history).expect("well-formed history");
            assert!(verdict.passed(), "{verdict}");
            decided.insert(
                history.outcome.snapshot["decided"]
                    .as_i64()
                    .expect("decided"),
            );
            schedules += 1;
        }
        println!("{imp:?}: {schedules} interleavings, all agree; possible decisions {decided:?}");
    }
}
