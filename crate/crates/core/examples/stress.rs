// Both weak logs on real threads over hardware atomics. Sequences are
// checked as they return; total order and completeness after the join.

use infinilog::harness::stress::{stress, StressConfig};
use infinilog::harness::Algorithm;

fn main() {
    for algo in [Algorithm::WeaklogCons, Algorithm::WeaklogCas] {
        let report = stress(&StressConfig::new(algo, 4).ops_per_thread(500)).expect("valid config");
        print!("{report}");
        assert!(report.verdict.passed());
    }
}
