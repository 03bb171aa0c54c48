//! Execution harness.
//!
//! Simulated processes arrive according to an arrival pattern and take one
//! shared-memory step each time the scheduler picks them. A run is fully
//! determined by its [`RunConfig`]; its [`History`] records arrivals,
//! invocations, every memory step and every response. Crashes are permanent
//! scheduling stops, invisible to the algorithms.
//!
//! [`explore`] enumerates the interleavings of small configurations and
//! [`stress`] runs the same operations on real threads over atomics.

mod config;
mod engine;
pub mod explore;
pub mod history;
pub mod schedule;
pub mod stress;
mod workload;

pub use config::{
    Algorithm, Arrivals, ConfigError, ConsensusImpl, CrashPoint, OpSpec, RunConfig, Schedule,
    ScriptStep, Strategy,
};
pub use engine::{SchedView, Scheduler};
pub use explore::{
    explore, explore_in, ExploreError, ExploreOptions, ExploreStats, Explorer, Reduction,
};
pub use history::{Event, EventKind, History, OperationSpan, RunOutcome, RunStatus};

use crate::universal::SpecRegistry;

/// Runs `config` with the built-in specs and its configured strategy.
pub fn run(config: &RunConfig) -> Result<History, ConfigError> {
    run_in(config, &SpecRegistry::builtin())
}

pub fn run_in(config: &RunConfig, registry: &SpecRegistry) -> Result<History, ConfigError> {
    let mut scheduler = schedule::scheduler_for(&config.schedule);
    run_with(config, registry, scheduler.as_mut())
}

/// Runs `config` under a caller-provided scheduler. The configured strategy
/// is still recorded in the history but not used.
pub fn run_with(
    config: &RunConfig,
    registry: &SpecRegistry,
    scheduler: &mut dyn Scheduler,
) -> Result<History, ConfigError> {
    engine::execute(config, registry, scheduler).map(|e| e.history)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn proposals(counts: &[usize]) -> RunConfig {
        let ops = counts
            .iter()
            .map(|&n| vec![OpSpec::new("propose", Some(1)); n])
            .collect();
        RunConfig::new(Algorithm::Consensus, counts.len()).with_ops(ops)
    }

    fn binomial(n: u64, k: u64) -> u64 {
        (1..=k).fold(1, |acc, i| acc * (n + 1 - i) / i)
    }

    #[test]
    fn same_seed_same_history() {
        let c = RunConfig::new(Algorithm::WeaklogCons, 6).seed(42);
        assert_eq!(run(&c).unwrap().to_json(), run(&c).unwrap().to_json());
        let other = run(&c.clone().seed(43)).unwrap().to_json();
        assert_ne!(run(&c).unwrap().to_json(), other);
    }

    #[test]
    fn solo_step_counts() {
        for (algo, steps) in [(Algorithm::WeaklogCas, 2), (Algorithm::WeaklogCons, 4)] {
            let h = run(&RunConfig::new(algo, 1).strategy(Strategy::RoundRobin)).unwrap();
            assert_eq!(h.outcome.status, RunStatus::Complete);
            assert_eq!(h.mem_steps().count(), steps);
        }
    }

    #[test]
    fn events_are_dense_and_well_formed() {
        let h = run(&RunConfig::new(Algorithm::WeaklogCas, 4)
            .ops_per_proc(2)
            .seed(3))
        .unwrap();
        for (i, e) in h.events.iter().enumerate() {
            assert_eq!(e.i, i as u64);
        }
        for pid in 0..4 {
            let kinds: Vec<EventKind> = h
                .events
                .iter()
                .filter(|e| e.pid == pid)
                .map(|e| e.kind)
                .collect();
            assert_eq!(kinds[0], EventKind::Arrive);
            assert_eq!(kinds[1], EventKind::Invoke);
            assert_eq!(*kinds.last().unwrap(), EventKind::Respond);
        }
    }

    #[test]
    fn interleaving_counts_match_the_binomial() {
        for (a, b) in [(1, 1), (2, 3), (4, 4), (1, 6)] {
            let n = explore(&proposals(&[a, b]), ExploreOptions::default()).count() as u64;
            assert_eq!(n, binomial((a + b) as u64, a as u64), "a={a} b={b}");
        }
        // Three processes: the multinomial 6!/(2!2!2!).
        assert_eq!(
            explore(&proposals(&[2, 2, 2]), ExploreOptions::default()).count(),
            90
        );
        assert_eq!(
            explore(&proposals(&[3]), ExploreOptions::default()).count(),
            1
        );
    }

    #[test]
    fn explore_guard_trips() {
        let opts = ExploreOptions {
            limit: 5,
            ..ExploreOptions::default()
        };
        let results: Vec<_> = explore(&proposals(&[3, 3]), opts).collect();
        assert_eq!(results.len(), 6);
        assert_eq!(
            results[5].as_ref().unwrap_err(),
            &ExploreError::LimitExceeded { limit: 5 }
        );
    }

    #[test]
    fn step_cap_crashes_the_rest() {
        let h = run(&RunConfig::new(Algorithm::WeaklogCons, 3).step_cap(5)).unwrap();
        assert_eq!(h.outcome.status, RunStatus::Crashed);
        assert_eq!(h.mem_steps().count(), 5);
        assert!(h.events.iter().any(|e| e.kind == EventKind::Crash));
    }

    #[test]
    fn crashed_process_takes_no_more_steps() {
        let h = run(&RunConfig::new(Algorithm::WeaklogCas, 3).crash(1, 1).seed(9)).unwrap();
        let crash = h
            .events
            .iter()
            .position(|e| e.kind == EventKind::Crash && e.pid == 1)
            .unwrap();
        assert!(h.events[crash..]
            .iter()
            .all(|e| e.pid != 1 || e.kind == EventKind::Crash));
        assert_eq!(h.operations().iter().filter(|o| o.completed()).count(), 2);
    }

    #[test]
    fn sequential_arrivals_never_overlap() {
        let h =
            run(&RunConfig::new(Algorithm::WeaklogCas, 5).arrivals(Arrivals::Sequential)).unwrap();
        let ops = h.operations();
        for w in ops.windows(2) {
            assert!(w[0].respond.unwrap().i < w[1].invoke.i);
        }
    }

    #[test]
    fn unknown_spec_is_rejected() {
        let c = RunConfig::new(Algorithm::Universal("heap".into()), 1);
        assert_eq!(
            run(&c).unwrap_err(),
            ConfigError::UnknownSpec("heap".into())
        );
    }
}
