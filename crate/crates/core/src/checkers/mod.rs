//! Correctness checkers over recorded histories.
//!
//! Every checker returns a [`Verdict`]: named properties with pass, fail or
//! n/a, a witness for each failure, and counters. [`check_history`] picks
//! the checks that apply to the algorithm a history was recorded with.

pub mod cells;
pub mod linearizable;
pub mod precedence;
pub mod progress;
pub mod verdict;
pub mod weak_log;

use std::collections::HashSet;

use serde_json::{json, Value as Json};

pub use cells::{check_consensus_cells, check_consensus_run, check_word_replay};
pub use linearizable::{
    check_linearizable, check_linearizable_from, linearize, operations_from_history,
    validate_witness, Linearization, OpRecord, TooManyOps, SEARCH_BOUND,
};
pub use precedence::{precedence_order, CorruptionError};
pub use progress::{
    check_cas_log_accounting, check_consensus_log_accounting, check_progress, StepBound,
};
pub use verdict::{PropertyResult, Status, Verdict};
pub use weak_log::{check_weak_log, AppendRecord, RecordError, WeakLogRunRecord};

use crate::harness::{Algorithm, ConfigError, ConsensusImpl, History, RunConfig, RunStatus};
use crate::universal::{SequentialSpec, SpecRegistry};
use crate::weaklog::Token;

#[derive(Debug, thiserror::Error)]
pub enum CheckError {
    #[error("history config: {0}")]
    Config(#[from] serde_json::Error),
    #[error(transparent)]
    Spec(#[from] ConfigError),
    #[error(transparent)]
    Record(#[from] RecordError),
}

#[derive(Clone, Debug, Default)]
pub struct CheckOptions {
    /// Treat unfinished operations of a truncated run as acceptable.
    pub allow_truncation: bool,
    /// Overrides [`StepBound::for_config`].
    pub step_bound: Option<StepBound>,
}

/// Universal-object checks: no operation is decided twice, the decided
/// chain is itself a linearization, and for histories within
/// [`SEARCH_BOUND`] an exhaustive linearizability search.
pub fn check_universal(history: &History, spec: &SequentialSpec) -> Verdict {
    let mut v = Verdict::new();
    let ops = operations_from_history(history);
    let chain: Option<Vec<Token>> =
        serde_json::from_value(history.outcome.snapshot["chain"].clone()).ok();
    match &chain {
        None => {
            v.not_applicable("token-uniqueness");
            v.not_applicable("chain-witness");
        }
        Some(chain) => {
            let mut seen = HashSet::new();
            v.record(
                "token-uniqueness",
                match chain.iter().find(|t| !seen.insert(**t)) {
                    Some(t) => Err(json!({ "repeated": t })),
                    None => Ok(()),
                },
            );
            v.record(
                "chain-witness",
                validate_witness(&ops, spec, spec.initial(), chain),
            );
            v.count("chain-length", chain.len() as u64);
        }
    }
    match check_linearizable(&ops, spec) {
        Ok(lin) => v.merge(lin),
        Err(_) => v.not_applicable("linearizable"),
    }
    v
}

/// Checks a history with the built-in specs and default options.
pub fn check_history(history: &History) -> Result<Verdict, CheckError> {
    check_history_in(history, &SpecRegistry::builtin(), &CheckOptions::default())
}

pub fn check_history_in(
    history: &History,
    registry: &SpecRegistry,
    options: &CheckOptions,
) -> Result<Verdict, CheckError> {
    let config: RunConfig = serde_json::from_value(history.config.clone())?;
    let mut v = Verdict::new();

    v.record(
        "no-structural-errors",
        match history.outcome.status {
            RunStatus::Failed => Err(json!({ "error": history.outcome.error })),
            _ => Ok(()),
        },
    );
    let truncated = history.outcome.steps >= config.schedule.step_cap;
    let unfinished: Vec<Json> = history
        .operations()
        .iter()
        .filter(|o| !o.completed() && !o.crashed)
        .map(|o| o.invoke.input["token"].clone())
        .collect();
    let explicit = config.crashes.iter().map(|c| c.pid).collect::<HashSet<_>>();
    let cut_short: Vec<Json> = history
        .operations()
        .iter()
        .filter(|o| o.crashed && !explicit.contains(&o.pid))
        .map(|o| o.invoke.input["token"].clone())
        .collect();
    if !unfinished.is_empty() {
        v.fail("termination", json!({ "unfinished": unfinished }));
    } else if !cut_short.is_empty() && !(truncated && options.allow_truncation) {
        v.fail("termination", json!({ "crashed-at-step-cap": cut_short }));
    } else {
        v.pass("termination");
    }

    let bound = options
        .step_bound
        .unwrap_or_else(|| StepBound::for_config(&config));
    v.merge(check_progress(history, &bound));
    v.merge(check_consensus_cells(history));
    v.merge(check_word_replay(history));

    match &config.algorithm {
        Algorithm::Consensus => v.merge(check_consensus_run(history)),
        Algorithm::WeaklogCons | Algorithm::WeaklogCas => {
            let record = WeakLogRunRecord::from_history(history)?;
            v.merge(check_weak_log(&record)?);
            match (&config.algorithm, config.consensus) {
                (Algorithm::WeaklogCons, ConsensusImpl::Native) => {
                    v.merge(check_consensus_log_accounting(history))
                }
                (Algorithm::WeaklogCas, _) => v.merge(check_cas_log_accounting(history)),
                _ => {}
            }
        }
        Algorithm::Universal(name) => {
            let spec = registry
                .get(name)
                .ok_or_else(|| ConfigError::UnknownSpec(name.clone()))?;
            v.merge(check_universal(history, &spec));
        }
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{run, Strategy};

    #[test]
    fn random_runs_pass_every_check() {
        let algos = [
            Algorithm::Consensus,
            Algorithm::WeaklogCons,
            Algorithm::WeaklogCas,
            Algorithm::Universal("queue".into()),
            Algorithm::Universal("counter".into()),
        ];
        for algo in algos {
            for seed in 0..20 {
                let h = run(&RunConfig::new(algo.clone(), 4).ops_per_proc(2).seed(seed)).unwrap();
                let v = check_history(&h).unwrap();
                assert!(v.passed(), "{algo} seed {seed}:\n{v}");
            }
        }
    }

    #[test]
    fn explicit_crashes_do_not_fail_termination() {
        let h = run(&RunConfig::new(Algorithm::WeaklogCons, 3).crash(1, 1)).unwrap();
        let v = check_history(&h).unwrap();
        assert!(v.passed(), "{v}");
    }

    #[test]
    fn truncation_needs_the_option() {
        let c = RunConfig::new(Algorithm::WeaklogCas, 4)
            .strategy(Strategy::RoundRobin)
            .step_cap(5);
        let h = run(&c).unwrap();
        assert_eq!(
            check_history(&h).unwrap().status("termination"),
            Some(Status::Fail)
        );
        let opts = CheckOptions {
            allow_truncation: true,
            step_bound: None,
        };
        let v = check_history_in(&h, &SpecRegistry::builtin(), &opts).unwrap();
        assert_eq!(v.status("termination"), Some(Status::Pass));
    }

    #[test]
    fn large_universal_histories_skip_the_search() {
        let h =
            run(&RunConfig::new(Algorithm::Universal("stack".into()), 4).ops_per_proc(3)).unwrap();
        let v = check_history(&h).unwrap();
        assert_eq!(v.status("linearizable"), Some(Status::NotApplicable));
        assert_eq!(v.status("chain-witness"), Some(Status::Pass));
    }
}
