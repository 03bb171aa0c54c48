//! Real-thread stress runs over [`NativeMemory`].
//!
//! Each thread runs its operations back to back with no scheduler. Invoke
//! and respond times come from one shared atomic counter, so real-time
//! order between operations is exact.
//!
//! Weak-log sequences are checked as they come back: the own value comes
//! last, no value repeats, and every value was invoked before the sequence
//! returned. Only the part after the prefix shared with the thread's
//! previous sequence is examined. Each thread keeps the adjacent pairs of
//! its sequences it has not seen before. After the threads join, every pair
//! must be ordered the same way as the final structure, which gives total
//! order without keeping the sequences. Small runs also keep every
//! sequence and go through [`check_weak_log`].
//!
//! Universal objects are checked by validating the decided operations chain
//! as a linearization of the whole run, plus an exhaustive search over each
//! window of [`WINDOW`] consecutive chain operations.

use std::collections::HashMap;
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering::SeqCst};
use std::sync::Barrier;
use std::thread;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use super::config::{Algorithm, ConfigError, ConsensusImpl};
use crate::checkers::{
    check_linearizable_from, check_weak_log, precedence_order, validate_witness, AppendRecord,
    OpRecord, Verdict, WeakLogRunRecord,
};
use crate::substrate::native::NativeMemory;
use crate::substrate::{block_on, CasConsensus, Memory, Site};
use crate::universal::{Invocation, SequentialSpec, SpecRegistry, Universal};
use crate::weaklog::{AppendedValue, CasLog, ConsensusLog, LogKind, Token, WeakLog};

/// Runs with at most this many appends also get the full weak-log check.
pub const FULL_CHECK_LIMIT: usize = 500;

/// Chain operations per exhaustive linearizability window.
pub const WINDOW: usize = 8;

#[derive(Clone, Debug)]
pub struct StressConfig {
    pub algorithm: Algorithm,
    pub threads: usize,
    /// Upper bound on operations per thread.
    pub ops_per_thread: usize,
    /// Threads stop early once this much time has passed.
    pub duration: Option<Duration>,
    pub seed: u64,
    pub consensus: ConsensusImpl,
    pub announcements: LogKind,
}

impl StressConfig {
    pub fn new(algorithm: Algorithm, threads: usize) -> Self {
        StressConfig {
            algorithm,
            threads,
            ops_per_thread: 1000,
            duration: None,
            seed: 0,
            consensus: ConsensusImpl::Native,
            announcements: LogKind::Consensus,
        }
    }

    pub fn ops_per_thread(mut self, n: usize) -> Self {
        self.ops_per_thread = n;
        self
    }

    pub fn duration(mut self, d: Duration) -> Self {
        self.duration = Some(d);
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn consensus(mut self, c: ConsensusImpl) -> Self {
        self.consensus = c;
        self
    }

    pub fn announcements(mut self, kind: LogKind) -> Self {
        self.announcements = kind;
        self
    }

    fn token(&self, thread: usize, k: usize) -> u64 {
        (k * self.threads + thread) as u64
    }
}

#[derive(Clone, Debug)]
pub struct StressReport {
    pub algorithm: Algorithm,
    pub threads: usize,
    /// Completed operations.
    pub ops: u64,
    pub elapsed: Duration,
    pub verdict: Verdict,
}

impl StressReport {
    pub fn throughput(&self) -> f64 {
        self.ops as f64 / self.elapsed.as_secs_f64().max(1e-9)
    }
}

impl fmt::Display for StressReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{} on {} threads: {} ops in {:.3}s ({:.0} ops/s)",
            self.algorithm,
            self.threads,
            self.ops,
            self.elapsed.as_secs_f64(),
            self.throughput()
        )?;
        write!(f, "{}", self.verdict)
    }
}

pub fn stress(config: &StressConfig) -> Result<StressReport, ConfigError> {
    stress_in(config, &SpecRegistry::builtin())
}

pub fn stress_in(
    config: &StressConfig,
    registry: &SpecRegistry,
) -> Result<StressReport, ConfigError> {
    if config.threads == 0 {
        return Err(ConfigError::Invalid(
            "stress needs at least one thread".into(),
        ));
    }
    let native = NativeMemory::new();
    match config.consensus {
        ConsensusImpl::Native => dispatch(native, config, registry),
        ConsensusImpl::OverCas => dispatch(CasConsensus::new(native), config, registry),
    }
}

fn dispatch<M>(
    mem: M,
    config: &StressConfig,
    registry: &SpecRegistry,
) -> Result<StressReport, ConfigError>
where
    M: Memory + Send + Sync,
{
    let model = |e: crate::substrate::ModelError| ConfigError::Invalid(e.to_string());
    match &config.algorithm {
        Algorithm::Consensus => Ok(consensus_run(mem, config)?),
        Algorithm::WeaklogCons => weak_log_run(ConsensusLog::new(mem).map_err(model)?, config),
        Algorithm::WeaklogCas => weak_log_run(CasLog::new(mem).map_err(model)?, config),
        Algorithm::Universal(name) => {
            let spec = registry
                .get(name)
                .ok_or_else(|| ConfigError::UnknownSpec(name.clone()))?;
            match config.announcements {
                LogKind::Consensus => universal_run(
                    Universal::over_consensus_log(mem, spec.clone()).map_err(model)?,
                    &spec,
                    config,
                ),
                LogKind::Cas => universal_run(
                    Universal::over_cas_log(mem, spec.clone()).map_err(model)?,
                    &spec,
                    config,
                ),
            }
        }
    }
}

/// Runs `body(thread, clock)` on every thread from a common start and
/// returns the per-thread results with the wall time.
fn run_threads<R, F>(config: &StressConfig, body: F) -> (Vec<R>, Duration)
where
    R: Send,
    F: Fn(usize, &AtomicU64, &dyn Fn() -> bool) -> R + Sync,
{
    let clock = AtomicU64::new(1);
    let barrier = Barrier::new(config.threads);
    let start = Instant::now();
    let deadline = config.duration;
    let expired = move || deadline.is_some_and(|d| start.elapsed() >= d);
    let results = thread::scope(|s| {
        let handles: Vec<_> = (0..config.threads)
            .map(|t| {
                let (body, clock, barrier, expired) = (&body, &clock, &barrier, &expired);
                s.spawn(move || {
                    barrier.wait();
                    body(t, clock, expired)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("stress thread panicked"))
            .collect()
    });
    (results, start.elapsed())
}

fn consensus_run<M: Memory + Send + Sync>(
    mem: M,
    config: &StressConfig,
) -> Result<StressReport, ConfigError> {
    let cell = mem
        .alloc_consensus::<i64>()
        .map_err(|e| ConfigError::Invalid(e.to_string()))?;
    let (results, elapsed) = run_threads(config, |t, _, expired| {
        let mut decided = Vec::new();
        for k in 0..config.ops_per_thread {
            if expired() {
                break;
            }
            decided.push(block_on(mem.propose(
                cell,
                config.token(t, k) as i64 + 1,
                Site::Other,
            )));
        }
        decided
    });
    let mut v = Verdict::new();
    let all: Vec<i64> = results.concat();
    let proposed = |d: i64| {
        let token = (d - 1) as usize;
        d >= 1
            && results
                .get(token % config.threads)
                .is_some_and(|r| token / config.threads < r.len())
    };
    v.pass("agreement");
    v.pass("validity");
    if let Some(w) = all.windows(2).find(|w| w[0] != w[1]) {
        v.fail("agreement", json!({ "decided": w }));
    }
    if let Some(d) = all.first().filter(|&&d| !proposed(d)) {
        v.fail("validity", json!({ "decided": d }));
    }
    v.pass("termination");
    Ok(StressReport {
        algorithm: config.algorithm.clone(),
        threads: config.threads,
        ops: all.len() as u64,
        elapsed,
        verdict: v,
    })
}

/// What one thread learned from its appends.
#[derive(Default)]
struct AppendLog {
    /// Invoke and respond times of the k-th append, `respond` 0 if it failed.
    times: Vec<(u64, u64)>,
    /// Adjacent pairs not seen before by this thread.
    pairs: Vec<(u32, u32)>,
    sequences: Vec<Vec<Token>>,
    verdict: Verdict,
}

fn weak_log_run<L>(log: L, config: &StressConfig) -> Result<StressReport, ConfigError>
where
    L: WeakLog<AppendedValue> + Sync,
{
    let capacity = config.threads * config.ops_per_thread;
    if capacity >= ABSENT as usize {
        return Err(ConfigError::Invalid(format!(
            "{capacity} appends exceed the stress token space"
        )));
    }
    let keep_sequences = capacity <= FULL_CHECK_LIMIT;
    // Invoke time of each token; 0 until the append is invoked.
    let invoked: Vec<AtomicU64> = (0..capacity).map(|_| AtomicU64::new(0)).collect();

    let (logs, elapsed) = run_threads(config, |t, clock, expired| {
        let mut out = AppendLog::default();
        let mut tracker = SequenceTracker::new(capacity);
        for k in 0..config.ops_per_thread {
            if expired() {
                break;
            }
            let token = config.token(t, k);
            let start = clock.fetch_add(1, SeqCst);
            invoked[token as usize].store(start, SeqCst);
            let result = block_on(log.append(AppendedValue::new(token, token as i64 + 1)));
            let end = clock.fetch_add(1, SeqCst);
            let seq = match result {
                Ok(seq) => seq,
                Err(e) => {
                    out.verdict.fail(
                        "no-structural-errors",
                        json!({ "token": token, "error": e.to_string() }),
                    );
                    out.times.push((start, 0));
                    break;
                }
            };
            out.times.push((start, end));
            tracker.check(token, &seq, end, &invoked, &mut out);
            if keep_sequences {
                out.sequences.push(seq.iter().map(|v| v.token).collect());
            }
            tracker.prev = seq;
        }
        out
    });

    let mut v = Verdict::new();
    v.pass("no-structural-errors");
    v.pass("validity");
    v.pass("suffixing");
    let ops = logs
        .iter()
        .map(|l| l.times.iter().filter(|t| t.1 != 0).count() as u64)
        .sum();
    for l in &logs {
        v.merge(l.verdict.clone());
    }
    v.pass("termination");
    v.count("appends", ops);

    match log
        .snapshot()
        .map_err(|e| e.to_string())
        .and_then(|s| precedence_order(&s).map_err(|e| e.to_string()))
    {
        Err(e) => {
            v.fail("total-order", json!({ "corruption": e }));
            v.fail("completed-in-structure", json!({ "corruption": e }));
        }
        Ok(order) => {
            let pos: HashMap<u32, usize> = order
                .iter()
                .enumerate()
                .map(|(i, t)| (t.0 as u32, i))
                .collect();
            v.pass("total-order");
            let pairs = logs.iter().flat_map(|l| &l.pairs);
            v.count(
                "distinct-pairs",
                logs.iter().map(|l| l.pairs.len() as u64).sum(),
            );
            for &(a, b) in pairs {
                match (pos.get(&a), pos.get(&b)) {
                    (Some(pa), Some(pb)) if pa < pb => {}
                    _ => {
                        v.fail("total-order", json!({ "pair": [a, b] }));
                        break;
                    }
                }
            }
            v.pass("completed-in-structure");
            'outer: for (t, l) in logs.iter().enumerate() {
                for (k, &(_, end)) in l.times.iter().enumerate() {
                    let token = config.token(t, k) as u32;
                    if end != 0 && !pos.contains_key(&token) {
                        v.fail("completed-in-structure", json!({ "token": token }));
                        break 'outer;
                    }
                }
            }
            if keep_sequences {
                let record = weak_log_record(config, &logs, log.snapshot().ok());
                v.merge(check_weak_log(&record).map_err(|e| ConfigError::Invalid(e.to_string()))?);
            }
        }
    }
    Ok(StressReport {
        algorithm: config.algorithm.clone(),
        threads: config.threads,
        ops,
        elapsed,
        verdict: v,
    })
}

const ABSENT: u32 = u32::MAX;

/// Per-thread online checks. Consecutive sequences of one thread mostly
/// share a long prefix, and that prefix was already checked, so only the
/// part after it is looked at.
struct SequenceTracker {
    prev: Vec<AppendedValue>,
    /// Position of each token in `prev`, or `ABSENT`.
    pos: Vec<u32>,
    /// Successor of each token in the pairs already recorded.
    succ: Vec<u32>,
}

impl SequenceTracker {
    fn new(capacity: usize) -> Self {
        SequenceTracker {
            prev: Vec::new(),
            pos: vec![ABSENT; capacity],
            succ: vec![ABSENT; capacity],
        }
    }

    fn check(
        &mut self,
        token: u64,
        seq: &[AppendedValue],
        end: u64,
        invoked: &[AtomicU64],
        out: &mut AppendLog,
    ) {
        let v = &mut out.verdict;
        if seq.last().map(|x| x.token) != Some(Token(token)) {
            v.fail(
                "suffixing",
                json!({ "append": token, "last": seq.last().map(|x| x.token) }),
            );
        }
        let common = seq
            .iter()
            .zip(&self.prev)
            .take_while(|(a, b)| a.token == b.token)
            .count();
        for x in &self.prev[common..] {
            self.pos[x.token.0 as usize] = ABSENT;
        }
        for (i, t) in seq.iter().map(|x| x.token).enumerate().skip(common) {
            let Some(slot) = self.pos.get_mut(t.0 as usize) else {
                v.fail(
                    "validity",
                    json!({ "append": token, "value": t, "reason": "never appended" }),
                );
                continue;
            };
            if *slot != ABSENT {
                v.fail(
                    "validity",
                    json!({ "append": token, "value": t, "reason": "repeated" }),
                );
            }
            *slot = i as u32;
            let at = invoked[t.0 as usize].load(SeqCst);
            if at == 0 || at > end {
                v.fail("validity", json!({ "append": token, "value": t, "reason": "not invoked before the return" }));
            }
        }
        for w in seq[common.saturating_sub(1)..].windows(2) {
            let (a, b) = (w[0].token.0 as u32, w[1].token.0 as u32);
            let s = &mut self.succ[a as usize];
            if *s != b {
                *s = b;
                out.pairs.push((a, b));
            }
        }
    }
}

fn weak_log_record(
    config: &StressConfig,
    logs: &[AppendLog],
    snapshot: Option<crate::weaklog::Snapshot>,
) -> WeakLogRunRecord {
    let mut appends = Vec::new();
    for (t, l) in logs.iter().enumerate() {
        let mut seqs = l.sequences.iter();
        for (k, &(start, end)) in l.times.iter().enumerate() {
            let done = end != 0;
            appends.push(AppendRecord {
                pid: t,
                token: Token(config.token(t, k)),
                invoke: start,
                respond: done.then_some(end),
                sequence: if done { seqs.next().cloned() } else { None },
            });
        }
    }
    appends.sort_by_key(|a| a.invoke);
    WeakLogRunRecord { appends, snapshot }
}

fn universal_run<M, L>(
    obj: Universal<M, L>,
    spec: &SequentialSpec,
    config: &StressConfig,
) -> Result<StressReport, ConfigError>
where
    M: Memory + Send + Sync,
    L: WeakLog<Invocation> + Sync,
{
    let (records, elapsed) = run_threads(config, |t, clock, expired| {
        let mut rng =
            ChaCha8Rng::seed_from_u64(config.seed ^ (t as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
        let mut out: Vec<(OpRecord, Option<String>)> = Vec::new();
        for k in 0..config.ops_per_thread {
            if expired() {
                break;
            }
            let token = config.token(t, k);
            let inv = spec.sample_op(&mut rng, token, token as i64 + 1);
            let start = clock.fetch_add(1, SeqCst);
            let result = block_on(obj.apply(inv.clone()));
            let end = clock.fetch_add(1, SeqCst);
            let failed = result.is_err();
            out.push((
                OpRecord {
                    invocation: inv,
                    invoke: start,
                    respond: Some(end),
                    response: result.as_ref().ok().copied(),
                },
                result.err().map(|e| e.to_string()),
            ));
            if failed {
                break;
            }
        }
        out
    });

    let mut v = Verdict::new();
    let mut ops: Vec<OpRecord> = Vec::new();
    v.pass("no-structural-errors");
    for (mut op, err) in records.into_iter().flatten() {
        if let Some(e) = err {
            v.fail(
                "no-structural-errors",
                json!({ "token": op.invocation.token, "error": e }),
            );
            op.respond = None;
        }
        ops.push(op);
    }
    v.pass("termination");
    let completed = ops.iter().filter(|o| o.completed()).count() as u64;

    match obj.decided_chain() {
        Err(e) => v.fail("chain-witness", json!({ "corruption": e.to_string() })),
        Ok(chain) => {
            let order: Vec<Token> = chain.iter().map(|i| i.token).collect();
            v.record(
                "chain-witness",
                validate_witness(&ops, spec, spec.initial(), &order),
            );
            v.count("chain-length", order.len() as u64);
            let index: HashMap<Token, usize> = ops
                .iter()
                .enumerate()
                .map(|(i, o)| (o.invocation.token, i))
                .collect();
            let mut state = spec.initial().clone();
            v.pass("linearizable-windows");
            for window in chain.chunks(WINDOW) {
                let part: Vec<OpRecord> = window
                    .iter()
                    .filter_map(|i| index.get(&i.token))
                    .map(|&i| ops[i].clone())
                    .collect();
                match check_linearizable_from(&part, spec, &state) {
                    Ok(w) if w.passed() => {}
                    Ok(w) => {
                        let witness = w.properties["linearizable"].witness.clone();
                        v.fail("linearizable-windows", json!({ "window": window.iter().map(|i| i.token).collect::<Vec<_>>(), "detail": witness }));
                    }
                    Err(e) => v.fail("linearizable-windows", json!({ "error": e.to_string() })),
                }
                for inv in window {
                    state = spec.apply(&state, inv).0;
                }
                v.count("windows", 1);
            }
        }
    }
    Ok(StressReport {
        algorithm: config.algorithm.clone(),
        threads: config.threads,
        ops: completed,
        elapsed,
        verdict: v,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weak_logs_pass_under_threads() {
        for algo in [Algorithm::WeaklogCons, Algorithm::WeaklogCas] {
            for ops in [40, 400] {
                let r = stress(&StressConfig::new(algo.clone(), 4).ops_per_thread(ops)).unwrap();
                assert!(r.verdict.passed(), "{r}");
                assert_eq!(r.ops, 4 * ops as u64);
            }
        }
    }

    #[test]
    fn consensus_and_universal_pass_under_threads() {
        let r = stress(&StressConfig::new(Algorithm::Consensus, 4).ops_per_thread(100)).unwrap();
        assert!(r.verdict.passed(), "{r}");
        for kind in [LogKind::Consensus, LogKind::Cas] {
            let c = StressConfig::new(Algorithm::Universal("queue".into()), 4)
                .ops_per_thread(50)
                .announcements(kind);
            let r = stress(&c).unwrap();
            assert!(r.verdict.passed(), "{r}");
            assert_eq!(r.verdict.counter("chain-length"), 200);
        }
    }

    #[test]
    fn emulated_consensus_under_threads() {
        let c = StressConfig::new(Algorithm::WeaklogCons, 4)
            .ops_per_thread(100)
            .consensus(ConsensusImpl::OverCas);
        let r = stress(&c).unwrap();
        assert!(r.verdict.passed(), "{r}");
    }

    #[test]
    fn eight_threads_cas_run() {
        let r = stress(&StressConfig::new(Algorithm::WeaklogCas, 8).ops_per_thread(1_000)).unwrap();
        assert!(r.verdict.passed(), "{r}");
        assert!(r.throughput() > 0.0);
    }

    #[test]
    fn duration_stops_early() {
        let c = StressConfig::new(Algorithm::WeaklogCas, 2)
            .ops_per_thread(1_000_000)
            .duration(Duration::from_millis(50));
        let r = stress(&c).unwrap();
        assert!(r.ops < 2_000_000);
        assert!(r.verdict.passed(), "{r}");
    }
}
