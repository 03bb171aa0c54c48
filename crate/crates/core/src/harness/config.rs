use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::substrate::{AllocationBudget, Detail};
use crate::weaklog::LogKind;

/// What the simulated processes run.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Algorithm {
    /// Each process proposes its argument to one shared consensus cell.
    Consensus,
    /// Appends to the weak log over consensus cells.
    WeaklogCons,
    /// Appends to the weak log over compare-and-swap.
    WeaklogCas,
    /// Operations on a universal object built from the named spec.
    Universal(String),
}

impl Algorithm {
    pub fn is_weak_log(&self) -> bool {
        matches!(self, Algorithm::WeaklogCons | Algorithm::WeaklogCas)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Algorithm::Consensus => write!(f, "consensus"),
            Algorithm::WeaklogCons => write!(f, "weaklog-cons"),
            Algorithm::WeaklogCas => write!(f, "weaklog-cas"),
            Algorithm::Universal(spec) => write!(f, "universal:{spec}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConfigError {
    #[error("unknown algorithm {0:?} (expected weaklog-cons, weaklog-cas, universal:<spec> or consensus)")]
    UnknownAlgorithm(String),
    #[error("unknown sequential spec {0:?}")]
    UnknownSpec(String),
    #[error("cannot parse {what} from {text:?}")]
    Parse { what: &'static str, text: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

impl FromStr for Algorithm {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, ConfigError> {
        match s {
            "consensus" => Ok(Algorithm::Consensus),
            "weaklog-cons" => Ok(Algorithm::WeaklogCons),
            "weaklog-cas" => Ok(Algorithm::WeaklogCas),
            _ => match s.strip_prefix("universal:") {
                Some(spec) if !spec.is_empty() => Ok(Algorithm::Universal(spec.to_string())),
                _ => Err(ConfigError::UnknownAlgorithm(s.to_string())),
            },
        }
    }
}

impl From<Algorithm> for String {
    fn from(a: Algorithm) -> String {
        a.to_string()
    }
}

impl TryFrom<String> for Algorithm {
    type Error = ConfigError;

    fn try_from(s: String) -> Result<Self, ConfigError> {
        s.parse()
    }
}

/// When processes arrive. Process `i` is always the `i`-th to arrive.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Arrivals {
    /// Everyone arrives before the first step.
    #[default]
    Burst,
    /// Process `i` arrives once `i * every` steps have been taken.
    Staggered { every: u64 },
    /// Seeded random gaps of `0..=max_gap` steps between arrivals.
    Generator { seed: u64, max_gap: u64 },
    /// The next process arrives when every arrived process is done, so no
    /// two operations of different processes overlap.
    Sequential,
}

impl fmt::Display for Arrivals {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Arrivals::Burst => write!(f, "burst"),
            Arrivals::Staggered { every } => write!(f, "staggered:{every}"),
            Arrivals::Generator { seed, max_gap } => write!(f, "generator:{seed}:{max_gap}"),
            Arrivals::Sequential => write!(f, "sequential"),
        }
    }
}

impl FromStr for Arrivals {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, ConfigError> {
        let err = || ConfigError::Parse {
            what: "arrivals",
            text: s.to_string(),
        };
        let mut parts = s.split(':');
        let arrivals = match parts.next() {
            Some("burst") => Arrivals::Burst,
            Some("sequential") => Arrivals::Sequential,
            Some("staggered") => Arrivals::Staggered {
                every: parts.next().ok_or_else(err)?.parse().map_err(|_| err())?,
            },
            Some("generator") => {
                let seed = parts.next().ok_or_else(err)?.parse().map_err(|_| err())?;
                let max_gap = match parts.next() {
                    Some(g) => g.parse().map_err(|_| err())?,
                    None => 8,
                };
                Arrivals::Generator { seed, max_gap }
            }
            _ => return Err(err()),
        };
        match parts.next() {
            Some(_) => Err(err()),
            None => Ok(arrivals),
        }
    }
}

/// One entry of a scripted schedule: run `pid` for `steps` steps, or until
/// it finishes when `steps` is `None`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptStep {
    pub pid: usize,
    pub steps: Option<u64>,
}

impl ScriptStep {
    pub fn run(pid: usize, steps: u64) -> Self {
        ScriptStep {
            pid,
            steps: Some(steps),
        }
    }

    pub fn finish(pid: usize) -> Self {
        ScriptStep { pid, steps: None }
    }
}

/// How the next process is picked.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Strategy {
    /// Uniformly among live processes, from the seed.
    #[default]
    Random,
    RoundRobin,
    /// Random, except that reading `last`, proposing on the spine and
    /// writing `last` back run without interruption, as do the read of
    /// `last` and the CAS on it.
    PromptWrite,
    /// Random, except that the first process to complete a spine propose is
    /// held before its write of `last` until `k` appends by other processes
    /// have returned.
    StaleLast {
        k: usize,
    },
    /// Follows the script, then continues round-robin.
    Scripted {
        script: Vec<ScriptStep>,
    },
}

impl FromStr for Strategy {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, ConfigError> {
        let err = || ConfigError::Parse {
            what: "schedule",
            text: s.to_string(),
        };
        match s {
            "random" => Ok(Strategy::Random),
            "rr" | "round-robin" => Ok(Strategy::RoundRobin),
            "prompt-write" => Ok(Strategy::PromptWrite),
            "stale-last" => Ok(Strategy::StaleLast { k: 4 }),
            _ => match s.strip_prefix("stale-last:") {
                Some(k) => Ok(Strategy::StaleLast {
                    k: k.parse().map_err(|_| err())?,
                }),
                None => Err(err()),
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    pub strategy: Strategy,
    pub seed: u64,
    /// Total mem-steps after which every unfinished process is crashed.
    pub step_cap: u64,
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule {
            strategy: Strategy::Random,
            seed: 0,
            step_cap: 100_000,
        }
    }
}

/// How consensus cells are provided to the algorithm.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ConsensusImpl {
    #[default]
    Native,
    /// `cas(Undecided, v)` then a read; two steps per propose.
    OverCas,
}

/// Stops `pid` for good once it has taken `after_steps` steps.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrashPoint {
    pub pid: usize,
    pub after_steps: u64,
}

/// One operation a process performs. For weak logs `arg` is the payload,
/// for consensus the proposed value; `op` only matters for universal
/// objects.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpSpec {
    pub op: String,
    pub arg: Option<i64>,
}

impl OpSpec {
    pub fn new(op: &str, arg: Option<i64>) -> Self {
        OpSpec { op: op.into(), arg }
    }
}

/// Everything a simulated run depends on.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunConfig {
    pub algorithm: Algorithm,
    pub procs: usize,
    pub ops_per_proc: usize,
    pub arrivals: Arrivals,
    pub schedule: Schedule,
    /// Explicit per-process operations; generated from the seed when empty.
    #[serde(default)]
    pub ops: Vec<Vec<OpSpec>>,
    #[serde(default)]
    pub consensus: ConsensusImpl,
    /// Weak log used for a universal object's announcements.
    #[serde(default)]
    pub announcements: LogKind,
    #[serde(default)]
    pub crashes: Vec<CrashPoint>,
    #[serde(default)]
    pub budget: AllocationBudget,
    #[serde(default, with = "detail_serde")]
    pub detail: Detail,
}

impl RunConfig {
    pub fn new(algorithm: Algorithm, procs: usize) -> Self {
        RunConfig {
            algorithm,
            procs,
            ops_per_proc: 1,
            arrivals: Arrivals::Burst,
            schedule: Schedule::default(),
            ops: Vec::new(),
            consensus: ConsensusImpl::Native,
            announcements: LogKind::Consensus,
            crashes: Vec::new(),
            budget: AllocationBudget::default(),
            detail: Detail::Full,
        }
    }

    pub fn ops_per_proc(mut self, n: usize) -> Self {
        self.ops_per_proc = n;
        self
    }

    pub fn arrivals(mut self, arrivals: Arrivals) -> Self {
        self.arrivals = arrivals;
        self
    }

    pub fn strategy(mut self, strategy: Strategy) -> Self {
        self.schedule.strategy = strategy;
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.schedule.seed = seed;
        self
    }

    pub fn step_cap(mut self, cap: u64) -> Self {
        self.schedule.step_cap = cap;
        self
    }

    pub fn with_ops(mut self, ops: Vec<Vec<OpSpec>>) -> Self {
        self.ops_per_proc = ops.iter().map(Vec::len).max().unwrap_or(0);
        self.procs = ops.len();
        self.ops = ops;
        self
    }

    pub fn consensus(mut self, consensus: ConsensusImpl) -> Self {
        self.consensus = consensus;
        self
    }

    pub fn announcements(mut self, kind: LogKind) -> Self {
        self.announcements = kind;
        self
    }

    pub fn crash(mut self, pid: usize, after_steps: u64) -> Self {
        self.crashes.push(CrashPoint { pid, after_steps });
        self
    }

    pub fn detail(mut self, detail: Detail) -> Self {
        self.detail = detail;
        self
    }

    /// The line that reproduces this run from the command line, when the
    /// configuration only uses options the CLI exposes.
    pub fn describe(&self) -> String {
        let mut line = format!(
            "algo={} procs={} ops={} arrivals={} schedule={} seed={} step-cap={}",
            self.algorithm,
            self.procs,
            self.ops_per_proc,
            self.arrivals,
            strategy_name(&self.schedule.strategy),
            self.schedule.seed,
            self.schedule.step_cap
        );
        if self.consensus == ConsensusImpl::OverCas {
            line.push_str(" consensus=over-cas");
        }
        if matches!(self.algorithm, Algorithm::Universal(_)) && self.announcements == LogKind::Cas {
            line.push_str(" announcements=cas");
        }
        line
    }
}

fn strategy_name(s: &Strategy) -> String {
    match s {
        Strategy::Random => "random".into(),
        Strategy::RoundRobin => "rr".into(),
        Strategy::PromptWrite => "prompt-write".into(),
        Strategy::StaleLast { k } => format!("stale-last:{k}"),
        Strategy::Scripted { script } => format!("scripted({} entries)", script.len()),
    }
}

mod detail_serde {
    use super::Detail;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Detail, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(match d {
            Detail::Full => "full",
            Detail::Compact => "compact",
        })
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Detail, D::Error> {
        match String::deserialize(d)?.as_str() {
            "full" => Ok(Detail::Full),
            "compact" => Ok(Detail::Compact),
            other => Err(serde::de::Error::custom(format!(
                "unknown detail {other:?}"
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn algorithm_names_round_trip() {
        for name in [
            "consensus",
            "weaklog-cons",
            "weaklog-cas",
            "universal:queue",
        ] {
            assert_eq!(name.parse::<Algorithm>().unwrap().to_string(), name);
        }
        assert!("universal:".parse::<Algorithm>().is_err());
        assert!("paxos".parse::<Algorithm>().is_err());
    }

    #[test]
    fn arrivals_parse() {
        assert_eq!("burst".parse::<Arrivals>().unwrap(), Arrivals::Burst);
        assert_eq!(
            "staggered:3".parse::<Arrivals>().unwrap(),
            Arrivals::Staggered { every: 3 }
        );
        assert_eq!(
            "generator:7".parse::<Arrivals>().unwrap(),
            Arrivals::Generator {
                seed: 7,
                max_gap: 8
            }
        );
        assert!("staggered".parse::<Arrivals>().is_err());
        assert!("burst:1".parse::<Arrivals>().is_err());
    }

    #[test]
    fn config_round_trips_through_json() {
        let c = RunConfig::new(Algorithm::Universal("stack".into()), 3)
            .strategy(Strategy::StaleLast { k: 2 })
            .crash(1, 4)
            .detail(Detail::Compact);
        let json = serde_json::to_value(&c).unwrap();
        assert_eq!(json["algorithm"], "universal:stack");
        assert_eq!(serde_json::from_value::<RunConfig>(json).unwrap(), c);
    }
}
