//! Command-line front end: `simulate`, `explore`, `stress` and `check`.
//!
//! Exit status is 0 when every check passes, 1 when some property fails and
//! 2 for invalid arguments or unreadable input.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::checkers::{check_history_in, CheckOptions, Verdict};
use crate::harness::stress::{stress_in, StressConfig};
use crate::harness::{
    explore_in, run_in, Algorithm, Arrivals, ConfigError, ConsensusImpl, ExploreOptions, History,
    Reduction, RunConfig, Strategy,
};
use crate::universal::SpecRegistry;
use crate::weaklog::LogKind;

#[derive(Debug, Parser)]
#[command(
    name = "infinilog",
    version,
    about = "Simulate, explore, stress and check wait-free weak logs"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one seeded simulated execution and check it.
    Simulate(SimulateArgs),
    /// Enumerate every interleaving of a small configuration and check each.
    Explore(ExploreArgs),
    /// Run on real threads over hardware atomics and check the results.
    Stress(StressArgs),
    /// Check a recorded history.
    Check(CheckArgs),
}

#[derive(Debug, Args)]
pub struct AlgoArgs {
    /// consensus, weaklog-cons, weaklog-cas or universal:<spec>
    #[arg(long, default_value = "weaklog-cons")]
    pub algo: Algorithm,
    #[arg(long, value_enum, default_value_t = ConsensusArg::Native)]
    pub consensus: ConsensusArg,
    /// Weak log used for a universal object's announcements.
    #[arg(long, value_enum, default_value_t = LogArg::Consensus)]
    pub announcements: LogArg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ConsensusArg {
    Native,
    OverCas,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LogArg {
    Consensus,
    Cas,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReductionArg {
    None,
    SleepSets,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub algo: AlgoArgs,
    #[arg(long, default_value_t = 4)]
    pub procs: usize,
    /// Operations per process.
    #[arg(long, default_value_t = 1)]
    pub ops: usize,
    #[arg(long, env = "INFINILOG_SEED", default_value_t = 0)]
    pub seed: u64,
    /// random, rr, prompt-write, stale-last or stale-last:<k>
    #[arg(long, default_value = "random")]
    pub schedule: Strategy,
    /// burst, staggered:<k>, generator:<seed>[:<gap>] or sequential
    #[arg(long, default_value = "burst")]
    pub arrivals: Arrivals,
    #[arg(long, default_value_t = 100_000)]
    pub step_cap: u64,
    /// History JSON; the verdict goes next to it as `<stem>.verdict.json`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExploreArgs {
    #[command(flatten)]
    pub algo: AlgoArgs,
    #[arg(long, default_value_t = 2)]
    pub procs: usize,
    #[arg(long, default_value_t = 1)]
    pub ops: usize,
    #[arg(long, default_value = "burst")]
    pub arrivals: Arrivals,
    /// Executions are cut after this many steps.
    #[arg(long, default_value_t = 200)]
    pub max_steps: u64,
    /// Give up after this many schedules.
    #[arg(long, default_value_t = 1_000_000)]
    pub limit: u64,
    #[arg(long, value_enum, default_value_t = ReductionArg::None)]
    pub reduction: ReductionArg,
    /// Verdict JSON over all schedules, with the first counterexample.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StressArgs {
    #[command(flatten)]
    pub algo: AlgoArgs,
    #[arg(long, default_value_t = 4)]
    pub threads: usize,
    /// Operations per thread.
    #[arg(long, default_value_t = 1000)]
    pub ops: usize,
    /// Stop early after this many seconds.
    #[arg(long)]
    pub duration: Option<f64>,
    #[arg(long, env = "INFINILOG_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Report JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    /// History JSON written by `simulate`.
    pub history: PathBuf,
    /// Accept operations cut short by the step cap.
    #[arg(long)]
    pub allow_truncation: bool,
    /// Verdict JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{0}")]
    Other(String),
}

impl AlgoArgs {
    fn validate(&self, registry: &SpecRegistry) -> Result<(), ConfigError> {
        match &self.algo {
            Algorithm::Universal(name) if registry.get(name).is_none() => {
                Err(ConfigError::UnknownSpec(name.clone()))
            }
            _ => Ok(()),
        }
    }

    fn consensus(&self) -> ConsensusImpl {
        match self.consensus {
            ConsensusArg::Native => ConsensusImpl::Native,
            ConsensusArg::OverCas => ConsensusImpl::OverCas,
        }
    }

    fn announcements(&self) -> LogKind {
        match self.announcements {
            LogArg::Consensus => LogKind::Consensus,
            LogArg::Cas => LogKind::Cas,
        }
    }
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// `run.json` becomes `run.verdict.json`.
pub fn verdict_path(history: &Path) -> PathBuf {
    let stem = history
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    history.with_file_name(format!("{stem}.verdict.json"))
}

fn summary(out: &mut dyn Write, verdict: &Verdict) -> io::Result<()> {
    write!(out, "{verdict}")?;
    writeln!(out, "{}", if verdict.passed() { "PASS" } else { "FAIL" })
}

/// Runs a parsed command; `Ok(true)` when every check passed.
pub fn execute(cli: &Cli, out: &mut dyn Write) -> Result<bool, CliError> {
    let registry = SpecRegistry::builtin();
    let io = |source| CliError::Io {
        path: PathBuf::from("<stdout>"),
        source,
    };
    match &cli.command {
        Command::Simulate(a) => {
            a.algo.validate(&registry)?;
            let config = RunConfig::new(a.algo.algo.clone(), a.procs)
                .ops_per_proc(a.ops)
                .seed(a.seed)
                .strategy(a.schedule.clone())
                .arrivals(a.arrivals)
                .step_cap(a.step_cap)
                .consensus(a.algo.consensus())
                .announcements(a.algo.announcements());
            writeln!(out, "{}", config.describe()).map_err(io)?;
            let history = run_in(&config, &registry)?;
            let verdict = check_history_in(&history, &registry, &CheckOptions::default())
                .map_err(|e| CliError::Other(e.to_string()))?;
            writeln!(
                out,
                "status {:?}, {} steps",
                history.outcome.status, history.outcome.steps
            )
            .map_err(io)?;
            for op in history.operations().iter().filter(|o| o.completed()) {
                let r = op.respond.expect("completed");
                writeln!(out, "  p{} {} -> {}", op.pid, op.invoke.input, r.out).map_err(io)?;
            }
            if let Some(path) = &a.out {
                write_file(path, &history.to_json())?;
                write_file(
                    &verdict_path(path),
                    &serde_json::to_string_pretty(&verdict.to_json()).expect("json"),
                )?;
            }
            summary(out, &verdict).map_err(io)?;
            Ok(verdict.passed())
        }
        Command::Explore(a) => {
            a.algo.validate(&registry)?;
            let config = RunConfig::new(a.algo.algo.clone(), a.procs)
                .ops_per_proc(a.ops)
                .arrivals(a.arrivals)
                .consensus(a.algo.consensus())
                .announcements(a.algo.announcements());
            let reduction = match a.reduction {
                ReductionArg::None => Reduction::None,
                ReductionArg::SleepSets => Reduction::SleepSets,
            };
            let options = ExploreOptions {
                max_steps: a.max_steps,
                limit: a.limit,
                reduction,
            };
            writeln!(
                out,
                "{} max-steps={} limit={}",
                config.describe(),
                a.max_steps,
                a.limit
            )
            .map_err(io)?;
            let check = CheckOptions {
                allow_truncation: true,
                step_bound: None,
            };
            let mut total = Verdict::new();
            let mut counterexample: Option<History> = None;
            let mut explorer = explore_in(&config, registry.clone(), options);
            for history in explorer.by_ref() {
                let history = history.map_err(|e| CliError::Other(e.to_string()))?;
                let v = check_history_in(&history, &registry, &check)
                    .map_err(|e| CliError::Other(e.to_string()))?;
                if !v.passed() && counterexample.is_none() {
                    counterexample = Some(history);
                }
                total.merge(v);
            }
            let stats = explorer.stats();
            total.count("schedules", stats.schedules);
            total.count("truncated", stats.truncated);
            total.count("pruned", stats.pruned);
            writeln!(
                out,
                "schedules {} (truncated {}, pruned {})",
                stats.schedules, stats.truncated, stats.pruned
            )
            .map_err(io)?;
            if let Some(h) = &counterexample {
                writeln!(out, "first counterexample:\n{}", h.to_json()).map_err(io)?;
            }
            if let Some(path) = &a.out {
                let doc = json!({ "verdict": total.to_json(), "counterexample": counterexample });
                write_file(path, &serde_json::to_string_pretty(&doc).expect("json"))?;
            }
            summary(out, &total).map_err(io)?;
            Ok(total.passed())
        }
        Command::Stress(a) => {
            a.algo.validate(&registry)?;
            let mut config = StressConfig::new(a.algo.algo.clone(), a.threads)
                .ops_per_thread(a.ops)
                .seed(a.seed)
                .consensus(a.algo.consensus())
                .announcements(a.algo.announcements());
            if let Some(secs) = a.duration {
                if !(secs.is_finite() && secs > 0.0) {
                    return Err(ConfigError::Invalid(format!(
                        "duration {secs} is not a positive number of seconds"
                    ))
                    .into());
                }
                config = config.duration(Duration::from_secs_f64(secs));
            }
            let report = stress_in(&config, &registry)?;
            write!(out, "{report}").map_err(io)?;
            if let Some(path) = &a.out {
                let doc = json!({
                    "algorithm": report.algorithm,
                    "threads": report.threads,
                    "ops": report.ops,
                    "seconds": report.elapsed.as_secs_f64(),
                    "throughput": report.throughput(),
                    "verdict": report.verdict.to_json(),
                });
                write_file(path, &serde_json::to_string_pretty(&doc).expect("json"))?;
            }
            writeln!(
                out,
                "{}",
                if report.verdict.passed() {
                    "PASS"
                } else {
                    "FAIL"
                }
            )
            .map_err(io)?;
            Ok(report.verdict.passed())
        }
        Command::Check(a) => {
            let text = fs::read_to_string(&a.history).map_err(|source| CliError::Io {
                path: a.history.clone(),
                source,
            })?;
            let history = History::from_json(&text)
                .map_err(|e| CliError::Other(format!("{}: {e}", a.history.display())))?;
            let options = CheckOptions {
                allow_truncation: a.allow_truncation,
                step_bound: None,
            };
            let verdict = check_history_in(&history, &registry, &options)
                .map_err(|e| CliError::Other(e.to_string()))?;
            if let Some(path) = &a.out {
                write_file(
                    path,
                    &serde_json::to_string_pretty(&verdict.to_json()).expect("json"),
                )?;
            }
            summary(out, &verdict).map_err(io)?;
            Ok(verdict.passed())
        }
    }
}

/// Parses `args` and runs the command; returns the process exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let stdout = io::stdout();
    match execute(&cli, &mut stdout.lock()) {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(args: &[&str]) -> (Result<bool, CliError>, String) {
        let cli =
            Cli::try_parse_from(std::iter::once("infinilog").chain(args.iter().copied())).unwrap();
        let mut buf = Vec::new();
        let r = execute(&cli, &mut buf);
        (r, String::from_utf8(buf).unwrap())
    }

    #[test]
    fn solo_cas_simulation_passes() {
        let (r, text) = run(&["simulate", "--algo", "weaklog-cas", "--procs", "1"]);
        assert!(r.unwrap());
        assert!(text.contains("-> [0]"), "{text}");
    }

    #[test]
    fn simulate_writes_history_and_verdict() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        let p = path.to_str().unwrap();
        let (r, _) = run(&[
            "simulate",
            "--algo",
            "weaklog-cons",
            "--procs",
            "6",
            "--seed",
            "42",
            "--out",
            p,
        ]);
        assert!(r.unwrap());
        let first = fs::read_to_string(&path).unwrap();
        run(&[
            "simulate",
            "--algo",
            "weaklog-cons",
            "--procs",
            "6",
            "--seed",
            "42",
            "--out",
            p,
        ])
        .0
        .unwrap();
        assert_eq!(first, fs::read_to_string(&path).unwrap());
        let verdict: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join("run.verdict.json")).unwrap())
                .unwrap();
        assert_eq!(verdict["properties"]["total-order"]["status"], "pass");
        let (r, _) = run(&["check", p]);
        assert!(r.unwrap());
    }

    #[test]
    fn unknown_spec_is_an_error() {
        let (r, _) = run(&["simulate", "--algo", "universal:heap"]);
        assert!(matches!(
            r,
            Err(CliError::Config(ConfigError::UnknownSpec(_)))
        ));
        assert!(Cli::try_parse_from(["infinilog", "simulate", "--algo", "paxos"]).is_err());
        assert!(Cli::try_parse_from(["infinilog", "simulate", "--schedule", "fifo"]).is_err());
    }

    #[test]
    fn explore_counts_schedules() {
        let (r, text) = run(&["explore", "--algo", "weaklog-cas", "--procs", "1"]);
        assert!(r.unwrap());
        assert!(text.contains("schedules 1 "), "{text}");
        let (r, text) = run(&["explore", "--algo", "universal:counter", "--procs", "2"]);
        assert!(r.unwrap(), "{text}");
    }

    #[test]
    fn explore_limit_is_an_error() {
        let (r, _) = run(&[
            "explore",
            "--algo",
            "weaklog-cons",
            "--procs",
            "3",
            "--limit",
            "10",
        ]);
        assert!(matches!(r, Err(CliError::Other(_))));
    }

    #[test]
    fn stress_reports_throughput() {
        let (r, text) = run(&[
            "stress",
            "--algo",
            "weaklog-cas",
            "--threads",
            "2",
            "--ops",
            "50",
        ]);
        assert!(r.unwrap());
        assert!(text.contains("ops/s"), "{text}");
    }

    #[test]
    fn exit_codes() {
        assert_eq!(main_with_args(["infinilog", "simulate", "--procs", "2"]), 0);
        assert_eq!(
            main_with_args(["infinilog", "simulate", "--algo", "nope"]),
            2
        );
        assert_eq!(
            main_with_args(["infinilog", "check", "/nonexistent/history.json"]),
            2
        );
    }
}
