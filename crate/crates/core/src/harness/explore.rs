//! Exhaustive enumeration of interleavings.
//!
//! Stateless depth-first search: every execution is re-run from scratch,
//! replaying the choices of the current branch and extending it with the
//! first untried process. Arrivals follow the configured pattern; the
//! choices are which arrived process takes the next step.
//!
//! With [`Reduction::SleepSets`], a process is not tried at a decision point
//! if a sibling branch already covered it and nothing since then touched a
//! cell it is about to access (two accesses commute when they hit
//! different cells or neither changes the shared cell). Every interleaving
//! is then represented by at least one explored execution that returns the
//! same results and ends in the same structure, up to cell numbering.

use serde::{Deserialize, Serialize};

use super::config::{ConfigError, RunConfig};
use super::engine::{execute, SchedView, Scheduler};
use super::history::History;
use crate::substrate::sim::PendingOp;
use crate::universal::SpecRegistry;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Reduction {
    /// Every interleaving exactly once.
    #[default]
    None,
    SleepSets,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ExploreOptions {
    /// Executions longer than this are cut: unfinished processes crash.
    pub max_steps: u64,
    /// Stop with an error once more executions than this were produced.
    pub limit: u64,
    pub reduction: Reduction,
}

impl Default for ExploreOptions {
    fn default() -> Self {
        ExploreOptions {
            max_steps: 200,
            limit: 1_000_000,
            reduction: Reduction::None,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExploreStats {
    /// Executions produced.
    pub schedules: u64,
    /// Of those, executions cut at `max_steps`.
    pub truncated: u64,
    /// Branches dropped by the reduction before completing.
    pub pruned: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ExploreError {
    #[error("more than {limit} schedules; lower the process count or the step bound")]
    LimitExceeded { limit: u64 },
    #[error(transparent)]
    Config(#[from] ConfigError),
}

#[derive(Clone, Debug)]
struct Candidate {
    pid: usize,
    op: PendingOp,
    mutating: bool,
}

impl Candidate {
    fn commutes_with(&self, other: &Candidate) -> bool {
        self.op.cell != other.op.cell || (!self.mutating && !other.mutating)
    }
}

#[derive(Clone, Debug)]
struct Frame {
    candidates: Vec<Candidate>,
    sleep: Vec<usize>,
    done: Vec<usize>,
    chosen: usize,
}

impl Frame {
    fn candidate(&self, pid: usize) -> &Candidate {
        self.candidates
            .iter()
            .find(|c| c.pid == pid)
            .expect("candidate recorded")
    }

    fn next_untried(&self) -> Option<usize> {
        self.candidates
            .iter()
            .map(|c| c.pid)
            .find(|p| !self.done.contains(p) && !self.sleep.contains(p))
    }
}

struct Dfs<'s> {
    stack: &'s mut Vec<Frame>,
    depth: usize,
    reduction: Reduction,
}

impl Scheduler for Dfs<'_> {
    fn choose(&mut self, view: &SchedView<'_>) -> Option<usize> {
        if let Some(frame) = self.stack.get(self.depth) {
            debug_assert_eq!(
                frame.candidates.iter().map(|c| c.pid).collect::<Vec<_>>(),
                view.enabled(),
                "replay diverged"
            );
            self.depth += 1;
            return Some(frame.chosen);
        }
        let candidates: Vec<Candidate> = view
            .enabled()
            .iter()
            .map(|&pid| {
                let op = view
                    .pending(pid)
                    .expect("live processes have a pending access");
                Candidate {
                    pid,
                    op,
                    mutating: view.is_mutating(&op),
                }
            })
            .collect();
        let sleep = match (
            self.reduction,
            self.depth.checked_sub(1).map(|d| &self.stack[d]),
        ) {
            (Reduction::SleepSets, Some(parent)) => {
                let moved = parent.candidate(parent.chosen);
                parent
                    .sleep
                    .iter()
                    .chain(&parent.done)
                    .copied()
                    .filter(|&p| {
                        view.enabled().contains(&p) && parent.candidate(p).commutes_with(moved)
                    })
                    .collect()
            }
            _ => Vec::new(),
        };
        let mut frame = Frame {
            candidates,
            sleep,
            done: Vec::new(),
            chosen: 0,
        };
        frame.chosen = frame.next_untried()?;
        let chosen = frame.chosen;
        self.stack.push(frame);
        self.depth += 1;
        Some(chosen)
    }
}

/// Iterator over the executions of a configuration.
pub struct Explorer {
    config: RunConfig,
    registry: SpecRegistry,
    options: ExploreOptions,
    stack: Vec<Frame>,
    started: bool,
    finished: bool,
    stats: ExploreStats,
}

impl Explorer {
    pub fn stats(&self) -> ExploreStats {
        self.stats
    }

    /// Moves the deepest frame with an untried choice to that choice and
    /// drops the frames below it.
    fn backtrack(&mut self) -> bool {
        while let Some(top) = self.stack.last_mut() {
            top.done.push(top.chosen);
            if let Some(next) = top.next_untried() {
                top.chosen = next;
                return true;
            }
            self.stack.pop();
        }
        false
    }
}

impl Iterator for Explorer {
    type Item = Result<History, ExploreError>;

    fn next(&mut self) -> Option<Self::Item> {
        while !self.finished {
            if self.started && !self.backtrack() {
                self.finished = true;
                return None;
            }
            self.started = true;
            let mut dfs = Dfs {
                stack: &mut self.stack,
                depth: 0,
                reduction: self.options.reduction,
            };
            let exec = match execute(&self.config, &self.registry, &mut dfs) {
                Ok(e) => e,
                Err(e) => {
                    self.finished = true;
                    return Some(Err(e.into()));
                }
            };
            let depth = dfs.depth;
            debug_assert_eq!(depth, self.stack.len());
            if exec.abandoned {
                self.stats.pruned += 1;
                continue;
            }
            self.stats.schedules += 1;
            self.stats.truncated += exec.truncated as u64;
            if self.stats.schedules > self.options.limit {
                self.finished = true;
                return Some(Err(ExploreError::LimitExceeded {
                    limit: self.options.limit,
                }));
            }
            return Some(Ok(exec.history));
        }
        None
    }
}

/// Enumerates the executions of `config`, which uses the built-in specs.
/// The configured schedule is ignored; `options.max_steps` replaces its cap.
pub fn explore(config: &RunConfig, options: ExploreOptions) -> Explorer {
    explore_in(config, SpecRegistry::builtin(), options)
}

pub fn explore_in(config: &RunConfig, registry: SpecRegistry, options: ExploreOptions) -> Explorer {
    let mut config = config.clone();
    config.schedule.step_cap = options.max_steps;
    Explorer {
        config,
        registry,
        options,
        stack: Vec::new(),
        started: false,
        finished: false,
        stats: ExploreStats::default(),
    }
}
