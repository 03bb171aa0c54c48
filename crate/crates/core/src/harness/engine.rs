//! Drives one simulated execution.

use std::task::{Context, Waker};

use serde_json::Value as Json;

use super::config::{Arrivals, ConfigError, RunConfig};
use super::history::{EventKind, History, RunOutcome, RunStatus};
use super::workload::{instantiate, Task};
use crate::substrate::sim::{PendingOp, SimMemory};
use crate::substrate::Site;
use crate::universal::SpecRegistry;

/// Picks which process takes the next step.
pub trait Scheduler {
    /// Returns one of `view.enabled()`, or `None` to abandon the run.
    fn choose(&mut self, view: &SchedView<'_>) -> Option<usize>;
}

/// What a scheduler may look at when choosing.
pub struct SchedView<'a> {
    mem: &'a SimMemory,
    enabled: &'a [usize],
    responses: &'a [u64],
}

impl SchedView<'_> {
    /// Arrived, unfinished, uncrashed processes, in pid order.
    pub fn enabled(&self) -> &[usize] {
        self.enabled
    }

    /// Mem-steps taken so far by all processes.
    pub fn step(&self) -> u64 {
        self.mem.steps()
    }

    /// The access `pid` performs if chosen.
    pub fn pending(&self, pid: usize) -> Option<PendingOp> {
        self.mem.pending(pid)
    }

    /// Site of the last step `pid` took.
    pub fn last_site(&self, pid: usize) -> Option<Site> {
        self.mem.last_site(pid)
    }

    pub fn steps_by(&self, pid: usize) -> u64 {
        self.mem.steps_by(pid)
    }

    /// Operations `pid` has completed.
    pub fn responses(&self, pid: usize) -> u64 {
        self.responses[pid]
    }

    pub fn total_responses(&self) -> u64 {
        self.responses.iter().sum()
    }

    /// Whether `op` would change its cell if executed now.
    pub fn is_mutating(&self, op: &PendingOp) -> bool {
        self.mem.is_mutating(op)
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Phase {
    Waiting,
    Live,
    Done,
    Crashed,
}

pub(crate) struct Execution {
    pub history: History,
    /// The scheduler gave up before the run ended.
    pub abandoned: bool,
    /// The step cap was hit with work left.
    pub truncated: bool,
}

struct Run<'a> {
    config: &'a RunConfig,
    sim: SimMemory,
    tasks: Vec<Option<Task>>,
    phase: Vec<Phase>,
    responses: Vec<u64>,
    seen_events: usize,
    crashed_any: bool,
}

impl Run<'_> {
    fn live(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.phase.len()).filter(|&p| self.phase[p] == Phase::Live)
    }

    fn poll(&mut self, pid: usize, grant: bool) {
        let task = self.tasks[pid].as_mut().expect("polled a finished task");
        let mut cx = Context::from_waker(Waker::noop());
        self.sim.begin_poll(pid, grant);
        let ready = task.as_mut().poll(&mut cx).is_ready();
        let consumed = self.sim.end_poll();
        assert!(
            !grant || consumed,
            "process {pid} yielded without taking its granted step"
        );
        if ready {
            self.tasks[pid] = None;
            self.phase[pid] = Phase::Done;
            self.sim.clear_pending(pid);
        }
        let responses = &mut self.responses;
        self.seen_events = self.sim.scan_events(self.seen_events, |e| {
            if e.kind == EventKind::Respond {
                responses[e.pid] += 1;
            }
        });
    }

    fn arrive(&mut self, pid: usize) {
        self.sim.record_engine_event(pid, EventKind::Arrive);
        self.phase[pid] = Phase::Live;
        self.poll(pid, false);
    }

    fn crash(&mut self, pid: usize) {
        self.sim.record_engine_event(pid, EventKind::Crash);
        self.tasks[pid] = None;
        self.phase[pid] = Phase::Crashed;
        self.sim.clear_pending(pid);
        self.crashed_any = true;
    }
}

fn arrival_steps(config: &RunConfig) -> Vec<u64> {
    use rand::{Rng, SeedableRng};
    match config.arrivals {
        Arrivals::Burst | Arrivals::Sequential => vec![0; config.procs],
        Arrivals::Staggered { every } => (0..config.procs as u64).map(|i| i * every).collect(),
        Arrivals::Generator { seed, max_gap } => {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut at = 0;
            (0..config.procs)
                .map(|i| {
                    if i > 0 {
                        at += rng.gen_range(0..=max_gap);
                    }
                    at
                })
                .collect()
        }
    }
}

pub(crate) fn execute(
    config: &RunConfig,
    registry: &SpecRegistry,
    sched: &mut dyn Scheduler,
) -> Result<Execution, ConfigError> {
    let n = config.procs;
    if let Some(c) = config.crashes.iter().find(|c| c.pid >= n) {
        return Err(ConfigError::Invalid(format!(
            "crash point for pid {} of {n} processes",
            c.pid
        )));
    }
    let sim = SimMemory::new(config.budget, config.detail);
    let instance = instantiate(config, registry, &sim)?;
    sim.register_processes(n);
    let arrive_at = arrival_steps(config);
    let cap = config.schedule.step_cap;
    let mut run = Run {
        config,
        sim,
        tasks: instance.tasks.into_iter().map(Some).collect(),
        phase: vec![Phase::Waiting; n],
        responses: vec![0; n],
        seen_events: 0,
        crashed_any: false,
    };
    let mut next_arrival = 0;
    let mut abandoned = false;
    let mut truncated = false;
    loop {
        while next_arrival < n && run.sim.steps() < cap {
            let idle = run.live().next().is_none();
            let due = match run.config.arrivals {
                Arrivals::Sequential => idle,
                _ => idle || run.sim.steps() >= arrive_at[next_arrival],
            };
            if !due {
                break;
            }
            run.arrive(next_arrival);
            next_arrival += 1;
        }
        for c in &run.config.crashes {
            if run.phase[c.pid] == Phase::Live && run.sim.steps_by(c.pid) >= c.after_steps {
                run.crash(c.pid);
            }
        }
        let enabled: Vec<usize> = run.live().collect();
        if run.sim.steps() >= cap && (!enabled.is_empty() || next_arrival < n) {
            for pid in enabled {
                run.crash(pid);
            }
            truncated = true;
            break;
        }
        if enabled.is_empty() {
            if next_arrival < n {
                continue;
            }
            break;
        }
        let view = SchedView {
            mem: &run.sim,
            enabled: &enabled,
            responses: &run.responses,
        };
        match sched.choose(&view) {
            Some(pid) => {
                assert!(
                    enabled.contains(&pid),
                    "scheduler chose process {pid}, which cannot move"
                );
                run.poll(pid, true);
            }
            None => {
                abandoned = true;
                break;
            }
        }
    }

    let failures = run.sim.failures();
    let (snapshot, snapshot_error) = match (instance.snapshot)() {
        Ok(s) => (s, None),
        Err(e) => (Json::Null, Some(e)),
    };
    let error = failures.first().cloned().or(snapshot_error);
    let status = if error.is_some() {
        RunStatus::Failed
    } else if run.crashed_any || truncated {
        RunStatus::Crashed
    } else {
        RunStatus::Complete
    };
    let history = History {
        config: serde_json::to_value(config).expect("config serializes"),
        events: run.sim.take_events(),
        outcome: RunOutcome {
            status,
            steps: run.sim.steps(),
            error,
            snapshot,
        },
    };
    Ok(Execution {
        history,
        abandoned,
        truncated,
    })
}
