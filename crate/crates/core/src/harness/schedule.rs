//! Built-in scheduling strategies.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{Schedule, ScriptStep, Strategy};
use super::engine::{SchedView, Scheduler};
use crate::substrate::Site;

/// Builds the scheduler a [`Schedule`] describes.
pub fn scheduler_for(schedule: &Schedule) -> Box<dyn Scheduler> {
    let seed = schedule.seed;
    match &schedule.strategy {
        Strategy::Random => Box::new(RandomScheduler::new(seed)),
        Strategy::RoundRobin => Box::new(RoundRobin::default()),
        Strategy::PromptWrite => Box::new(PromptWrite {
            inner: RandomScheduler::new(seed),
        }),
        Strategy::StaleLast { k } => Box::new(StaleLast::new(*k, seed)),
        Strategy::Scripted { script } => Box::new(Scripted::new(script.clone())),
    }
}

pub struct RandomScheduler {
    rng: ChaCha8Rng,
}

impl RandomScheduler {
    pub fn new(seed: u64) -> Self {
        RandomScheduler {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    fn pick(&mut self, from: &[usize]) -> usize {
        from[self.rng.gen_range(0..from.len())]
    }
}

impl Scheduler for RandomScheduler {
    fn choose(&mut self, view: &SchedView<'_>) -> Option<usize> {
        Some(self.pick(view.enabled()))
    }
}

/// One step per process in pid order.
#[derive(Default)]
pub struct RoundRobin {
    next: usize,
}

impl Scheduler for RoundRobin {
    fn choose(&mut self, view: &SchedView<'_>) -> Option<usize> {
        let enabled = view.enabled();
        let pid = enabled
            .iter()
            .copied()
            .find(|&p| p >= self.next)
            .unwrap_or(enabled[0]);
        self.next = pid + 1;
        Some(pid)
    }
}

/// Whether `pid` is between two accesses that prompt-write keeps adjacent.
fn mid_update(view: &SchedView<'_>, pid: usize) -> bool {
    let (Some(done), Some(next)) = (view.last_site(pid), view.pending(pid)) else {
        return false;
    };
    matches!(
        (done, next.site),
        (Site::LastRead, Site::SpinePropose)
            | (Site::SpinePropose, Site::SpinePropose)
            | (Site::SpinePropose, Site::LastWrite)
            | (Site::LastRead, Site::LastCas)
    )
}

/// Random, but a process that has read `last` runs until it has updated it.
///
/// Keeping only the spine propose and the write adjacent is not enough for
/// `last` to be monotone: a process can read `last`, stall while others move
/// it forward, then propose on the old cell and write an old successor. So
/// the read is part of the uninterrupted block too.
pub struct PromptWrite {
    inner: RandomScheduler,
}

impl PromptWrite {
    pub fn new(seed: u64) -> Self {
        PromptWrite {
            inner: RandomScheduler::new(seed),
        }
    }
}

impl Scheduler for PromptWrite {
    fn choose(&mut self, view: &SchedView<'_>) -> Option<usize> {
        match view
            .enabled()
            .iter()
            .copied()
            .find(|&p| mid_update(view, p))
        {
            Some(pid) => Some(pid),
            None => self.inner.choose(view),
        }
    }
}

/// Random, except that the first process caught between its spine propose
/// and its write of `last` is held there until `k` appends by others have
/// returned. Its write then moves `last` back to an old spine cell.
pub struct StaleLast {
    k: u64,
    inner: RandomScheduler,
    victim: Option<usize>,
    base: u64,
    released: bool,
}

impl StaleLast {
    pub fn new(k: usize, seed: u64) -> Self {
        StaleLast {
            k: k as u64,
            inner: RandomScheduler::new(seed),
            victim: None,
            base: 0,
            released: false,
        }
    }

    /// The held process, if any, and whether it has been let go.
    pub fn victim(&self) -> Option<(usize, bool)> {
        self.victim.map(|v| (v, self.released))
    }
}

impl Scheduler for StaleLast {
    fn choose(&mut self, view: &SchedView<'_>) -> Option<usize> {
        if self.victim.is_none() {
            let caught = view.enabled().iter().copied().find(|&p| {
                view.last_site(p) == Some(Site::SpinePropose)
                    && view.pending(p).map(|o| o.site) == Some(Site::LastWrite)
            });
            if let Some(v) = caught {
                self.victim = Some(v);
                self.base = view.total_responses() - view.responses(v);
            }
        }
        let held = match self.victim {
            Some(v) if !self.released => {
                if view.total_responses() - view.responses(v) >= self.base + self.k {
                    self.released = true;
                    None
                } else {
                    Some(v)
                }
            }
            _ => None,
        };
        let others: Vec<usize> = view
            .enabled()
            .iter()
            .copied()
            .filter(|&p| Some(p) != held)
            .collect();
        if others.is_empty() {
            // Nobody else can make progress; holding on would stall the run.
            self.released = true;
            return self.inner.choose(view);
        }
        Some(self.inner.pick(&others))
    }
}

/// Follows a fixed script, then round-robin.
pub struct Scripted {
    script: Vec<ScriptStep>,
    at: usize,
    taken: u64,
    rest: RoundRobin,
}

impl Scripted {
    pub fn new(script: Vec<ScriptStep>) -> Self {
        Scripted {
            script,
            at: 0,
            taken: 0,
            rest: RoundRobin::default(),
        }
    }
}

impl Scheduler for Scripted {
    fn choose(&mut self, view: &SchedView<'_>) -> Option<usize> {
        while let Some(entry) = self.script.get(self.at) {
            let budget_left = entry.steps.is_none_or(|s| self.taken < s);
            if budget_left && view.enabled().contains(&entry.pid) {
                self.taken += 1;
                return Some(entry.pid);
            }
            self.at += 1;
            self.taken = 0;
        }
        self.rest.choose(view)
    }
}
