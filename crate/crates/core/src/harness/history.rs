//! Recorded executions.
//!
//! A [`History`] serializes to one JSON document
//! `{config, events: [{i, pid, kind, cell, op, in, out}], outcome}`. Every
//! event carries all seven fields (`null` when not applicable) and events are
//! stored in index order.

use serde::{Deserialize, Serialize};
use serde_json::Value as Json;

use crate::substrate::MemOp;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventKind {
    Arrive,
    Invoke,
    MemStep,
    Respond,
    Crash,
    /// The algorithm reported a structural error. Not part of a well-formed
    /// run; annotates the failure in place.
    Fail,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub i: u64,
    pub pid: usize,
    pub kind: EventKind,
    pub cell: Option<u64>,
    pub op: Option<MemOp>,
    #[serde(rename = "in")]
    pub input: Json,
    pub out: Json,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunStatus {
    /// Every arrived task responded.
    Complete,
    /// Some tasks were crashed (explicitly or at the step cap).
    Crashed,
    /// Some task reported a structural error.
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub status: RunStatus,
    pub steps: u64,
    pub error: Option<String>,
    /// Quiescent structure snapshot taken after the last step.
    pub snapshot: Json,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub config: Json,
    pub events: Vec<Event>,
    pub outcome: RunOutcome,
}

impl History {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("history serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn mem_steps(&self) -> impl Iterator<Item = &Event> {
        self.events.iter().filter(|e| e.kind == EventKind::MemStep)
    }

    /// Number of distinct processes that arrived.
    pub fn arrived(&self) -> usize {
        self.events
            .iter()
            .filter(|e| e.kind == EventKind::Arrive)
            .count()
    }

    /// Per operation: the pid, the invoke event and (if any) its respond
    /// event, plus the mem-steps in between. Operations of one pid are
    /// sequential, so steps are attributed to the innermost open invocation.
    pub fn operations(&self) -> Vec<OperationSpan<'_>> {
        let mut open: std::collections::HashMap<usize, usize> = Default::default();
        let mut spans: Vec<OperationSpan<'_>> = Vec::new();
        for e in &self.events {
            match e.kind {
                EventKind::Invoke => {
                    open.insert(e.pid, spans.len());
                    spans.push(OperationSpan {
                        pid: e.pid,
                        invoke: e,
                        respond: None,
                        steps: vec![],
                        crashed: false,
                    });
                }
                EventKind::MemStep => {
                    if let Some(&k) = open.get(&e.pid) {
                        spans[k].steps.push(e);
                    }
                }
                EventKind::Respond => {
                    if let Some(k) = open.remove(&e.pid) {
                        spans[k].respond = Some(e);
                    }
                }
                EventKind::Crash | EventKind::Fail => {
                    if let Some(k) = open.remove(&e.pid) {
                        spans[k].crashed = true;
                    }
                }
                EventKind::Arrive => {}
            }
        }
        spans
    }
}

/// One operation as seen in a history.
#[derive(Clone, Debug)]
pub struct OperationSpan<'h> {
    pub pid: usize,
    pub invoke: &'h Event,
    pub respond: Option<&'h Event>,
    pub steps: Vec<&'h Event>,
    pub crashed: bool,
}

impl OperationSpan<'_> {
    pub fn completed(&self) -> bool {
        self.respond.is_some()
    }
}
