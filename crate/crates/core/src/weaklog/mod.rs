//! Weak logs.
//!
//! `append(v)` adds `v` and returns a finite sequence of appended values
//! that ends with `v`. Sequences returned to different callers never order
//! two common values differently, and a value whose append returned shows up
//! in all but finitely many later sequences. There is no inclusion
//! guarantee between sequences; the log is not linearizable.
//!
//! Two implementations:
//! * [`ConsensusLog`]: a spine of consensus cells whose lists each carry a
//!   side chain for the processes that lost the spine proposal.
//! * [`CasLog`]: a CAS-managed stack; a process that loses the top-of-stack
//!   CAS inserts itself further down instead of retrying at the top.

use std::future::Future;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value as Json};

use crate::substrate::{Detail, ModelError, Value};

mod cas;
mod consensus;

pub use cas::{CasLog, CasNode};
pub use consensus::{ConsensusLog, ListLink, NodeLink};

/// Globally unique identity of an appended value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Token(pub u64);

impl std::fmt::Display for Token {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A value that can be appended to a weak log. Values are compared by token
/// only.
pub trait Entry: Value {
    fn token(&self) -> Token;
}

/// Opaque payload tagged with a unique token.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AppendedValue {
    pub token: Token,
    pub payload: i64,
}

impl AppendedValue {
    pub fn new(token: u64, payload: i64) -> Self {
        AppendedValue {
            token: Token(token),
            payload,
        }
    }
}

impl Value for AppendedValue {
    fn trace(&self, detail: Detail) -> Json {
        match detail {
            Detail::Full => json!({ "token": self.token, "payload": self.payload }),
            Detail::Compact => Json::Null,
        }
    }
}

impl Entry for AppendedValue {
    fn token(&self) -> Token {
        self.token
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LogError {
    /// The shared structure is not in a shape the algorithm can produce.
    #[error("structural corruption: {0}")]
    Corruption(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// One list of the consensus log's spine: the cell it was decided in and the
/// values of its side chain, head first.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpineList {
    pub cell: u64,
    pub values: Vec<Token>,
}

/// Quiescent copy of a weak log's decided structure.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Snapshot {
    /// Consensus log: lists in spine order. `tail_cell` is the first
    /// undecided spine cell, `last_cell` the cell the `last` register holds.
    Spine {
        lists: Vec<SpineList>,
        tail_cell: u64,
        last_cell: u64,
    },
    /// CAS log: node values from `last` down to `Empty`.
    Chain { nodes: Vec<Token> },
}

impl Snapshot {
    pub fn to_json(&self) -> Json {
        serde_json::to_value(self).expect("snapshot serializes")
    }

    /// Number of values in the structure.
    pub fn len(&self) -> usize {
        match self {
            Snapshot::Spine { lists, .. } => lists.iter().map(|l| l.values.len()).sum(),
            Snapshot::Chain { nodes } => nodes.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// The weak-log task. Implementations receive no process identity.
pub trait WeakLog<T: Entry> {
    fn append(&self, value: T) -> impl Future<Output = Result<Vec<T>, LogError>>;

    /// Copies the decided structure without taking steps. Only meaningful
    /// when no append is in flight.
    fn snapshot(&self) -> Result<Snapshot, LogError>;
}

/// Which weak log to build.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum LogKind {
    #[default]
    Consensus,
    Cas,
}
