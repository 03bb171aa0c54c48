//! Wait-free universal construction.
//!
//! Each caller announces its invocation in a weak log and gets back the
//! invocations it must help. It then walks a chain of consensus cells from
//! its fixed head, proposing the oldest invocation it still has to help at
//! the first cell it has not seen decided, and replays every decided
//! invocation on a private copy of the state. Its own result is captured
//! when its own invocation comes by; it returns once nothing is left to
//! help.

use std::collections::HashSet;
use std::sync::Arc;

use serde_json::{json, Value as Json};

use crate::substrate::{ConsensusCell, Detail, Memory, ModelError, Site, Value};
use crate::weaklog::{CasLog, ConsensusLog, LogError, Token, WeakLog};

pub mod spec;

pub use spec::{Invocation, Response, SequentialSpec, SpecRegistry, State};

/// One decided entry of the operations chain.
pub struct OpsLink<M: Memory> {
    pub invocation: Invocation,
    pub next: ConsensusCell<M, OpsLink<M>>,
}

impl<M: Memory> Clone for OpsLink<M> {
    fn clone(&self) -> Self {
        OpsLink {
            invocation: self.invocation.clone(),
            next: self.next,
        }
    }
}

impl<M: Memory> std::fmt::Debug for OpsLink<M> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OpsLink")
            .field("invocation", &self.invocation)
            .field("next", &self.next)
            .finish()
    }
}

impl<M: Memory> Value for OpsLink<M> {
    fn trace(&self, detail: Detail) -> Json {
        match detail {
            Detail::Full => {
                json!({ "invocation": self.invocation.trace(detail), "next": self.next.id() })
            }
            Detail::Compact => Json::Null,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum UniversalError {
    #[error(transparent)]
    Log(#[from] LogError),
    #[error(transparent)]
    Model(#[from] ModelError),
    /// The helping loop emptied its to-help list without deciding the
    /// caller's own invocation.
    #[error("invocation {0} was never decided")]
    NeverDecided(Token),
    #[error("operations chain corrupted: {0}")]
    Corruption(String),
}

/// A concurrent object built from a sequential specification.
pub struct Universal<M: Memory, L> {
    mem: M,
    announcements: L,
    operations: ConsensusCell<M, OpsLink<M>>,
    spec: Arc<SequentialSpec>,
}

impl<M: Memory> Universal<M, ConsensusLog<M, Invocation>> {
    /// Announcements go through a consensus-based weak log.
    pub fn over_consensus_log(mem: M, spec: Arc<SequentialSpec>) -> Result<Self, ModelError> {
        let log = ConsensusLog::new(mem.clone())?;
        Self::new(mem, log, spec)
    }
}

impl<M: Memory> Universal<M, CasLog<M, Invocation>> {
    /// Announcements go through a CAS-based weak log.
    pub fn over_cas_log(mem: M, spec: Arc<SequentialSpec>) -> Result<Self, ModelError> {
        let log = CasLog::new(mem.clone())?;
        Self::new(mem, log, spec)
    }
}

impl<M: Memory, L: WeakLog<Invocation>> Universal<M, L> {
    pub fn new(mem: M, announcements: L, spec: Arc<SequentialSpec>) -> Result<Self, ModelError> {
        let operations = mem.alloc_consensus()?;
        Ok(Universal {
            mem,
            announcements,
            operations,
            spec,
        })
    }

    pub fn spec(&self) -> &Arc<SequentialSpec> {
        &self.spec
    }

    pub fn announcements(&self) -> &L {
        &self.announcements
    }

    pub async fn apply(&self, invocation: Invocation) -> Result<Response, UniversalError> {
        let mem = &self.mem;
        let own = invocation.token;
        let mut to_help = self.announcements.append(invocation).await?;
        let mut cons = self.operations;
        let mut state = self.spec.initial().clone();
        let mut result = None;
        while let Some(oldest) = to_help.first() {
            let proposal = OpsLink {
                invocation: oldest.clone(),
                next: mem.alloc_consensus()?,
            };
            let decided = mem.propose(cons, proposal, Site::OpsPropose).await;
            let winner = decided.invocation;
            to_help.retain(|i| i.token != winner.token);
            let (next_state, response) = self.spec.apply(&state, &winner);
            state = next_state;
            if winner.token == own {
                result = Some(response);
            }
            cons = decided.next;
        }
        result.ok_or(UniversalError::NeverDecided(own))
    }

    /// The decided operations chain, in order. Takes no steps; only
    /// meaningful when no `apply` is in flight.
    pub fn decided_chain(&self) -> Result<Vec<Invocation>, UniversalError> {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        let mut cell = self.operations;
        while let Some(link) = self.mem.peek_decided(cell) {
            if !seen.insert(cell.id()) {
                return Err(UniversalError::Corruption(format!(
                    "cycle at cell {}",
                    cell.id()
                )));
            }
            out.push(link.invocation);
            cell = link.next;
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::substrate::block_on;
    use crate::substrate::native::NativeMemory;

    #[test]
    fn solo_counter_increment() {
        let obj =
            Universal::over_consensus_log(NativeMemory::new(), Arc::new(spec::counter())).unwrap();
        let r = block_on(obj.apply(Invocation::new(0, "inc", None))).unwrap();
        assert_eq!(r, Response::Value(1));
        let r = block_on(obj.apply(Invocation::new(1, "inc", None))).unwrap();
        assert_eq!(r, Response::Value(2));
        assert_eq!(obj.decided_chain().unwrap().len(), 2);
    }

    #[test]
    fn sequential_queue_over_cas_log() {
        let obj = Universal::over_cas_log(NativeMemory::new(), Arc::new(spec::queue())).unwrap();
        let ops = [
            Invocation::new(0, "enq", Some(1)),
            Invocation::new(1, "enq", Some(2)),
            Invocation::new(2, "deq", None),
            Invocation::new(3, "deq", None),
            Invocation::new(4, "deq", None),
        ];
        let out: Vec<_> = ops
            .iter()
            .map(|i| block_on(obj.apply(i.clone())).unwrap())
            .collect();
        assert_eq!(
            out,
            vec![
                Response::Ok,
                Response::Ok,
                Response::Value(1),
                Response::Value(2),
                Response::Empty
            ]
        );
    }
}
