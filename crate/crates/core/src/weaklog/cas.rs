use std::collections::HashSet;

use serde_json::{json, Value as Json};

use super::{Entry, LogError, Snapshot, WeakLog};
use crate::substrate::{CasCell, Detail, Imm, Memory, ModelError, Site, Value};

type NodeRef<M, T> = Imm<M, CasNode<M, T>>;
type Link<M, T> = CasCell<M, Option<NodeRef<M, T>>>;

/// An immutable stack node. Only its `tail` cell is ever swapped.
pub struct CasNode<M: Memory, T> {
    pub head: T,
    pub tail: Link<M, T>,
}

impl<M: Memory, T: Clone> Clone for CasNode<M, T> {
    fn clone(&self) -> Self {
        CasNode {
            head: self.head.clone(),
            tail: self.tail,
        }
    }
}

impl<M: Memory, T: std::fmt::Debug> std::fmt::Debug for CasNode<M, T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CasNode")
            .field("head", &self.head)
            .field("tail", &self.tail)
            .finish()
    }
}

impl<M: Memory, T: Value> Value for CasNode<M, T> {
    fn trace(&self, detail: Detail) -> Json {
        match detail {
            Detail::Full => json!({ "head": self.head.trace(detail), "tail": self.tail.id() }),
            Detail::Compact => Json::Null,
        }
    }
}

/// Weak log over compare-and-swap.
///
/// Values form one chain from `last` down to `Empty`; the log order is the
/// reverse of the chain. A process first tries to push on top. If that CAS
/// fails it does not retry on `last`: it splices itself in below the node it
/// had read, moving one node down after each failure.
///
/// When a failed CAS expected `Empty` there is no node to move down to; the
/// process re-reads the same cell and retries there instead.
pub struct CasLog<M: Memory, T: Entry> {
    mem: M,
    last: Link<M, T>,
}

impl<M: Memory, T: Entry> CasLog<M, T> {
    pub fn new(mem: M) -> Result<Self, ModelError> {
        let last = mem.alloc_cas(None)?;
        Ok(CasLog { mem, last })
    }

    pub fn memory(&self) -> &M {
        &self.mem
    }

    pub fn last_cell(&self) -> u64 {
        self.last.id()
    }

    fn node(&self, value: T, next: Option<NodeRef<M, T>>) -> Result<NodeRef<M, T>, ModelError> {
        let tail = self.mem.alloc_cas(next)?;
        self.mem.alloc_imm(CasNode { head: value, tail })
    }

    async fn append_inner(&self, value: T) -> Result<Vec<T>, LogError> {
        let mem = &self.mem;
        let mut target = self.last;
        let mut next = mem.load(target, Site::LastRead).await;
        loop {
            let node = self.node(value.clone(), next)?;
            let (cas_site, read_site) = if target == self.last {
                (Site::LastCas, Site::LastRead)
            } else {
                (Site::TailCas, Site::TailRead)
            };
            if mem.cas(target, next, Some(node), cas_site).await {
                break;
            }
            match next {
                // Nothing below to move to: retry on the same cell.
                None => next = mem.load(target, read_site).await,
                Some(stale) => {
                    target = mem.deref(stale).tail;
                    next = mem.load(target, Site::TailRead).await;
                }
            }
        }

        let mut log = vec![value];
        while let Some(node) = next {
            let node = mem.deref(node);
            log.push(node.head);
            next = mem.load(node.tail, Site::ReadPhase).await;
        }
        log.reverse();
        Ok(log)
    }
}

impl<M: Memory, T: Entry> WeakLog<T> for CasLog<M, T> {
    fn append(&self, value: T) -> impl std::future::Future<Output = Result<Vec<T>, LogError>> {
        self.append_inner(value)
    }

    fn snapshot(&self) -> Result<Snapshot, LogError> {
        let mut seen = HashSet::new();
        let mut nodes = Vec::new();
        let mut cur = self.mem.peek_cas(self.last);
        while let Some(r) = cur {
            if !seen.insert(r.id()) {
                return Err(LogError::Corruption(format!(
                    "chain cycle at node {}",
                    r.id()
                )));
            }
            let node = self.mem.deref(r);
            nodes.push(node.head.token());
            cur = self.mem.peek_cas(node.tail);
        }
        Ok(Snapshot::Chain { nodes })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::substrate::block_on;
    use crate::substrate::native::NativeMemory;
    use crate::weaklog::{AppendedValue, Token};

    #[test]
    fn solo_append() {
        let log = CasLog::new(NativeMemory::new()).unwrap();
        let v = AppendedValue::new(0, 5);
        assert_eq!(block_on(log.append(v)).unwrap(), vec![v]);
        assert_eq!(
            log.snapshot().unwrap(),
            Snapshot::Chain {
                nodes: vec![Token(0)]
            }
        );
    }

    #[test]
    fn sequential_appends_stack_up() {
        let log = CasLog::new(NativeMemory::new()).unwrap();
        for t in 0..10u64 {
            let out = block_on(log.append(AppendedValue::new(t, 0))).unwrap();
            assert_eq!(
                out.iter().map(|v| v.token.0).collect::<Vec<_>>(),
                (0..=t).collect::<Vec<_>>()
            );
        }
        let Snapshot::Chain { nodes } = log.snapshot().unwrap() else {
            panic!()
        };
        assert_eq!(nodes, (0..10).rev().map(Token).collect::<Vec<_>>());
    }
}
