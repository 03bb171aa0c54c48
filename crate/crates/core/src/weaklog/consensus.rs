use std::collections::HashSet;

use serde_json::{json, Value as Json};

use super::{Entry, LogError, Snapshot, SpineList, WeakLog};
use crate::substrate::{ConsensusCell, Detail, Memory, ModelError, Register, Site, Value};

/// A node of a side chain: an appended value and the cell deciding its
/// successor.
pub struct NodeLink<M: Memory, T> {
    pub value: T,
    pub next: ConsensusCell<M, NodeLink<M, T>>,
}

/// A spine entry: the head node of a side chain and the next spine cell.
pub struct ListLink<M: Memory, T> {
    pub node: NodeLink<M, T>,
    pub next: ConsensusCell<M, ListLink<M, T>>,
}

type SpineCell<M, T> = ConsensusCell<M, ListLink<M, T>>;

impl<M: Memory, T: Clone> Clone for NodeLink<M, T> {
    fn clone(&self) -> Self {
        NodeLink {
            value: self.value.clone(),
            next: self.next,
        }
    }
}

impl<M: Memory, T: Clone> Clone for ListLink<M, T> {
    fn clone(&self) -> Self {
        ListLink {
            node: self.node.clone(),
            next: self.next,
        }
    }
}

impl<M: Memory, T: std::fmt::Debug> std::fmt::Debug for NodeLink<M, T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("NodeLink")
            .field("value", &self.value)
            .field("next", &self.next)
            .finish()
    }
}

impl<M: Memory, T: std::fmt::Debug> std::fmt::Debug for ListLink<M, T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ListLink")
            .field("node", &self.node)
            .field("next", &self.next)
            .finish()
    }
}

impl<M: Memory, T: Value> Value for NodeLink<M, T> {
    fn trace(&self, detail: Detail) -> Json {
        match detail {
            Detail::Full => json!({ "value": self.value.trace(detail), "next": self.next.id() }),
            Detail::Compact => Json::Null,
        }
    }
}

impl<M: Memory, T: Value> Value for ListLink<M, T> {
    fn trace(&self, detail: Detail) -> Json {
        match detail {
            Detail::Full => json!({ "node": self.node.trace(detail), "next": self.next.id() }),
            Detail::Compact => Json::Null,
        }
    }
}

/// Weak log over consensus objects with passive helping.
///
/// `first` is the head of the spine; `last` is a read/write register that
/// points at some spine cell, usually the first undecided one. Because the
/// spine propose and the write of `last` are separate steps, `last` can move
/// backward; a process that loses a spine proposal therefore does not retry
/// on the spine, it inserts its value into the winner's side chain, which
/// only the processes that read the same `last` value compete for.
pub struct ConsensusLog<M: Memory, T: Entry> {
    mem: M,
    first: SpineCell<M, T>,
    last: Register<M, SpineCell<M, T>>,
}

impl<M: Memory, T: Entry> ConsensusLog<M, T> {
    pub fn new(mem: M) -> Result<Self, ModelError> {
        let first = mem.alloc_consensus()?;
        let last = mem.alloc_register(first)?;
        Ok(ConsensusLog { mem, first, last })
    }

    pub fn memory(&self) -> &M {
        &self.mem
    }

    pub fn first_cell(&self) -> u64 {
        self.first.id()
    }

    pub fn last_register(&self) -> u64 {
        self.last.id()
    }

    fn fresh_node(&self, value: T) -> Result<NodeLink<M, T>, ModelError> {
        Ok(NodeLink {
            value,
            next: self.mem.alloc_consensus()?,
        })
    }

    async fn append_inner(&self, value: T) -> Result<Vec<T>, LogError> {
        let mem = &self.mem;
        let token = value.token();

        let spine = mem.read(self.last, Site::LastRead).await;
        let proposal = ListLink {
            node: self.fresh_node(value.clone())?,
            next: mem.alloc_consensus()?,
        };
        let decided = mem.propose(spine, proposal, Site::SpinePropose).await;
        mem.write(self.last, decided.next, Site::LastWrite).await;

        // Lost the spine: walk the winner's side chain one node per propose.
        let mut cursor = decided.node;
        while cursor.value.token() != token {
            let proposal = self.fresh_node(value.clone())?;
            cursor = mem.propose(cursor.next, proposal, Site::SidePropose).await;
        }

        let mut log = Vec::new();
        let mut list = mem
            .read_decided(self.first, Site::Collect)
            .await
            .ok_or_else(|| LogError::Corruption("first is undecided after an append".into()))?;
        let mut node = list.node.clone();
        loop {
            let found = node.value.token() == token;
            log.push(node.value);
            if found {
                return Ok(log);
            }
            node = match mem.read_decided(node.next, Site::Collect).await {
                Some(next) => next,
                None => {
                    list = mem
                        .read_decided(list.next, Site::Collect)
                        .await
                        .ok_or_else(|| {
                            LogError::Corruption(format!(
                            "collect reached the end of the spine without finding token {token}"
                        ))
                        })?;
                    list.node.clone()
                }
            };
        }
    }
}

impl<M: Memory, T: Entry> WeakLog<T> for ConsensusLog<M, T> {
    fn append(&self, value: T) -> impl std::future::Future<Output = Result<Vec<T>, LogError>> {
        self.append_inner(value)
    }

    fn snapshot(&self) -> Result<Snapshot, LogError> {
        let mem = &self.mem;
        let mut seen = HashSet::new();
        let mut lists = Vec::new();
        let mut spine = self.first;
        while let Some(list) = mem.peek_decided(spine) {
            if !seen.insert(spine.id()) {
                return Err(LogError::Corruption(format!(
                    "spine cycle at cell {}",
                    spine.id()
                )));
            }
            let mut values = vec![list.node.value.token()];
            let mut node = list.node.clone();
            while let Some(next) = mem.peek_decided(node.next) {
                if !seen.insert(node.next.id()) {
                    return Err(LogError::Corruption(format!(
                        "side-chain cycle at cell {}",
                        node.next.id()
                    )));
                }
                values.push(next.value.token());
                node = next;
            }
            lists.push(SpineList {
                cell: spine.id(),
                values,
            });
            spine = list.next;
        }
        Ok(Snapshot::Spine {
            lists,
            tail_cell: spine.id(),
            last_cell: mem.peek(self.last).id(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::substrate::native::NativeMemory;
    use crate::substrate::{block_on, CasConsensus};
    use crate::weaklog::{AppendedValue, Token};

    fn v(t: u64) -> AppendedValue {
        AppendedValue::new(t, t as i64 * 10)
    }

    #[test]
    fn fresh_log_has_empty_spine() {
        let log = ConsensusLog::<_, AppendedValue>::new(NativeMemory::new()).unwrap();
        let Snapshot::Spine {
            lists,
            tail_cell,
            last_cell,
        } = log.snapshot().unwrap()
        else {
            panic!()
        };
        assert!(lists.is_empty());
        assert_eq!(tail_cell, log.first_cell());
        assert_eq!(last_cell, log.first_cell());
    }

    #[test]
    fn solo_append_returns_own_value() {
        let log = ConsensusLog::new(NativeMemory::new()).unwrap();
        let out = block_on(log.append(v(1))).unwrap();
        assert_eq!(out, vec![v(1)]);
        let Snapshot::Spine { lists, .. } = log.snapshot().unwrap() else {
            panic!()
        };
        assert_eq!(lists.len(), 1);
        assert_eq!(lists[0].values, vec![Token(1)]);
    }

    #[test]
    fn sequential_appends_see_everything_before() {
        let log = ConsensusLog::new(NativeMemory::new()).unwrap();
        for t in 0..20 {
            let out = block_on(log.append(v(t))).unwrap();
            let tokens: Vec<u64> = out.iter().map(|x| x.token.0).collect();
            assert_eq!(tokens, (0..=t).collect::<Vec<_>>());
        }
    }

    #[test]
    fn runs_over_emulated_consensus() {
        let log = ConsensusLog::new(CasConsensus::new(NativeMemory::new())).unwrap();
        block_on(log.append(v(1))).unwrap();
        let out = block_on(log.append(v(2))).unwrap();
        assert_eq!(out, vec![v(1), v(2)]);
    }
}
