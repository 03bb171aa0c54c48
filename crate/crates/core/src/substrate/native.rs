//! Hardware-atomic backend.
//!
//! Cells live in an append-only arena owned by the [`NativeMemory`] (and all
//! its clones). Nothing is reclaimed before the arena is dropped, so a handle
//! stays valid for as long as any clone of the memory that allocated it is
//! alive. All accesses use `SeqCst`.

use std::future::{ready, Future};
use std::ptr::{self, NonNull};
use std::sync::atomic::{AtomicPtr, AtomicU64, AtomicUsize, Ordering::SeqCst};
use std::sync::Arc;

use super::{
    CasCell, ConsensusCell, Imm, Memory, ModelError, RawCell, Register, Site, Value, Word,
};

/// Address of a native cell.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct NativeAddr(NonNull<u8>);

// SAFETY: an address is only dereferenced through `NativeMemory`, whose cells
// are themselves `Sync`.
unsafe impl Send for NativeAddr {}
unsafe impl Sync for NativeAddr {}

impl RawCell for NativeAddr {
    fn to_bits(self) -> u64 {
        self.0.as_ptr() as usize as u64
    }

    fn from_bits(bits: u64) -> Self {
        NativeAddr(NonNull::new(bits as usize as *mut u8).expect("null native address"))
    }
}

#[repr(C)]
struct Header {
    next: *mut Header,
    drop_fn: unsafe fn(*mut Header),
}

#[repr(C)]
struct Tracked<T> {
    header: Header,
    value: T,
}

unsafe fn drop_tracked<T>(header: *mut Header) {
    drop(Box::from_raw(header as *mut Tracked<T>));
}

struct Arena {
    head: AtomicPtr<Header>,
    count: AtomicUsize,
}

impl Arena {
    fn alloc<T: Send + Sync + 'static>(&self, value: T) -> NativeAddr {
        let boxed = Box::new(Tracked {
            header: Header {
                next: ptr::null_mut(),
                drop_fn: drop_tracked::<T>,
            },
            value,
        });
        let tracked = Box::into_raw(boxed);
        let header = tracked as *mut Header;
        let mut head = self.head.load(SeqCst);
        loop {
            // SAFETY: `header` is exclusively ours until the push succeeds.
            unsafe { (*header).next = head };
            match self
                .head
                .compare_exchange_weak(head, header, SeqCst, SeqCst)
            {
                Ok(_) => break,
                Err(current) => head = current,
            }
        }
        self.count.fetch_add(1, SeqCst);
        // SAFETY: `tracked` is a live allocation owned by the arena.
        let value_ptr = unsafe { ptr::addr_of_mut!((*tracked).value) } as *mut u8;
        NativeAddr(NonNull::new(value_ptr).expect("box pointer is non-null"))
    }
}

impl Drop for Arena {
    fn drop(&mut self) {
        let mut cur = *self.head.get_mut();
        while !cur.is_null() {
            // SAFETY: every header in the list was pushed by `alloc` and is
            // visited exactly once.
            unsafe {
                let next = (*cur).next;
                ((*cur).drop_fn)(cur);
                cur = next;
            }
        }
    }
}

struct ConsensusSlot<V> {
    decided: AtomicPtr<V>,
}

impl<V> Drop for ConsensusSlot<V> {
    fn drop(&mut self) {
        let p = *self.decided.get_mut();
        if !p.is_null() {
            // SAFETY: a non-null pointer was produced by `Box::into_raw` in
            // `propose` and won the CAS, so the slot owns it.
            drop(unsafe { Box::from_raw(p) });
        }
    }
}

struct WordSlot {
    bits: AtomicU64,
}

/// Hardware-atomic memory. Cloning shares the arena.
#[derive(Clone)]
pub struct NativeMemory {
    arena: Arc<Arena>,
}

impl Default for NativeMemory {
    fn default() -> Self {
        Self::new()
    }
}

impl std::fmt::Debug for NativeMemory {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("NativeMemory")
            .field("cells", &self.allocation_count())
            .finish()
    }
}

impl NativeMemory {
    pub fn new() -> Self {
        NativeMemory {
            arena: Arc::new(Arena {
                head: AtomicPtr::new(ptr::null_mut()),
                count: AtomicUsize::new(0),
            }),
        }
    }

    /// Number of cells and records allocated so far.
    pub fn allocation_count(&self) -> usize {
        self.arena.count.load(SeqCst)
    }

    fn consensus<V>(&self, cell: ConsensusCell<Self, V>) -> &ConsensusSlot<V> {
        // SAFETY: typed handles are only created by `alloc_consensus::<V>`
        // on an arena kept alive by `self`.
        unsafe { &*(cell.raw().0.as_ptr() as *const ConsensusSlot<V>) }
    }

    fn word_slot(&self, raw: NativeAddr) -> &WordSlot {
        // SAFETY: registers and CAS cells are both allocated as `WordSlot`.
        unsafe { &*(raw.0.as_ptr() as *const WordSlot) }
    }

    fn propose_now<V: Value>(&self, cell: ConsensusCell<Self, V>, value: V) -> V {
        let slot = self.consensus(cell);
        let current = slot.decided.load(SeqCst);
        if !current.is_null() {
            // SAFETY: decided values are never freed while the arena lives.
            return unsafe { (*current).clone() };
        }
        let mine = Box::into_raw(Box::new(value));
        match slot
            .decided
            .compare_exchange(ptr::null_mut(), mine, SeqCst, SeqCst)
        {
            // SAFETY: `mine` is now owned by the slot.
            Ok(_) => unsafe { (*mine).clone() },
            Err(winner) => {
                // SAFETY: we still own `mine`; `winner` is owned by the slot.
                drop(unsafe { Box::from_raw(mine) });
                unsafe { (*winner).clone() }
            }
        }
    }

    fn read_decided_now<V: Value>(&self, cell: ConsensusCell<Self, V>) -> Option<V> {
        let p = self.consensus(cell).decided.load(SeqCst);
        // SAFETY: see `propose_now`.
        (!p.is_null()).then(|| unsafe { (*p).clone() })
    }
}

impl Memory for NativeMemory {
    type Raw = NativeAddr;

    fn alloc_consensus<V: Value>(&self) -> Result<ConsensusCell<Self, V>, ModelError> {
        let raw = self.arena.alloc(ConsensusSlot::<V> {
            decided: AtomicPtr::new(ptr::null_mut()),
        });
        Ok(ConsensusCell::from_raw(raw))
    }

    fn alloc_register<V: Word>(&self, init: V) -> Result<Register<Self, V>, ModelError> {
        Ok(Register::from_raw(self.arena.alloc(WordSlot {
            bits: AtomicU64::new(init.to_bits()),
        })))
    }

    fn alloc_cas<V: Word>(&self, init: V) -> Result<CasCell<Self, V>, ModelError> {
        Ok(CasCell::from_raw(self.arena.alloc(WordSlot {
            bits: AtomicU64::new(init.to_bits()),
        })))
    }

    fn alloc_imm<V: Value>(&self, value: V) -> Result<Imm<Self, V>, ModelError> {
        Ok(Imm::from_raw(self.arena.alloc(value)))
    }

    fn deref<V: Value>(&self, record: Imm<Self, V>) -> V {
        // SAFETY: allocated as `V` by `alloc_imm::<V>`, never mutated.
        unsafe { (*(record.raw().0.as_ptr() as *const V)).clone() }
    }

    fn propose<V: Value>(
        &self,
        cell: ConsensusCell<Self, V>,
        value: V,
        _site: Site,
    ) -> impl Future<Output = V> {
        ready(self.propose_now(cell, value))
    }

    fn read_decided<V: Value>(
        &self,
        cell: ConsensusCell<Self, V>,
        _site: Site,
    ) -> impl Future<Output = Option<V>> {
        ready(self.read_decided_now(cell))
    }

    fn read<V: Word>(&self, reg: Register<Self, V>, _site: Site) -> impl Future<Output = V> {
        ready(self.peek(reg))
    }

    fn write<V: Word>(
        &self,
        reg: Register<Self, V>,
        value: V,
        _site: Site,
    ) -> impl Future<Output = ()> {
        self.word_slot(reg.raw())
            .bits
            .store(value.to_bits(), SeqCst);
        ready(())
    }

    fn load<V: Word>(&self, cell: CasCell<Self, V>, _site: Site) -> impl Future<Output = V> {
        ready(self.peek_cas(cell))
    }

    fn cas<V: Word>(
        &self,
        cell: CasCell<Self, V>,
        expect: V,
        update: V,
        _site: Site,
    ) -> impl Future<Output = bool> {
        let swapped = self
            .word_slot(cell.raw())
            .bits
            .compare_exchange(expect.to_bits(), update.to_bits(), SeqCst, SeqCst)
            .is_ok();
        ready(swapped)
    }

    fn peek_decided<V: Value>(&self, cell: ConsensusCell<Self, V>) -> Option<V> {
        self.read_decided_now(cell)
    }

    fn peek<V: Word>(&self, reg: Register<Self, V>) -> V {
        V::from_bits(self.word_slot(reg.raw()).bits.load(SeqCst))
    }

    fn peek_cas<V: Word>(&self, cell: CasCell<Self, V>) -> V {
        V::from_bits(self.word_slot(cell.raw()).bits.load(SeqCst))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::substrate::block_on;

    #[test]
    fn register_initial_value() {
        let mem = NativeMemory::new();
        let r = mem.alloc_register(0u64).unwrap();
        assert_eq!(block_on(mem.read(r, Site::Other)), 0);
        block_on(mem.write(r, 7u64, Site::Other));
        assert_eq!(block_on(mem.read(r, Site::Other)), 7);
    }

    #[test]
    fn consensus_is_sticky() {
        let mem = NativeMemory::new();
        let c = mem.alloc_consensus::<i64>().unwrap();
        assert_eq!(block_on(mem.read_decided(c, Site::Other)), None);
        assert_eq!(block_on(mem.propose(c, 5, Site::Other)), 5);
        assert_eq!(block_on(mem.propose(c, 7, Site::Other)), 5);
        assert_eq!(block_on(mem.read_decided(c, Site::Other)), Some(5));
    }

    #[test]
    fn cas_semantics() {
        let mem = NativeMemory::new();
        let x = mem.alloc_cas(1i64).unwrap();
        assert!(!block_on(mem.cas(x, 2, 3, Site::Other)));
        assert_eq!(mem.peek_cas(x), 1);
        assert!(block_on(mem.cas(x, 1, 3, Site::Other)));
        assert_eq!(mem.peek_cas(x), 3);
    }

    #[test]
    fn arena_frees_compound_values() {
        let marker = Arc::new(());
        {
            let mem = NativeMemory::new();
            #[derive(Clone, Debug)]
            struct Held(#[allow(dead_code)] Arc<()>);
            impl Value for Held {
                fn trace(&self, _: crate::substrate::Detail) -> serde_json::Value {
                    serde_json::Value::Null
                }
            }
            let c = mem.alloc_consensus::<Held>().unwrap();
            block_on(mem.propose(c, Held(marker.clone()), Site::Other));
            block_on(mem.propose(c, Held(marker.clone()), Site::Other));
            mem.alloc_imm(Held(marker.clone())).unwrap();
            assert!(Arc::strong_count(&marker) > 1);
        }
        assert_eq!(Arc::strong_count(&marker), 1);
    }

    #[test]
    fn concurrent_proposals_agree() {
        let mem = NativeMemory::new();
        let cells: Vec<_> = (0..64)
            .map(|_| mem.alloc_consensus::<u64>().unwrap())
            .collect();
        let results: Vec<Vec<u64>> = std::thread::scope(|s| {
            let handles: Vec<_> = (0..8u64)
                .map(|t| {
                    let mem = mem.clone();
                    let cells = &cells;
                    s.spawn(move || {
                        cells
                            .iter()
                            .map(|&c| block_on(mem.propose(c, t, Site::Other)))
                            .collect()
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().unwrap()).collect()
        });
        for i in 0..cells.len() {
            let decided = results[0][i];
            assert!(results.iter().all(|r| r[i] == decided));
            assert_eq!(mem.peek_decided(cells[i]), Some(decided));
        }
    }
}
