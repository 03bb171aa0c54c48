//! Shared-register substrate.
//!
//! Algorithms in this crate are written once, as `async` code against the
//! [`Memory`] trait, and run unchanged on two backends:
//!
//! * [`sim::SimMemory`] turns every cell access into exactly one
//!   scheduler-visible step. Its futures yield once before touching the
//!   cell, which lets the harness interleave processes deterministically.
//! * [`native::NativeMemory`] backs cells with hardware atomics. Its futures
//!   are always ready on first poll.
//!
//! Three register kinds are provided: consensus cells (sticky, first
//! proposal wins), read/write registers and compare-and-swap cells. Plus
//! immutable records, which model compound values such as `<v, next>` that
//! are written once and then shared by reference.
//!
//! Handles are typed, `Copy`, compared by identity and only meaningful with
//! the memory that allocated them.

use std::fmt;
use std::future::Future;
use std::hash::{Hash, Hasher};
use std::marker::PhantomData;

use serde_json::Value as Json;

mod emulated;
pub mod native;
pub mod sim;

pub use emulated::CasConsensus;

/// How much of a value goes into recorded histories.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Detail {
    /// Compound values are rendered in full.
    #[default]
    Full,
    /// Only words (handles, integers, booleans) are rendered; compound
    /// values become `null`.
    Compact,
}

/// Anything that can be stored in a cell.
pub trait Value: Clone + fmt::Debug + Send + Sync + 'static {
    /// Renders the value for history events.
    fn trace(&self, detail: Detail) -> Json;
}

/// A value that fits in one machine word. Registers and CAS cells hold words.
pub trait Word: Value + Copy + Eq {
    fn to_bits(self) -> u64;
    fn from_bits(bits: u64) -> Self;
}

/// Backend cell address. The bit pattern of an address is never zero.
pub trait RawCell: Copy + Eq + Hash + fmt::Debug + Send + Sync + 'static {
    fn to_bits(self) -> u64;
    fn from_bits(bits: u64) -> Self;
}

/// Which part of an algorithm a cell access belongs to.
///
/// Sites are visible to schedulers only (e.g. the prompt-write strategy keeps
/// a spine propose adjacent to the following write of `last`); they are not
/// recorded in serialized histories.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Site {
    LastRead,
    SpinePropose,
    LastWrite,
    SidePropose,
    Collect,
    LastCas,
    TailRead,
    TailCas,
    ReadPhase,
    OpsPropose,
    Other,
}

/// Shared-memory operation kinds, as they appear in histories.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MemOp {
    Read,
    Write,
    Propose,
    Cas,
}

/// Violations of the execution model detected by the simulated backend.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ModelError {
    #[error(
        "allocation budget exceeded: {allocated} cells allocated within one step (limit {limit})"
    )]
    AllocationBudget { allocated: usize, limit: usize },
}

/// Maximum number of cells one process may allocate between two of its steps.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct AllocationBudget {
    pub allocations_per_step: usize,
}

impl Default for AllocationBudget {
    fn default() -> Self {
        AllocationBudget {
            allocations_per_step: 4,
        }
    }
}

macro_rules! handle {
    ($(#[$doc:meta])* $name:ident, $bound:ident) => {
        $(#[$doc])*
        pub struct $name<M: Memory, V> {
            raw: M::Raw,
            _value: PhantomData<fn() -> V>,
        }

        impl<M: Memory, V> $name<M, V> {
            pub(crate) fn from_raw(raw: M::Raw) -> Self {
                $name { raw, _value: PhantomData }
            }

            pub fn raw(self) -> M::Raw {
                self.raw
            }

            /// Stable numeric identity of the cell (nonzero).
            pub fn id(self) -> u64 {
                self.raw.to_bits()
            }
        }

        impl<M: Memory, V> Clone for $name<M, V> {
            fn clone(&self) -> Self {
                *self
            }
        }

        impl<M: Memory, V> Copy for $name<M, V> {}

        impl<M: Memory, V> PartialEq for $name<M, V> {
            fn eq(&self, other: &Self) -> bool {
                self.raw == other.raw
            }
        }

        impl<M: Memory, V> Eq for $name<M, V> {}

        impl<M: Memory, V> Hash for $name<M, V> {
            fn hash<H: Hasher>(&self, state: &mut H) {
                self.raw.hash(state)
            }
        }

        impl<M: Memory, V> fmt::Debug for $name<M, V> {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, concat!(stringify!($name), "#{}"), self.raw.to_bits())
            }
        }

        impl<M: Memory, V: $bound> Value for $name<M, V> {
            fn trace(&self, _: Detail) -> Json {
                Json::from(self.raw.to_bits())
            }
        }

        impl<M: Memory, V: $bound> Word for $name<M, V> {
            fn to_bits(self) -> u64 {
                self.raw.to_bits()
            }

            fn from_bits(bits: u64) -> Self {
                Self::from_raw(M::Raw::from_bits(bits))
            }
        }

        impl<M: Memory, V: $bound> Handle for $name<M, V> {}
    };
}

handle!(
    /// A consensus object: `Undecided` until the first proposal, then
    /// immutable.
    ConsensusCell,
    Value
);
handle!(
    /// An atomic read/write register holding a word.
    Register,
    Word
);
handle!(
    /// A compare-and-swap register holding a word.
    CasCell,
    Word
);
handle!(
    /// A reference to an immutable record, written once at allocation.
    Imm,
    Value
);

/// Marker for word values whose bit pattern is never zero, so that
/// `Option<H>` can use zero for `None`.
pub trait Handle: Word {}

impl<H: Handle> Value for Option<H> {
    fn trace(&self, detail: Detail) -> Json {
        match self {
            Some(h) => h.trace(detail),
            None => Json::Null,
        }
    }
}

impl<H: Handle> Word for Option<H> {
    fn to_bits(self) -> u64 {
        self.map_or(0, Word::to_bits)
    }

    fn from_bits(bits: u64) -> Self {
        (bits != 0).then(|| H::from_bits(bits))
    }
}

macro_rules! int_word {
    ($($t:ty),*) => {$(
        impl Value for $t {
            fn trace(&self, _: Detail) -> Json {
                Json::from(*self)
            }
        }

        impl Word for $t {
            fn to_bits(self) -> u64 {
                self as u64
            }

            fn from_bits(bits: u64) -> Self {
                bits as $t
            }
        }
    )*};
}

int_word!(u64, i64, u32, i32);

impl Value for bool {
    fn trace(&self, _: Detail) -> Json {
        Json::Bool(*self)
    }
}

impl Word for bool {
    fn to_bits(self) -> u64 {
        self as u64
    }

    fn from_bits(bits: u64) -> Self {
        bits != 0
    }
}

/// The shared-memory interface algorithms are written against.
///
/// Allocation and [`Memory::deref`] are local actions. Every other method is
/// one shared-memory step. The `peek*` methods read a cell without taking a
/// step and are meant for quiescent inspection (snapshots, tests) only.
pub trait Memory: Clone + 'static {
    type Raw: RawCell;

    fn alloc_consensus<V: Value>(&self) -> Result<ConsensusCell<Self, V>, ModelError>;
    fn alloc_register<V: Word>(&self, init: V) -> Result<Register<Self, V>, ModelError>;
    fn alloc_cas<V: Word>(&self, init: V) -> Result<CasCell<Self, V>, ModelError>;
    fn alloc_imm<V: Value>(&self, value: V) -> Result<Imm<Self, V>, ModelError>;

    /// Reads an immutable record. Local: the record never changes.
    fn deref<V: Value>(&self, record: Imm<Self, V>) -> V;

    /// Decides `value` if the cell is undecided; returns the decided value.
    fn propose<V: Value>(
        &self,
        cell: ConsensusCell<Self, V>,
        value: V,
        site: Site,
    ) -> impl Future<Output = V>;

    /// Reads a consensus cell; `None` stands for undecided.
    fn read_decided<V: Value>(
        &self,
        cell: ConsensusCell<Self, V>,
        site: Site,
    ) -> impl Future<Output = Option<V>>;

    fn read<V: Word>(&self, reg: Register<Self, V>, site: Site) -> impl Future<Output = V>;

    fn write<V: Word>(
        &self,
        reg: Register<Self, V>,
        value: V,
        site: Site,
    ) -> impl Future<Output = ()>;

    fn load<V: Word>(&self, cell: CasCell<Self, V>, site: Site) -> impl Future<Output = V>;

    /// Swaps in `update` iff the cell holds `expect`; returns whether it did.
    fn cas<V: Word>(
        &self,
        cell: CasCell<Self, V>,
        expect: V,
        update: V,
        site: Site,
    ) -> impl Future<Output = bool>;

    fn peek_decided<V: Value>(&self, cell: ConsensusCell<Self, V>) -> Option<V>;
    fn peek<V: Word>(&self, reg: Register<Self, V>) -> V;
    fn peek_cas<V: Word>(&self, cell: CasCell<Self, V>) -> V;
}

/// Drives a future that is expected to complete without ever yielding, as
/// all futures of the native backend do.
///
/// # Panics
///
/// If the future returns `Pending`, i.e. it was built on a backend that
/// needs a scheduler.
pub fn block_on<F: Future>(fut: F) -> F::Output {
    use std::task::{Context, Poll, Waker};
    let mut fut = std::pin::pin!(fut);
    let mut cx = Context::from_waker(Waker::noop());
    match fut.as_mut().poll(&mut cx) {
        Poll::Ready(out) => out,
        Poll::Pending => {
            panic!("block_on: future yielded; simulated memory needs the harness scheduler")
        }
    }
}
