use std::future::Future;

use super::{CasCell, ConsensusCell, Imm, Memory, ModelError, Register, Site, Value, Word};

/// A memory whose consensus cells are emulated with compare-and-swap:
/// `propose(v)` is `cas(Undecided, v)` followed by a read, and a consensus
/// cell is a CAS cell holding a reference to an immutable record.
///
/// All other cell kinds are passed through to the wrapped memory.
#[derive(Clone, Debug)]
pub struct CasConsensus<M> {
    inner: M,
}

impl<M: Memory> CasConsensus<M> {
    pub fn new(inner: M) -> Self {
        CasConsensus { inner }
    }

    pub fn inner(&self) -> &M {
        &self.inner
    }

    fn backing<V: Value>(cell: ConsensusCell<Self, V>) -> CasCell<M, Option<Imm<M, V>>> {
        CasCell::from_raw(cell.raw())
    }
}

impl<M: Memory> Memory for CasConsensus<M> {
    type Raw = M::Raw;

    fn alloc_consensus<V: Value>(&self) -> Result<ConsensusCell<Self, V>, ModelError> {
        let cell = self.inner.alloc_cas::<Option<Imm<M, V>>>(None)?;
        Ok(ConsensusCell::from_raw(cell.raw()))
    }

    fn alloc_register<V: Word>(&self, init: V) -> Result<Register<Self, V>, ModelError> {
        Ok(Register::from_raw(self.inner.alloc_register(init)?.raw()))
    }

    fn alloc_cas<V: Word>(&self, init: V) -> Result<CasCell<Self, V>, ModelError> {
        Ok(CasCell::from_raw(self.inner.alloc_cas(init)?.raw()))
    }

    fn alloc_imm<V: Value>(&self, value: V) -> Result<Imm<Self, V>, ModelError> {
        Ok(Imm::from_raw(self.inner.alloc_imm(value)?.raw()))
    }

    fn deref<V: Value>(&self, record: Imm<Self, V>) -> V {
        self.inner.deref(Imm::<M, V>::from_raw(record.raw()))
    }

    fn propose<V: Value>(
        &self,
        cell: ConsensusCell<Self, V>,
        value: V,
        site: Site,
    ) -> impl Future<Output = V> {
        let backing = Self::backing(cell);
        async move {
            // The record is the proposal itself; it must exist before the
            // CAS can publish it.
            let record = self
                .inner
                .alloc_imm(value)
                .expect("emulated propose exceeded the allocation budget");
            self.inner.cas(backing, None, Some(record), site).await;
            let decided = self.inner.load(backing, site).await;
            self.inner
                .deref(decided.expect("a CAS from Undecided leaves the cell decided"))
        }
    }

    fn read_decided<V: Value>(
        &self,
        cell: ConsensusCell<Self, V>,
        site: Site,
    ) -> impl Future<Output = Option<V>> {
        let backing = Self::backing(cell);
        async move {
            self.inner
                .load(backing, site)
                .await
                .map(|r| self.inner.deref(r))
        }
    }

    fn read<V: Word>(&self, reg: Register<Self, V>, site: Site) -> impl Future<Output = V> {
        self.inner.read(Register::from_raw(reg.raw()), site)
    }

    fn write<V: Word>(
        &self,
        reg: Register<Self, V>,
        value: V,
        site: Site,
    ) -> impl Future<Output = ()> {
        self.inner.write(Register::from_raw(reg.raw()), value, site)
    }

    fn load<V: Word>(&self, cell: CasCell<Self, V>, site: Site) -> impl Future<Output = V> {
        self.inner.load(CasCell::from_raw(cell.raw()), site)
    }

    fn cas<V: Word>(
        &self,
        cell: CasCell<Self, V>,
        expect: V,
        update: V,
        site: Site,
    ) -> impl Future<Output = bool> {
        self.inner
            .cas(CasCell::from_raw(cell.raw()), expect, update, site)
    }

    fn peek_decided<V: Value>(&self, cell: ConsensusCell<Self, V>) -> Option<V> {
        self.inner
            .peek_cas(Self::backing(cell))
            .map(|r| self.inner.deref(r))
    }

    fn peek<V: Word>(&self, reg: Register<Self, V>) -> V {
        self.inner.peek(Register::from_raw(reg.raw()))
    }

    fn peek_cas<V: Word>(&self, cell: CasCell<Self, V>) -> V {
        self.inner.peek_cas(CasCell::from_raw(cell.raw()))
    }
}
