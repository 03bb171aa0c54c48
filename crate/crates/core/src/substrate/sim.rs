//! Step-simulated backend.
//!
//! Every cell access is one step. An access future registers what it is
//! about to do and yields; the harness decides which process moves next and
//! polls it, at which point the access executes atomically and is recorded
//! in the history. Local computation between accesses costs nothing.
//!
//! A `SimMemory` is single-threaded and must only be polled by the harness
//! engine (see [`crate::harness`]).

use std::any::Any;
use std::cell::RefCell;
use std::future::Future;
use std::num::NonZeroU32;
use std::pin::Pin;
use std::rc::Rc;
use std::task::{Context, Poll};

use serde_json::{json, Value as Json};

use super::{
    AllocationBudget, CasCell, ConsensusCell, Detail, Imm, MemOp, Memory, ModelError, RawCell,
    Register, Site, Value, Word,
};
use crate::harness::history::{Event, EventKind};

/// Address of a simulated cell: its 1-based allocation index.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, PartialOrd, Ord)]
pub struct SimCell(NonZeroU32);

impl RawCell for SimCell {
    fn to_bits(self) -> u64 {
        self.0.get() as u64
    }

    fn from_bits(bits: u64) -> Self {
        SimCell(NonZeroU32::new(bits as u32).expect("cell id 0"))
    }
}

enum Slot {
    Consensus(Option<Box<dyn Any>>),
    Word(u64),
    Imm(Box<dyn Any>),
}

/// The access a process will perform when it is next scheduled.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PendingOp {
    pub cell: u64,
    pub op: MemOp,
    pub site: Site,
    /// Expected bits for a CAS; unused otherwise.
    pub expect: u64,
}

pub(crate) struct SimState {
    slots: Vec<Slot>,
    budget: AllocationBudget,
    detail: Detail,
    allocations: usize,
    allocs_in_step: usize,
    current: Option<usize>,
    granted: bool,
    pending: Vec<Option<PendingOp>>,
    last_site: Vec<Option<Site>>,
    steps_by: Vec<u64>,
    steps: u64,
    events: Vec<Event>,
    failures: Vec<String>,
}

impl SimState {
    fn slot(&self, cell: u64) -> &Slot {
        &self.slots[cell as usize - 1]
    }

    fn slot_mut(&mut self, cell: u64) -> &mut Slot {
        &mut self.slots[cell as usize - 1]
    }

    fn word(&self, cell: u64) -> u64 {
        match self.slot(cell) {
            Slot::Word(bits) => *bits,
            _ => unreachable!("cell {cell} is not a word cell"),
        }
    }

    fn set_word(&mut self, cell: u64, bits: u64) {
        match self.slot_mut(cell) {
            Slot::Word(b) => *b = bits,
            _ => unreachable!("cell {cell} is not a word cell"),
        }
    }

    fn decided<V: Value>(&self, cell: u64) -> Option<V> {
        match self.slot(cell) {
            Slot::Consensus(Some(v)) => {
                Some(v.downcast_ref::<V>().expect("consensus cell type").clone())
            }
            Slot::Consensus(None) => None,
            _ => unreachable!("cell {cell} is not a consensus cell"),
        }
    }

    /// Whether executing `op` now would change the cell.
    pub(crate) fn is_mutating(&self, op: &PendingOp) -> bool {
        match op.op {
            MemOp::Read => false,
            MemOp::Write => true,
            MemOp::Propose => matches!(self.slot(op.cell), Slot::Consensus(None)),
            MemOp::Cas => self.word(op.cell) == op.expect,
        }
    }

    fn push_event(
        &mut self,
        pid: usize,
        kind: EventKind,
        cell: Option<u64>,
        op: Option<MemOp>,
        input: Json,
        out: Json,
    ) {
        let i = self.events.len() as u64;
        self.events.push(Event {
            i,
            pid,
            kind,
            cell,
            op,
            input,
            out,
        });
    }

    fn alloc(&mut self, slot: Slot) -> Result<SimCell, ModelError> {
        if self.current.is_some() {
            self.allocs_in_step += 1;
            if self.allocs_in_step > self.budget.allocations_per_step {
                return Err(ModelError::AllocationBudget {
                    allocated: self.allocs_in_step,
                    limit: self.budget.allocations_per_step,
                });
            }
        }
        self.allocations += 1;
        self.slots.push(slot);
        let id = u32::try_from(self.slots.len()).expect("cell ids exhausted");
        Ok(SimCell(NonZeroU32::new(id).expect("ids start at 1")))
    }
}

/// Step-simulated memory. Cloning shares the same cells.
#[derive(Clone)]
pub struct SimMemory {
    state: Rc<RefCell<SimState>>,
}

impl std::fmt::Debug for SimMemory {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let st = self.state.borrow();
        f.debug_struct("SimMemory")
            .field("cells", &st.slots.len())
            .field("steps", &st.steps)
            .finish()
    }
}

impl SimMemory {
    pub fn new(budget: AllocationBudget, detail: Detail) -> Self {
        SimMemory {
            state: Rc::new(RefCell::new(SimState {
                slots: Vec::new(),
                budget,
                detail,
                allocations: 0,
                allocs_in_step: 0,
                current: None,
                granted: false,
                pending: Vec::new(),
                last_site: Vec::new(),
                steps_by: Vec::new(),
                steps: 0,
                events: Vec::new(),
                failures: Vec::new(),
            })),
        }
    }

    /// Total cells and records allocated.
    pub fn allocation_count(&self) -> usize {
        self.state.borrow().allocations
    }

    /// Mem-steps executed so far.
    pub fn steps(&self) -> u64 {
        self.state.borrow().steps
    }

    /// The process currently being polled, if any. Harness code only.
    pub fn current_pid(&self) -> Option<usize> {
        self.state.borrow().current
    }

    /// Records an invocation by the current process.
    pub fn log_invoke(&self, input: Json) {
        self.log(EventKind::Invoke, input, Json::Null);
    }

    /// Records a response by the current process.
    pub fn log_respond(&self, out: Json) {
        self.log(EventKind::Respond, Json::Null, out);
    }

    /// Records a structural failure reported by the current process.
    pub fn log_failure(&self, message: String) {
        self.log(EventKind::Fail, Json::Null, Json::String(message.clone()));
        self.state.borrow_mut().failures.push(message);
    }

    fn log(&self, kind: EventKind, input: Json, out: Json) {
        let mut st = self.state.borrow_mut();
        let pid = st
            .current
            .expect("history logging outside a simulated process");
        st.push_event(pid, kind, None, None, input, out);
    }

    fn step<T, F>(&self, cell: u64, op: MemOp, site: Site, expect: u64, action: F) -> SimStep<'_, F>
    where
        F: FnOnce(&mut SimState, Detail) -> (T, Json, Json),
    {
        SimStep {
            mem: self,
            desc: PendingOp {
                cell,
                op,
                site,
                expect,
            },
            action: Some(action),
            armed: false,
        }
    }
}

/// Engine-facing controls.
impl SimMemory {
    pub(crate) fn register_processes(&self, count: usize) {
        let mut st = self.state.borrow_mut();
        st.pending = vec![None; count];
        st.last_site = vec![None; count];
        st.steps_by = vec![0; count];
    }

    pub(crate) fn begin_poll(&self, pid: usize, grant: bool) {
        let mut st = self.state.borrow_mut();
        st.current = Some(pid);
        st.granted = grant;
        st.allocs_in_step = 0;
    }

    /// Ends a poll; returns whether the granted step was consumed.
    pub(crate) fn end_poll(&self) -> bool {
        let mut st = self.state.borrow_mut();
        st.current = None;
        !std::mem::take(&mut st.granted)
    }

    pub(crate) fn record_engine_event(&self, pid: usize, kind: EventKind) {
        self.state
            .borrow_mut()
            .push_event(pid, kind, None, None, Json::Null, Json::Null);
    }

    pub(crate) fn pending(&self, pid: usize) -> Option<PendingOp> {
        self.state.borrow().pending[pid]
    }

    pub(crate) fn clear_pending(&self, pid: usize) {
        self.state.borrow_mut().pending[pid] = None;
    }

    pub(crate) fn last_site(&self, pid: usize) -> Option<Site> {
        self.state.borrow().last_site[pid]
    }

    pub(crate) fn steps_by(&self, pid: usize) -> u64 {
        self.state.borrow().steps_by[pid]
    }

    pub(crate) fn is_mutating(&self, op: &PendingOp) -> bool {
        self.state.borrow().is_mutating(op)
    }

    /// Visits events recorded from index `from` on; returns the new length.
    pub(crate) fn scan_events(&self, from: usize, mut f: impl FnMut(&Event)) -> usize {
        let st = self.state.borrow();
        st.events[from..].iter().for_each(&mut f);
        st.events.len()
    }

    pub(crate) fn take_events(&self) -> Vec<Event> {
        std::mem::take(&mut self.state.borrow_mut().events)
    }

    pub(crate) fn failures(&self) -> Vec<String> {
        self.state.borrow().failures.clone()
    }
}

/// One simulated access: yields once to register, executes when re-polled.
pub(crate) struct SimStep<'m, F> {
    mem: &'m SimMemory,
    desc: PendingOp,
    action: Option<F>,
    armed: bool,
}

impl<F> Unpin for SimStep<'_, F> {}

impl<T, F> Future for SimStep<'_, F>
where
    F: FnOnce(&mut SimState, Detail) -> (T, Json, Json),
{
    type Output = T;

    fn poll(self: Pin<&mut Self>, _cx: &mut Context<'_>) -> Poll<T> {
        let this = self.get_mut();
        let mut st = this.mem.state.borrow_mut();
        let pid = st
            .current
            .expect("simulated memory polled outside the harness scheduler");
        if !this.armed {
            this.armed = true;
            st.pending[pid] = Some(this.desc);
            return Poll::Pending;
        }
        assert!(
            st.granted,
            "a simulated process took two steps in one scheduling turn"
        );
        st.granted = false;
        let detail = st.detail;
        let action = this.action.take().expect("step polled after completion");
        let (value, input, out) = action(&mut st, detail);
        let desc = this.desc;
        st.push_event(
            pid,
            EventKind::MemStep,
            Some(desc.cell),
            Some(desc.op),
            input,
            out,
        );
        st.steps += 1;
        st.steps_by[pid] += 1;
        st.last_site[pid] = Some(desc.site);
        st.pending[pid] = None;
        Poll::Ready(value)
    }
}

impl Memory for SimMemory {
    type Raw = SimCell;

    fn alloc_consensus<V: Value>(&self) -> Result<ConsensusCell<Self, V>, ModelError> {
        self.state
            .borrow_mut()
            .alloc(Slot::Consensus(None))
            .map(ConsensusCell::from_raw)
    }

    fn alloc_register<V: Word>(&self, init: V) -> Result<Register<Self, V>, ModelError> {
        self.state
            .borrow_mut()
            .alloc(Slot::Word(init.to_bits()))
            .map(Register::from_raw)
    }

    fn alloc_cas<V: Word>(&self, init: V) -> Result<CasCell<Self, V>, ModelError> {
        self.state
            .borrow_mut()
            .alloc(Slot::Word(init.to_bits()))
            .map(CasCell::from_raw)
    }

    fn alloc_imm<V: Value>(&self, value: V) -> Result<Imm<Self, V>, ModelError> {
        self.state
            .borrow_mut()
            .alloc(Slot::Imm(Box::new(value)))
            .map(Imm::from_raw)
    }

    fn deref<V: Value>(&self, record: Imm<Self, V>) -> V {
        match self.state.borrow().slot(record.id()) {
            Slot::Imm(v) => v.downcast_ref::<V>().expect("record type").clone(),
            _ => unreachable!("not an immutable record"),
        }
    }

    fn propose<V: Value>(
        &self,
        cell: ConsensusCell<Self, V>,
        value: V,
        site: Site,
    ) -> impl Future<Output = V> {
        let id = cell.id();
        self.step(
            id,
            MemOp::Propose,
            site,
            0,
            move |st: &mut SimState, detail| {
                let input = value.trace(detail);
                let decided = match st.slot_mut(id) {
                    Slot::Consensus(slot @ None) => {
                        *slot = Some(Box::new(value.clone()));
                        value
                    }
                    Slot::Consensus(Some(v)) => {
                        v.downcast_ref::<V>().expect("consensus cell type").clone()
                    }
                    _ => unreachable!("not a consensus cell"),
                };
                let out = decided.trace(detail);
                (decided, input, out)
            },
        )
    }

    fn read_decided<V: Value>(
        &self,
        cell: ConsensusCell<Self, V>,
        site: Site,
    ) -> impl Future<Output = Option<V>> {
        let id = cell.id();
        self.step(
            id,
            MemOp::Read,
            site,
            0,
            move |st: &mut SimState, detail| {
                let v = st.decided::<V>(id);
                let out = v.as_ref().map_or(Json::Null, |v| v.trace(detail));
                (v, Json::Null, out)
            },
        )
    }

    fn read<V: Word>(&self, reg: Register<Self, V>, site: Site) -> impl Future<Output = V> {
        let id = reg.id();
        self.step(
            id,
            MemOp::Read,
            site,
            0,
            move |st: &mut SimState, detail| {
                let v = V::from_bits(st.word(id));
                (v, Json::Null, v.trace(detail))
            },
        )
    }

    fn write<V: Word>(
        &self,
        reg: Register<Self, V>,
        value: V,
        site: Site,
    ) -> impl Future<Output = ()> {
        let id = reg.id();
        self.step(
            id,
            MemOp::Write,
            site,
            0,
            move |st: &mut SimState, detail| {
                st.set_word(id, value.to_bits());
                ((), value.trace(detail), Json::Null)
            },
        )
    }

    fn load<V: Word>(&self, cell: CasCell<Self, V>, site: Site) -> impl Future<Output = V> {
        let id = cell.id();
        self.step(
            id,
            MemOp::Read,
            site,
            0,
            move |st: &mut SimState, detail| {
                let v = V::from_bits(st.word(id));
                (v, Json::Null, v.trace(detail))
            },
        )
    }

    fn cas<V: Word>(
        &self,
        cell: CasCell<Self, V>,
        expect: V,
        update: V,
        site: Site,
    ) -> impl Future<Output = bool> {
        let id = cell.id();
        self.step(
            id,
            MemOp::Cas,
            site,
            expect.to_bits(),
            move |st: &mut SimState, detail| {
                let swapped = st.word(id) == expect.to_bits();
                if swapped {
                    st.set_word(id, update.to_bits());
                }
                let input =
                    json!({ "expect": expect.trace(detail), "update": update.trace(detail) });
                (swapped, input, Json::Bool(swapped))
            },
        )
    }

    fn peek_decided<V: Value>(&self, cell: ConsensusCell<Self, V>) -> Option<V> {
        self.state.borrow().decided(cell.id())
    }

    fn peek<V: Word>(&self, reg: Register<Self, V>) -> V {
        V::from_bits(self.state.borrow().word(reg.id()))
    }

    fn peek_cas<V: Word>(&self, cell: CasCell<Self, V>) -> V {
        V::from_bits(self.state.borrow().word(cell.id()))
    }
}
