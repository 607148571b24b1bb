//! Per-subtree staging buffers between the register layer and the subtree's
//! first partition.
//!
//! Two mapping policies decide where a routed probe lands:
//!
//! * **Direct**: slot index = the probe's index within its admission chunk.
//!   Slots `0..S/2` drain through port A, `S/2..S` through port B, lowest
//!   occupied slot first in each half. A collision on the mapped slot
//!   rejects the probe even if other slots are free.
//! * **Queue**: a circular FIFO with read/write pointers. Probes arriving in
//!   the same cycle are labelled with ordinals and land at
//!   `(write_ptr + ordinal) mod S`; only true capacity exhaustion rejects.
//!
//! Rejected probes are handed back to the caller, which stalls admission.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::memory::Port;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MappingPolicy {
    Direct,
    Queue,
}

/// Outcome of a single insert. Rejections give the item back.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Placement<T> {
    Accepted { slot: usize },
    SlotOccupied(T),
    BufferFull(T),
}

impl<T> Placement<T> {
    pub fn is_accepted(&self) -> bool {
        matches!(self, Placement::Accepted { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Drained<T> {
    pub port: Port,
    pub slot: usize,
    pub item: T,
}

/// Same-cycle position of a probe among the probes bound for one buffer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Label {
    /// Index into the labelled input.
    pub index: usize,
    pub buffer: usize,
    pub ordinal: usize,
}

/// Labels probes exiting the register layer in one cycle. `targets[i]` is
/// `(buffer, chunk_index)`; per buffer, probes ordered by chunk index get
/// ordinals `0..k`. Output is in input order.
pub fn queue_label(targets: &[(usize, usize)]) -> Vec<Label> {
    let mut order: Vec<usize> = (0..targets.len()).collect();
    order.sort_by_key(|&i| (targets[i].0, targets[i].1, i));
    let mut labels = vec![
        Label {
            index: 0,
            buffer: 0,
            ordinal: 0
        };
        targets.len()
    ];
    let mut prev: Option<usize> = None;
    let mut ordinal = 0;
    for i in order {
        let buffer = targets[i].0;
        if prev == Some(buffer) {
            ordinal += 1;
        } else {
            ordinal = 0;
            prev = Some(buffer);
        }
        labels[i] = Label {
            index: i,
            buffer,
            ordinal,
        };
    }
    labels
}

#[derive(Debug, Clone)]
pub struct SubtreeBuffer<T> {
    subtree: usize,
    policy: MappingPolicy,
    slots: Vec<Option<T>>,
    read_ptr: usize,
    write_ptr: usize,
    occupied: usize,
    inserted: u64,
    drained: u64,
}

impl<T> SubtreeBuffer<T> {
    pub fn new(subtree: usize, policy: MappingPolicy, slots: usize) -> Result<Self> {
        if slots == 0 {
            return Err(Error::config("buffer needs at least one slot"));
        }
        Ok(SubtreeBuffer {
            subtree,
            policy,
            slots: (0..slots).map(|_| None).collect(),
            read_ptr: 0,
            write_ptr: 0,
            occupied: 0,
            inserted: 0,
            drained: 0,
        })
    }

    pub fn subtree(&self) -> usize {
        self.subtree
    }

    pub fn policy(&self) -> MappingPolicy {
        self.policy
    }

    pub fn capacity(&self) -> usize {
        self.slots.len()
    }

    pub fn len(&self) -> usize {
        self.occupied
    }

    pub fn is_empty(&self) -> bool {
        self.occupied == 0
    }

    pub fn free_slots(&self) -> usize {
        self.capacity() - self.occupied
    }

    pub fn read_ptr(&self) -> usize {
        self.read_ptr
    }

    pub fn write_ptr(&self) -> usize {
        self.write_ptr
    }

    pub fn slot(&self, i: usize) -> Option<&T> {
        self.slots.get(i).and_then(Option::as_ref)
    }

    pub fn total_inserted(&self) -> u64 {
        self.inserted
    }

    pub fn total_drained(&self) -> u64 {
        self.drained
    }

    fn put(&mut self, slot: usize, item: T) {
        debug_assert!(self.slots[slot].is_none());
        self.slots[slot] = Some(item);
        self.occupied += 1;
        self.inserted += 1;
    }

    fn take(&mut self, slot: usize) -> Option<T> {
        let item = self.slots[slot].take()?;
        self.occupied -= 1;
        self.drained += 1;
        Some(item)
    }

    pub fn direct_insert(&mut self, chunk_index: usize, item: T) -> Result<Placement<T>> {
        debug_assert_eq!(self.policy, MappingPolicy::Direct);
        if chunk_index >= self.capacity() {
            return Err(Error::config(format!(
                "chunk index {chunk_index} has no slot in a {}-slot direct-mapped buffer",
                self.capacity()
            )));
        }
        if self.slots[chunk_index].is_some() {
            return Ok(Placement::SlotOccupied(item));
        }
        self.put(chunk_index, item);
        Ok(Placement::Accepted { slot: chunk_index })
    }

    /// Lowest occupied slot of each half: lower half to port A, upper to B.
    pub fn direct_drain(&mut self) -> Vec<Drained<T>> {
        debug_assert_eq!(self.policy, MappingPolicy::Direct);
        let half = self.capacity() / 2;
        let mut out = Vec::with_capacity(2);
        for (port, range) in [(Port::A, 0..half), (Port::B, half..self.capacity())] {
            if let Some(slot) = range.into_iter().find(|&s| self.slots[s].is_some()) {
                let item = self.take(slot).expect("slot checked occupied");
                out.push(Drained { port, slot, item });
            }
        }
        out
    }

    /// Places `item` at `(write_ptr + ordinal) mod S` without moving the write
    /// pointer; call [`advance_write`](Self::advance_write) once the cycle's
    /// inserts are done.
    pub fn queue_insert(&mut self, item: T, label: &Label) -> Placement<T> {
        debug_assert_eq!(self.policy, MappingPolicy::Queue);
        let slot = (self.write_ptr + label.ordinal) % self.capacity();
        if self.slots[slot].is_some() {
            return Placement::BufferFull(item);
        }
        self.put(slot, item);
        Placement::Accepted { slot }
    }

    pub fn advance_write(&mut self, accepted: usize) {
        self.write_ptr = (self.write_ptr + accepted) % self.capacity();
    }

    /// Inserts a same-cycle batch (already in ordinal order). Stops at the
    /// first rejection; that probe and every later one are returned.
    pub fn queue_insert_batch(&mut self, items: Vec<T>) -> (Vec<usize>, Vec<T>) {
        let mut slots = Vec::with_capacity(items.len());
        let mut rejected = Vec::new();
        let mut iter = items.into_iter().enumerate();
        for (ordinal, item) in iter.by_ref() {
            let label = Label {
                index: ordinal,
                buffer: self.subtree,
                ordinal,
            };
            match self.queue_insert(item, &label) {
                Placement::Accepted { slot } => slots.push(slot),
                Placement::BufferFull(item) | Placement::SlotOccupied(item) => {
                    rejected.push(item);
                    break;
                }
            }
        }
        rejected.extend(iter.map(|(_, item)| item));
        self.advance_write(slots.len());
        (slots, rejected)
    }

    /// Up to two oldest entries starting at the read pointer; port A gets the
    /// older one.
    pub fn queue_drain(&mut self) -> Vec<Drained<T>> {
        debug_assert_eq!(self.policy, MappingPolicy::Queue);
        let mut out = Vec::with_capacity(2);
        for port in [Port::A, Port::B] {
            let slot = self.read_ptr;
            match self.take(slot) {
                Some(item) => {
                    out.push(Drained { port, slot, item });
                    self.read_ptr = (self.read_ptr + 1) % self.capacity();
                }
                None => break,
            }
        }
        out
    }

    pub fn drain(&mut self) -> Vec<Drained<T>> {
        match self.policy {
            MappingPolicy::Direct => self.direct_drain(),
            MappingPolicy::Queue => self.queue_drain(),
        }
    }

    pub fn clear(&mut self) {
        self.slots.iter_mut().for_each(|s| *s = None);
        self.read_ptr = 0;
        self.write_ptr = 0;
        self.occupied = 0;
        self.inserted = 0;
        self.drained = 0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn direct(slots: usize) -> SubtreeBuffer<u32> {
        SubtreeBuffer::new(6, MappingPolicy::Direct, slots).unwrap()
    }

    fn queue(slots: usize) -> SubtreeBuffer<u32> {
        SubtreeBuffer::new(3, MappingPolicy::Queue, slots).unwrap()
    }

    #[test]
    fn zero_slots_rejected() {
        assert!(SubtreeBuffer::<u32>::new(0, MappingPolicy::Queue, 0).is_err());
    }

    #[test]
    fn direct_insert_uses_chunk_index() {
        let mut b = direct(8);
        assert_eq!(b.direct_insert(5, 42).unwrap(), Placement::Accepted { slot: 5 });
        assert_eq!(b.slot(5), Some(&42));
        assert_eq!(b.subtree(), 6);
    }

    #[test]
    fn direct_collision_with_free_slots() {
        let mut b = direct(8);
        b.direct_insert(5, 1).unwrap();
        assert_eq!(b.direct_insert(5, 2).unwrap(), Placement::SlotOccupied(2));
        assert_eq!(b.free_slots(), 7);
    }

    #[test]
    fn direct_index_out_of_range() {
        let mut b = direct(4);
        assert!(matches!(b.direct_insert(4, 0), Err(Error::Config(_))));
    }

    #[test]
    fn direct_drain_lowest_per_half() {
        let mut b = direct(8);
        for s in [1, 3, 5] {
            b.direct_insert(s, s as u32 * 10).unwrap();
        }
        let got: Vec<(Port, usize)> = b.direct_drain().iter().map(|d| (d.port, d.slot)).collect();
        assert_eq!(got, vec![(Port::A, 1), (Port::B, 5)]);
        assert_eq!(b.len(), 1);
    }

    #[test]
    fn direct_drain_empty_and_upper_only() {
        let mut b = direct(8);
        assert!(b.direct_drain().is_empty());
        b.direct_insert(6, 7).unwrap();
        let got = b.direct_drain();
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].port, Port::B);
    }

    #[test]
    fn labels() {
        let l = queue_label(&[(3, 0), (3, 1)]);
        assert_eq!(l.iter().map(|l| l.ordinal).collect::<Vec<_>>(), vec![0, 1]);
        let l = queue_label(&[(0, 0), (1, 1)]);
        assert_eq!(l.iter().map(|l| l.ordinal).collect::<Vec<_>>(), vec![0, 0]);
        assert!(queue_label(&[]).is_empty());
        // Ordinals follow chunk index, not input order.
        let l = queue_label(&[(2, 5), (1, 0), (2, 1), (2, 3)]);
        assert_eq!(l.iter().map(|l| l.ordinal).collect::<Vec<_>>(), vec![2, 0, 0, 1]);
    }

    #[test]
    fn queue_insert_offsets_from_write_ptr() {
        let mut b = queue(8);
        b.queue_insert_batch(vec![1, 2]);
        b.queue_drain();
        assert_eq!(b.write_ptr(), 2);
        let label = Label {
            index: 0,
            buffer: 3,
            ordinal: 1,
        };
        assert_eq!(b.queue_insert(9, &label), Placement::Accepted { slot: 3 });
    }

    #[test]
    fn queue_one_free_slot_two_incoming() {
        let mut b = queue(4);
        b.queue_insert_batch(vec![1, 2, 3]);
        let (slots, rejected) = b.queue_insert_batch(vec![4, 5]);
        assert_eq!(slots, vec![3]);
        assert_eq!(rejected, vec![5]);
        assert_eq!(b.len(), 4);
    }

    #[test]
    fn queue_contiguous_from_empty() {
        let mut b = queue(8);
        b.queue_insert_batch(vec![1]);
        b.queue_drain();
        let (slots, rejected) = b.queue_insert_batch(vec![10, 11, 12, 13]);
        assert_eq!(slots, vec![1, 2, 3, 4]);
        assert!(rejected.is_empty());
    }

    #[test]
    fn queue_drain_fifo() {
        let mut b = queue(8);
        b.queue_insert_batch(vec![1, 2, 3]);
        let first: Vec<u32> = b.queue_drain().into_iter().map(|d| d.item).collect();
        assert_eq!(first, vec![1, 2]);
        assert_eq!(b.read_ptr(), 2);
        let second: Vec<u32> = b.queue_drain().into_iter().map(|d| d.item).collect();
        assert_eq!(second, vec![3]);
    }

    #[derive(Debug, Clone)]
    enum Op {
        Insert(Vec<u32>),
        Drain,
    }

    fn ops() -> impl Strategy<Value = Vec<Op>> {
        prop::collection::vec(
            prop_oneof![
                prop::collection::vec(any::<u32>(), 0..6).prop_map(Op::Insert),
                Just(Op::Drain),
            ],
            0..200,
        )
    }

    proptest! {
        #[test]
        fn queue_is_fifo_and_conserves(slots in 1usize..10, ops in ops()) {
            let mut b = queue(slots);
            let mut accepted = Vec::new();
            let mut drained = Vec::new();
            for op in ops {
                match op {
                    Op::Insert(items) => {
                        let n = items.len();
                        let (placed, rejected) = b.queue_insert_batch(items.clone());
                        prop_assert_eq!(placed.len() + rejected.len(), n);
                        // rejections are a suffix
                        prop_assert_eq!(&items[placed.len()..], &rejected[..]);
                        accepted.extend_from_slice(&items[..placed.len()]);
                    }
                    Op::Drain => {
                        let d = b.queue_drain();
                        prop_assert!(d.len() <= 2);
                        drained.extend(d.into_iter().map(|d| d.item));
                    }
                }
                prop_assert_eq!(b.total_inserted(), b.total_drained() + b.len() as u64);
                prop_assert_eq!((b.read_ptr() + b.len()) % slots, b.write_ptr());
            }
            prop_assert_eq!(&accepted[..drained.len()], &drained[..]);
        }

        #[test]
        fn direct_slot_matches_chunk_index(slots in 1usize..12, ops in prop::collection::vec((any::<bool>(), 0usize..12), 0..200)) {
            let mut b: SubtreeBuffer<usize> = SubtreeBuffer::new(0, MappingPolicy::Direct, slots).unwrap();
            for (insert, idx) in ops {
                if insert {
                    if idx < slots {
                        let _ = b.direct_insert(idx, idx).unwrap();
                    }
                } else {
                    let d = b.direct_drain();
                    prop_assert!(d.len() <= 2);
                    for x in d {
                        prop_assert_eq!(x.slot, x.item);
                    }
                }
                for s in 0..slots {
                    if let Some(&v) = b.slot(s) {
                        prop_assert_eq!(v, s);
                    }
                }
                prop_assert_eq!(b.total_inserted(), b.total_drained() + b.len() as u64);
            }
        }
    }
}
