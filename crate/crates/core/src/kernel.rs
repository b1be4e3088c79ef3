//! Event queue with a strict total dispatch order.
//!
//! Events fire in ascending `(fire_time, seq)` order where `seq` is the
//! scheduling sequence number, so simultaneous events dispatch in the order
//! they were scheduled. Cancellation is lazy: a cancelled handle tombstones
//! the entry and `pop_due` discards it. Scheduling before the current clock
//! is a hard fault surfaced as an error, never silently reordered.

use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, HashSet};

use thiserror::Error;

use crate::time::SimTime;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum KernelError {
    #[error("event scheduled at {at} behind the clock at {now}")]
    ScheduleInPast { at: SimTime, now: SimTime },
}

/// Token for a scheduled event; used only for cancellation.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct EventHandle(u64);

struct Entry<A> {
    at: SimTime,
    seq: u64,
    action: A,
}

impl<A> PartialEq for Entry<A> {
    fn eq(&self, other: &Self) -> bool {
        self.at == other.at && self.seq == other.seq
    }
}

impl<A> Eq for Entry<A> {}

impl<A> PartialOrd for Entry<A> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<A> Ord for Entry<A> {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.at, self.seq).cmp(&(other.at, other.seq))
    }
}

/// Priority queue of future actions plus the virtual clock they drive.
pub struct Scheduler<A> {
    heap: BinaryHeap<Reverse<Entry<A>>>,
    tombstones: HashSet<u64>,
    next_seq: u64,
    now: SimTime,
}

impl<A> Scheduler<A> {
    pub fn new() -> Self {
        Scheduler {
            heap: BinaryHeap::new(),
            tombstones: HashSet::new(),
            next_seq: 0,
            now: SimTime::ZERO,
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn schedule(&mut self, at: SimTime, action: A) -> Result<EventHandle, KernelError> {
        if at < self.now {
            return Err(KernelError::ScheduleInPast { at, now: self.now });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Reverse(Entry { at, seq, action }));
        Ok(EventHandle(seq))
    }

    /// Marks the event dead. Cancelling an already-dispatched handle is a no-op.
    pub fn cancel(&mut self, handle: EventHandle) {
        self.tombstones.insert(handle.0);
    }

    /// Next live event with `fire_time <= horizon`, advancing the clock to it.
    /// Tombstoned entries are discarded without touching the clock.
    pub fn pop_due(&mut self, horizon: SimTime) -> Option<(SimTime, u64, A)> {
        loop {
            match self.heap.peek() {
                None => return None,
                Some(Reverse(entry)) => {
                    if self.tombstones.contains(&entry.seq) {
                        let Reverse(entry) = self.heap.pop().unwrap();
                        self.tombstones.remove(&entry.seq);
                        continue;
                    }
                    if entry.at > horizon {
                        return None;
                    }
                    let Reverse(entry) = self.heap.pop().unwrap();
                    debug_assert!(entry.at >= self.now, "heap yielded a past event");
                    self.now = entry.at;
                    return Some((entry.at, entry.seq, entry.action));
                }
            }
        }
    }

    /// Moves the clock forward to `t` (used to land exactly on a run horizon).
    pub fn advance_to(&mut self, t: SimTime) {
        if t > self.now {
            self.now = t;
        }
    }

    /// True if any live event remains, at any fire time.
    pub fn has_pending(&mut self) -> bool {
        loop {
            match self.heap.peek() {
                None => return false,
                Some(Reverse(entry)) => {
                    if self.tombstones.contains(&entry.seq) {
                        let Reverse(entry) = self.heap.pop().unwrap();
                        self.tombstones.remove(&entry.seq);
                        continue;
                    }
                    return true;
                }
            }
        }
    }
}

impl<A> Default for Scheduler<A> {
    fn default() -> Self {
        Self::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::time::SimDuration;
    use proptest::prelude::*;

    fn t(ns: u64) -> SimTime {
        SimTime::from_ns(ns)
    }

    #[test]
    fn equal_times_dispatch_in_scheduling_order() {
        let mut s: Scheduler<u32> = Scheduler::new();
        s.schedule(t(100), 1).unwrap();
        s.schedule(t(100), 2).unwrap();
        s.schedule(t(100), 3).unwrap();
        let order: Vec<u32> = std::iter::from_fn(|| s.pop_due(t(100)).map(|(_, _, a)| a)).collect();
        assert_eq!(order, vec![1, 2, 3]);
    }

    #[test]
    fn horizon_is_inclusive() {
        let mut s: Scheduler<u32> = Scheduler::new();
        s.schedule(t(1_000_000_000), 1).unwrap();
        s.schedule(t(2_000_000_000), 2).unwrap();
        let mut fired = Vec::new();
        while let Some((_, _, a)) = s.pop_due(t(1_500_000_000)) {
            fired.push(a);
        }
        assert_eq!(fired, vec![1]);
        assert!(s.has_pending());
        assert_eq!(s.now(), t(1_000_000_000));
    }

    #[test]
    fn cancelled_event_never_fires() {
        let mut s: Scheduler<u32> = Scheduler::new();
        let _a = s.schedule(t(10), 1).unwrap();
        let b = s.schedule(t(20), 2).unwrap();
        let _c = s.schedule(t(30), 3).unwrap();
        s.cancel(b);
        let order: Vec<u32> = std::iter::from_fn(|| s.pop_due(t(100)).map(|(_, _, a)| a)).collect();
        assert_eq!(order, vec![1, 3]);
    }

    #[test]
    fn cancel_after_dispatch_is_noop() {
        let mut s: Scheduler<u32> = Scheduler::new();
        let a = s.schedule(t(10), 1).unwrap();
        assert!(s.pop_due(t(10)).is_some());
        s.cancel(a);
        s.schedule(t(20), 2).unwrap();
        assert_eq!(s.pop_due(t(20)).map(|(_, _, a)| a), Some(2));
    }

    #[test]
    fn scheduling_in_past_is_a_fault() {
        let mut s: Scheduler<u32> = Scheduler::new();
        s.schedule(t(50), 1).unwrap();
        s.pop_due(t(50)).unwrap();
        let err = s.schedule(t(49), 2).unwrap_err();
        assert_eq!(
            err,
            KernelError::ScheduleInPast {
                at: t(49),
                now: t(50)
            }
        );
        // Scheduling exactly at the clock is allowed.
        assert!(s.schedule(t(50), 3).is_ok());
    }

    #[test]
    fn clock_never_runs_backwards() {
        let mut s: Scheduler<u32> = Scheduler::new();
        for (i, at) in [400u64, 100, 300, 100, 200].iter().enumerate() {
            s.schedule(t(*at), i as u32).unwrap();
        }
        let mut last = SimTime::ZERO;
        while let Some((at, _, _)) = s.pop_due(t(1_000)) {
            assert!(at >= last);
            last = at;
        }
        assert_eq!(last, t(400));
    }

    // Oracle: dispatch order must equal a stable sort of (time, insertion index),
    // computed here with an independent list sort.
    #[test]
    fn dispatch_matches_stable_sort_oracle() {
        let times: Vec<u64> = (0..10_000u64)
            .map(|i| {
                // Scrambled but reproducible times with plenty of duplicates.
                (i.wrapping_mul(2654435761) >> 7) % 997
            })
            .collect();

        let mut s: Scheduler<usize> = Scheduler::new();
        for (idx, &ns) in times.iter().enumerate() {
            s.schedule(t(ns), idx).unwrap();
        }

        let mut expected: Vec<(u64, usize)> =
            times.iter().copied().zip(0..times.len()).collect();
        expected.sort_by_key(|&(ns, idx)| (ns, idx));

        let mut got = Vec::with_capacity(times.len());
        while let Some((at, _, idx)) = s.pop_due(t(u64::MAX)) {
            got.push((at.as_ns(), idx));
        }
        assert_eq!(got, expected);
    }

    proptest! {
        #[test]
        fn dispatch_order_is_total_and_stable(times in proptest::collection::vec(0u64..10_000, 1..500)) {
            let mut s: Scheduler<usize> = Scheduler::new();
            for (idx, &ns) in times.iter().enumerate() {
                s.schedule(t(ns), idx).unwrap();
            }
            let mut expected: Vec<(u64, usize)> = times.iter().copied().zip(0..times.len()).collect();
            expected.sort_by_key(|&(ns, idx)| (ns, idx));
            let mut got = Vec::new();
            while let Some((at, _, idx)) = s.pop_due(t(u64::MAX)) {
                got.push((at.as_ns(), idx));
            }
            prop_assert_eq!(got, expected);
        }
    }

    #[test]
    fn advance_to_only_moves_forward() {
        let mut s: Scheduler<u32> = Scheduler::new();
        s.advance_to(t(500));
        assert_eq!(s.now(), t(500));
        s.advance_to(t(100));
        assert_eq!(s.now(), t(500));
        let d = SimDuration::from_ns(1);
        assert!(s.schedule(s.now() + d, 1).is_ok());
    }
}
