//! Priority event queue with a virtual clock.
//!
//! Events fire in `(fire_time, sequence)` order. The sequence number is
//! assigned at scheduling time, so simultaneous events fire in insertion
//! order on every platform.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};

use thiserror::Error;

use crate::time::{SimDuration, SimTime};

/// Identifies a scheduled event so it can be cancelled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EventHandle(u64);

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ScheduleError {
    #[error("event scheduled at {at} but the clock already reads {now}")]
    InPast { at: SimTime, now: SimTime },
}

struct Scheduled<E> {
    fire_time: SimTime,
    sequence: u64,
    kind: E,
}

impl<E> PartialEq for Scheduled<E> {
    fn eq(&self, other: &Self) -> bool {
        self.fire_time == other.fire_time && self.sequence == other.sequence
    }
}

impl<E> Eq for Scheduled<E> {}

impl<E> PartialOrd for Scheduled<E> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<E> Ord for Scheduled<E> {
    // BinaryHeap is a max-heap; invert so the earliest event is on top.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .fire_time
            .cmp(&self.fire_time)
            .then_with(|| other.sequence.cmp(&self.sequence))
    }
}

pub struct EventQueue<E> {
    now: SimTime,
    next_sequence: u64,
    heap: BinaryHeap<Scheduled<E>>,
    cancelled: HashSet<u64>,
    processed: u64,
}

impl<E> Default for EventQueue<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E> EventQueue<E> {
    pub fn new() -> Self {
        EventQueue {
            now: SimTime::ZERO,
            next_sequence: 0,
            heap: BinaryHeap::new(),
            cancelled: HashSet::new(),
            processed: 0,
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    /// Number of events popped so far.
    pub fn processed(&self) -> u64 {
        self.processed
    }

    /// Scheduled events that have not fired or been cancelled.
    pub fn len(&self) -> usize {
        self.heap.len() - self.cancelled.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn schedule(&mut self, fire_time: SimTime, kind: E) -> Result<EventHandle, ScheduleError> {
        if fire_time < self.now {
            return Err(ScheduleError::InPast {
                at: fire_time,
                now: self.now,
            });
        }
        let sequence = self.next_sequence;
        self.next_sequence += 1;
        self.heap.push(Scheduled {
            fire_time,
            sequence,
            kind,
        });
        Ok(EventHandle(sequence))
    }

    /// Schedules relative to the current clock; cannot be in the past.
    pub fn schedule_in(&mut self, delay: SimDuration, kind: E) -> EventHandle {
        let at = self.now + delay;
        self.schedule(at, kind).expect("relative schedule is never in the past")
    }

    /// Cancels a pending event. Cancelling a fired or unknown handle is a no-op.
    pub fn cancel(&mut self, handle: EventHandle) {
        if self.heap.iter().any(|s| s.sequence == handle.0) {
            self.cancelled.insert(handle.0);
        }
    }

    /// Pops the next event with `fire_time <= end`, advancing the clock to it.
    pub fn pop_due(&mut self, end: SimTime) -> Option<(SimTime, E)> {
        while let Some(top) = self.heap.peek() {
            if top.fire_time > end {
                return None;
            }
            let ev = self.heap.pop().expect("peeked");
            if self.cancelled.remove(&ev.sequence) {
                continue;
            }
            debug_assert!(ev.fire_time >= self.now);
            self.now = ev.fire_time;
            self.processed += 1;
            return Some((ev.fire_time, ev.kind));
        }
        None
    }

    /// Moves the clock forward without processing anything. Never moves it back.
    pub fn advance_to(&mut self, t: SimTime) {
        if t > self.now {
            self.now = t;
        }
    }

    /// Processes every event up to and including `end`, then sets the clock to `end`.
    pub fn run_until<F>(&mut self, end: SimTime, mut handler: F) -> SimTime
    where
        F: FnMut(&mut Self, SimTime, E),
    {
        while let Some((t, ev)) = self.pop_due(end) {
            handler(self, t, ev);
        }
        self.advance_to(end);
        self.now
    }

    /// Pending, non-cancelled event payloads in arbitrary order.
    pub fn pending(&self) -> impl Iterator<Item = &E> {
        self.heap
            .iter()
            .filter(|s| !self.cancelled.contains(&s.sequence))
            .map(|s| &s.kind)
    }
}
