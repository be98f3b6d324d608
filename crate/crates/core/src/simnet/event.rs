//! Event clock and queue.
//!
//! Time is integer nanoseconds so ordering is exact; equal timestamps
//! drain FIFO by insertion sequence, which keeps runs reproducible.

use super::trace::TxId;
use super::{LinkId, NodeId};
use serde::{Deserialize, Serialize};
use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::ops::Add;

/// Simulation clock instant, nanoseconds since run start.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
pub struct SimTime(u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);

    pub fn from_nanos(ns: u64) -> Self {
        SimTime(ns)
    }

    pub fn from_secs_f64(secs: f64) -> Self {
        SimTime((secs * 1e9).round().max(0.0) as u64)
    }

    pub fn as_nanos(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1e9
    }
}

impl Add for SimTime {
    type Output = SimTime;

    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 + rhs.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EventKind {
    /// One source packet arriving at a flow source.
    Arrival {
        flow: u32,
        packet_seq: u64,
    },
    LinkDelivery {
        tx: TxId,
        link: LinkId,
    },
    LinkDrop {
        tx: TxId,
        link: LinkId,
        failure: bool,
    },
    /// Rule application at a node (same-timestamp follow-up of a delivery,
    /// or a delayed dispatch such as a retransmission).
    NodeProcess {
        tx: TxId,
        node: NodeId,
    },
    FailureToggle {
        link: LinkId,
        up: bool,
    },
}

#[derive(Debug, PartialEq, Eq)]
struct Queued {
    time: SimTime,
    seq: u64,
    kind: EventKind,
}

impl Ord for Queued {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.time, self.seq).cmp(&(other.time, other.seq))
    }
}

impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Min-heap over (time, insertion sequence).
#[derive(Debug, Default)]
pub struct EventQueue {
    heap: BinaryHeap<Reverse<Queued>>,
    next_seq: u64,
}

impl EventQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, time: SimTime, kind: EventKind) {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Reverse(Queued { time, seq, kind }));
    }

    pub fn pop(&mut self) -> Option<(SimTime, EventKind)> {
        self.heap.pop().map(|Reverse(q)| (q.time, q.kind))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pops_in_time_order_with_fifo_ties() {
        let mut q = EventQueue::new();
        let t1 = SimTime::from_nanos(100);
        let t0 = SimTime::from_nanos(50);
        q.push(
            t1,
            EventKind::FailureToggle {
                link: LinkId(1),
                up: false,
            },
        );
        q.push(
            t0,
            EventKind::FailureToggle {
                link: LinkId(2),
                up: false,
            },
        );
        q.push(
            t1,
            EventKind::FailureToggle {
                link: LinkId(3),
                up: false,
            },
        );
        let order: Vec<_> = std::iter::from_fn(|| q.pop())
            .map(|(_, k)| match k {
                EventKind::FailureToggle { link, .. } => link.0,
                _ => unreachable!(),
            })
            .collect();
        assert_eq!(order, vec![2, 1, 3]);
    }

    #[test]
    fn time_conversions_round_trip() {
        let t = SimTime::from_secs_f64(0.020);
        assert_eq!(t.as_nanos(), 20_000_000);
        assert_eq!(t.as_secs_f64(), 0.020);
        assert_eq!(
            (SimTime::from_nanos(3) + SimTime::from_nanos(4)).as_nanos(),
            7
        );
    }
}
