//! Event queue with a total, documented ordering.
//!
//! Ties at the same tick are broken by event-kind rank, then node id,
//! then insertion order. One tick is tau / R where R is the configured
//! time resolution, so every schedulable instant is an integer.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use thiserror::Error;

use crate::topology::NodeId;
use crate::sim::channel::TxId;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SimError {
    #[error("cannot schedule at tick {at} before current tick {now}")]
    SchedulePast { at: u64, now: u64 },
}

/// Everything the engine reacts to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EventKind {
    /// A transmission finished; resolve its receptions.
    TxEnd { tx: TxId },
    /// Metrics / convergence window boundary.
    WindowBoundary,
    /// Scheduled network change (index into the traffic schedule).
    Dynamic { index: usize },
    /// Application packet arrival.
    Arrival { node: NodeId },
    /// A deferred retransmission becomes eligible.
    BackoffExpiry { node: NodeId, packet: u64 },
    /// Feedback window for an unacknowledged packet ran out.
    FeedbackTimeout { node: NodeId, packet: u64 },
    /// Per-tau transmit decision instant of a random-access node.
    DecisionTick { node: NodeId },
    /// Scheduled transmission start of a time-slotted node.
    TxBegin { node: NodeId },
    /// Local frame boundary of a time-slotted node.
    FrameDecision { node: NodeId },
    /// End of simulation.
    End,
}

impl EventKind {
    fn rank(&self) -> u8 {
        match self {
            EventKind::TxEnd { .. } => 0,
            EventKind::WindowBoundary => 1,
            EventKind::Dynamic { .. } => 2,
            EventKind::Arrival { .. } => 3,
            EventKind::BackoffExpiry { .. } => 4,
            EventKind::FeedbackTimeout { .. } => 5,
            EventKind::DecisionTick { .. } => 6,
            EventKind::TxBegin { .. } => 7,
            EventKind::FrameDecision { .. } => 8,
            EventKind::End => 9,
        }
    }

    fn node(&self) -> NodeId {
        match self {
            EventKind::Arrival { node }
            | EventKind::BackoffExpiry { node, .. }
            | EventKind::FeedbackTimeout { node, .. }
            | EventKind::DecisionTick { node }
            | EventKind::TxBegin { node }
            | EventKind::FrameDecision { node } => *node,
            _ => 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Queued {
    key: (u64, u8, NodeId, u64),
    kind: EventKind,
}

impl Ord for Queued {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.key.cmp(&other.key)
    }
}

impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Time-ordered queue; `now` never decreases.
#[derive(Debug, Default)]
pub struct EventQueue {
    heap: BinaryHeap<Reverse<Queued>>,
    seq: u64,
    now: u64,
}

impl EventQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn schedule(&mut self, at: u64, kind: EventKind) -> Result<(), SimError> {
        if at < self.now {
            return Err(SimError::SchedulePast { at, now: self.now });
        }
        let key = (at, kind.rank(), kind.node(), self.seq);
        self.seq += 1;
        self.heap.push(Reverse(Queued { key, kind }));
        Ok(())
    }

    /// Pop the next event, advancing the clock to its time.
    pub fn advance(&mut self) -> Option<(u64, EventKind)> {
        let Reverse(q) = self.heap.pop()?;
        self.now = q.key.0;
        Some((q.key.0, q.kind))
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn time_order() {
        let mut q = EventQueue::new();
        q.schedule(5, EventKind::Arrival { node: 1 }).unwrap();
        q.schedule(3, EventKind::Arrival { node: 2 }).unwrap();
        assert_eq!(q.advance().unwrap().0, 3);
        assert_eq!(q.advance().unwrap().0, 5);
        assert!(q.advance().is_none());
    }

    #[test]
    fn same_tick_lower_node_first() {
        let mut q = EventQueue::new();
        q.schedule(7, EventKind::DecisionTick { node: 2 }).unwrap();
        q.schedule(7, EventKind::DecisionTick { node: 1 }).unwrap();
        assert_eq!(q.advance().unwrap().1, EventKind::DecisionTick { node: 1 });
        assert_eq!(q.advance().unwrap().1, EventKind::DecisionTick { node: 2 });
    }

    #[test]
    fn kind_rank_orders_same_tick() {
        let mut q = EventQueue::new();
        q.schedule(4, EventKind::DecisionTick { node: 1 }).unwrap();
        q.schedule(4, EventKind::TxEnd { tx: 9 }).unwrap();
        assert_eq!(q.advance().unwrap().1, EventKind::TxEnd { tx: 9 });
    }

    #[test]
    fn scheduling_in_the_past_errors() {
        let mut q = EventQueue::new();
        q.schedule(3, EventKind::End).unwrap();
        q.advance();
        assert_eq!(
            q.schedule(2, EventKind::End).unwrap_err(),
            SimError::SchedulePast { at: 2, now: 3 }
        );
    }
}
