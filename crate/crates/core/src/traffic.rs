//! Application-layer traffic: per-node offered load, arrival sampling,
//! per-packet destination choice, and scheduled network changes.
//!
//! Loads are Erlangs: the expected fraction of time a node's application
//! generates packet payload, with the packet duration tau as the unit.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Exp};
use thiserror::Error;

use crate::topology::{NodeId, Topology, TopologyError};

#[derive(Debug, Error, PartialEq)]
pub enum TrafficError {
    #[error("load for node {0} is negative ({1})")]
    NegativeLoad(NodeId, f64),
    #[error("dynamic event times must be strictly increasing (event {0} at tick {1})")]
    NonIncreasingSchedule(usize, u64),
    #[error(transparent)]
    Topology(#[from] TopologyError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrafficModel {
    /// Exponential inter-arrival times with mean tau/g.
    Poisson,
    /// Deterministic inter-arrival times of exactly tau/g.
    ConstantRate,
}

/// A timed change to the network or its traffic.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicEvent {
    pub at_tick: u64,
    pub kind: DynamicEventKind,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DynamicEventKind {
    LoadChange { node: NodeId, g: f64 },
    NodeFail { node: NodeId },
    NodeAdd { node: NodeId, attach: Vec<NodeId>, g: f64 },
}

/// Offered-load description for every node plus the event schedule.
#[derive(Debug, Clone)]
pub struct TrafficSpec {
    pub model: TrafficModel,
    loads: BTreeMap<NodeId, f64>,
    pub schedule: Vec<DynamicEvent>,
}

impl TrafficSpec {
    pub fn new(
        model: TrafficModel,
        loads: BTreeMap<NodeId, f64>,
        schedule: Vec<DynamicEvent>,
    ) -> Result<Self, TrafficError> {
        for (&n, &g) in &loads {
            if g < 0.0 || !g.is_finite() {
                return Err(TrafficError::NegativeLoad(n, g));
            }
        }
        let mut prev = None;
        for (i, ev) in schedule.iter().enumerate() {
            if prev.is_some_and(|p| ev.at_tick <= p) {
                return Err(TrafficError::NonIncreasingSchedule(i, ev.at_tick));
            }
            prev = Some(ev.at_tick);
        }
        Ok(TrafficSpec { model, loads, schedule })
    }

    /// Same load on every node of `topo`, empty schedule.
    pub fn uniform(model: TrafficModel, topo: &Topology, g: f64) -> Result<Self, TrafficError> {
        Self::new(model, topo.node_ids().map(|n| (n, g)).collect(), Vec::new())
    }

    pub fn load(&self, node: NodeId) -> f64 {
        self.loads.get(&node).copied().unwrap_or(0.0)
    }

    pub fn set_load(&mut self, node: NodeId, g: f64) {
        self.loads.insert(node, g);
    }

    pub fn remove_node(&mut self, node: NodeId) {
        self.loads.remove(&node);
    }

    /// Next inter-arrival interval in units of tau, or `None` when the
    /// node generates no traffic.
    pub fn next_interarrival_tau(&self, node: NodeId, rng: &mut impl Rng) -> Option<f64> {
        let g = self.load(node);
        if g <= 0.0 {
            return None;
        }
        match self.model {
            TrafficModel::ConstantRate => Some(1.0 / g),
            TrafficModel::Poisson => {
                let exp = Exp::new(g).expect("g > 0");
                Some(exp.sample(rng))
            }
        }
    }

    /// Next arrival instant in ticks, at least one tick after `now`.
    pub fn sample_next_arrival(
        &self,
        node: NodeId,
        now: u64,
        ticks_per_tau: u64,
        rng: &mut impl Rng,
    ) -> Option<u64> {
        let dt_tau = self.next_interarrival_tau(node, rng)?;
        let ticks = (dt_tau * ticks_per_tau as f64).round().max(1.0);
        Some(now + ticks as u64)
    }
}

/// Uniform choice among the node's one-hop neighbours, drawn per packet.
pub fn pick_destination(
    topo: &Topology,
    node: NodeId,
    rng: &mut impl Rng,
) -> Result<NodeId, TopologyError> {
    let neighbors = topo.one_hop(node)?;
    if neighbors.is_empty() {
        return Err(TopologyError::IsolatedNode(node));
    }
    let k = rng.random_range(0..neighbors.len());
    Ok(*neighbors.iter().nth(k).expect("index in range"))
}

/// Apply one scheduled event to the topology and traffic spec.
/// Learner-state consequences (fresh agents, dropped queues) are the
/// engine's job; this only maintains the graph and the load table.
pub fn apply_dynamic_event(
    topo: &mut Topology,
    traffic: &mut TrafficSpec,
    event: &DynamicEventKind,
) -> Result<(), TrafficError> {
    match event {
        DynamicEventKind::LoadChange { node, g } => {
            if !topo.contains(*node) {
                return Err(TopologyError::UnknownNode(*node).into());
            }
            if *g < 0.0 {
                return Err(TrafficError::NegativeLoad(*node, *g));
            }
            traffic.set_load(*node, *g);
        }
        DynamicEventKind::NodeFail { node } => {
            topo.remove_node(*node)?;
            traffic.remove_node(*node);
        }
        DynamicEventKind::NodeAdd { node, attach, g } => {
            if *g < 0.0 {
                return Err(TrafficError::NegativeLoad(*node, *g));
            }
            topo.add_node(*node, attach)?;
            traffic.set_load(*node, *g);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{node_stream, StreamPurpose};

    fn spec(model: TrafficModel, g: f64) -> TrafficSpec {
        TrafficSpec::uniform(model, &Topology::fully_connected(3), g).unwrap()
    }

    #[test]
    fn constant_rate_is_exact() {
        let s = spec(TrafficModel::ConstantRate, 0.5);
        let mut rng = node_stream(1, 1, StreamPurpose::Arrival);
        assert_eq!(s.next_interarrival_tau(1, &mut rng), Some(2.0));
        assert_eq!(s.sample_next_arrival(1, 0, 100, &mut rng), Some(200));
    }

    #[test]
    fn zero_load_never_arrives() {
        let s = spec(TrafficModel::Poisson, 0.0);
        let mut rng = node_stream(1, 1, StreamPurpose::Arrival);
        assert_eq!(s.next_interarrival_tau(1, &mut rng), None);
    }

    #[test]
    fn poisson_mean_matches_load() {
        // Independent law-of-large-numbers check: 1e5 draws at g = 0.5
        // must average 2.0 tau within 2%.
        let s = spec(TrafficModel::Poisson, 0.5);
        let mut rng = node_stream(7, 2, StreamPurpose::Arrival);
        let n = 100_000;
        let sum: f64 = (0..n)
            .map(|_| s.next_interarrival_tau(2, &mut rng).unwrap())
            .sum();
        let mean = sum / n as f64;
        assert!((mean - 2.0).abs() < 0.04, "mean {mean}");
    }

    #[test]
    fn poisson_window_counts() {
        // Arrival count over a window W has mean g*W/tau; check within
        // 3 sigma for a few windows.
        let s = spec(TrafficModel::Poisson, 0.8);
        let mut rng = node_stream(9, 3, StreamPurpose::Arrival);
        let window: f64 = 50_000.0;
        let expected = 0.8 * window;
        let sigma = expected.sqrt();
        let mut t = 0.0;
        let mut count = 0u64;
        while t < window {
            t += s.next_interarrival_tau(3, &mut rng).unwrap();
            if t < window {
                count += 1;
            }
        }
        assert!(
            (count as f64 - expected).abs() < 3.0 * sigma,
            "count {count} expected {expected}"
        );
    }

    #[test]
    fn destination_uniform_over_neighbors() {
        let topo = Topology::fully_connected(3);
        let mut rng = node_stream(5, 1, StreamPurpose::Destination);
        let mut hits = BTreeMap::new();
        let n = 10_000;
        for _ in 0..n {
            *hits.entry(pick_destination(&topo, 1, &mut rng).unwrap()).or_insert(0u32) += 1;
        }
        for (_, c) in hits {
            let freq = c as f64 / n as f64;
            assert!((freq - 0.5).abs() < 0.02, "freq {freq}");
        }
    }

    #[test]
    fn pendant_node_always_sends_to_its_neighbor() {
        let topo = Topology::paper_5node();
        let mut rng = node_stream(5, 5, StreamPurpose::Destination);
        for _ in 0..100 {
            assert_eq!(pick_destination(&topo, 5, &mut rng).unwrap(), 4);
        }
    }

    #[test]
    fn isolated_node_errors() {
        let topo = Topology::from_parts([1, 2, 3], [(1, 2)]).unwrap();
        let mut rng = node_stream(5, 3, StreamPurpose::Destination);
        assert_eq!(
            pick_destination(&topo, 3, &mut rng).unwrap_err(),
            TopologyError::IsolatedNode(3)
        );
    }

    #[test]
    fn schedule_must_increase() {
        let events = vec![
            DynamicEvent { at_tick: 10, kind: DynamicEventKind::NodeFail { node: 1 } },
            DynamicEvent { at_tick: 10, kind: DynamicEventKind::NodeFail { node: 2 } },
        ];
        let err = TrafficSpec::new(TrafficModel::Poisson, BTreeMap::new(), events).unwrap_err();
        assert_eq!(err, TrafficError::NonIncreasingSchedule(1, 10));
    }

    #[test]
    fn dynamic_events_mutate_topology_and_loads() {
        let mut topo = Topology::paper_5node();
        let mut traffic = TrafficSpec::uniform(TrafficModel::Poisson, &topo, 0.5).unwrap();

        apply_dynamic_event(&mut topo, &mut traffic, &DynamicEventKind::NodeFail { node: 5 })
            .unwrap();
        assert_eq!(topo.node_count(), 4);
        assert_eq!(topo.edge_count(), 4);
        assert_eq!(traffic.load(5), 0.0);

        apply_dynamic_event(
            &mut topo,
            &mut traffic,
            &DynamicEventKind::NodeAdd { node: 6, attach: vec![4], g: 0.3 },
        )
        .unwrap();
        assert_eq!(topo.node_count(), 5);
        assert_eq!(traffic.load(6), 0.3);

        apply_dynamic_event(
            &mut topo,
            &mut traffic,
            &DynamicEventKind::LoadChange { node: 3, g: 0.9 },
        )
        .unwrap();
        assert_eq!(traffic.load(3), 0.9);

        let err = apply_dynamic_event(
            &mut topo,
            &mut traffic,
            &DynamicEventKind::NodeFail { node: 77 },
        )
        .unwrap_err();
        assert_eq!(err, TrafficError::Topology(TopologyError::UnknownNode(77)));
    }
}
