//! The simulation engine: one deterministic event loop driving traffic,
//! transmissions, reception resolution, piggyback dissemination, the
//! per-node MAC agents, windowed metrics, and convergence detection.
//!
//! Identical (configuration, seed) pairs produce bit-identical event
//! traces and metrics; all randomness flows through per-node per-purpose
//! streams, so adding a node never perturbs anyone else's draws.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::aloha::{backoff_ticks, AlohaMode, AlohaParams};
use crate::learning::LearningParams;
use crate::metrics::{build_record, redundancy_pct, MetricsRecord, NodeWindow, SegmentSummary};
use crate::rng::{node_stream, StreamPurpose};
use crate::rra::{RewardParams, RraAgent, RraParams};
use crate::sim::{
    ActiveTransmissions, ChannelParams, EventKind, EventQueue, PiggybackPayload, ReceptionStatus,
    Transmission,
};
use crate::tdma::{FrameConfig, TdmaAgent, TdmaParams};
use crate::topology::{NodeId, Topology};
use crate::traffic::{apply_dynamic_event, pick_destination, TrafficSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MacKind {
    Rra,
    Aloha,
    TdmaMab,
}

impl MacKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            MacKind::Rra => "rra",
            MacKind::Aloha => "aloha",
            MacKind::TdmaMab => "tdma-mab",
        }
    }
}

/// Thresholds for the random-access convergence detector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceParams {
    /// Consecutive stable windows required.
    pub window: u32,
    /// Relative network-throughput stability bound.
    pub tolerance: f64,
    /// Smoothing factor for the throughput trace the detector watches.
    pub ewma: f64,
}

impl Default for ConvergenceParams {
    fn default() -> Self {
        ConvergenceParams { window: 50, tolerance: 0.02, ewma: 0.02 }
    }
}

#[derive(Debug, Clone)]
pub struct EngineConfig {
    pub mac: MacKind,
    /// Base time resolution: ticks per packet duration tau.
    pub resolution: u64,
    pub channel: ChannelParams,
    pub learning: LearningParams,
    pub reward: RewardParams,
    pub rra: RraParams,
    pub aloha: AlohaParams,
    pub tdma: TdmaParams,
    pub convergence: ConvergenceParams,
    /// Run length in accounting windows (epochs or frames).
    pub duration_windows: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Packet {
    id: u64,
    dest: NodeId,
}

enum MacState {
    Rra(RraAgent),
    Aloha,
    Tdma(Box<TdmaAgent>),
}

struct NodeState {
    mac: MacState,
    queue: VecDeque<Packet>,
    transmitting: bool,
    in_flight: Option<Packet>,
    /// Unconfirmed sent packets awaiting feedback or backoff.
    outstanding: BTreeMap<u64, Packet>,
    /// Receiver-side duplicate filter (payload ids already delivered).
    delivered_seen: BTreeSet<u64>,
    /// Delivery confirmations we advertise: (source, payload, expires).
    pending_acks: Vec<(NodeId, u64, u64)>,
    planned_tx: Vec<(u64, Packet, usize)>,
    arrival_rng: ChaCha8Rng,
    dest_rng: ChaCha8Rng,
    mac_rng: ChaCha8Rng,
    expl_rng: ChaCha8Rng,
    chan_rng: ChaCha8Rng,
}

#[derive(Debug, Default, Clone, Copy)]
struct Cumulative {
    transmitted: u64,
    delivered: u64,
    collided: u64,
    errored: u64,
    credited: u64,
}

/// Random-access convergence detector: epsilon at its floor, greedy
/// actions frozen, and the smoothed network throughput flat, all for a
/// full window streak.
struct ConvTracker {
    params: ConvergenceParams,
    ewma: Option<f64>,
    prev_actions: Option<Vec<(NodeId, usize)>>,
    streak: u32,
    segment_start: u64,
    converged_at: Option<u64>,
    segments: Vec<SegmentSummary>,
}

impl ConvTracker {
    fn new(params: ConvergenceParams) -> Self {
        ConvTracker {
            params,
            ewma: None,
            prev_actions: None,
            streak: 0,
            segment_start: 0,
            converged_at: None,
            segments: Vec::new(),
        }
    }

    fn update(&mut self, window: u64, s: f64, eps_at_floor: bool, actions: Vec<(NodeId, usize)>) {
        let mut clean = eps_at_floor;
        if self.prev_actions.as_ref() != Some(&actions) && self.prev_actions.is_some() {
            clean = false;
        }
        let prev = self.ewma;
        let ewma = match prev {
            None => s,
            Some(e) => e + self.params.ewma * (s - e),
        };
        if let Some(e) = prev {
            if (ewma - e).abs() > self.params.tolerance * ewma.abs().max(1e-12) {
                clean = false;
            }
        } else {
            clean = false;
        }
        self.ewma = Some(ewma);
        self.prev_actions = Some(actions);
        if clean {
            self.streak += 1;
            if self.streak >= self.params.window && self.converged_at.is_none() {
                self.converged_at = Some(window);
            }
        } else {
            self.streak = 0;
        }
    }

    fn reset_segment(&mut self, window: u64) {
        self.segments.push(SegmentSummary {
            start_window: self.segment_start,
            converged_at: self.converged_at,
        });
        self.segment_start = window;
        self.converged_at = None;
        self.streak = 0;
        self.ewma = None;
        self.prev_actions = None;
    }

    fn finish(mut self) -> Vec<SegmentSummary> {
        self.segments.push(SegmentSummary {
            start_window: self.segment_start,
            converged_at: self.converged_at,
        });
        self.segments
    }
}

/// Slotted-stage tracker: collision-free streak with frozen arms.
#[derive(Default)]
struct TdmaTracker {
    streak: u32,
    prev_arms: Option<Vec<(NodeId, usize)>>,
    window_collisions: u64,
    mab_converged_at: Option<u64>,
    switch_pending: bool,
    defrag_done_at: Option<u64>,
    post_defrag_collisions: u64,
}

/// Everything a run produces besides the exported files.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub series: Vec<MetricsRecord>,
    pub node_ids: Vec<NodeId>,
    pub segments: Vec<SegmentSummary>,
    /// Measured offered load including retransmissions (Erlangs).
    pub offered_g: f64,
    pub mab_converged_at: Option<u64>,
    pub defrag_done_at: Option<u64>,
    pub post_defrag_collisions: Option<u64>,
    pub final_frame_micro: Option<u32>,
    pub f_min_micro: Option<u32>,
    /// Cumulative per-node (transmitted, delivered, collided, errored).
    pub conservation: BTreeMap<NodeId, (u64, u64, u64, u64)>,
    /// Cumulative credited feedback per node (learning-side successes).
    pub credited: BTreeMap<NodeId, u64>,
}

pub struct Engine {
    cfg: EngineConfig,
    topo: Topology,
    traffic: TrafficSpec,
    seed: u64,
    queue: EventQueue,
    active: ActiveTransmissions,
    nodes: BTreeMap<NodeId, NodeState>,
    frame_cfg: Option<FrameConfig>,
    ticks_per_tau: u64,
    window_ticks: u64,
    window_idx: u64,
    next_payload: u64,
    next_tx: u64,
    tallies: BTreeMap<NodeId, NodeWindow>,
    cumulative: BTreeMap<NodeId, Cumulative>,
    series: Vec<MetricsRecord>,
    all_node_ids: BTreeSet<NodeId>,
    conv: ConvTracker,
    tdma_tracker: TdmaTracker,
    attempt_ticks: u64,
    end_tick: u64,
    dynamic_cursor: usize,
}

impl Engine {
    pub fn new(
        topo: Topology,
        traffic: TrafficSpec,
        cfg: EngineConfig,
        seed: u64,
    ) -> Result<Self, String> {
        let frame_cfg = match cfg.mac {
            MacKind::TdmaMab => Some(FrameConfig::derive(&topo, &cfg.tdma, cfg.resolution)?),
            _ => None,
        };
        let ticks_per_tau = frame_cfg.map_or(cfg.resolution, |f| f.ticks_per_tau);
        let window_ticks = match cfg.mac {
            MacKind::TdmaMab => {
                let f = frame_cfg.unwrap();
                f.frame_micro as u64 * f.ticks_per_microslot
            }
            _ => cfg.rra.epoch_len as u64 * ticks_per_tau,
        };
        let conv = ConvTracker::new(cfg.convergence);
        let mut engine = Engine {
            cfg,
            topo,
            traffic,
            seed,
            queue: EventQueue::new(),
            active: ActiveTransmissions::new(),
            nodes: BTreeMap::new(),
            frame_cfg,
            ticks_per_tau,
            window_ticks,
            window_idx: 0,
            next_payload: 1,
            next_tx: 1,
            tallies: BTreeMap::new(),
            cumulative: BTreeMap::new(),
            series: Vec::new(),
            all_node_ids: BTreeSet::new(),
            conv,
            tdma_tracker: TdmaTracker::default(),
            attempt_ticks: 0,
            end_tick: 0,
            dynamic_cursor: 0,
        };
        engine.init()?;
        Ok(engine)
    }

    fn init(&mut self) -> Result<(), String> {
        let ids: Vec<NodeId> = self.topo.node_ids().collect();
        let offsets = if let Some(fc) = self.frame_cfg {
            let seed = self.seed;
            Some(fc.initial_offsets(&ids, &self.cfg.tdma, |node, m| {
                node_stream(seed, node, StreamPurpose::Init).random_range(0..m)
            })?)
        } else {
            None
        };
        for &id in &ids {
            self.spawn_node(id, false);
            match self.cfg.mac {
                MacKind::Rra => {
                    let phase = node_stream(self.seed, id, StreamPurpose::Init)
                        .random_range(0..self.ticks_per_tau);
                    self.queue.schedule(phase, EventKind::DecisionTick { node: id }).unwrap();
                    self.schedule_arrival(id, 0);
                }
                MacKind::Aloha => {
                    self.schedule_arrival(id, 0);
                }
                MacKind::TdmaMab => {
                    let delta = offsets.as_ref().unwrap()[&id];
                    self.queue.schedule(delta, EventKind::FrameDecision { node: id }).unwrap();
                }
            }
        }
        self.end_tick = self.cfg.duration_windows * self.window_ticks;
        self.queue.schedule(self.window_ticks, EventKind::WindowBoundary).unwrap();
        for (i, ev) in self.traffic.schedule.iter().enumerate() {
            self.queue.schedule(ev.at_tick, EventKind::Dynamic { index: i }).unwrap();
        }
        self.queue.schedule(self.end_tick, EventKind::End).unwrap();
        Ok(())
    }

    fn spawn_node(&mut self, id: NodeId, fresh_random_init: bool) {
        let mac = match self.cfg.mac {
            MacKind::Rra => {
                let mut init_rng = node_stream(self.seed, id, StreamPurpose::Init);
                let params = RraParams {
                    q_init_uniform: self.cfg.rra.q_init_uniform || fresh_random_init,
                    ..self.cfg.rra
                };
                MacState::Rra(RraAgent::new(id, params, &self.cfg.learning, &mut init_rng))
            }
            MacKind::Aloha => MacState::Aloha,
            MacKind::TdmaMab => MacState::Tdma(Box::new(TdmaAgent::new(
                id,
                self.cfg.tdma.clone(),
                self.frame_cfg.unwrap(),
                self.cfg.learning,
            ))),
        };
        self.nodes.insert(
            id,
            NodeState {
                mac,
                queue: VecDeque::new(),
                transmitting: false,
                in_flight: None,
                outstanding: BTreeMap::new(),
                delivered_seen: BTreeSet::new(),
                pending_acks: Vec::new(),
                planned_tx: Vec::new(),
                arrival_rng: node_stream(self.seed, id, StreamPurpose::Arrival),
                dest_rng: node_stream(self.seed, id, StreamPurpose::Destination),
                mac_rng: node_stream(self.seed, id, StreamPurpose::Mac),
                expl_rng: node_stream(self.seed, id, StreamPurpose::Exploration),
                chan_rng: node_stream(self.seed, id, StreamPurpose::Channel),
            },
        );
        self.all_node_ids.insert(id);
        self.tallies.insert(id, NodeWindow::default());
        self.cumulative.entry(id).or_default();
    }

    fn schedule_arrival(&mut self, id: NodeId, now: u64) {
        let node = self.nodes.get_mut(&id).expect("node exists");
        if let Some(at) =
            self.traffic.sample_next_arrival(id, now, self.ticks_per_tau, &mut node.arrival_rng)
        {
            self.queue.schedule(at, EventKind::Arrival { node: id }).unwrap();
        }
    }

    /// Run to completion and produce the series plus summary inputs.
    pub fn run(mut self) -> RunOutput {
        while let Some((now, event)) = self.queue.advance() {
            match event {
                EventKind::End => break,
                EventKind::TxEnd { tx } => self.on_tx_end(tx, now),
                EventKind::WindowBoundary => self.on_window(now),
                EventKind::Dynamic { index } => self.on_dynamic(index, now),
                EventKind::Arrival { node } => self.on_arrival(node, now),
                EventKind::BackoffExpiry { node, packet } => self.on_backoff(node, packet, now),
                EventKind::FeedbackTimeout { node, packet } => self.on_timeout(node, packet, now),
                EventKind::DecisionTick { node } => self.on_decision(node, now),
                EventKind::TxBegin { node } => self.on_tx_begin(node, now),
                EventKind::FrameDecision { node } => self.on_frame(node, now),
            }
        }
        self.finish()
    }

    fn finish(self) -> RunOutput {
        let conservation = self
            .cumulative
            .iter()
            .map(|(&n, c)| (n, (c.transmitted, c.delivered, c.collided, c.errored)))
            .collect();
        let credited =
            self.cumulative.iter().map(|(&n, c)| (n, c.credited)).collect();
        let (mab, defrag_done, post_coll, final_frame, f_min_micro) = match self.cfg.mac {
            MacKind::TdmaMab => {
                let fc = self.frame_cfg.unwrap();
                let final_frame = self
                    .nodes
                    .values()
                    .filter_map(|n| match &n.mac {
                        MacState::Tdma(a) => Some(a.frame_micro()),
                        _ => None,
                    })
                    .max();
                (
                    self.tdma_tracker.mab_converged_at,
                    self.tdma_tracker.defrag_done_at,
                    self.tdma_tracker.defrag_done_at.map(|_| self.tdma_tracker.post_defrag_collisions),
                    final_frame,
                    Some(fc.f_min * self.cfg.tdma.s),
                )
            }
            _ => (None, None, None, None, None),
        };
        let duration_ticks = self.end_tick.max(1);
        RunOutput {
            series: self.series,
            node_ids: self.all_node_ids.iter().copied().collect(),
            segments: self.conv.finish(),
            offered_g: self.attempt_ticks as f64 / duration_ticks as f64,
            mab_converged_at: mab,
            defrag_done_at: defrag_done,
            post_defrag_collisions: post_coll,
            final_frame_micro: final_frame,
            f_min_micro,
            conservation,
            credited,
        }
    }

    fn start_tx(&mut self, sender: NodeId, packet: Packet, payload: PiggybackPayload, now: u64) {
        let tx = Transmission {
            id: self.next_tx,
            sender,
            dest: packet.dest,
            start: now,
            end: now + self.ticks_per_tau,
            payload_id: packet.id,
            piggyback: payload,
        };
        self.next_tx += 1;
        self.attempt_ticks += self.ticks_per_tau;
        self.queue.schedule(tx.end, EventKind::TxEnd { tx: tx.id }).unwrap();
        self.active.begin(tx);
    }

    fn on_tx_end(&mut self, tx_id: u64, now: u64) {
        let per = self.cfg.channel.per;
        let corrupted = {
            // One fate per packet, drawn from the sender's channel stream.
            let sender = match self.active.sender_of(tx_id) {
                Some(s) => s,
                None => return,
            };
            let node = self.nodes.get_mut(&sender).expect("sender alive");
            per > 0.0 && node.chan_rng.random::<f64>() < per
        };
        let Some((tx, outcome)) = self.active.finish(tx_id, corrupted, &self.topo) else {
            return;
        };

        // Sender-side accounting.
        let tally = self.tallies.entry(tx.sender).or_default();
        tally.transmitted += 1;
        let cum = self.cumulative.entry(tx.sender).or_default();
        cum.transmitted += 1;
        match outcome.status {
            ReceptionStatus::Success => {
                tally.delivered += 1;
                cum.delivered += 1;
            }
            ReceptionStatus::Collided => {
                tally.collided += 1;
                cum.collided += 1;
                if self.cfg.mac == MacKind::TdmaMab {
                    self.tdma_tracker.window_collisions += 1;
                    if self.tdma_tracker.defrag_done_at.is_some() {
                        self.tdma_tracker.post_defrag_collisions += 1;
                    }
                }
            }
            ReceptionStatus::ChannelError => {
                tally.errored += 1;
                cum.errored += 1;
            }
        }

        if let Some(node) = self.nodes.get_mut(&tx.sender) {
            node.transmitting = false;
            if self.cfg.mac == MacKind::Aloha
                && self.cfg.aloha.mode == AlohaMode::Backoff
            {
                if let Some(p) = node.in_flight.take() {
                    node.outstanding.insert(p.id, p);
                    let window =
                        self.cfg.aloha.feedback_window_taus as u64 * self.ticks_per_tau;
                    self.queue
                        .schedule(now + window, EventKind::FeedbackTimeout {
                            node: tx.sender,
                            packet: p.id,
                        })
                        .unwrap();
                }
            } else {
                node.in_flight = None;
            }
        }

        // Data delivery at the destination (unique packets count as
        // goodput; retransmitted duplicates are filtered but re-acked).
        if outcome.status == ReceptionStatus::Success {
            let unique = self
                .nodes
                .get_mut(&tx.dest)
                .map(|d| d.delivered_seen.insert(tx.payload_id))
                .unwrap_or(false);
            if unique {
                let t = self.tallies.entry(tx.sender).or_default();
                t.unique_delivered += 1;
            }
            if let Some(dest) = self.nodes.get_mut(&tx.dest) {
                match &mut dest.mac {
                    MacState::Rra(agent) => agent.on_delivery(tx.sender),
                    MacState::Aloha => {
                        let window =
                            self.cfg.aloha.feedback_window_taus as u64 * self.ticks_per_tau;
                        dest.pending_acks.push((tx.sender, tx.payload_id, now + window));
                    }
                    MacState::Tdma(_) => {}
                }
            }
        }

        // Piggyback dissemination to every listener that heard the packet.
        for &listener in &outcome.hearers {
            let Some(node) = self.nodes.get_mut(&listener) else { continue };
            match &mut node.mac {
                MacState::Rra(agent) => agent.ingest_payload(tx.sender, &tx.piggyback),
                MacState::Aloha => {
                    for &(src, id) in &tx.piggyback.acks {
                        if src == listener {
                            node.outstanding.remove(&id);
                        }
                    }
                }
                MacState::Tdma(agent) => {
                    agent.on_heard(tx.sender, tx.payload_id, tx.start, tx.end, &tx.piggyback);
                }
            }
        }
    }

    fn on_arrival(&mut self, id: NodeId, now: u64) {
        if !self.nodes.contains_key(&id) || self.traffic.load(id) <= 0.0 {
            return;
        }
        let dest = {
            let node = self.nodes.get_mut(&id).unwrap();
            match pick_destination(&self.topo, id, &mut node.dest_rng) {
                Ok(d) => Some(d),
                Err(_) => None,
            }
        };
        if let Some(dest) = dest {
            let packet = Packet { id: self.next_payload, dest };
            self.next_payload += 1;
            match self.cfg.mac {
                MacKind::Aloha if self.cfg.aloha.mode == AlohaMode::OfferedLoad => {
                    // Textbook attempt process: transmit immediately and
                    // exactly once, own-transmission overlap permitted.
                    self.start_tx(id, packet, PiggybackPayload::default(), now);
                }
                MacKind::Aloha => {
                    let node = self.nodes.get_mut(&id).unwrap();
                    node.queue.push_back(packet);
                    self.aloha_try_start(id, now);
                }
                _ => {
                    let node = self.nodes.get_mut(&id).unwrap();
                    node.queue.push_back(packet);
                }
            }
        }
        self.schedule_arrival(id, now);
    }

    /// Transmit the queue head if the radio is free (arrival and backoff
    /// instants are the only transmission triggers in this MAC).
    fn aloha_try_start(&mut self, id: NodeId, now: u64) {
        let node = self.nodes.get_mut(&id).unwrap();
        if node.transmitting || node.queue.is_empty() {
            return;
        }
        let packet = node.queue.pop_front().unwrap();
        node.transmitting = true;
        node.in_flight = Some(packet);
        node.pending_acks.retain(|&(_, _, expire)| expire > now);
        let payload = PiggybackPayload {
            acks: node.pending_acks.iter().map(|&(s, p, _)| (s, p)).collect(),
            ..PiggybackPayload::default()
        };
        self.start_tx(id, packet, payload, now);
    }

    fn on_backoff(&mut self, id: NodeId, packet: u64, now: u64) {
        let Some(node) = self.nodes.get_mut(&id) else { return };
        let Some(p) = node.outstanding.remove(&packet) else {
            return; // confirmed meanwhile
        };
        if node.transmitting {
            node.queue.push_front(p);
        } else {
            node.queue.push_front(p);
            self.aloha_try_start(id, now);
        }
    }

    fn on_timeout(&mut self, id: NodeId, packet: u64, now: u64) {
        let retry_prob = self.cfg.aloha.retry_prob;
        let Some(node) = self.nodes.get_mut(&id) else { return };
        if !node.outstanding.contains_key(&packet) {
            return; // confirmed in time
        }
        let retry = retry_prob >= 1.0 || node.mac_rng.random::<f64>() < retry_prob;
        if retry {
            let delay = backoff_ticks(&self.cfg.aloha, self.ticks_per_tau, &mut node.mac_rng);
            self.queue
                .schedule(now + delay, EventKind::BackoffExpiry { node: id, packet })
                .unwrap();
        } else {
            node.outstanding.remove(&packet);
        }
    }

    fn on_decision(&mut self, id: NodeId, now: u64) {
        if !self.nodes.contains_key(&id) {
            return;
        }
        let (transmit, epoch_done) = {
            let node = self.nodes.get_mut(&id).unwrap();
            let MacState::Rra(agent) = &mut node.mac else { return };
            let has_packet = !node.queue.is_empty();
            let t = agent.decide_transmit(has_packet, &mut node.mac_rng);
            (t, agent.tick_completes_epoch())
        };
        if transmit {
            let (packet, payload) = {
                let node = self.nodes.get_mut(&id).unwrap();
                let MacState::Rra(agent) = &mut node.mac else { unreachable!() };
                agent.on_transmit();
                (node.queue.pop_front().unwrap(), agent.payload())
            };
            self.start_tx(id, packet, payload, now);
            let node = self.nodes.get_mut(&id).unwrap();
            node.transmitting = true;
        }
        if epoch_done {
            let node = self.nodes.get_mut(&id).unwrap();
            let MacState::Rra(agent) = &mut node.mac else { unreachable!() };
            let report = agent.epoch_transition(
                &self.topo,
                &self.cfg.learning,
                &self.cfg.reward,
                &mut node.expl_rng,
            );
            let cum = self.cumulative.entry(id).or_default();
            cum.credited += (report.own_s * self.cfg.rra.epoch_len as f64).round() as u64;
        }
        self.queue
            .schedule(now + self.ticks_per_tau, EventKind::DecisionTick { node: id })
            .unwrap();
    }

    fn on_frame(&mut self, id: NodeId, now: u64) {
        if !self.nodes.contains_key(&id) {
            return;
        }
        let one_hop = self.topo.one_hop(id).cloned().unwrap_or_default();
        let switch = self.tdma_tracker.switch_pending;
        let plan = {
            let node = self.nodes.get_mut(&id).unwrap();
            let MacState::Tdma(agent) = &mut node.mac else { return };
            if switch {
                agent.enter_post_convergence();
            }
            agent.frame_decision(&one_hop, now, &mut node.expl_rng)
        };
        for &(offset, arm) in &plan.transmissions {
            let dest = {
                let node = self.nodes.get_mut(&id).unwrap();
                pick_destination(&self.topo, id, &mut node.dest_rng).ok()
            };
            let Some(dest) = dest else { continue };
            let packet = Packet { id: self.next_payload, dest };
            self.next_payload += 1;
            let node = self.nodes.get_mut(&id).unwrap();
            node.planned_tx.push((now + offset, packet, arm));
            self.queue.schedule(now + offset, EventKind::TxBegin { node: id }).unwrap();
        }
        self.queue
            .schedule(now + plan.frame_ticks, EventKind::FrameDecision { node: id })
            .unwrap();
    }

    fn on_tx_begin(&mut self, id: NodeId, now: u64) {
        let Some(node) = self.nodes.get_mut(&id) else { return };
        let idx = node.planned_tx.iter().position(|&(at, _, _)| at == now);
        let Some(idx) = idx else { return };
        let (_, packet, arm) = node.planned_tx.remove(idx);
        let payload = {
            let MacState::Tdma(agent) = &mut node.mac else { return };
            let p = agent.build_payload(now);
            agent.record_tx(packet.id, packet.dest, arm, now, now + self.ticks_per_tau);
            p
        };
        self.start_tx(id, packet, payload, now);
    }

    fn on_window(&mut self, now: u64) {
        self.window_idx += 1;
        let (epsilon, frame_micro, redundancy) = self.snapshot_agents();
        let record = build_record(
            self.window_idx - 1,
            &self.tallies,
            &self.topo,
            self.ticks_per_tau,
            self.window_ticks,
            epsilon,
            frame_micro,
            redundancy,
        );

        match self.cfg.mac {
            MacKind::Rra => {
                let eps_floor = self.nodes.values().all(|n| match &n.mac {
                    MacState::Rra(a) => a.epsilon() <= self.cfg.learning.epsilon_min + 1e-12,
                    _ => true,
                });
                let actions: Vec<(NodeId, usize)> = self
                    .nodes
                    .iter()
                    .filter_map(|(&id, n)| match &n.mac {
                        MacState::Rra(a) => Some((id, a.greedy_action())),
                        _ => None,
                    })
                    .collect();
                self.conv.update(self.window_idx - 1, record.network_s, eps_floor, actions);
            }
            MacKind::TdmaMab => self.update_tdma_tracker(),
            MacKind::Aloha => {}
        }

        self.series.push(record);
        for w in self.tallies.values_mut() {
            *w = NodeWindow::default();
        }
        if now + self.window_ticks <= self.end_tick {
            self.queue.schedule(now + self.window_ticks, EventKind::WindowBoundary).unwrap();
        }
    }

    fn update_tdma_tracker(&mut self) {
        let arms: Vec<(NodeId, usize)> = self
            .nodes
            .iter()
            .filter_map(|(&id, n)| match &n.mac {
                MacState::Tdma(a) => Some((id, a.greedy_arm())),
                _ => None,
            })
            .collect();
        let t = &mut self.tdma_tracker;
        let stable = t.prev_arms.as_ref() == Some(&arms);
        if t.window_collisions == 0 && (stable || t.prev_arms.is_none()) {
            t.streak += 1;
        } else {
            t.streak = 0;
        }
        t.prev_arms = Some(arms);
        t.window_collisions = 0;
        if t.streak >= self.cfg.tdma.w && t.mab_converged_at.is_none() {
            // Report the first window of the collision-free streak.
            t.mab_converged_at =
                Some(self.window_idx - u64::from(self.cfg.tdma.w));
            t.switch_pending = true;
        }
        if t.mab_converged_at.is_some() && t.defrag_done_at.is_none() && self.cfg.tdma.defrag {
            let all_done = self.nodes.values().all(|n| match &n.mac {
                MacState::Tdma(a) => a.defrag_complete(),
                _ => true,
            });
            if all_done {
                t.defrag_done_at = Some(self.window_idx - 1);
            }
        }
    }

    fn snapshot_agents(&self) -> (f64, u32, f64) {
        match self.cfg.mac {
            MacKind::Rra => {
                let eps: Vec<f64> = self
                    .nodes
                    .values()
                    .filter_map(|n| match &n.mac {
                        MacState::Rra(a) => Some(a.epsilon()),
                        _ => None,
                    })
                    .collect();
                let mean = if eps.is_empty() {
                    0.0
                } else {
                    eps.iter().sum::<f64>() / eps.len() as f64
                };
                (mean, 0, 0.0)
            }
            MacKind::TdmaMab => {
                let fc = self.frame_cfg.unwrap();
                let frame = self
                    .nodes
                    .values()
                    .filter_map(|n| match &n.mac {
                        MacState::Tdma(a) => Some(a.frame_micro()),
                        _ => None,
                    })
                    .max()
                    .unwrap_or(fc.frame_micro);
                let eps: Vec<f64> = self
                    .nodes
                    .values()
                    .filter_map(|n| match &n.mac {
                        MacState::Tdma(a) => Some(a.epsilon()),
                        _ => None,
                    })
                    .collect();
                let mean = if eps.is_empty() {
                    0.0
                } else {
                    eps.iter().sum::<f64>() / eps.len() as f64
                };
                (mean, frame, redundancy_pct(frame, fc.f_min * self.cfg.tdma.s))
            }
            MacKind::Aloha => (0.0, 0, 0.0),
        }
    }

    fn on_dynamic(&mut self, index: usize, _now: u64) {
        let Some(event) = self.traffic.schedule.get(index).cloned() else { return };
        self.dynamic_cursor = index + 1;
        use crate::traffic::DynamicEventKind::*;
        let prev_load = match &event.kind {
            LoadChange { node, .. } | NodeAdd { node, .. } => self.traffic.load(*node),
            NodeFail { node } => self.traffic.load(*node),
        };
        if apply_dynamic_event(&mut self.topo, &mut self.traffic, &event.kind).is_err() {
            return;
        }
        match event.kind {
            LoadChange { node, g } => {
                if prev_load <= 0.0 && g > 0.0 && self.nodes.contains_key(&node) {
                    self.schedule_arrival(node, event.at_tick);
                }
            }
            NodeFail { node } => {
                self.active.abort_sender(node);
                self.nodes.remove(&node);
                self.tallies.remove(&node);
            }
            NodeAdd { node, .. } => {
                self.spawn_node(node, true);
                match self.cfg.mac {
                    MacKind::Rra => {
                        let phase = node_stream(self.seed, node, StreamPurpose::Init)
                            .random_range(0..self.ticks_per_tau);
                        self.queue
                            .schedule(event.at_tick + phase, EventKind::DecisionTick { node })
                            .unwrap();
                        self.schedule_arrival(node, event.at_tick);
                    }
                    MacKind::Aloha => self.schedule_arrival(node, event.at_tick),
                    MacKind::TdmaMab => {}
                }
            }
        }
        self.conv.reset_segment(self.window_idx);
    }
}
