//! Per-window metrics, fairness summaries, and deterministic export.
//!
//! One record per accounting window (an epoch for random access, a frame
//! for TDMA). Export is byte-stable: fixed column order, fixed float
//! formatting, LF line endings.

use std::collections::BTreeMap;
use std::io::Write;

use thiserror::Error;

use crate::topology::{NodeId, Topology};

#[derive(Debug, Error)]
pub enum ExportError {
    #[error("cannot export an empty metrics series")]
    EmptySeries,
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Ground-truth per-node tallies for one window. Transmissions are
/// attributed to the window in which they were resolved, so
/// transmitted = delivered + collided + errored holds exactly per window.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NodeWindow {
    pub transmitted: u64,
    /// Successful receptions at the intended destination (duplicates
    /// from retransmissions included).
    pub delivered: u64,
    pub collided: u64,
    pub errored: u64,
    /// First-time deliveries of packets originated by this node; the
    /// goodput measure used for throughput.
    pub unique_delivered: u64,
}

/// One row of the exported time series.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub window: u64,
    /// Per-node throughput in Erlangs (unique deliveries of the node's
    /// own packets, as a fraction of window time).
    pub s: BTreeMap<NodeId, f64>,
    /// Network throughput, exactly the sum of `s`.
    pub network_s: f64,
    /// Per-node collision rate in [0, 1] (channel errors count: a sender
    /// without collision detection cannot tell them apart).
    pub collision_rate: BTreeMap<NodeId, f64>,
    /// Per-node fairness coefficient over one-hop neighbours.
    pub fairness: BTreeMap<NodeId, f64>,
    /// Jain index over all active nodes.
    pub jain: f64,
    /// Mean exploration rate across agents.
    pub epsilon: f64,
    /// Current frame length in micro-slots (0 outside TDMA).
    pub frame_micro: u32,
    /// Bandwidth redundancy percentage (0 outside TDMA).
    pub redundancy_pct: f64,
}

/// The fairness coefficient: negated total absolute throughput deviation
/// from the node's one-hop neighbours. Zero iff every neighbour matches.
pub fn fairness_coefficient(own: f64, neighbors: &[f64]) -> f64 {
    -neighbors.iter().map(|s| (own - s).abs()).sum::<f64>()
}

/// Jain fairness index: (sum s)^2 / (n * sum s^2), 1.0 for equal shares.
pub fn jain_index(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 1.0;
    }
    let sum: f64 = values.iter().sum();
    let sq: f64 = values.iter().map(|v| v * v).sum();
    if sq == 0.0 {
        1.0
    } else {
        sum * sum / (values.len() as f64 * sq)
    }
}

/// Build one record from window tallies.
pub fn build_record(
    window: u64,
    tallies: &BTreeMap<NodeId, NodeWindow>,
    topo: &Topology,
    packet_ticks: u64,
    window_ticks: u64,
    epsilon: f64,
    frame_micro: u32,
    redundancy_pct: f64,
) -> MetricsRecord {
    let mut s = BTreeMap::new();
    let mut collision_rate = BTreeMap::new();
    for (&n, w) in tallies {
        s.insert(n, w.unique_delivered as f64 * packet_ticks as f64 / window_ticks as f64);
        let rate = if w.transmitted == 0 {
            0.0
        } else {
            (w.collided + w.errored) as f64 / w.transmitted as f64
        };
        collision_rate.insert(n, rate);
    }
    let mut fairness = BTreeMap::new();
    for (&n, &own) in &s {
        let neighbor_s: Vec<f64> = topo
            .one_hop(n)
            .map(|set| set.iter().filter_map(|j| s.get(j).copied()).collect())
            .unwrap_or_default();
        fairness.insert(n, fairness_coefficient(own, &neighbor_s));
    }
    let values: Vec<f64> = s.values().copied().collect();
    let network_s = values.iter().sum();
    MetricsRecord {
        window,
        s,
        network_s,
        collision_rate,
        fairness,
        jain: jain_index(&values),
        epsilon,
        frame_micro,
        redundancy_pct,
    }
}

/// Result digest of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub mac: String,
    pub seed: u64,
    /// Scenario identity used to reject mismatched comparisons.
    pub fingerprint: String,
    pub windows: u64,
    /// Windows at which each stable segment converged; one entry per
    /// segment (segments are delimited by dynamic events).
    pub segments: Vec<SegmentSummary>,
    /// Mean network throughput over the evaluation span (post-convergence
    /// when converged, the trailing half otherwise).
    pub mean_s: f64,
    pub per_node_s: BTreeMap<NodeId, f64>,
    /// (max - min) / mean of per-node throughputs.
    pub spread: f64,
    pub jain: f64,
    /// Measured offered load in Erlangs (attempt time fraction).
    pub offered_g: f64,
    pub throughput_ratio_vs_aloha: Option<f64>,
    pub mab_convergence_window: Option<u64>,
    pub defrag_complete_window: Option<u64>,
    pub final_frame_micro: Option<u32>,
    pub final_redundancy_pct: Option<f64>,
    pub post_defrag_collisions: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SegmentSummary {
    pub start_window: u64,
    pub converged_at: Option<u64>,
}

fn fmt(v: f64) -> String {
    format!("{v:.6}")
}

/// Write the time series as CSV: header plus one row per record, columns
/// in a fixed documented order. Node columns cover every node id that
/// ever existed during the run.
pub fn write_metrics_csv<W: Write>(
    out: &mut W,
    series: &[MetricsRecord],
    node_ids: &[NodeId],
) -> Result<(), ExportError> {
    if series.is_empty() {
        return Err(ExportError::EmptySeries);
    }
    let mut header = vec![
        "window".to_string(),
        "network_s".to_string(),
        "jain".to_string(),
        "epsilon".to_string(),
        "frame_micro".to_string(),
        "redundancy_pct".to_string(),
    ];
    for n in node_ids {
        header.push(format!("s_{n}"));
    }
    for n in node_ids {
        header.push(format!("coll_{n}"));
    }
    for n in node_ids {
        header.push(format!("f_{n}"));
    }
    writeln!(out, "{}", header.join(","))?;
    for r in series {
        let mut row = vec![
            r.window.to_string(),
            fmt(r.network_s),
            fmt(r.jain),
            fmt(r.epsilon),
            r.frame_micro.to_string(),
            fmt(r.redundancy_pct),
        ];
        for n in node_ids {
            row.push(fmt(r.s.get(n).copied().unwrap_or(0.0)));
        }
        for n in node_ids {
            row.push(fmt(r.collision_rate.get(n).copied().unwrap_or(0.0)));
        }
        for n in node_ids {
            row.push(fmt(r.fairness.get(n).copied().unwrap_or(0.0)));
        }
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

/// Flat key=value summary, one field per line.
pub fn write_summary<W: Write>(out: &mut W, s: &RunSummary) -> Result<(), ExportError> {
    writeln!(out, "mac={}", s.mac)?;
    writeln!(out, "seed={}", s.seed)?;
    writeln!(out, "fingerprint={}", s.fingerprint)?;
    writeln!(out, "windows={}", s.windows)?;
    for (i, seg) in s.segments.iter().enumerate() {
        let v = seg
            .converged_at
            .map(|w| w.to_string())
            .unwrap_or_else(|| "none".to_string());
        writeln!(out, "segment_{i}_start={}", seg.start_window)?;
        writeln!(out, "segment_{i}_converged_at={v}")?;
    }
    writeln!(out, "mean_s={}", fmt(s.mean_s))?;
    for (n, v) in &s.per_node_s {
        writeln!(out, "s_{n}={}", fmt(*v))?;
    }
    writeln!(out, "spread={}", fmt(s.spread))?;
    writeln!(out, "jain={}", fmt(s.jain))?;
    writeln!(out, "offered_g={}", fmt(s.offered_g))?;
    if let Some(r) = s.throughput_ratio_vs_aloha {
        writeln!(out, "ratio_vs_aloha={}", fmt(r))?;
    }
    if let Some(w) = s.mab_convergence_window {
        writeln!(out, "mab_convergence_window={w}")?;
    }
    if let Some(w) = s.defrag_complete_window {
        writeln!(out, "defrag_complete_window={w}")?;
    }
    if let Some(m) = s.final_frame_micro {
        writeln!(out, "final_frame_micro={m}")?;
    }
    if let Some(r) = s.final_redundancy_pct {
        writeln!(out, "final_redundancy_pct={}", fmt(r))?;
    }
    if let Some(c) = s.post_defrag_collisions {
        writeln!(out, "post_defrag_collisions={c}")?;
    }
    Ok(())
}

/// Bandwidth redundancy percentage relative to the synchronous minimum.
pub fn redundancy_pct(f_current_micro: u32, f_min_micro: u32) -> f64 {
    100.0 * (f_current_micro as f64 - f_min_micro as f64) / f_min_micro as f64
}
