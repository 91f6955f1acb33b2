//! Scenario execution: seeded runs, run summaries, baseline comparison,
//! and parameter sweeps.

use std::collections::BTreeMap;

use rayon::prelude::*;
use thiserror::Error;

use crate::engine::{Engine, EngineConfig, MacKind, RunOutput};
use crate::metrics::{jain_index, redundancy_pct, MetricsRecord, RunSummary};
use crate::topology::Topology;
use crate::traffic::TrafficSpec;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("engine setup failed: {0}")]
    Setup(String),
    #[error("summaries come from different scenarios ({0} vs {1})")]
    MismatchedScenarios(String, String),
    #[error("sweep axis {axis} does not apply to mac {mac}")]
    AxisMacMismatch { axis: String, mac: String },
}

/// An engine-ready scenario plus its identity fingerprint.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub topo: Topology,
    pub traffic: TrafficSpec,
    pub cfg: EngineConfig,
    pub fingerprint: String,
}

impl Scenario {
    pub fn new(topo: Topology, traffic: TrafficSpec, cfg: EngineConfig) -> Self {
        let fingerprint = fingerprint(&topo, &traffic, &cfg);
        Scenario { topo, traffic, cfg, fingerprint }
    }

    pub fn with_mac(&self, mac: MacKind) -> Scenario {
        let mut cfg = self.cfg.clone();
        cfg.mac = mac;
        Scenario {
            topo: self.topo.clone(),
            traffic: self.traffic.clone(),
            cfg,
            fingerprint: self.fingerprint.clone(),
        }
    }
}

/// Scenario identity: everything that must match for a fair comparison
/// (the MAC itself is deliberately excluded).
fn fingerprint(topo: &Topology, traffic: &TrafficSpec, cfg: &EngineConfig) -> String {
    use std::collections::hash_map::DefaultHasher;
    use std::hash::{Hash, Hasher};
    let mut h = DefaultHasher::new();
    for n in topo.node_ids() {
        n.hash(&mut h);
        for j in topo.one_hop(n).unwrap() {
            j.hash(&mut h);
        }
        traffic.load(n).to_bits().hash(&mut h);
    }
    format!("{:?}", traffic.model).hash(&mut h);
    traffic.schedule.len().hash(&mut h);
    cfg.channel.per.to_bits().hash(&mut h);
    cfg.duration_windows.hash(&mut h);
    format!("{:016x}", h.finish())
}

/// Windows of the series used for post-convergence statistics: after the
/// last segment's convergence when it exists, the trailing half
/// otherwise.
fn eval_span(output: &RunOutput) -> (u64, u64) {
    let windows = output.series.len() as u64;
    let from = output
        .segments
        .last()
        .and_then(|s| s.converged_at)
        .or(output.mab_converged_at)
        .map(|c| (c + 1).min(windows))
        .unwrap_or(windows / 2);
    (from, windows)
}

/// Reduce a run to its summary statistics.
pub fn summarize(output: &RunOutput, mac: MacKind, seed: u64, fingerprint: &str) -> RunSummary {
    let (from, to) = eval_span(output);
    let span: Vec<&MetricsRecord> = output
        .series
        .iter()
        .filter(|r| r.window >= from && r.window < to)
        .collect();
    let count = span.len().max(1) as f64;
    let mean_s = span.iter().map(|r| r.network_s).sum::<f64>() / count;
    let mut per_node_s = BTreeMap::new();
    for &n in &output.node_ids {
        let v = span.iter().map(|r| r.s.get(&n).copied().unwrap_or(0.0)).sum::<f64>() / count;
        per_node_s.insert(n, v);
    }
    let values: Vec<f64> = per_node_s.values().copied().collect();
    let spread = {
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let mean = values.iter().sum::<f64>() / values.len().max(1) as f64;
        if mean > 0.0 {
            (max - min) / mean
        } else {
            0.0
        }
    };
    let final_redundancy = output
        .final_frame_micro
        .zip(output.f_min_micro)
        .map(|(f, fm)| redundancy_pct(f, fm));
    RunSummary {
        mac: mac.as_str().to_string(),
        seed,
        fingerprint: fingerprint.to_string(),
        windows: output.series.len() as u64,
        segments: output.segments.clone(),
        mean_s,
        per_node_s,
        spread,
        jain: jain_index(&values),
        offered_g: output.offered_g,
        throughput_ratio_vs_aloha: None,
        mab_convergence_window: output.mab_converged_at,
        defrag_complete_window: output.defrag_done_at,
        final_frame_micro: output.final_frame_micro,
        final_redundancy_pct: final_redundancy,
        post_defrag_collisions: output.post_defrag_collisions,
    }
}

/// Run one seeded scenario.
pub fn run_scenario(scenario: &Scenario, seed: u64) -> Result<(RunOutput, RunSummary), RunError> {
    let engine = Engine::new(
        scenario.topo.clone(),
        scenario.traffic.clone(),
        scenario.cfg.clone(),
        seed,
    )
    .map_err(RunError::Setup)?;
    let output = engine.run();
    let summary = summarize(&output, scenario.cfg.mac, seed, &scenario.fingerprint);
    Ok((output, summary))
}

/// Throughput-ratio and fairness-spread report for matched scenarios.
#[derive(Debug, Clone, PartialEq)]
pub struct CompareReport {
    pub ratio: f64,
    pub spread_rra: f64,
    pub spread_aloha: f64,
}

pub fn compare_baseline(rra: &RunSummary, aloha: &RunSummary) -> Result<CompareReport, RunError> {
    if rra.fingerprint != aloha.fingerprint {
        return Err(RunError::MismatchedScenarios(
            rra.fingerprint.clone(),
            aloha.fingerprint.clone(),
        ));
    }
    Ok(CompareReport {
        ratio: rra.mean_s / aloha.mean_s,
        spread_rra: rra.spread,
        spread_aloha: aloha.spread,
    })
}

/// Run a scenario and, when requested, its same-seed baseline twin; the
/// summary then carries the throughput ratio.
pub fn run_with_baseline(
    scenario: &Scenario,
    seed: u64,
    baseline: bool,
) -> Result<(RunOutput, RunSummary, Option<(RunOutput, RunSummary)>), RunError> {
    let (output, mut summary) = run_scenario(scenario, seed)?;
    let twin = if baseline && scenario.cfg.mac != MacKind::Aloha {
        let aloha = scenario.with_mac(MacKind::Aloha);
        let (o, s) = run_scenario(&aloha, seed)?;
        summary.throughput_ratio_vs_aloha = Some(compare_baseline(&summary, &s)?.ratio);
        Some((o, s))
    } else {
        None
    };
    Ok((output, summary, twin))
}

/// One (axis value, seed) run of a sweep.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub value: f64,
    pub seed: u64,
    pub summary: RunSummary,
}

/// Run every (value, seed) combination in parallel; rows come back in
/// deterministic (value, seed) order.
pub fn run_sweep(
    scenarios: Vec<(f64, Scenario)>,
    seeds: &[u64],
) -> Result<Vec<SweepRow>, RunError> {
    let jobs: Vec<(f64, u64, Scenario)> = scenarios
        .into_iter()
        .flat_map(|(v, sc)| seeds.iter().map(move |&s| (v, s, sc.clone())))
        .collect();
    let mut rows = jobs
        .into_par_iter()
        .map(|(value, seed, scenario)| {
            run_scenario(&scenario, seed).map(|(_, summary)| SweepRow { value, seed, summary })
        })
        .collect::<Result<Vec<_>, _>>()?;
    rows.sort_by(|a, b| a.value.total_cmp(&b.value).then(a.seed.cmp(&b.seed)));
    Ok(rows)
}
