//! Scenario configuration: JSON schema, defaults, validation, and the
//! mapping onto engine-ready scenarios.
//!
//! Unknown keys are rejected and every error names the offending field.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

use crate::aloha::{AlohaMode, AlohaParams};
use crate::engine::{ConvergenceParams, EngineConfig, MacKind};
use crate::learning::LearningParams;
use crate::rra::{RewardParams, RraParams};
use crate::runner::Scenario;
use crate::sim::ChannelParams;
use crate::tdma::{TdmaParams, UpdateRule};
use crate::topology::{NodeId, Topology};
use crate::traffic::{DynamicEvent, DynamicEventKind, TrafficModel, TrafficSpec};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config parse error at {path}: {message}")]
    Parse { path: String, message: String },
    #[error("config error at {path}: {message}")]
    Invalid { path: String, message: String },
}

fn invalid(path: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { path: path.to_string(), message: message.into() }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub topology: TopologyConfig,
    #[serde(default)]
    pub traffic: TrafficConfig,
    pub mac: String,
    pub duration: DurationConfig,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_resolution")]
    pub resolution: u64,
    #[serde(default)]
    pub channel: ChannelConfig,
    #[serde(default)]
    pub learning: LearningConfig,
    #[serde(default)]
    pub reward: RewardConfig,
    #[serde(default)]
    pub rra: RraConfig,
    #[serde(default)]
    pub aloha: AlohaConfig,
    #[serde(default)]
    pub tdma: TdmaConfig,
    #[serde(default)]
    pub convergence: ConvergenceConfig,
    /// Also run the same-seed pure-ALOHA twin and report the throughput
    /// ratio (defaults to on for the learning MACs).
    #[serde(default)]
    pub compare_aloha: Option<bool>,
    #[serde(default)]
    pub output_dir: Option<String>,
}

fn default_seeds() -> Vec<u64> {
    vec![1]
}

fn default_resolution() -> u64 {
    100
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyConfig {
    #[serde(default)]
    pub preset: Option<String>,
    /// Node count for the parametric presets.
    #[serde(default)]
    pub n: Option<u32>,
    #[serde(default)]
    pub nodes: Option<Vec<NodeId>>,
    #[serde(default)]
    pub edges: Option<Vec<(NodeId, NodeId)>>,
}

impl TopologyConfig {
    pub fn build(&self) -> Result<Topology, ConfigError> {
        let path = "topology";
        if let Some(preset) = &self.preset {
            if self.edges.is_some() || self.nodes.is_some() {
                return Err(invalid(path, "give either a preset or an explicit node/edge list"));
            }
            let need_n = || {
                self.n.ok_or_else(|| {
                    invalid("topology.n", format!("preset {preset} needs a node count"))
                })
            };
            return match preset.as_str() {
                "fully_connected" => Ok(Topology::fully_connected(need_n()?)),
                "star" => {
                    let n = need_n()?;
                    if n < 2 {
                        return Err(invalid("topology.n", "a star needs at least 2 nodes"));
                    }
                    Topology::from_parts(1..=n, (2..=n).map(|leaf| (1, leaf)))
                        .map_err(|e| invalid(path, e.to_string()))
                }
                "paper_5node" => Ok(Topology::paper_5node()),
                "paper_12node" => Ok(Topology::paper_12node()),
                "mesh_20node" => Ok(Topology::mesh_20node()),
                other => Err(invalid(
                    "topology.preset",
                    format!(
                        "unknown preset {other}; valid: fully_connected, star, \
                         paper_5node, paper_12node, mesh_20node"
                    ),
                )),
            };
        }
        let edges = self
            .edges
            .as_ref()
            .ok_or_else(|| invalid(path, "need a preset or an edge list"))?;
        let topo = match &self.nodes {
            Some(nodes) => Topology::from_parts(nodes.iter().copied(), edges.iter().copied()),
            None => Topology::from_edges(edges.clone()),
        };
        topo.map_err(|e| invalid("topology.edges", e.to_string()))
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrafficConfig {
    #[serde(default = "default_model")]
    pub model: String,
    /// Erlangs per node.
    #[serde(default = "default_load")]
    pub load: f64,
    /// Per-node overrides.
    #[serde(default)]
    pub loads: BTreeMap<String, f64>,
    #[serde(default)]
    pub schedule: Vec<DynamicEventConfig>,
}

fn default_model() -> String {
    "poisson".into()
}

fn default_load() -> f64 {
    0.5
}

impl Default for TrafficConfig {
    fn default() -> Self {
        TrafficConfig {
            model: default_model(),
            load: default_load(),
            loads: BTreeMap::new(),
            schedule: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicEventConfig {
    #[serde(default)]
    pub at_tick: Option<u64>,
    /// Convenience: epochs (or frames) converted with the accounting
    /// window length.
    #[serde(default)]
    pub at_epoch: Option<u64>,
    #[serde(default)]
    pub load_change: Option<LoadChangeConfig>,
    #[serde(default)]
    pub node_fail: Option<NodeFailConfig>,
    #[serde(default)]
    pub node_add: Option<NodeAddConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadChangeConfig {
    pub node: NodeId,
    pub g: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeFailConfig {
    pub node: NodeId,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeAddConfig {
    pub node: NodeId,
    pub attach: Vec<NodeId>,
    pub g: f64,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DurationConfig {
    #[serde(default)]
    pub epochs: Option<u64>,
    #[serde(default)]
    pub frames: Option<u64>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelConfig {
    /// Packet error probability.
    pub per: f64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        ChannelConfig { per: 0.0 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LearningConfig {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub epsilon0: f64,
    pub epsilon_decay: f64,
    pub epsilon_min: f64,
    /// "zeros" or "uniform" (small random values).
    pub q_init: String,
}

impl Default for LearningConfig {
    fn default() -> Self {
        let p = LearningParams::default();
        LearningConfig {
            alpha: p.alpha,
            beta: p.beta,
            gamma: p.gamma,
            epsilon0: p.epsilon0,
            epsilon_decay: p.epsilon_decay,
            epsilon_min: p.epsilon_min,
            q_init: "zeros".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardConfig {
    pub r_plus: f64,
    pub r_minus: f64,
    pub eps_s: f64,
    pub eps_f: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        let p = RewardParams::default();
        RewardConfig { r_plus: p.r_plus, r_minus: p.r_minus, eps_s: p.eps_s, eps_f: p.eps_f }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RraConfig {
    /// Decision ticks per learning epoch.
    pub epoch_len: u32,
    pub state_bins: usize,
    pub include_zero_action: bool,
    pub ledger_staleness: u64,
    /// "two_hop" (default) or "one_hop" neighbourhood throughput.
    pub neighborhood: String,
    /// EWMA factor for the agents' throughput estimates.
    pub estimate_smoothing: f64,
}

impl Default for RraConfig {
    fn default() -> Self {
        let p = RraParams::default();
        RraConfig {
            epoch_len: p.epoch_len,
            state_bins: p.state_bins,
            include_zero_action: p.include_zero_action,
            ledger_staleness: p.ledger_staleness,
            neighborhood: "two_hop".into(),
            estimate_smoothing: p.estimate_smoothing,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AlohaConfig {
    /// "backoff" (default) or "offered-load" (pure Poisson attempts).
    pub mode: String,
    pub max_backoff_taus: u32,
    pub feedback_window_taus: u32,
    pub retry_prob: f64,
}

impl Default for AlohaConfig {
    fn default() -> Self {
        let p = AlohaParams::default();
        AlohaConfig {
            mode: "backoff".into(),
            max_backoff_taus: p.max_backoff_taus,
            feedback_window_taus: p.feedback_window_taus,
            retry_prob: p.retry_prob,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TdmaConfig {
    pub m: u32,
    pub k: f64,
    pub s: u32,
    pub lambda: u32,
    pub w: u32,
    /// "hysteretic" (default) or "classical".
    pub update_rule: String,
    pub classical_alpha: f64,
    pub epsilon0: f64,
    pub epsilon_decay: f64,
    pub epsilon_min: f64,
    pub defrag: bool,
    pub shrink_stability: u32,
    /// Explicit frame offsets in units of tau, node-id order.
    pub offsets_taus: Option<Vec<f64>>,
}

impl Default for TdmaConfig {
    fn default() -> Self {
        let p = TdmaParams::default();
        TdmaConfig {
            m: p.m,
            k: p.k,
            s: p.s,
            lambda: p.lambda,
            w: p.w,
            update_rule: "hysteretic".into(),
            classical_alpha: p.classical_alpha,
            epsilon0: p.epsilon0,
            epsilon_decay: p.epsilon_decay,
            epsilon_min: p.epsilon_min,
            defrag: p.defrag,
            shrink_stability: p.shrink_stability,
            offsets_taus: p.offsets_taus,
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConvergenceConfig {
    pub window: u32,
    pub tolerance: f64,
    pub ewma: f64,
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        let p = ConvergenceParams::default();
        ConvergenceConfig { window: p.window, tolerance: p.tolerance, ewma: p.ewma }
    }
}

impl ScenarioConfig {
    /// Parse from JSON text, rejecting unknown keys and reporting the
    /// path to any offending field.
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: ScenarioConfig =
            serde_path_to_error::deserialize(de).map_err(|e| ConfigError::Parse {
                path: e.path().to_string(),
                message: e.inner().to_string(),
            })?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn mac_kind(&self) -> Result<MacKind, ConfigError> {
        match self.mac.as_str() {
            "rra" => Ok(MacKind::Rra),
            "aloha" => Ok(MacKind::Aloha),
            "tdma-mab" => Ok(MacKind::TdmaMab),
            other => Err(invalid(
                "mac",
                format!("unknown mac {other}; valid values: rra, aloha, tdma-mab"),
            )),
        }
    }

    pub fn compare_baseline_enabled(&self) -> bool {
        self.compare_aloha
            .unwrap_or_else(|| matches!(self.mac_kind(), Ok(MacKind::Rra)))
    }

    /// Validate everything and produce the engine-ready scenario.
    pub fn build(&self) -> Result<Scenario, ConfigError> {
        let mac = self.mac_kind()?;
        let topo = self.topology.build()?;

        if self.seeds.is_empty() {
            return Err(invalid("seeds", "at least one seed is required"));
        }
        if self.resolution == 0 {
            return Err(invalid("resolution", "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.channel.per) {
            return Err(invalid(
                "channel.per",
                format!("packet error probability {} outside [0, 1]", self.channel.per),
            ));
        }

        let duration_windows = match (self.duration.epochs, self.duration.frames) {
            (Some(e), None) => e,
            (None, Some(f)) => f,
            _ => {
                return Err(invalid(
                    "duration",
                    "give exactly one of duration.epochs or duration.frames",
                ))
            }
        };
        if duration_windows == 0 {
            return Err(invalid("duration", "must be positive"));
        }

        let model = match self.traffic.model.as_str() {
            "poisson" => TrafficModel::Poisson,
            "constant_rate" => TrafficModel::ConstantRate,
            other => {
                return Err(invalid(
                    "traffic.model",
                    format!("unknown model {other}; valid: poisson, constant_rate"),
                ))
            }
        };

        let learning = LearningParams {
            alpha: self.learning.alpha,
            beta: self.learning.beta,
            gamma: self.learning.gamma,
            epsilon0: self.learning.epsilon0,
            epsilon_decay: self.learning.epsilon_decay,
            epsilon_min: self.learning.epsilon_min,
        };
        learning.validate().map_err(|e| invalid("learning", e.to_string()))?;
        let q_init_uniform = match self.learning.q_init.as_str() {
            "zeros" => false,
            "uniform" => true,
            other => {
                return Err(invalid(
                    "learning.q_init",
                    format!("unknown init {other}; valid: zeros, uniform"),
                ))
            }
        };

        let reward = RewardParams {
            r_plus: self.reward.r_plus,
            r_minus: self.reward.r_minus,
            eps_s: self.reward.eps_s,
            eps_f: self.reward.eps_f,
        };
        if reward.r_plus <= 0.0 || reward.r_minus >= 0.0 {
            return Err(invalid("reward", "require r_plus > 0 > r_minus"));
        }

        let two_hop = match self.rra.neighborhood.as_str() {
            "two_hop" => true,
            "one_hop" => false,
            other => {
                return Err(invalid(
                    "rra.neighborhood",
                    format!("unknown value {other}; valid: two_hop, one_hop"),
                ))
            }
        };
        if self.rra.epoch_len == 0 || self.rra.state_bins == 0 {
            return Err(invalid("rra", "epoch_len and state_bins must be positive"));
        }

        let aloha_mode = match self.aloha.mode.as_str() {
            "backoff" => AlohaMode::Backoff,
            "offered-load" => AlohaMode::OfferedLoad,
            other => {
                return Err(invalid(
                    "aloha.mode",
                    format!("unknown mode {other}; valid: backoff, offered-load"),
                ))
            }
        };
        if !(0.0..=1.0).contains(&self.aloha.retry_prob) {
            return Err(invalid("aloha.retry_prob", "must be within [0, 1]"));
        }

        let update_rule = match self.tdma.update_rule.as_str() {
            "hysteretic" => UpdateRule::Hysteretic,
            "classical" => UpdateRule::Classical,
            other => {
                return Err(invalid(
                    "tdma.update_rule",
                    format!("unknown rule {other}; valid: hysteretic, classical"),
                ))
            }
        };

        // Per-node loads.
        let mut loads: BTreeMap<NodeId, f64> =
            topo.node_ids().map(|n| (n, self.traffic.load)).collect();
        for (key, &g) in &self.traffic.loads {
            let node: NodeId = key.parse().map_err(|_| {
                invalid("traffic.loads", format!("key {key} is not a node id"))
            })?;
            if !topo.contains(node) {
                return Err(invalid(
                    "traffic.loads",
                    format!("node {node} is not in the topology"),
                ));
            }
            loads.insert(node, g);
        }

        // Window length in ticks, needed to convert at_epoch times.
        let tdma_params = TdmaParams {
            m: self.tdma.m,
            k: self.tdma.k,
            s: self.tdma.s,
            lambda: self.tdma.lambda,
            w: self.tdma.w,
            update_rule,
            classical_alpha: self.tdma.classical_alpha,
            epsilon0: self.tdma.epsilon0,
            epsilon_decay: self.tdma.epsilon_decay,
            epsilon_min: self.tdma.epsilon_min,
            defrag: self.tdma.defrag,
            shrink_stability: self.tdma.shrink_stability,
            offsets_taus: self.tdma.offsets_taus.clone(),
        };
        let window_ticks = match mac {
            MacKind::TdmaMab => {
                let fc = crate::tdma::FrameConfig::derive(&topo, &tdma_params, self.resolution)
                    .map_err(|e| invalid("tdma", e))?;
                fc.frame_micro as u64 * fc.ticks_per_microslot
            }
            _ => self.rra.epoch_len as u64 * self.resolution,
        };

        let mut schedule = Vec::new();
        for (i, ev) in self.traffic.schedule.iter().enumerate() {
            let field = format!("traffic.schedule[{i}]");
            let at_tick = match (ev.at_tick, ev.at_epoch) {
                (Some(t), None) => t,
                (None, Some(e)) => e * window_ticks,
                _ => {
                    return Err(invalid(&field, "give exactly one of at_tick or at_epoch"));
                }
            };
            let kinds = [ev.load_change.is_some(), ev.node_fail.is_some(), ev.node_add.is_some()];
            if kinds.iter().filter(|&&k| k).count() != 1 {
                return Err(invalid(
                    &field,
                    "give exactly one of load_change, node_fail, node_add",
                ));
            }
            if mac == MacKind::TdmaMab && (ev.node_fail.is_some() || ev.node_add.is_some()) {
                return Err(invalid(&field, "node churn is not supported for tdma-mab"));
            }
            let kind = if let Some(c) = &ev.load_change {
                DynamicEventKind::LoadChange { node: c.node, g: c.g }
            } else if let Some(c) = &ev.node_fail {
                DynamicEventKind::NodeFail { node: c.node }
            } else {
                let c = ev.node_add.as_ref().unwrap();
                DynamicEventKind::NodeAdd { node: c.node, attach: c.attach.clone(), g: c.g }
            };
            schedule.push(DynamicEvent { at_tick, kind });
        }

        let traffic = TrafficSpec::new(model, loads, schedule)
            .map_err(|e| invalid("traffic", e.to_string()))?;

        let cfg = EngineConfig {
            mac,
            resolution: self.resolution,
            channel: ChannelParams { per: self.channel.per },
            learning,
            reward,
            rra: RraParams {
                epoch_len: self.rra.epoch_len,
                state_bins: self.rra.state_bins,
                include_zero_action: self.rra.include_zero_action,
                ledger_staleness: self.rra.ledger_staleness,
                two_hop_throughput: two_hop,
                q_init_uniform,
                estimate_smoothing: self.rra.estimate_smoothing,
            },
            aloha: AlohaParams {
                mode: aloha_mode,
                max_backoff_taus: self.aloha.max_backoff_taus,
                feedback_window_taus: self.aloha.feedback_window_taus,
                retry_prob: self.aloha.retry_prob,
            },
            tdma: tdma_params,
            convergence: ConvergenceParams {
                window: self.convergence.window,
                tolerance: self.convergence.tolerance,
                ewma: self.convergence.ewma,
            },
            duration_windows,
        };

        // Surface frame-geometry errors now rather than at run time.
        if mac == MacKind::TdmaMab {
            crate::tdma::FrameConfig::derive(&topo, &cfg.tdma, cfg.resolution)
                .map_err(|e| invalid("tdma", e))?;
            if cfg.tdma.offsets_taus.is_some() {
                let fc = crate::tdma::FrameConfig::derive(&topo, &cfg.tdma, cfg.resolution)
                    .map_err(|e| invalid("tdma", e))?;
                let ids: Vec<NodeId> = topo.node_ids().collect();
                fc.initial_offsets(&ids, &cfg.tdma, |_, _| 0)
                    .map_err(|e| invalid("tdma.offsets_taus", e))?;
            }
        }

        Ok(Scenario::new(topo, traffic, cfg))
    }
}

/// Sweep axes exposed by the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Load,
    K,
    Per,
    Nodes,
}

impl SweepAxis {
    pub fn parse(name: &str) -> Result<Self, ConfigError> {
        match name {
            "load" => Ok(SweepAxis::Load),
            "k" => Ok(SweepAxis::K),
            "per" => Ok(SweepAxis::Per),
            "nodes" => Ok(SweepAxis::Nodes),
            other => Err(invalid(
                "axis",
                format!("unknown axis {other}; valid: load, k, per, nodes"),
            )),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            SweepAxis::Load => "load",
            SweepAxis::K => "k",
            SweepAxis::Per => "per",
            SweepAxis::Nodes => "nodes",
        }
    }
}

/// Apply one sweep value to a copy of the configuration.
pub fn apply_axis(
    base: &ScenarioConfig,
    axis: SweepAxis,
    value: f64,
) -> Result<ScenarioConfig, ConfigError> {
    let mut cfg = base.clone();
    match axis {
        SweepAxis::Load => {
            cfg.traffic.load = value;
            cfg.traffic.loads.clear();
        }
        SweepAxis::K => {
            if cfg.mac_kind()? != MacKind::TdmaMab {
                return Err(invalid("axis", "k sweeps apply to tdma-mab only"));
            }
            cfg.tdma.k = value;
        }
        SweepAxis::Per => cfg.channel.per = value,
        SweepAxis::Nodes => {
            if cfg.topology.preset.as_deref() != Some("fully_connected")
                && cfg.topology.preset.as_deref() != Some("star")
            {
                return Err(invalid(
                    "axis",
                    "nodes sweeps need a parametric topology preset",
                ));
            }
            cfg.topology.n = Some(value as u32);
        }
    }
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "topology": {"preset": "fully_connected", "n": 3},
        "mac": "rra",
        "duration": {"epochs": 10}
    }"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = ScenarioConfig::from_json(MINIMAL).unwrap();
        let scenario = cfg.build().unwrap();
        assert_eq!(scenario.cfg.duration_windows, 10);
        assert_eq!(scenario.cfg.rra.epoch_len, 100);
        assert_eq!(scenario.cfg.learning.alpha, 0.9);
        assert_eq!(cfg.seeds, vec![1]);
        assert!((scenario.traffic.load(1) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn unknown_keys_rejected() {
        let bad = r#"{
            "topology": {"preset": "fully_connected", "n": 3},
            "mac": "rra",
            "duration": {"epochs": 10},
            "bogus": 1
        }"#;
        let err = ScenarioConfig::from_json(bad).unwrap_err();
        assert!(err.to_string().contains("bogus"), "{err}");
    }

    #[test]
    fn per_out_of_range_rejected() {
        let bad = r#"{
            "topology": {"preset": "fully_connected", "n": 3},
            "mac": "rra",
            "duration": {"epochs": 10},
            "channel": {"per": 1.5}
        }"#;
        let err = ScenarioConfig::from_json(bad).unwrap().build().unwrap_err();
        assert!(err.to_string().contains("channel.per"), "{err}");
    }

    #[test]
    fn unknown_mac_lists_valid_values() {
        let bad = r#"{
            "topology": {"preset": "fully_connected", "n": 3},
            "mac": "csma",
            "duration": {"epochs": 10}
        }"#;
        let err = ScenarioConfig::from_json(bad).unwrap().build().unwrap_err();
        let text = err.to_string();
        assert!(text.contains("rra") && text.contains("aloha") && text.contains("tdma-mab"));
    }

    #[test]
    fn unknown_preset_rejected() {
        let bad = r#"{
            "topology": {"preset": "ring", "n": 3},
            "mac": "rra",
            "duration": {"epochs": 10}
        }"#;
        let err = ScenarioConfig::from_json(bad).unwrap().build().unwrap_err();
        assert!(err.to_string().contains("preset"));
    }

    #[test]
    fn load_overrides_apply() {
        let text = r#"{
            "topology": {"preset": "paper_5node"},
            "mac": "rra",
            "duration": {"epochs": 10},
            "traffic": {"load": 0.5, "loads": {"5": 0.2}}
        }"#;
        let scenario = ScenarioConfig::from_json(text).unwrap().build().unwrap();
        assert!((scenario.traffic.load(5) - 0.2).abs() < 1e-12);
        assert!((scenario.traffic.load(1) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn schedule_epoch_times_convert() {
        let text = r#"{
            "topology": {"preset": "fully_connected", "n": 3},
            "mac": "rra",
            "duration": {"epochs": 10},
            "traffic": {"schedule": [
                {"at_epoch": 5, "load_change": {"node": 1, "g": 0.9}}
            ]}
        }"#;
        let scenario = ScenarioConfig::from_json(text).unwrap().build().unwrap();
        assert_eq!(scenario.traffic.schedule[0].at_tick, 5 * 100 * 100);
    }

    #[test]
    fn tdma_churn_rejected() {
        let text = r#"{
            "topology": {"preset": "fully_connected", "n": 3},
            "mac": "tdma-mab",
            "duration": {"frames": 10},
            "traffic": {"schedule": [
                {"at_epoch": 5, "node_fail": {"node": 1}}
            ]}
        }"#;
        let err = ScenarioConfig::from_json(text).unwrap().build().unwrap_err();
        assert!(err.to_string().contains("churn"));
    }

    #[test]
    fn axis_mac_mismatch_rejected() {
        let cfg = ScenarioConfig::from_json(MINIMAL).unwrap();
        assert!(apply_axis(&cfg, SweepAxis::K, 1.5).is_err());
        assert!(apply_axis(&cfg, SweepAxis::Load, 1.5).is_ok());
    }
}
