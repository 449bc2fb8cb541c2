//! Scenario files: the single TOML document describing an experiment.
//!
//! Loading collects every problem (unknown keys, out-of-range values,
//! ownership conflicts) and reports them together with the path of the
//! offending key.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{
    delay_for_distance, DelayDistribution, DetectionModel, LinkModel, PropagationModel,
};
use crate::jit::JitConfig;
use crate::protocol::{PhyConfig, SyncPolicy};
use crate::timebase::{Drift, Nanos};
use crate::NodeId;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigIssue {
    pub path: String,
    pub message: String,
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed scenario: {0}")]
    Parse(String),
    #[error("invalid scenario:\n{}", list(.0))]
    Invalid(Vec<ConfigIssue>),
    #[error("unknown preset `{name}`; available: {}", crate::scenario::preset_names().join(", "), name = .0)]
    UnknownPreset(String),
    #[error("cannot serialize scenario: {0}")]
    Serialize(String),
}

fn list(issues: &[ConfigIssue]) -> String {
    issues
        .iter()
        .map(|i| format!("  - {i}"))
        .collect::<Vec<_>>()
        .join("\n")
}

impl ScenarioError {
    pub fn issues(&self) -> &[ConfigIssue] {
        match self {
            ScenarioError::Invalid(v) => v,
            _ => &[],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Ap,
    Device,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Horizon {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub frames: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seconds: Option<f64>,
    /// Stop early once this many request/reply round trips completed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rtt_pairs: Option<u64>,
    /// Idle frames before frame 0 so every node can arm its first timer.
    pub lead_in_frames: u64,
}

impl Default for Horizon {
    fn default() -> Self {
        Horizon {
            frames: None,
            seconds: None,
            rtt_pairs: None,
            lead_in_frames: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyncSection {
    /// When off, a device anchors on its first beacon and never again.
    pub enabled: bool,
    pub compensation: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub freeze_after_frame: Option<u64>,
    /// Weight of each new propagation-delay estimate; 1 keeps only the latest.
    pub delay_ewma_alpha: f64,
}

pub const DEFAULT_DELAY_EWMA_ALPHA: f64 = 0.05;

impl Default for SyncSection {
    fn default() -> Self {
        SyncSection {
            enabled: true,
            compensation: true,
            freeze_after_frame: None,
            delay_ewma_alpha: DEFAULT_DELAY_EWMA_ALPHA,
        }
    }
}

impl SyncSection {
    pub fn policy(&self) -> SyncPolicy {
        SyncPolicy {
            compensate: self.compensation && self.enabled,
            freeze_after_frame: if self.enabled {
                self.freeze_after_frame
            } else {
                Some(0)
            },
            delay_ewma_alpha: (self.delay_ewma_alpha < 1.0).then_some(self.delay_ewma_alpha),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Environment {
    #[default]
    Los,
    Nlos,
}

/// Calibrated line-of-sight detection: sub-sample gaussian timing jitter
/// truncated at three standard deviations, no misses.
pub const LOS_DETECTION: DetectionModel = DetectionModel {
    miss_probability: 0.0,
    jitter_samples: 0.04,
    jitter_clip_samples: Some(0.12),
};

/// Uncalibrated non-line-of-sight placeholder for sensitivity studies.
pub const NLOS_DETECTION: DetectionModel = DetectionModel {
    miss_probability: 0.002,
    jitter_samples: 0.05,
    jitter_clip_samples: Some(0.15),
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectionSection {
    pub environment: Environment,
    pub los: DetectionModel,
    pub nlos: DetectionModel,
}

impl Default for DetectionSection {
    fn default() -> Self {
        DetectionSection {
            environment: Environment::Los,
            los: LOS_DETECTION,
            nlos: NLOS_DETECTION,
        }
    }
}

impl DetectionSection {
    pub fn active(&self) -> &DetectionModel {
        match self.environment {
            Environment::Los => &self.los,
            Environment::Nlos => &self.nlos,
        }
    }

    pub fn active_mut(&mut self) -> &mut DetectionModel {
        match self.environment {
            Environment::Los => &mut self.los,
            Environment::Nlos => &mut self.nlos,
        }
    }
}

/// Host↔radio path described by round-trip statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LinkSection {
    pub distribution: DelayDistribution,
    pub rtt_mean: Nanos,
    pub rtt_deviation: Nanos,
    pub floor: Nanos,
    /// Per-direction upper bound on a single delay.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cap: Option<Nanos>,
}

impl Default for LinkSection {
    fn default() -> Self {
        LinkSection {
            distribution: DelayDistribution::ShiftedLognormal,
            rtt_mean: Nanos(1_154_000),
            rtt_deviation: Nanos(812_000),
            floor: Nanos::from_micros(10),
            cap: None,
        }
    }
}

impl LinkSection {
    pub fn model(&self) -> LinkModel {
        LinkModel::from_rtt(
            self.rtt_mean,
            self.rtt_deviation,
            self.floor,
            self.cap,
            self.distribution,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct JitSection {
    pub beta: f64,
    pub prep_allowance: Nanos,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_adv: Option<Nanos>,
    pub probes: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reprobe_every_frames: Option<u64>,
}

impl Default for JitSection {
    fn default() -> Self {
        let d = JitConfig::default();
        JitSection {
            beta: d.beta,
            prep_allowance: d.prep_allowance,
            t_adv: d.t_adv,
            probes: 1000,
            reprobe_every_frames: None,
        }
    }
}

impl JitSection {
    pub fn config(&self) -> JitConfig {
        JitConfig {
            beta: self.beta,
            prep_allowance: self.prep_allowance,
            t_adv: self.t_adv,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HostSection {
    /// Time from timer wake to handing the packet to the link.
    pub tx_processing: Nanos,
    /// Time to decode a received packet once its samples reach the host.
    pub rx_decode: Nanos,
}

impl Default for HostSection {
    fn default() -> Self {
        HostSection {
            tx_processing: Nanos::from_micros(34),
            rx_decode: Nanos::from_micros(100),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub id: u16,
    pub role: Role,
    /// Radio oscillator skew relative to the AP.
    #[serde(default)]
    pub drift_ppm: f64,
    /// Radio clock reading at true time zero.
    #[serde(default)]
    pub offset: Nanos,
    #[serde(default)]
    pub host_offset: Nanos,
    /// Emulated path length to the AP.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distance_m: Option<f64>,
    /// Explicit one-way delay to the AP; overrides `distance_m`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub propagation: Option<Nanos>,
    /// Device→AP delay when it differs from AP→device.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub uplink_propagation: Option<Nanos>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub link: Option<LinkSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jit: Option<JitSection>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleMode {
    #[default]
    RoundRobin,
    Explicit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub slot: u32,
    pub node: u16,
}

/// Slot ownership. Round-robin hands data slots 1..N to the nodes in the
/// order they are listed; explicit uses `assignments` verbatim.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Schedule {
    pub mode: ScheduleMode,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub assignments: Vec<Assignment>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventSyncSpec {
    pub every_frames: u64,
    /// How far after the triggering beacon's timestamp the event is set.
    pub lead: Nanos,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Traffic {
    /// Device that issues requests the AP answers; others send filler.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub requester: Option<u16>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub event_sync: Option<EventSyncSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BeaconMiss {
    pub node: u16,
    pub from_frame: u64,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Faults {
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub beacon_misses: Vec<BeaconMiss>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricsSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub drift_node: Option<u16>,
    /// Alignment samples from frames before this one are not recorded.
    pub warmup_frames: u64,
    /// Raw RTT samples kept before switching to a histogram sketch.
    pub sample_cap: usize,
    pub rtt_csv_cap: usize,
}

impl Default for MetricsSection {
    fn default() -> Self {
        MetricsSection {
            drift_node: None,
            warmup_frames: 4,
            sample_cap: 10_000_000,
            rtt_csv_cap: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub phy: PhyConfig,
    #[serde(default)]
    pub horizon: Horizon,
    #[serde(default)]
    pub sync: SyncSection,
    #[serde(default)]
    pub detection: DetectionSection,
    #[serde(default)]
    pub link: LinkSection,
    #[serde(default)]
    pub jit: JitSection,
    #[serde(default)]
    pub host: HostSection,
    pub nodes: Vec<NodeSpec>,
    #[serde(default)]
    pub schedule: Schedule,
    #[serde(default)]
    pub traffic: Traffic,
    #[serde(default)]
    pub faults: Faults,
    #[serde(default)]
    pub metrics: MetricsSection,
}

struct Issues(Vec<ConfigIssue>);

impl Issues {
    fn push(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.0.push(ConfigIssue {
            path: path.into(),
            message: message.into(),
        });
    }
}

/// `nodes.1.bogus` → `nodes[1].bogus`, matching validation messages.
fn index_path(dotted: &str) -> String {
    let mut out = String::new();
    for seg in dotted.split('.') {
        if !seg.is_empty() && seg.bytes().all(|b| b.is_ascii_digit()) {
            out.push_str(&format!("[{seg}]"));
        } else {
            if !out.is_empty() {
                out.push('.');
            }
            out.push_str(seg);
        }
    }
    out
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Scenario, ScenarioError> {
        let de = toml::Deserializer::new(text);
        let mut unknown = Vec::new();
        let parsed: Result<Scenario, _> =
            serde_ignored::deserialize(de, |path| unknown.push(index_path(&path.to_string())));
        let scenario = match parsed {
            Ok(s) => s,
            Err(e) => {
                if unknown.is_empty() {
                    return Err(ScenarioError::Parse(e.to_string().trim_end().to_string()));
                }
                let mut issues: Vec<ConfigIssue> = unknown
                    .into_iter()
                    .map(|path| ConfigIssue {
                        path,
                        message: "unknown key".into(),
                    })
                    .collect();
                issues.push(ConfigIssue {
                    path: "<document>".into(),
                    message: e.to_string().trim_end().to_string(),
                });
                return Err(ScenarioError::Invalid(issues));
            }
        };
        let mut issues = Issues(
            unknown
                .into_iter()
                .map(|path| ConfigIssue {
                    path,
                    message: "unknown key".into(),
                })
                .collect(),
        );
        scenario.check(&mut issues);
        if issues.0.is_empty() {
            Ok(scenario)
        } else {
            Err(ScenarioError::Invalid(issues.0))
        }
    }

    pub fn from_path(path: &Path) -> Result<Scenario, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Scenario::from_toml(&text)
    }

    /// Canonical normalized text form; every default is written out.
    pub fn to_toml(&self) -> Result<String, ScenarioError> {
        toml::to_string(self).map_err(|e| ScenarioError::Serialize(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let mut issues = Issues(Vec::new());
        self.check(&mut issues);
        if issues.0.is_empty() {
            Ok(())
        } else {
            Err(ScenarioError::Invalid(issues.0))
        }
    }

    fn check(&self, issues: &mut Issues) {
        if let Err(e) = self.phy.validate() {
            issues.push("phy", e.to_string());
        }
        let phy_ok = self.phy.validate().is_ok();
        if self.seed > i64::MAX as u64 {
            issues.push("seed", "must be at most 2^63 - 1");
        }

        match (self.horizon.frames, self.horizon.seconds) {
            (None, None) => issues.push("horizon", "set `frames` or `seconds`"),
            (Some(_), Some(_)) => issues.push("horizon", "set only one of `frames` and `seconds`"),
            (_, Some(s)) if !(s.is_finite() && s > 0.0) => {
                issues.push("horizon.seconds", "must be positive")
            }
            (Some(0), _) => issues.push("horizon.frames", "must be positive"),
            _ => {}
        }
        let a = self.sync.delay_ewma_alpha;
        if !(a > 0.0 && a <= 1.0) {
            issues.push("sync.delay_ewma_alpha", "must lie in (0, 1]");
        }
        for (name, model) in [("los", &self.detection.los), ("nlos", &self.detection.nlos)] {
            if let Err(e) = model.validate() {
                issues.push(format!("detection.{name}"), e.to_string());
            }
        }
        if let Err(e) = self.link.model().validate() {
            issues.push("link", e.to_string());
        }
        check_jit(&self.jit, "jit", issues);
        for (key, v) in [
            ("host.tx_processing", self.host.tx_processing),
            ("host.rx_decode", self.host.rx_decode),
        ] {
            if v.0 < 0 {
                issues.push(key, "must be non-negative");
            }
        }

        let mut ids = BTreeMap::new();
        let mut aps = Vec::new();
        for (i, n) in self.nodes.iter().enumerate() {
            let p = format!("nodes[{i}]");
            if let Some(prev) = ids.insert(n.id, i) {
                issues.push(
                    format!("{p}.id"),
                    format!("duplicate node id {} (also nodes[{prev}])", n.id),
                );
            }
            if let Err(e) = Drift::from_ppm(n.drift_ppm) {
                issues.push(format!("{p}.drift_ppm"), e.to_string());
            }
            match n.role {
                Role::Ap => {
                    aps.push(n.id);
                    if n.offset.0 != 0 || n.drift_ppm != 0.0 {
                        issues.push(
                            p.clone(),
                            "the AP clock is the reference: offset and drift_ppm must be 0",
                        );
                    }
                }
                Role::Device => {
                    if n.distance_m.is_none() && n.propagation.is_none() {
                        issues.push(p.clone(), "device needs `distance_m` or `propagation`");
                    }
                }
            }
            if let Some(d) = n.distance_m {
                if !(d.is_finite() && d >= 0.0) {
                    issues.push(format!("{p}.distance_m"), "must be non-negative");
                }
            }
            for (key, v) in [
                ("propagation", n.propagation),
                ("uplink_propagation", n.uplink_propagation),
            ] {
                if matches!(v, Some(d) if d.0 < 0) {
                    issues.push(format!("{p}.{key}"), "must be non-negative");
                }
            }
            if let Some(link) = &n.link {
                if let Err(e) = link.model().validate() {
                    issues.push(format!("{p}.link"), e.to_string());
                }
            }
            if let Some(j) = &n.jit {
                check_jit(j, &format!("{p}.jit"), issues);
            }
        }
        match aps.len() {
            1 => {}
            0 => issues.push("nodes", "exactly one node must have role `ap`, found none"),
            _ => issues.push(
                "nodes",
                format!(
                    "exactly one node must have role `ap`, found {}: ids {}",
                    aps.len(),
                    aps.iter()
                        .map(|a| a.to_string())
                        .collect::<Vec<_>>()
                        .join(", ")
                ),
            ),
        }

        if self.schedule.mode == ScheduleMode::Explicit {
            let mut owners: BTreeMap<u32, (usize, u16)> = BTreeMap::new();
            for (i, a) in self.schedule.assignments.iter().enumerate() {
                let p = format!("schedule.assignments[{i}]");
                if a.slot == 0 {
                    issues.push(format!("{p}.slot"), "slot 0 is reserved for the beacon");
                } else if phy_ok && a.slot >= self.phy.slots_per_frame {
                    issues.push(
                        format!("{p}.slot"),
                        format!(
                            "slot {} outside frame of {} slots",
                            a.slot, self.phy.slots_per_frame
                        ),
                    );
                }
                if !ids.contains_key(&a.node) {
                    issues.push(format!("{p}.node"), format!("unknown node id {}", a.node));
                }
                if let Some((j, other)) = owners.insert(a.slot, (i, a.node)) {
                    issues.push(
                        format!("{p}.slot"),
                        format!(
                            "slot {} already owned by node {} (schedule.assignments[{j}])",
                            a.slot, other
                        ),
                    );
                }
            }
        } else if !self.schedule.assignments.is_empty() {
            issues.push(
                "schedule.assignments",
                "only allowed with mode = \"explicit\"",
            );
        }

        let device_ids: BTreeSet<u16> = self
            .nodes
            .iter()
            .filter(|n| n.role == Role::Device)
            .map(|n| n.id)
            .collect();
        if let Some(r) = self.traffic.requester {
            if !device_ids.contains(&r) {
                issues.push("traffic.requester", format!("{r} is not a device id"));
            }
        }
        if let Some(es) = self.traffic.event_sync {
            if es.every_frames == 0 {
                issues.push("traffic.event_sync.every_frames", "must be positive");
            }
            if es.lead.0 <= 0 {
                issues.push("traffic.event_sync.lead", "must be positive");
            }
        }
        if let Some(r) = self.horizon.rtt_pairs {
            if r == 0 {
                issues.push("horizon.rtt_pairs", "must be positive");
            }
            if self.traffic.requester.is_none() {
                issues.push("horizon.rtt_pairs", "needs `traffic.requester`");
            }
        }
        for (i, m) in self.faults.beacon_misses.iter().enumerate() {
            if !device_ids.contains(&m.node) {
                issues.push(
                    format!("faults.beacon_misses[{i}].node"),
                    format!("{} is not a device id", m.node),
                );
            }
        }
        if let Some(d) = self.metrics.drift_node {
            if !device_ids.contains(&d) {
                issues.push("metrics.drift_node", format!("{d} is not a device id"));
            }
        }
    }

    pub fn ap(&self) -> &NodeSpec {
        self.nodes
            .iter()
            .find(|n| n.role == Role::Ap)
            .expect("validated scenario has an AP")
    }

    /// Nodes with the AP first, then devices in listed order.
    pub fn ordered_nodes(&self) -> Vec<&NodeSpec> {
        let mut v: Vec<&NodeSpec> = self.nodes.iter().filter(|n| n.role == Role::Ap).collect();
        v.extend(self.nodes.iter().filter(|n| n.role == Role::Device));
        v
    }

    /// Data slots owned by each node (slot 0 excluded).
    pub fn slot_owners(&self) -> BTreeMap<u32, NodeId> {
        match self.schedule.mode {
            ScheduleMode::Explicit => self
                .schedule
                .assignments
                .iter()
                .map(|a| (a.slot, NodeId(a.node)))
                .collect(),
            ScheduleMode::RoundRobin => {
                let order = self.ordered_nodes();
                (1..self.phy.slots_per_frame)
                    .map(|j| (j, NodeId(order[(j as usize - 1) % order.len()].id)))
                    .collect()
            }
        }
    }

    pub fn frames(&self) -> u64 {
        match (self.horizon.frames, self.horizon.seconds) {
            (Some(f), _) => f,
            (None, Some(s)) => {
                let frame = self.phy.frame_duration().0 as f64;
                (s * 1e9 / frame).ceil() as u64
            }
            (None, None) => 0,
        }
    }

    pub fn node_link(&self, n: &NodeSpec) -> LinkModel {
        n.link.as_ref().unwrap_or(&self.link).model()
    }

    pub fn node_jit<'a>(&'a self, n: &'a NodeSpec) -> &'a JitSection {
        n.jit.as_ref().unwrap_or(&self.jit)
    }

    pub fn propagation(&self) -> PropagationModel {
        let ap = NodeId(self.ap().id);
        let mut p = PropagationModel::new();
        for n in self.nodes.iter().filter(|n| n.role == Role::Device) {
            let down = n
                .propagation
                .or(n.distance_m.map(delay_for_distance))
                .unwrap_or(Nanos::ZERO);
            p.set_symmetric(ap, NodeId(n.id), down);
            if let Some(up) = n.uplink_propagation {
                p.set_directed(NodeId(n.id), ap, up);
            }
        }
        p
    }

    /// Sets the advance time of every node.
    pub fn set_t_adv(&mut self, t: Nanos) {
        self.jit.t_adv = Some(t);
        for n in &mut self.nodes {
            if let Some(j) = &mut n.jit {
                j.t_adv = Some(t);
            }
        }
    }
}

fn check_jit(j: &JitSection, path: &str, issues: &mut Issues) {
    if !(j.beta.is_finite() && j.beta >= 0.0) {
        issues.push(format!("{path}.beta"), "must be non-negative");
    }
    if j.prep_allowance.0 < 0 {
        issues.push(format!("{path}.prep_allowance"), "must be non-negative");
    }
    if matches!(j.t_adv, Some(t) if t.0 <= 0) {
        issues.push(format!("{path}.t_adv"), "must be positive");
    }
    if j.probes < 2 {
        issues.push(format!("{path}.probes"), "at least 2 probes are needed");
    }
    if j.reprobe_every_frames == Some(0) {
        issues.push(format!("{path}.reprobe_every_frames"), "must be positive");
    }
}

pub fn load_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    Scenario::from_toml(text)
}

const PRESETS: &[(&str, &str)] = &[
    ("table2", include_str!("../presets/table2.toml")),
    ("fig8_drift", include_str!("../presets/fig8_drift.toml")),
    (
        "fig10_alignment",
        include_str!("../presets/fig10_alignment.toml"),
    ),
    ("fig10_nlos", include_str!("../presets/fig10_nlos.toml")),
    (
        "fig10_uncompensated",
        include_str!("../presets/fig10_uncompensated.toml"),
    ),
    ("fig12_rtt", include_str!("../presets/fig12_rtt.toml")),
    ("fig13_short", include_str!("../presets/fig13_short.toml")),
    ("event_sync", include_str!("../presets/event_sync.toml")),
    ("beacon_miss", include_str!("../presets/beacon_miss.toml")),
];

pub fn preset_names() -> Vec<&'static str> {
    PRESETS.iter().map(|(n, _)| *n).collect()
}

pub fn preset_text(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

pub fn preset(name: &str) -> Result<Scenario, ScenarioError> {
    let text = preset_text(name).ok_or_else(|| ScenarioError::UnknownPreset(name.to_string()))?;
    Scenario::from_toml(text)
}
