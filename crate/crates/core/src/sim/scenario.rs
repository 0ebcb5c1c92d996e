//! Scenario files: TOML with `[topology]`, `[[services]]`, `[scheduler]`,
//! `[monitor]`, `[loadbalancer]`, `[workload]` and `[run]` sections.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::cluster::{ClusterState, LatencyParams, LinkRef, Node, NodeId, Topology, Zone};
use crate::fogservice::FogServiceSpec;
use crate::loadbalancer::BalancerMode;
use crate::monitor::MonitorConfig;
use crate::scheduler::{Scheduler, SchedulerConfig};

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("cannot parse scenario: {0}")]
    Parse(String),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error(transparent)]
    Cluster(#[from] crate::cluster::ClusterError),
    #[error(transparent)]
    Service(#[from] crate::fogservice::FogServiceError),
    #[error(transparent)]
    Scheduler(#[from] crate::scheduler::SchedulerError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub topology: TopologyConfig,
    #[serde(default)]
    pub services: Vec<FogServiceSpec>,
    pub scheduler: SchedulerSection,
    #[serde(default)]
    pub monitor: MonitorSection,
    #[serde(default)]
    pub loadbalancer: Option<LoadBalancerSection>,
    #[serde(default)]
    pub workload: Workload,
    pub run: RunSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologyConfig {
    #[serde(flatten)]
    pub latency: LatencyParams,
    /// Defaults for every node.
    #[serde(default = "default_cores")]
    pub cores: u32,
    #[serde(default = "default_capacity")]
    pub cpu_capacity: u64,
    pub zones: Vec<Zone>,
    /// Per-node overrides.
    #[serde(default)]
    pub nodes: Vec<NodeOverride>,
}

fn default_cores() -> u32 {
    crate::cluster::DEFAULT_CORES
}

fn default_capacity() -> u64 {
    crate::cluster::DEFAULT_CPU_CAPACITY
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeOverride {
    pub id: NodeId,
    pub cores: Option<u32>,
    pub cpu_capacity: Option<u64>,
    #[serde(default)]
    pub labels: BTreeMap<String, String>,
}

/// A scheduler configuration compared against the others on identical seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmConfig {
    pub name: String,
    #[serde(flatten)]
    pub scheduler: SchedulerConfig,
    /// Scheduler for workload deployments. Evicted pods and monitor dry runs
    /// always use `scheduler`.
    #[serde(default)]
    pub initial: Option<SchedulerConfig>,
    #[serde(default)]
    pub balancer: BalancerMode,
    /// Priority class overrides per service name.
    #[serde(default)]
    pub priority: BTreeMap<String, i32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchedulerSection {
    pub arms: Vec<ArmConfig>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MonitorSection {
    #[serde(default)]
    pub enabled: bool,
    #[serde(flatten)]
    pub config: MonitorConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadBalancerSection {
    pub client: NodeId,
    pub services: Vec<String>,
    #[serde(default = "default_refresh")]
    pub refresh_s: f64,
    #[serde(default = "default_max_age")]
    pub metric_max_age_s: f64,
}

fn default_refresh() -> f64 {
    5.0
}

fn default_max_age() -> f64 {
    90.0
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Workload {
    #[serde(default)]
    pub deploy: Vec<Deployment>,
    #[serde(default)]
    pub metrics: Vec<MetricFeed>,
    #[serde(default)]
    pub requests: Vec<RequestGenerator>,
    #[serde(default)]
    pub links: Vec<LinkChange>,
}

/// Submits every pod of the listed services at `at` as one batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Deployment {
    pub services: Vec<String>,
    #[serde(default)]
    pub at: f64,
    /// Shuffle submission order with the run's generator.
    #[serde(default = "yes")]
    pub shuffle: bool,
    /// Gap between consecutive pod submissions; 0 submits the whole batch at once.
    #[serde(default)]
    pub spacing_s: f64,
    /// Pods bound directly to a node, bypassing the scheduler.
    #[serde(default)]
    pub pin: BTreeMap<String, NodeId>,
    /// Whether the pods appear in placements.csv.
    #[serde(default = "yes")]
    pub record: bool,
}

fn yes() -> bool {
    true
}

/// Static per-replica metric values re-reported every `interval_s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricFeed {
    pub service: String,
    pub values: BTreeMap<String, f64>,
    #[serde(default = "default_metric_interval")]
    pub interval_s: f64,
}

fn default_metric_interval() -> f64 {
    15.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProcessingDelay {
    Constant { ms: f64 },
    Uniform { min_ms: f64, max_ms: f64 },
    Exponential { mean_ms: f64 },
}

impl Default for ProcessingDelay {
    fn default() -> Self {
        ProcessingDelay::Constant { ms: 0.005 }
    }
}

impl ProcessingDelay {
    fn validate(&self) -> Result<(), String> {
        let ok = match *self {
            ProcessingDelay::Constant { ms } => ms.is_finite() && ms >= 0.0,
            ProcessingDelay::Uniform { min_ms, max_ms } => min_ms.is_finite() && min_ms >= 0.0 && max_ms.is_finite() && max_ms >= min_ms,
            ProcessingDelay::Exponential { mean_ms } => mean_ms.is_finite() && mean_ms > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(format!("bad processing delay {self:?}"))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RequestGenerator {
    pub service: String,
    pub rate_hz: f64,
    #[serde(default)]
    pub start_s: f64,
    pub duration_s: f64,
    #[serde(default)]
    pub processing: ProcessingDelay,
}

impl RequestGenerator {
    pub fn count(&self) -> u64 {
        (self.rate_hz * self.duration_s).round() as u64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkChange {
    pub at: f64,
    /// `uplink:ZONE` or `access:NODE`.
    pub link: String,
    pub latency_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub seed: u64,
    pub repetitions: u32,
    /// Repetitions under the `ci` profile; defaults to `repetitions`.
    pub ci_repetitions: Option<u32>,
    pub duration_s: f64,
    /// Time-series sampling period. Without it only the final state is sampled.
    pub sample_interval_s: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    #[default]
    Paper,
    Ci,
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self, ScenarioError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn repetitions(&self, profile: Profile) -> u32 {
        match profile {
            Profile::Paper => self.run.repetitions,
            Profile::Ci => self.run.ci_repetitions.unwrap_or(self.run.repetitions),
        }
    }

    pub fn topology(&self) -> Result<Topology, ScenarioError> {
        Ok(Topology::new(self.topology.zones.clone(), self.topology.latency)?)
    }

    /// Fresh cluster with every service registered; `priority` overrides
    /// service priority classes.
    pub fn build_state(&self, priority: &BTreeMap<String, i32>) -> Result<ClusterState, ScenarioError> {
        let topology = self.topology()?;
        let overrides: BTreeMap<&NodeId, &NodeOverride> = self.topology.nodes.iter().map(|n| (&n.id, n)).collect();
        let mut nodes = Vec::new();
        for zone in &self.topology.zones {
            for id in &zone.nodes {
                let o = overrides.get(id);
                let node = Node::new(id.clone(), zone.id.clone())
                    .with_cores(o.and_then(|o| o.cores).unwrap_or(self.topology.cores))
                    .with_cpu_capacity(o.and_then(|o| o.cpu_capacity).unwrap_or(self.topology.cpu_capacity))
                    .with_labels(o.map(|o| o.labels.clone()).unwrap_or_default())?;
                nodes.push(node);
            }
        }
        let mut state = ClusterState::new(topology, nodes)?;
        for spec in &self.services {
            let mut spec = spec.clone();
            if let Some(&p) = priority.get(&spec.name) {
                spec.priority_class = p;
            }
            state.register_service(spec);
        }
        Ok(state)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |msg: String| Err(ScenarioError::Invalid(msg));
        let topology = self.topology()?;
        for o in &self.topology.nodes {
            if !topology.contains_node(&o.id) {
                return bad(format!("node override for unknown node {}", o.id));
            }
        }
        let run = &self.run;
        if !(run.duration_s.is_finite() && run.duration_s > 0.0) {
            return bad(format!("run.duration_s must be > 0, got {}", run.duration_s));
        }
        if run.repetitions == 0 || run.ci_repetitions == Some(0) {
            return bad("repetitions must be >= 1".into());
        }
        if run.sample_interval_s.is_some_and(|s| !(s.is_finite() && s > 0.0)) {
            return bad("run.sample_interval_s must be > 0".into());
        }
        let mut services = BTreeSet::new();
        for s in &self.services {
            if !services.insert(s.name.as_str()) {
                return bad(format!("service {} declared twice", s.name));
            }
            // Expansion checks both the descriptor and its locations.
            s.expand(&topology, 0.0)?;
        }
        if self.scheduler.arms.is_empty() {
            return bad("at least one scheduler arm is required".into());
        }
        let mut arms = BTreeSet::new();
        for arm in &self.scheduler.arms {
            if !arms.insert(arm.name.as_str()) {
                return bad(format!("arm {} declared twice", arm.name));
            }
            Scheduler::new(arm.scheduler.clone())?;
            if let Some(init) = &arm.initial {
                Scheduler::new(init.clone())?;
            }
            if let Some(unknown) = arm.priority.keys().find(|s| !services.contains(s.as_str())) {
                return bad(format!("arm {} overrides priority of unknown service {unknown}", arm.name));
            }
        }
        if self.monitor.enabled {
            self.monitor.config.validate().map_err(ScenarioError::Invalid)?;
        }
        if let Some(lb) = &self.loadbalancer {
            if !topology.contains_node(&lb.client) {
                return bad(format!("load balancer client {} is not a node", lb.client));
            }
            if !(lb.refresh_s.is_finite() && lb.refresh_s > 0.0) {
                return bad("loadbalancer.refresh_s must be > 0".into());
            }
            if let Some(s) = lb.services.iter().find(|s| !services.contains(s.as_str())) {
                return bad(format!("load balancer references unknown service {s}"));
            }
        }
        for d in &self.workload.deploy {
            if d.services.is_empty() {
                return bad("deployment without services".into());
            }
            if let Some(s) = d.services.iter().find(|s| !services.contains(s.as_str())) {
                return bad(format!("deployment of unknown service {s}"));
            }
            if !(d.at.is_finite() && d.at >= 0.0 && d.spacing_s.is_finite() && d.spacing_s >= 0.0) {
                return bad(format!("deployment at {} has bad timing", d.at));
            }
            if let Some((_, node)) = d.pin.iter().find(|(_, n)| !topology.contains_node(n)) {
                return bad(format!("deployment pins to unknown node {node}"));
            }
        }
        for m in &self.workload.metrics {
            if !(m.interval_s.is_finite() && m.interval_s > 0.0) {
                return bad(format!("metric feed for {} needs interval_s > 0", m.service));
            }
            if m.values.values().any(|v| !v.is_finite()) {
                return bad(format!("metric feed for {} has a non-finite value", m.service));
            }
        }
        for r in &self.workload.requests {
            let Some(lb) = &self.loadbalancer else {
                return bad("request generators need a [loadbalancer] section".into());
            };
            if !lb.services.contains(&r.service) {
                return bad(format!("requests target {} which the load balancer does not serve", r.service));
            }
            if !(r.rate_hz.is_finite() && r.rate_hz > 0.0 && r.duration_s.is_finite() && r.duration_s > 0.0 && r.start_s >= 0.0) {
                return bad(format!("request generator for {} needs positive rate and duration", r.service));
            }
            r.processing.validate().map_err(ScenarioError::Invalid)?;
        }
        for l in &self.workload.links {
            let link: LinkRef = l.link.parse()?;
            topology.link_latency(&link)?;
            if !(l.latency_ms.is_finite() && l.latency_ms >= 0.0 && l.at >= 0.0) {
                return bad(format!("link change on {} has bad values", l.link));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
name = "tiny"
[topology]
zones = [{ id = "Z", uplink_ms = 0.1, nodes = ["a", "b"] }]
[[services]]
name = "web"
replicas = 2
cpu_request = 100
cpu_limit = 100
[scheduler]
arms = [{ name = "base", plugins = [{ name = "baseline" }] }]
[[workload.deploy]]
services = ["web"]
[run]
seed = 1
repetitions = 3
duration_s = 10
"#;

    #[test]
    fn minimal_scenario_parses_with_defaults() {
        let cfg = ScenarioConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(cfg.topology.cores, 4);
        assert!(cfg.workload.deploy[0].shuffle);
        assert!(!cfg.monitor.enabled);
        assert_eq!(cfg.repetitions(Profile::Ci), 3);
        let st = cfg.build_state(&BTreeMap::new()).unwrap();
        assert_eq!(st.nodes().count(), 2);
    }

    #[test]
    fn rejects_unknown_section_and_bad_values() {
        let extra = format!("{MINIMAL}\n[bogus]\nx = 1\n");
        assert!(matches!(ScenarioConfig::from_toml(&extra), Err(ScenarioError::Parse(_))));
        let zero = MINIMAL.replace("duration_s = 10", "duration_s = 0");
        assert!(matches!(ScenarioConfig::from_toml(&zero), Err(ScenarioError::Invalid(_))));
        let unknown = MINIMAL.replace("services = [\"web\"]", "services = [\"db\"]");
        assert!(ScenarioConfig::from_toml(&unknown).is_err());
    }

    #[test]
    fn rejects_unknown_link() {
        let text = format!("{MINIMAL}\n[[workload.links]]\nat = 1\nlink = \"uplink:Q\"\nlatency_ms = 1\n");
        assert!(ScenarioConfig::from_toml(&text).is_err());
    }
}
