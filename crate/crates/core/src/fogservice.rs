//! FogService descriptors: parsing, validation and expansion into pods.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::cluster::{DependencyRef, PodInstance, RtPolicy, RtProcessSpec, RuntimeClass, Topology};
use crate::telemetry::Direction;

const WEIGHT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, thiserror::Error)]
pub enum FogServiceError {
    #[error("malformed descriptor: {0}")]
    Parse(String),
    #[error("invalid service {service}: {}", .violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid { service: String, violations: Vec<Violation> },
    #[error("service {service} references unknown location {location}")]
    UnknownLocation { service: String, location: String },
}

/// Application metric a service exposes, and how load balancers weigh it
/// against latency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSpec {
    pub name: String,
    #[serde(default)]
    pub direction: Direction,
    pub metric_weight: f64,
    pub latency_weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocationReplicas {
    pub location: String,
    pub replicas: u32,
    #[serde(default)]
    pub config: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ServiceMode {
    ClusterScoped { replicas: u32 },
    LocationScoped { locations: Vec<LocationReplicas> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FogServiceSpec {
    pub name: String,
    #[serde(flatten)]
    pub mode: ServiceMode,
    pub cpu_request: u64,
    pub cpu_limit: u64,
    /// Fraction of CPU time reserved for the service's RT processes, kept
    /// apart from `cpu_limit`, which only governs CFS processes.
    #[serde(default)]
    pub rt_limit: f64,
    #[serde(default)]
    pub priority_class: i32,
    #[serde(default)]
    pub runtime_class: RuntimeClass,
    #[serde(default)]
    pub rt_processes: Vec<RtProcessSpec>,
    #[serde(default)]
    pub dependencies: Vec<DependencyRef>,
    #[serde(default)]
    pub metric: Option<MetricSpec>,
    #[serde(default)]
    pub config: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub field: String,
    pub rule: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.rule)
    }
}

impl FogServiceSpec {
    pub fn cluster_scoped(name: impl Into<String>, replicas: u32, cpu_request: u64) -> Self {
        Self {
            name: name.into(),
            mode: ServiceMode::ClusterScoped { replicas },
            cpu_request,
            cpu_limit: cpu_request,
            rt_limit: 0.0,
            priority_class: 0,
            runtime_class: RuntimeClass::Container,
            rt_processes: Vec::new(),
            dependencies: Vec::new(),
            metric: None,
            config: BTreeMap::new(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, FogServiceError> {
        toml::from_str(text).map_err(|e| FogServiceError::Parse(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self, FogServiceError> {
        serde_json::from_str(text).map_err(|e| FogServiceError::Parse(e.to_string()))
    }

    /// Canonical JSON form: pretty-printed, fields in declaration order,
    /// every defaulted field written out.
    pub fn to_canonical_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("descriptor serializes")
    }

    pub fn total_replicas(&self) -> u32 {
        match &self.mode {
            ServiceMode::ClusterScoped { replicas } => *replicas,
            ServiceMode::LocationScoped { locations } => locations.iter().map(|l| l.replicas).sum(),
        }
    }

    /// Every broken invariant, each naming the field and rule. Empty means valid.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut bad = |field: String, rule: &str| {
            out.push(Violation {
                field,
                rule: rule.to_owned(),
            })
        };
        if self.name.trim().is_empty() {
            bad("name".into(), "must not be empty");
        }
        match &self.mode {
            ServiceMode::ClusterScoped { replicas } => {
                if *replicas < 1 {
                    bad("replicas".into(), "replicas ≥ 1");
                }
            }
            ServiceMode::LocationScoped { locations } => {
                if locations.is_empty() {
                    bad("locations".into(), "at least one location");
                }
                let mut seen = std::collections::BTreeSet::new();
                for (i, l) in locations.iter().enumerate() {
                    if l.replicas < 1 {
                        bad(format!("locations[{i}].replicas"), "replicas ≥ 1");
                    }
                    if !seen.insert(&l.location) {
                        bad(format!("locations[{i}].location"), "location listed twice");
                    }
                }
            }
        }
        if self.cpu_request > self.cpu_limit {
            bad("cpu_request".into(), "cpu_request ≤ cpu_limit");
        }
        if !(0.0..=1.0).contains(&self.rt_limit) {
            bad("rt_limit".into(), "rt_limit ∈ [0, 1]");
        }
        for (i, p) in self.rt_processes.iter().enumerate() {
            let field = format!("rt_processes[{i}]");
            match p.policy {
                RtPolicy::Deadline {
                    runtime_us,
                    deadline_us,
                    period_us,
                } => {
                    if runtime_us == 0 {
                        bad(field.clone(), "runtime_us > 0");
                    }
                    if runtime_us > period_us {
                        bad(field.clone(), "runtime_us ≤ period_us");
                    }
                    if runtime_us > deadline_us {
                        bad(field.clone(), "runtime_us ≤ deadline_us");
                    }
                    if deadline_us > period_us {
                        bad(field.clone(), "deadline_us ≤ period_us");
                    }
                }
                RtPolicy::Fifo { priority, cpu_request } => {
                    if !(1..=99).contains(&priority) {
                        bad(field.clone(), "priority ∈ [1, 99]");
                    }
                    if !(cpu_request.is_finite() && cpu_request > 0.0) {
                        bad(field.clone(), "cpu_request > 0");
                    }
                }
            }
            if let crate::cluster::ProcessSelector::Name(n) = &p.selector {
                if n.is_empty() {
                    bad(field, "name selector must not be empty");
                }
            }
        }
        let mut weight_sum = 0.0;
        for (i, d) in self.dependencies.iter().enumerate() {
            let field = format!("dependencies[{i}]");
            for w in [d.dep_weight, d.latency_weight, d.metric_weight] {
                if !w.is_finite() || w < 0.0 {
                    bad(field.clone(), "negative weight");
                    break;
                }
            }
            if (d.latency_weight + d.metric_weight - 1.0).abs() > WEIGHT_TOLERANCE {
                bad(field.clone(), "latency_weight + metric_weight = 1");
            }
            if d.target_service == self.name {
                bad(field, "a service cannot depend on itself");
            }
            weight_sum += d.dep_weight.max(0.0);
        }
        if !self.dependencies.is_empty() && weight_sum <= 0.0 {
            bad("dependencies".into(), "dep weights must not all be zero");
        }
        if let Some(m) = &self.metric {
            if m.metric_weight < 0.0 || m.latency_weight < 0.0 {
                bad("metric".into(), "negative weight");
            }
            if (m.metric_weight + m.latency_weight - 1.0).abs() > WEIGHT_TOLERANCE {
                bad("metric".into(), "metric_weight + latency_weight = 1");
            }
        }
        out
    }

    /// Expands the descriptor into pending pods.
    ///
    /// Cluster-scoped services yield `name-0..name-(n-1)`; location-scoped ones
    /// yield `name-LOC-i` per location, each pod carrying its location scope and
    /// the location's config overrides. Location ids must name a node or zone.
    pub fn expand(&self, topology: &Topology, now: f64) -> Result<Vec<PodInstance>, FogServiceError> {
        let violations = self.validate();
        if !violations.is_empty() {
            return Err(FogServiceError::Invalid {
                service: self.name.clone(),
                violations,
            });
        }
        let total: f64 = self.dependencies.iter().map(|d| d.dep_weight).sum();
        let dependencies: Vec<DependencyRef> = self
            .dependencies
            .iter()
            .map(|d| DependencyRef {
                dep_weight: d.dep_weight / total,
                ..d.clone()
            })
            .collect();
        let template = |id: String, scope: Option<&str>, overrides: &BTreeMap<String, String>| {
            let mut config = self.config.clone();
            config.extend(overrides.iter().map(|(k, v)| (k.clone(), v.clone())));
            PodInstance {
                id: id.into(),
                service: self.name.clone(),
                location_scope: scope.map(str::to_owned),
                priority_class: self.priority_class,
                cpu_request: self.cpu_request,
                cpu_limit: self.cpu_limit,
                rt_limit: self.rt_limit,
                rt_processes: self.rt_processes.clone(),
                dependencies: dependencies.clone(),
                runtime_class: self.runtime_class,
                config,
                assignment: None,
                start_time: now,
                status: crate::cluster::PodStatus::Pending,
            }
        };
        let mut pods = Vec::new();
        match &self.mode {
            ServiceMode::ClusterScoped { replicas } => {
                for i in 0..*replicas {
                    pods.push(template(format!("{}-{i}", self.name), None, &BTreeMap::new()));
                }
            }
            ServiceMode::LocationScoped { locations } => {
                for l in locations {
                    let known = topology.contains_node(&l.location.as_str().into()) || topology.has_zone(&l.location);
                    if !known {
                        return Err(FogServiceError::UnknownLocation {
                            service: self.name.clone(),
                            location: l.location.clone(),
                        });
                    }
                    for i in 0..l.replicas {
                        pods.push(template(
                            format!("{}-{}-{i}", self.name, l.location),
                            Some(&l.location),
                            &l.config,
                        ));
                    }
                }
            }
        }
        Ok(pods)
    }
}
