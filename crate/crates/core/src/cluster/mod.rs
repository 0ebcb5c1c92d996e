//! Typed cluster world model: nodes, zones, links, pods and placements.
//!
//! [`ClusterState`] is the single-writer live model mutated by the event loop.
//! [`ClusterSnapshot`] is an immutable copy handed to the scheduler, the state
//! monitor and anything else that needs a consistent view.

mod document;
mod snapshot;
pub(crate) mod state;
pub(crate) mod topology;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

pub use document::{ClusterDocument, DocumentLink, DocumentNode, DocumentPod};
pub use snapshot::{ClusterSnapshot, NodeStats};
pub use state::{ClusterEvent, ClusterEventKind, ClusterState};
pub use topology::{LatencyParams, LinkRef, Topology, TopologyLink, Zone};

/// Label carrying the node's `sched_rt_period_us` kernel parameter.
pub const RT_PERIOD_LABEL: &str = "sched_rt_period_us";
/// Label carrying the node's `sched_rt_runtime_us` kernel parameter.
pub const RT_RUNTIME_LABEL: &str = "sched_rt_runtime_us";

pub const DEFAULT_CORES: u32 = 4;
pub const DEFAULT_CPU_CAPACITY: u64 = 4000;
pub const DEFAULT_RT_PERIOD_US: u64 = 1_000_000;
pub const DEFAULT_RT_RUNTIME_US: u64 = 950_000;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum ClusterError {
    #[error("pod not found: {0}")]
    PodNotFound(PodId),
    #[error("node not found: {0}")]
    NodeNotFound(NodeId),
    #[error("pod {0} is not pending")]
    NotPending(PodId),
    #[error("pod {0} is not running")]
    NotRunning(PodId),
    #[error("duplicate pod id {0}")]
    DuplicatePod(PodId),
    #[error("invalid node {node}: {reason}")]
    InvalidNode { node: NodeId, reason: String },
    #[error("invalid topology: {0}")]
    InvalidTopology(String),
    #[error("unknown link {0}")]
    UnknownLink(String),
    #[error("malformed cluster document: {0}")]
    Document(String),
}

macro_rules! string_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn new(id: impl Into<String>) -> Self {
                Self(id.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_owned())
            }
        }

        impl From<String> for $name {
            fn from(s: String) -> Self {
                Self(s)
            }
        }

        impl std::borrow::Borrow<str> for $name {
            fn borrow(&self) -> &str {
                &self.0
            }
        }
    };
}

string_id!(
    /// Worker node identifier, e.g. `P1-A`.
    NodeId
);
string_id!(
    /// Pod identifier rendered from (service, location, replica index), e.g. `dependency-0`.
    PodId
);

/// A worker node.
///
/// The RT quota is taken from the `sched_rt_period_us` / `sched_rt_runtime_us`
/// labels when present, falling back to the kernel default of 95%.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    pub zone: String,
    pub cores: u32,
    /// Millicores.
    pub cpu_capacity: u64,
    pub rt_period_us: u64,
    pub rt_runtime_us: u64,
    #[serde(default)]
    pub labels: BTreeMap<String, String>,
}

impl Node {
    pub fn new(id: impl Into<NodeId>, zone: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            zone: zone.into(),
            cores: DEFAULT_CORES,
            cpu_capacity: DEFAULT_CPU_CAPACITY,
            rt_period_us: DEFAULT_RT_PERIOD_US,
            rt_runtime_us: DEFAULT_RT_RUNTIME_US,
            labels: BTreeMap::new(),
        }
    }

    pub fn with_cores(mut self, cores: u32) -> Self {
        self.cores = cores;
        self
    }

    pub fn with_cpu_capacity(mut self, millicores: u64) -> Self {
        self.cpu_capacity = millicores;
        self
    }

    /// Sets labels and re-reads the RT kernel parameters from them.
    pub fn with_labels(mut self, labels: BTreeMap<String, String>) -> Result<Self, ClusterError> {
        let parse = |key: &str, default: u64| -> Result<u64, ClusterError> {
            match labels.get(key) {
                None => Ok(default),
                Some(raw) => raw.trim().parse::<u64>().map_err(|_| ClusterError::InvalidNode {
                    node: self.id.clone(),
                    reason: format!("label {key}={raw:?} is not an integer"),
                }),
            }
        };
        self.rt_period_us = parse(RT_PERIOD_LABEL, DEFAULT_RT_PERIOD_US)?;
        self.rt_runtime_us = parse(RT_RUNTIME_LABEL, DEFAULT_RT_RUNTIME_US)?;
        self.labels = labels;
        self.validate()?;
        Ok(self)
    }

    /// Fraction of each period RT tasks may consume, `rt_runtime_us / rt_period_us`.
    pub fn rt_quota(&self) -> f64 {
        self.rt_runtime_us as f64 / self.rt_period_us as f64
    }

    pub fn validate(&self) -> Result<(), ClusterError> {
        let fail = |reason: &str| {
            Err(ClusterError::InvalidNode {
                node: self.id.clone(),
                reason: reason.to_owned(),
            })
        };
        if self.cores == 0 {
            return fail("cores must be >= 1");
        }
        if self.rt_runtime_us == 0 || self.rt_runtime_us > self.rt_period_us {
            return fail("require 0 < rt_runtime_us <= rt_period_us");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PodStatus {
    Pending,
    Running,
    Evicted,
    Unschedulable,
}

/// How a real-time process inside a pod is located on the host.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProcessSelector {
    /// PID inside the container's namespace.
    Pid(u32),
    /// Any process whose name contains this substring.
    Name(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RtPolicy {
    Deadline {
        runtime_us: u64,
        deadline_us: u64,
        period_us: u64,
    },
    Fifo {
        priority: u8,
        /// Declared CPU budget as a fraction of one core.
        cpu_request: f64,
    },
}

impl RtPolicy {
    /// CPU share the policy claims, in cores.
    pub fn utilization(&self) -> f64 {
        match *self {
            RtPolicy::Deadline {
                runtime_us,
                period_us,
                ..
            } => runtime_us as f64 / period_us as f64,
            RtPolicy::Fifo { cpu_request, .. } => cpu_request,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RtProcessSpec {
    pub selector: ProcessSelector,
    pub policy: RtPolicy,
}

impl RtProcessSpec {
    pub fn deadline(selector: ProcessSelector, runtime_us: u64, deadline_us: u64, period_us: u64) -> Self {
        Self {
            selector,
            policy: RtPolicy::Deadline {
                runtime_us,
                deadline_us,
                period_us,
            },
        }
    }

    pub fn fifo(selector: ProcessSelector, priority: u8, cpu_request: f64) -> Self {
        Self {
            selector,
            policy: RtPolicy::Fifo {
                priority,
                cpu_request,
            },
        }
    }
}

/// A dependency of a pod on another service.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DependencyRef {
    pub target_service: String,
    #[serde(default = "one")]
    pub dep_weight: f64,
    pub latency_weight: f64,
    pub metric_weight: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuntimeClass {
    #[default]
    Container,
    Legacy,
}

/// One schedulable unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PodInstance {
    pub id: PodId,
    pub service: String,
    pub location_scope: Option<String>,
    pub priority_class: i32,
    pub cpu_request: u64,
    pub cpu_limit: u64,
    /// Fraction of CPU time reserved for the pod's RT processes.
    #[serde(default)]
    pub rt_limit: f64,
    #[serde(default)]
    pub rt_processes: Vec<RtProcessSpec>,
    #[serde(default)]
    pub dependencies: Vec<DependencyRef>,
    #[serde(default)]
    pub runtime_class: RuntimeClass,
    #[serde(default)]
    pub config: BTreeMap<String, String>,
    pub assignment: Option<NodeId>,
    pub start_time: f64,
    pub status: PodStatus,
}

impl PodInstance {
    /// A pending pod with no RT processes or dependencies.
    pub fn new(id: impl Into<PodId>, service: impl Into<String>, cpu_request: u64) -> Self {
        Self {
            id: id.into(),
            service: service.into(),
            location_scope: None,
            priority_class: 0,
            cpu_request,
            cpu_limit: cpu_request,
            rt_limit: 0.0,
            rt_processes: Vec::new(),
            dependencies: Vec::new(),
            runtime_class: RuntimeClass::Container,
            config: BTreeMap::new(),
            assignment: None,
            start_time: 0.0,
            status: PodStatus::Pending,
        }
    }

    pub fn with_priority(mut self, priority_class: i32) -> Self {
        self.priority_class = priority_class;
        self
    }

    pub fn with_rt_process(mut self, spec: RtProcessSpec) -> Self {
        self.rt_processes.push(spec);
        self
    }

    pub fn with_dependency(mut self, dep: DependencyRef) -> Self {
        self.dependencies.push(dep);
        self
    }

    pub fn with_location_scope(mut self, scope: impl Into<String>) -> Self {
        self.location_scope = Some(scope.into());
        self
    }

    pub fn is_realtime(&self) -> bool {
        !self.rt_processes.is_empty()
    }

    pub fn is_running(&self) -> bool {
        self.status == PodStatus::Running
    }
}
