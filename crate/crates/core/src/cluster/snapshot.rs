use std::collections::BTreeMap;
use std::sync::Arc;

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::state::ServiceRegistry;
use super::{Node, NodeId, PodId, PodInstance};
use crate::fogservice::FogServiceSpec;
use crate::scheduler::realtime::{pod_rt_utilization, RtUtilization};
use crate::telemetry::{LatencyMatrix, MetricStore, ReplicaScoreBoard};

/// Per-node aggregates over Running pods, precomputed when the snapshot is taken.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct NodeStats {
    pub pod_count: usize,
    /// Millicores.
    pub allocated_cpu: u64,
    pub rt: RtUtilization,
}

/// Immutable view of the cluster at one instant.
#[derive(Debug, Clone)]
pub struct ClusterSnapshot {
    time: f64,
    nodes: Arc<BTreeMap<NodeId, Node>>,
    pods: BTreeMap<PodId, Arc<PodInstance>>,
    pending: Vec<PodId>,
    latency: Arc<LatencyMatrix>,
    services: ServiceRegistry,
    metrics: MetricStore,
    scoreboard: ReplicaScoreBoard,
    stats: BTreeMap<NodeId, NodeStats>,
}

#[derive(Serialize)]
struct DigestView<'a> {
    time: f64,
    nodes: &'a BTreeMap<NodeId, Node>,
    pods: &'a BTreeMap<PodId, Arc<PodInstance>>,
    pending: &'a [PodId],
    latency: &'a LatencyMatrix,
    services: &'a BTreeMap<String, Arc<FogServiceSpec>>,
    metrics: &'a MetricStore,
    scoreboard: &'a ReplicaScoreBoard,
}

impl ClusterSnapshot {
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn build(
        time: f64,
        nodes: Arc<BTreeMap<NodeId, Node>>,
        pods: BTreeMap<PodId, Arc<PodInstance>>,
        pending: Vec<PodId>,
        latency: Arc<LatencyMatrix>,
        services: ServiceRegistry,
        metrics: MetricStore,
        scoreboard: ReplicaScoreBoard,
    ) -> Self {
        let stats = compute_stats(&nodes, &pods);
        Self {
            time,
            nodes,
            pods,
            pending,
            latency,
            services,
            metrics,
            scoreboard,
            stats,
        }
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn nodes(&self) -> impl Iterator<Item = &Node> {
        self.nodes.values()
    }

    pub fn node(&self, id: &NodeId) -> Option<&Node> {
        self.nodes.get(id)
    }

    pub fn pods(&self) -> impl Iterator<Item = &PodInstance> {
        self.pods.values().map(|p| p.as_ref())
    }

    pub fn pod(&self, id: &PodId) -> Option<&PodInstance> {
        self.pods.get(id).map(|p| p.as_ref())
    }

    pub fn pending(&self) -> &[PodId] {
        &self.pending
    }

    pub fn latency(&self) -> &LatencyMatrix {
        &self.latency
    }

    pub fn service(&self, name: &str) -> Option<&FogServiceSpec> {
        self.services.get(name).map(|s| s.as_ref())
    }

    pub fn metrics(&self) -> &MetricStore {
        &self.metrics
    }

    pub fn scoreboard(&self) -> &ReplicaScoreBoard {
        &self.scoreboard
    }

    pub fn stats(&self, node: &NodeId) -> NodeStats {
        self.stats.get(node).copied().unwrap_or_default()
    }

    /// Running pods on `node`, in pod id order.
    pub fn running_on<'a>(&'a self, node: &'a NodeId) -> impl Iterator<Item = &'a PodInstance> + 'a {
        self.pods()
            .filter(move |p| p.is_running() && p.assignment.as_ref() == Some(node))
    }

    /// Running replicas of a service, in pod id order.
    pub fn replicas_of<'a>(&'a self, service: &'a str) -> impl Iterator<Item = &'a PodInstance> + 'a {
        self.pods().filter(move |p| p.is_running() && p.service == service)
    }

    /// Derived snapshot with the given pods removed (used to check preemption plans).
    pub fn without(&self, removed: &[PodId]) -> ClusterSnapshot {
        let mut pods = self.pods.clone();
        for id in removed {
            pods.remove(id);
        }
        let pending = self
            .pending
            .iter()
            .filter(|p| !removed.contains(p))
            .cloned()
            .collect();
        Self::build(
            self.time,
            Arc::clone(&self.nodes),
            pods,
            pending,
            Arc::clone(&self.latency),
            Arc::clone(&self.services),
            self.metrics.clone(),
            self.scoreboard.clone(),
        )
    }

    /// Derived snapshot with `pod` placed on `node` as Running.
    pub fn with_placement(&self, pod: &PodInstance, node: &NodeId) -> ClusterSnapshot {
        let mut pods = self.pods.clone();
        let mut placed = pod.clone();
        placed.assignment = Some(node.clone());
        placed.status = super::PodStatus::Running;
        placed.start_time = self.time;
        pods.insert(placed.id.clone(), Arc::new(placed));
        let pending = self.pending.iter().filter(|p| **p != pod.id).cloned().collect();
        Self::build(
            self.time,
            Arc::clone(&self.nodes),
            pods,
            pending,
            Arc::clone(&self.latency),
            Arc::clone(&self.services),
            self.metrics.clone(),
            self.scoreboard.clone(),
        )
    }

    /// SHA-256 over a canonical JSON rendering, hex encoded.
    pub fn digest(&self) -> String {
        let view = DigestView {
            time: self.time,
            nodes: &self.nodes,
            pods: &self.pods,
            pending: &self.pending,
            latency: &self.latency,
            services: &self.services,
            metrics: &self.metrics,
            scoreboard: &self.scoreboard,
        };
        let bytes = serde_json::to_vec(&view).expect("snapshot serializes");
        let hash = Sha256::digest(&bytes);
        hash.iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn compute_stats(
    nodes: &BTreeMap<NodeId, Node>,
    pods: &BTreeMap<PodId, Arc<PodInstance>>,
) -> BTreeMap<NodeId, NodeStats> {
    let mut stats: BTreeMap<NodeId, NodeStats> =
        nodes.keys().map(|id| (id.clone(), NodeStats::default())).collect();
    for pod in pods.values().filter(|p| p.is_running()) {
        let Some(node) = &pod.assignment else { continue };
        let entry = stats.entry(node.clone()).or_default();
        entry.pod_count += 1;
        entry.allocated_cpu += pod.cpu_request;
        entry.rt = entry.rt + pod_rt_utilization(pod);
    }
    stats
}
