use std::collections::{BTreeMap, VecDeque};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{ClusterError, ClusterSnapshot, LinkRef, Node, NodeId, PodId, PodInstance, PodStatus, Topology};
use crate::fogservice::FogServiceSpec;
use crate::telemetry::{LatencyMatrix, MetricStore, ReplicaScoreBoard};

pub(crate) type ServiceRegistry = Arc<BTreeMap<String, Arc<FogServiceSpec>>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusterEventKind {
    Submitted,
    Placed { node: NodeId },
    Evicted { node: NodeId },
    Unschedulable,
    Removed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterEvent {
    pub time: f64,
    pub pod: PodId,
    pub kind: ClusterEventKind,
}

/// The live, single-writer world model.
#[derive(Debug, Clone)]
pub struct ClusterState {
    topology: Topology,
    nodes: Arc<BTreeMap<NodeId, Node>>,
    pods: BTreeMap<PodId, Arc<PodInstance>>,
    queue: VecDeque<PodId>,
    unschedulable: Vec<PodId>,
    allocated: BTreeMap<NodeId, u64>,
    latency: Arc<LatencyMatrix>,
    services: ServiceRegistry,
    metrics: MetricStore,
    scoreboard: ReplicaScoreBoard,
    log: Vec<ClusterEvent>,
}

impl ClusterState {
    /// Builds an empty cluster. Every node must appear in exactly one topology zone
    /// and carry that zone.
    pub fn new(topology: Topology, nodes: Vec<Node>) -> Result<Self, ClusterError> {
        let mut by_id = BTreeMap::new();
        for node in nodes {
            node.validate()?;
            match topology.zone_of(&node.id) {
                Some(z) if z == node.zone => {}
                Some(z) => {
                    return Err(ClusterError::InvalidNode {
                        node: node.id.clone(),
                        reason: format!("declares zone {} but topology places it in {z}", node.zone),
                    })
                }
                None => return Err(ClusterError::NodeNotFound(node.id.clone())),
            }
            if by_id.insert(node.id.clone(), node).is_some() {
                return Err(ClusterError::InvalidTopology("duplicate node id".into()));
            }
        }
        if let Some(missing) = topology.node_ids().find(|id| !by_id.contains_key(*id)) {
            return Err(ClusterError::InvalidTopology(format!(
                "topology node {missing} has no node definition"
            )));
        }
        let latency = Arc::new(LatencyMatrix::from_topology(&topology));
        let allocated = by_id.keys().map(|id| (id.clone(), 0)).collect();
        Ok(Self {
            topology,
            nodes: Arc::new(by_id),
            pods: BTreeMap::new(),
            queue: VecDeque::new(),
            unschedulable: Vec::new(),
            allocated,
            latency,
            services: Arc::default(),
            metrics: MetricStore::default(),
            scoreboard: ReplicaScoreBoard::default(),
            log: Vec::new(),
        })
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn latency(&self) -> &LatencyMatrix {
        &self.latency
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

    pub fn queue(&self) -> &VecDeque<PodId> {
        &self.queue
    }

    pub fn unschedulable(&self) -> &[PodId] {
        &self.unschedulable
    }

    pub fn events(&self) -> &[ClusterEvent] {
        &self.log
    }

    /// Makes a service descriptor visible to scheduler plugins and load balancers.
    pub fn register_service(&mut self, spec: FogServiceSpec) {
        Arc::make_mut(&mut self.services).insert(spec.name.clone(), Arc::new(spec));
    }

    pub fn service(&self, name: &str) -> Option<&FogServiceSpec> {
        self.services.get(name).map(|s| s.as_ref())
    }

    pub fn metrics(&self) -> &MetricStore {
        &self.metrics
    }

    pub fn metrics_mut(&mut self) -> &mut MetricStore {
        &mut self.metrics
    }

    pub fn scoreboard(&self) -> &ReplicaScoreBoard {
        &self.scoreboard
    }

    pub fn scoreboard_mut(&mut self) -> &mut ReplicaScoreBoard {
        &mut self.scoreboard
    }

    /// Allocated CPU requests on a node, in millicores.
    pub fn allocated(&self, node: &NodeId) -> u64 {
        self.allocated.get(node).copied().unwrap_or(0)
    }

    /// Running pods on a node, in pod id order.
    pub fn running_on<'a>(&'a self, node: &'a NodeId) -> impl Iterator<Item = &'a PodInstance> + 'a {
        self.pods
            .values()
            .filter(move |p| p.status == PodStatus::Running && p.assignment.as_ref() == Some(node))
            .map(|p| p.as_ref())
    }

    /// Adds a pod to the store. Pending pods are appended to the scheduler queue.
    pub fn submit(&mut self, mut pod: PodInstance, time: f64) -> Result<(), ClusterError> {
        if self.pods.contains_key(&pod.id) {
            return Err(ClusterError::DuplicatePod(pod.id));
        }
        pod.status = PodStatus::Pending;
        pod.assignment = None;
        let id = pod.id.clone();
        self.pods.insert(id.clone(), Arc::new(pod));
        self.queue.push_back(id.clone());
        self.log.push(ClusterEvent {
            time,
            pod: id,
            kind: ClusterEventKind::Submitted,
        });
        Ok(())
    }

    /// Binds a pending pod to a node.
    pub fn apply_placement(&mut self, pod: &PodId, node: &NodeId, time: f64) -> Result<(), ClusterError> {
        if !self.nodes.contains_key(node) {
            return Err(ClusterError::NodeNotFound(node.clone()));
        }
        let entry = self
            .pods
            .get_mut(pod)
            .ok_or_else(|| ClusterError::PodNotFound(pod.clone()))?;
        if entry.status != PodStatus::Pending {
            return Err(ClusterError::NotPending(pod.clone()));
        }
        let p = Arc::make_mut(entry);
        p.status = PodStatus::Running;
        p.assignment = Some(node.clone());
        p.start_time = time;
        *self.allocated.entry(node.clone()).or_default() += p.cpu_request;
        self.queue.retain(|q| q != pod);
        self.log.push(ClusterEvent {
            time,
            pod: pod.clone(),
            kind: ClusterEventKind::Placed { node: node.clone() },
        });
        Ok(())
    }

    /// Evicts a running pod; it goes back to the tail of the scheduler queue.
    ///
    /// Any pods parked as unschedulable are re-queued as well since the
    /// eviction frees capacity.
    pub fn evict(&mut self, pod: &PodId, time: f64) -> Result<NodeId, ClusterError> {
        let entry = self
            .pods
            .get_mut(pod)
            .ok_or_else(|| ClusterError::PodNotFound(pod.clone()))?;
        if entry.status != PodStatus::Running {
            return Err(ClusterError::NotRunning(pod.clone()));
        }
        let p = Arc::make_mut(entry);
        let node = p.assignment.take().expect("running pod has an assignment");
        p.status = PodStatus::Pending;
        let alloc = self.allocated.entry(node.clone()).or_default();
        *alloc -= p.cpu_request;
        self.queue.push_back(pod.clone());
        self.log.push(ClusterEvent {
            time,
            pod: pod.clone(),
            kind: ClusterEventKind::Evicted { node: node.clone() },
        });
        self.requeue_unschedulable();
        Ok(node)
    }

    /// Parks a pending pod that no node can take.
    pub fn mark_unschedulable(&mut self, pod: &PodId, time: f64) -> Result<(), ClusterError> {
        let entry = self
            .pods
            .get_mut(pod)
            .ok_or_else(|| ClusterError::PodNotFound(pod.clone()))?;
        if entry.status != PodStatus::Pending {
            return Err(ClusterError::NotPending(pod.clone()));
        }
        Arc::make_mut(entry).status = PodStatus::Unschedulable;
        self.queue.retain(|q| q != pod);
        self.unschedulable.push(pod.clone());
        self.log.push(ClusterEvent {
            time,
            pod: pod.clone(),
            kind: ClusterEventKind::Unschedulable,
        });
        Ok(())
    }

    /// Moves parked unschedulable pods back onto the queue.
    pub fn requeue_unschedulable(&mut self) {
        for id in std::mem::take(&mut self.unschedulable) {
            if let Some(entry) = self.pods.get_mut(&id) {
                Arc::make_mut(entry).status = PodStatus::Pending;
                self.queue.push_back(id);
            }
        }
    }

    /// Deletes a pod entirely, releasing its allocation.
    pub fn remove_pod(&mut self, pod: &PodId, time: f64) -> Result<PodInstance, ClusterError> {
        let removed = self
            .pods
            .remove(pod)
            .ok_or_else(|| ClusterError::PodNotFound(pod.clone()))?;
        if removed.status == PodStatus::Running {
            if let Some(node) = &removed.assignment {
                *self.allocated.entry(node.clone()).or_default() -= removed.cpu_request;
            }
        }
        self.queue.retain(|q| q != pod);
        self.unschedulable.retain(|q| q != pod);
        self.log.push(ClusterEvent {
            time,
            pod: pod.clone(),
            kind: ClusterEventKind::Removed,
        });
        Ok(Arc::unwrap_or_clone(removed))
    }

    /// Overrides a pending pod's priority class.
    pub fn set_priority(&mut self, pod: &PodId, priority_class: i32) -> Result<(), ClusterError> {
        let entry = self
            .pods
            .get_mut(pod)
            .ok_or_else(|| ClusterError::PodNotFound(pod.clone()))?;
        Arc::make_mut(entry).priority_class = priority_class;
        Ok(())
    }

    /// Changes a link's latency and refreshes the latency matrix.
    pub fn set_link_latency(&mut self, link: &LinkRef, latency_ms: f64) -> Result<(), ClusterError> {
        self.topology.set_link_latency(link, latency_ms)?;
        self.latency = Arc::new(LatencyMatrix::from_topology(&self.topology));
        Ok(())
    }

    /// Immutable copy of the current state, optionally without one pod.
    pub fn snapshot(&self, exclude: Option<&PodId>, time: f64) -> Result<ClusterSnapshot, ClusterError> {
        if let Some(ex) = exclude {
            if !self.pods.contains_key(ex) {
                return Err(ClusterError::PodNotFound(ex.clone()));
            }
        }
        let mut pods = self.pods.clone();
        if let Some(ex) = exclude {
            pods.remove(ex);
        }
        let pending = self
            .queue
            .iter()
            .filter(|id| Some(*id) != exclude)
            .cloned()
            .collect();
        Ok(ClusterSnapshot::build(
            time,
            Arc::clone(&self.nodes),
            pods,
            pending,
            Arc::clone(&self.latency),
            Arc::clone(&self.services),
            self.metrics.clone(),
            self.scoreboard.clone(),
        ))
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::cluster::topology::tests::testbed;

    pub(crate) fn cluster() -> ClusterState {
        let topo = testbed();
        let nodes = topo
            .zones()
            .iter()
            .flat_map(|z| z.nodes.iter().map(move |n| Node::new(n.clone(), z.id.clone())))
            .collect();
        ClusterState::new(topo, nodes).unwrap()
    }

    fn id(s: &str) -> PodId {
        PodId::new(s)
    }

    fn node(s: &str) -> NodeId {
        NodeId::new(s)
    }

    fn with_pods(names: &[&str]) -> ClusterState {
        let mut st = cluster();
        for n in names {
            st.submit(PodInstance::new(*n, "svc", 100), 0.0).unwrap();
        }
        st
    }

    #[test]
    fn snapshot_excludes_requested_pod() {
        let st = with_pods(&["a", "b", "c"]);
        let snap = st.snapshot(Some(&id("b")), 0.0).unwrap();
        let ids: Vec<_> = snap.pods().map(|p| p.id.as_str().to_owned()).collect();
        assert_eq!(ids, ["a", "c"]);
        let all = st.snapshot(None, 0.0).unwrap();
        assert_eq!(all.pods().count(), 3);
    }

    #[test]
    fn snapshot_of_unknown_pod_fails() {
        let st = with_pods(&["a"]);
        assert_eq!(
            st.snapshot(Some(&id("zz")), 0.0).unwrap_err(),
            ClusterError::PodNotFound(id("zz"))
        );
    }

    #[test]
    fn placement_transitions_and_bookkeeping() {
        let mut st = with_pods(&["p"]);
        st.apply_placement(&id("p"), &node("P1-A"), 3.5).unwrap();
        let p = st.pod(&id("p")).unwrap();
        assert_eq!(p.status, PodStatus::Running);
        assert_eq!(p.assignment, Some(node("P1-A")));
        assert_eq!(p.start_time, 3.5);
        assert_eq!(st.allocated(&node("P1-A")), 100);
        assert_eq!(
            st.apply_placement(&id("p"), &node("P1-A"), 4.0),
            Err(ClusterError::NotPending(id("p")))
        );
    }

    #[test]
    fn placement_on_missing_node_fails() {
        let mut st = with_pods(&["p"]);
        assert_eq!(
            st.apply_placement(&id("p"), &node("nope"), 0.0),
            Err(ClusterError::NodeNotFound(node("nope")))
        );
    }

    #[test]
    fn evict_is_inverse_of_placement() {
        let mut st = with_pods(&["p", "q"]);
        st.apply_placement(&id("p"), &node("P2-A"), 1.0).unwrap();
        let before = st.allocated(&node("P2-A"));
        st.apply_placement(&id("q"), &node("P2-A"), 1.0).unwrap();
        let from = st.evict(&id("q"), 2.0).unwrap();
        assert_eq!(from, node("P2-A"));
        assert_eq!(st.allocated(&node("P2-A")), before);
        let q = st.pod(&id("q")).unwrap();
        assert_eq!(q.status, PodStatus::Pending);
        assert_eq!(q.assignment, None);
        assert_eq!(st.queue().back(), Some(&id("q")));
        assert!(matches!(
            st.events().last().unwrap().kind,
            ClusterEventKind::Evicted { .. }
        ));
    }

    #[test]
    fn evicting_pending_pod_fails() {
        let mut st = with_pods(&["p"]);
        assert_eq!(st.evict(&id("p"), 0.0), Err(ClusterError::NotRunning(id("p"))));
    }

    #[test]
    fn snapshot_is_isolated_from_later_mutation() {
        let mut st = with_pods(&["a", "b"]);
        st.apply_placement(&id("a"), &node("P1-A"), 0.0).unwrap();
        let snap = st.snapshot(None, 0.0).unwrap();
        let digest = snap.digest();
        st.apply_placement(&id("b"), &node("P1-B"), 1.0).unwrap();
        st.evict(&id("a"), 2.0).unwrap();
        st.set_link_latency(&LinkRef::Uplink("P1".into()), 3.0).unwrap();
        assert_eq!(snap.digest(), digest);
        assert_ne!(st.snapshot(None, 0.0).unwrap().digest(), digest);
    }

    #[test]
    fn unschedulable_pods_return_on_eviction() {
        let mut st = with_pods(&["a", "u"]);
        st.apply_placement(&id("a"), &node("P1-A"), 0.0).unwrap();
        st.mark_unschedulable(&id("u"), 0.0).unwrap();
        assert!(st.queue().is_empty());
        st.evict(&id("a"), 1.0).unwrap();
        assert_eq!(st.queue().iter().cloned().collect::<Vec<_>>(), [id("a"), id("u")]);
        assert_eq!(st.pod(&id("u")).unwrap().status, PodStatus::Pending);
    }

    #[test]
    fn node_zone_must_match_topology() {
        let topo = testbed();
        let mut nodes: Vec<Node> = topo
            .zones()
            .iter()
            .flat_map(|z| z.nodes.iter().map(move |n| Node::new(n.clone(), z.id.clone())))
            .collect();
        nodes[0].zone = "P4".into();
        assert!(ClusterState::new(topo, nodes).is_err());
    }

    mod conservation {
        use super::*;
        use proptest::prelude::*;

        #[derive(Debug, Clone)]
        enum Op {
            Place(usize, usize),
            Evict(usize),
        }

        fn op() -> impl Strategy<Value = Op> {
            prop_oneof![
                (0..6usize, 0..8usize).prop_map(|(p, n)| Op::Place(p, n)),
                (0..6usize).prop_map(Op::Evict),
            ]
        }

        proptest! {
            #[test]
            fn allocation_matches_running_requests(ops in prop::collection::vec(op(), 0..60)) {
                let mut st = cluster();
                for i in 0..6 {
                    st.submit(PodInstance::new(format!("p{i}"), "svc", 50 + 37 * i as u64), 0.0).unwrap();
                }
                let nodes: Vec<NodeId> = st.nodes().map(|n| n.id.clone()).collect();
                for (t, op) in ops.into_iter().enumerate() {
                    let t = t as f64;
                    // Illegal transitions are rejected and must leave the books intact.
                    let _ = match op {
                        Op::Place(p, n) => st.apply_placement(&id(&format!("p{p}")), &nodes[n], t).map(|_| ()),
                        Op::Evict(p) => st.evict(&id(&format!("p{p}")), t).map(|_| ()),
                    };
                    let total_alloc: u64 = nodes.iter().map(|n| st.allocated(n)).sum();
                    let running: u64 = st.pods().filter(|p| p.is_running()).map(|p| p.cpu_request).sum();
                    prop_assert_eq!(total_alloc, running);
                    for p in st.pods() {
                        match p.status {
                            PodStatus::Running => {
                                let n = p.assignment.as_ref().unwrap();
                                prop_assert!(st.topology().zone_of(n).is_some());
                            }
                            PodStatus::Pending => prop_assert!(p.assignment.is_none()),
                            _ => {}
                        }
                    }
                }
            }
        }
    }
}
