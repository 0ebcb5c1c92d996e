//! Text serialization of a cluster: one `[[node]]`, `[[pod]]` and `[[link]]`
//! table per entity, as TOML.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::topology::{zone_switch, CORE_SWITCH};
use super::{
    ClusterError, ClusterState, LatencyParams, LinkRef, Node, NodeId, PodInstance, PodStatus, Topology, Zone,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentNode {
    pub id: NodeId,
    pub zone: String,
    pub cores: u32,
    pub cpu_capacity: u64,
    pub rt_period_us: u64,
    pub rt_runtime_us: u64,
    #[serde(default)]
    pub labels: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentLink {
    pub a: String,
    pub b: String,
    pub one_way_latency_ms: f64,
}

pub type DocumentPod = PodInstance;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterDocument {
    #[serde(default)]
    pub params: LatencyParams,
    #[serde(default)]
    pub node: Vec<DocumentNode>,
    #[serde(default)]
    pub link: Vec<DocumentLink>,
    #[serde(default)]
    pub pod: Vec<DocumentPod>,
}

impl ClusterDocument {
    pub fn from_state(state: &ClusterState) -> Self {
        let node = state
            .nodes()
            .map(|n| DocumentNode {
                id: n.id.clone(),
                zone: n.zone.clone(),
                cores: n.cores,
                cpu_capacity: n.cpu_capacity,
                rt_period_us: n.rt_period_us,
                rt_runtime_us: n.rt_runtime_us,
                labels: n.labels.clone(),
            })
            .collect();
        let link = state
            .topology()
            .links()
            .into_iter()
            .map(|l| DocumentLink {
                a: l.a,
                b: l.b,
                one_way_latency_ms: l.one_way_latency_ms,
            })
            .collect();
        Self {
            params: state.topology().params(),
            node,
            link,
            pod: state.pods().cloned().collect(),
        }
    }

    pub fn to_toml(&self) -> Result<String, ClusterError> {
        toml::to_string(self).map_err(|e| ClusterError::Document(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self, ClusterError> {
        toml::from_str(text).map_err(|e| ClusterError::Document(e.to_string()))
    }

    /// Rebuilds a live state. Running pods are re-bound at their recorded start time.
    pub fn into_state(self) -> Result<ClusterState, ClusterError> {
        let mut zone_nodes: BTreeMap<String, Vec<NodeId>> = BTreeMap::new();
        let mut zone_order: Vec<String> = Vec::new();
        for n in &self.node {
            if !zone_nodes.contains_key(&n.zone) {
                zone_order.push(n.zone.clone());
            }
            zone_nodes.entry(n.zone.clone()).or_default().push(n.id.clone());
        }
        let mut uplinks: BTreeMap<String, f64> = BTreeMap::new();
        let mut access: Vec<(NodeId, f64)> = Vec::new();
        for l in &self.link {
            let (a, b) = (l.a.as_str(), l.b.as_str());
            let zone_of_switch = |s: &str| s.strip_prefix("switch:").map(str::to_owned);
            if b == CORE_SWITCH || a == CORE_SWITCH {
                let sw = if b == CORE_SWITCH { a } else { b };
                let zone = zone_of_switch(sw)
                    .ok_or_else(|| ClusterError::Document(format!("core link to non-switch {sw}")))?;
                uplinks.insert(zone, l.one_way_latency_ms);
            } else {
                let (node, sw) = if a.starts_with("switch:") { (b, a) } else { (a, b) };
                let node_zone = self
                    .node
                    .iter()
                    .find(|n| n.id.as_str() == node)
                    .map(|n| n.zone.clone())
                    .ok_or_else(|| ClusterError::Document(format!("link references unknown node {node}")))?;
                if sw != zone_switch(&node_zone) {
                    return Err(ClusterError::Document(format!(
                        "node {node} links to {sw}, expected {}",
                        zone_switch(&node_zone)
                    )));
                }
                access.push((NodeId::new(node), l.one_way_latency_ms));
            }
        }
        let zones = zone_order
            .into_iter()
            .map(|id| {
                let uplink_ms = *uplinks
                    .get(&id)
                    .ok_or_else(|| ClusterError::Document(format!("zone {id} has no core link")))?;
                Ok(Zone {
                    nodes: zone_nodes.remove(&id).unwrap_or_default(),
                    id,
                    uplink_ms,
                })
            })
            .collect::<Result<Vec<_>, ClusterError>>()?;
        let mut topology = Topology::new(zones, self.params)?;
        for (node, ms) in access {
            if ms != self.params.access_ms {
                topology.set_link_latency(&LinkRef::Access(node), ms)?;
            }
        }
        let nodes = self
            .node
            .into_iter()
            .map(|n| Node {
                id: n.id,
                zone: n.zone,
                cores: n.cores,
                cpu_capacity: n.cpu_capacity,
                rt_period_us: n.rt_period_us,
                rt_runtime_us: n.rt_runtime_us,
                labels: n.labels,
            })
            .collect();
        let mut state = ClusterState::new(topology, nodes)?;
        for pod in self.pod {
            let id = pod.id.clone();
            let status = pod.status;
            let node = pod.assignment.clone();
            let start = pod.start_time;
            state.submit(pod, start)?;
            match status {
                PodStatus::Running => {
                    let node = node.ok_or_else(|| {
                        ClusterError::Document(format!("running pod {id} has no assignment"))
                    })?;
                    state.apply_placement(&id, &node, start)?;
                }
                PodStatus::Unschedulable => state.mark_unschedulable(&id, start)?,
                PodStatus::Pending | PodStatus::Evicted => {}
            }
        }
        Ok(state)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::{ProcessSelector, RtProcessSpec};

    fn sample() -> ClusterState {
        let mut st = crate::cluster::state::tests::cluster();
        st.set_link_latency(&LinkRef::Access(NodeId::new("P3-B")), 0.25).unwrap();
        let rt = PodInstance::new("rt-0", "rt", 100)
            .with_priority(5)
            .with_rt_process(RtProcessSpec::deadline(ProcessSelector::Name("det".into()), 100_000, 1_000_000, 1_000_000))
            .with_location_scope("P2-A");
        st.submit(rt, 0.0).unwrap();
        st.submit(PodInstance::new("web-0", "web", 250), 0.0).unwrap();
        st.apply_placement(&PodId::new("rt-0"), &NodeId::new("P2-A"), 4.0).unwrap();
        st
    }

    use crate::cluster::PodId;

    #[test]
    fn round_trip_preserves_snapshot() {
        let st = sample();
        let text = ClusterDocument::from_state(&st).to_toml().unwrap();
        assert!(text.contains("[[node]]"));
        assert!(text.contains("[[pod]]"));
        assert!(text.contains("[[link]]"));
        let back = ClusterDocument::from_toml(&text).unwrap().into_state().unwrap();
        assert_eq!(
            back.snapshot(None, 0.0).unwrap().digest(),
            st.snapshot(None, 0.0).unwrap().digest()
        );
        assert_eq!(back.allocated(&NodeId::new("P2-A")), 100);
    }

    #[test]
    fn missing_uplink_is_rejected() {
        let st = sample();
        let mut doc = ClusterDocument::from_state(&st);
        doc.link.retain(|l| !(l.a == "switch:P4" && l.b == "core"));
        assert!(matches!(doc.into_state(), Err(ClusterError::Document(_))));
    }
}
