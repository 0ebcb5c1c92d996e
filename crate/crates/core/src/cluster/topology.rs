use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{ClusterError, NodeId};

/// Latency calibration for the star layout.
///
/// A path between distinct nodes crosses both access links (node to zone
/// switch); a path between zones additionally crosses both zone uplinks and the
/// core switch. Every path, including the trivial one, pays `intra_node_ms`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LatencyParams {
    pub intra_node_ms: f64,
    /// One-way latency of each node to zone-switch access link.
    pub access_ms: f64,
    /// Traversal cost of the core switch.
    pub core_switch_ms: f64,
}

impl Default for LatencyParams {
    fn default() -> Self {
        // Same-node 0.02 ms, same-zone 0.03 ms; with 2x path + 0.005 ms
        // processing these give the 0.045 / 0.065 ms RTTs of a loaded testbed.
        Self {
            intra_node_ms: 0.02,
            access_ms: 0.005,
            core_switch_ms: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Zone {
    pub id: String,
    /// One-way latency of the zone switch to core switch link.
    pub uplink_ms: f64,
    pub nodes: Vec<NodeId>,
}

/// Identifies a configurable link for latency injection.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkRef {
    /// Zone switch to core switch.
    Uplink(String),
    /// Node to its zone switch.
    Access(NodeId),
}

impl std::fmt::Display for LinkRef {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LinkRef::Uplink(z) => write!(f, "uplink:{z}"),
            LinkRef::Access(n) => write!(f, "access:{n}"),
        }
    }
}

impl std::str::FromStr for LinkRef {
    type Err = ClusterError;

    /// Parses `uplink:ZONE` or `access:NODE`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.split_once(':') {
            Some(("uplink", z)) if !z.is_empty() => Ok(LinkRef::Uplink(z.to_owned())),
            Some(("access", n)) if !n.is_empty() => Ok(LinkRef::Access(NodeId::new(n))),
            _ => Err(ClusterError::UnknownLink(s.to_owned())),
        }
    }
}

/// A concrete link in the star graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologyLink {
    pub a: String,
    pub b: String,
    pub one_way_latency_ms: f64,
}

/// Star topology: one switch per zone, all zone switches on a core switch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    zones: Vec<Zone>,
    params: LatencyParams,
    /// Per-node access link overrides.
    access_overrides: BTreeMap<NodeId, f64>,
    node_zone: BTreeMap<NodeId, usize>,
}

pub(crate) const CORE_SWITCH: &str = "core";

pub(crate) fn zone_switch(zone: &str) -> String {
    format!("switch:{zone}")
}

impl Topology {
    pub fn new(zones: Vec<Zone>, params: LatencyParams) -> Result<Self, ClusterError> {
        let mut node_zone = BTreeMap::new();
        let mut seen_zones = std::collections::BTreeSet::new();
        for (idx, zone) in zones.iter().enumerate() {
            if !seen_zones.insert(zone.id.clone()) {
                return Err(ClusterError::InvalidTopology(format!("duplicate zone {}", zone.id)));
            }
            if zone.nodes.is_empty() {
                return Err(ClusterError::InvalidTopology(format!("zone {} has no nodes", zone.id)));
            }
            check_latency(zone.uplink_ms, &zone.id)?;
            for node in &zone.nodes {
                if node_zone.insert(node.clone(), idx).is_some() {
                    return Err(ClusterError::InvalidTopology(format!(
                        "node {node} belongs to more than one zone"
                    )));
                }
            }
        }
        check_latency(params.intra_node_ms, "intra_node_ms")?;
        check_latency(params.access_ms, "access_ms")?;
        check_latency(params.core_switch_ms, "core_switch_ms")?;
        Ok(Self {
            zones,
            params,
            access_overrides: BTreeMap::new(),
            node_zone,
        })
    }

    pub fn zones(&self) -> &[Zone] {
        &self.zones
    }

    pub fn params(&self) -> LatencyParams {
        self.params
    }

    pub fn node_ids(&self) -> impl Iterator<Item = &NodeId> {
        self.node_zone.keys()
    }

    pub fn contains_node(&self, node: &NodeId) -> bool {
        self.node_zone.contains_key(node)
    }

    pub fn zone_of(&self, node: &NodeId) -> Option<&str> {
        self.node_zone.get(node).map(|&i| self.zones[i].id.as_str())
    }

    pub fn has_zone(&self, zone: &str) -> bool {
        self.zones.iter().any(|z| z.id == zone)
    }

    fn access(&self, node: &NodeId) -> f64 {
        self.access_overrides
            .get(node)
            .copied()
            .unwrap_or(self.params.access_ms)
    }

    /// One-way latency between two nodes along the star path, in milliseconds.
    pub fn path_latency(&self, a: &NodeId, b: &NodeId) -> Result<f64, ClusterError> {
        let za = *self
            .node_zone
            .get(a)
            .ok_or_else(|| ClusterError::NodeNotFound(a.clone()))?;
        let zb = *self
            .node_zone
            .get(b)
            .ok_or_else(|| ClusterError::NodeNotFound(b.clone()))?;
        let p = &self.params;
        if a == b {
            return Ok(p.intra_node_ms);
        }
        let mut total = p.intra_node_ms + self.access(a) + self.access(b);
        if za != zb {
            total += self.zones[za].uplink_ms + self.zones[zb].uplink_ms + p.core_switch_ms;
        }
        Ok(total)
    }

    /// All links of the star graph, access links first, in a stable order.
    pub fn links(&self) -> Vec<TopologyLink> {
        let mut out = Vec::new();
        for zone in &self.zones {
            for node in &zone.nodes {
                out.push(TopologyLink {
                    a: node.to_string(),
                    b: zone_switch(&zone.id),
                    one_way_latency_ms: self.access(node),
                });
            }
        }
        for zone in &self.zones {
            out.push(TopologyLink {
                a: zone_switch(&zone.id),
                b: CORE_SWITCH.to_owned(),
                one_way_latency_ms: zone.uplink_ms,
            });
        }
        out
    }

    pub fn link_latency(&self, link: &LinkRef) -> Result<f64, ClusterError> {
        match link {
            LinkRef::Uplink(zone) => self
                .zones
                .iter()
                .find(|z| &z.id == zone)
                .map(|z| z.uplink_ms)
                .ok_or_else(|| ClusterError::UnknownLink(link.to_string())),
            LinkRef::Access(node) => {
                if self.contains_node(node) {
                    Ok(self.access(node))
                } else {
                    Err(ClusterError::UnknownLink(link.to_string()))
                }
            }
        }
    }

    /// Sets the one-way latency of a link.
    pub fn set_link_latency(&mut self, link: &LinkRef, latency_ms: f64) -> Result<(), ClusterError> {
        check_latency(latency_ms, &link.to_string())?;
        match link {
            LinkRef::Uplink(zone) => {
                let z = self
                    .zones
                    .iter_mut()
                    .find(|z| &z.id == zone)
                    .ok_or_else(|| ClusterError::UnknownLink(link.to_string()))?;
                z.uplink_ms = latency_ms;
            }
            LinkRef::Access(node) => {
                if !self.contains_node(node) {
                    return Err(ClusterError::UnknownLink(link.to_string()));
                }
                self.access_overrides.insert(node.clone(), latency_ms);
            }
        }
        Ok(())
    }
}

fn check_latency(value: f64, what: &str) -> Result<(), ClusterError> {
    if value.is_finite() && value >= 0.0 {
        Ok(())
    } else {
        Err(ClusterError::InvalidTopology(format!(
            "latency for {what} must be finite and >= 0, got {value}"
        )))
    }
}
