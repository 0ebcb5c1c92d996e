//! Latency matrix, application metric store, min-max normalization and the
//! per-service replica score board.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::cluster::{NodeId, PodId, Topology};
use crate::fogservice::MetricSpec;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum TelemetryError {
    #[error("cannot normalize an empty set of values")]
    Empty,
    #[error("non-finite value {value} for {key}")]
    NonFinite { key: String, value: f64 },
    #[error("sample for {pod} at t={time} is older than the latest one (t={latest})")]
    OutOfOrder { pod: PodId, time: f64, latest: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    #[default]
    LowerIsBetter,
    HigherIsBetter,
}

/// Min-max normalization onto [0,1] with the best value mapped to 1.0.
///
/// A degenerate range (all values equal) maps everything to 1.0.
pub fn normalize<K: Ord + Clone + std::fmt::Debug>(
    values: &BTreeMap<K, f64>,
    direction: Direction,
) -> Result<BTreeMap<K, f64>, TelemetryError> {
    if values.is_empty() {
        return Err(TelemetryError::Empty);
    }
    if let Some((k, v)) = values.iter().find(|(_, v)| !v.is_finite()) {
        return Err(TelemetryError::NonFinite {
            key: format!("{k:?}"),
            value: *v,
        });
    }
    let lo = values.values().copied().fold(f64::INFINITY, f64::min);
    let hi = values.values().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    Ok(values
        .iter()
        .map(|(k, &v)| {
            let s = if range <= 0.0 {
                1.0
            } else {
                match direction {
                    Direction::HigherIsBetter => (v - lo) / range,
                    Direction::LowerIsBetter => (hi - v) / range,
                }
            };
            (k.clone(), s.clamp(0.0, 1.0))
        })
        .collect())
}

/// All-pairs one-way latencies along the star path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyMatrix {
    nodes: Vec<NodeId>,
    values: Vec<f64>,
}

impl LatencyMatrix {
    pub fn from_topology(topology: &Topology) -> Self {
        let nodes: Vec<NodeId> = topology.node_ids().cloned().collect();
        let mut values = Vec::with_capacity(nodes.len() * nodes.len());
        for a in &nodes {
            for b in &nodes {
                values.push(topology.path_latency(a, b).expect("nodes come from the topology"));
            }
        }
        Self { nodes, values }
    }

    pub fn nodes(&self) -> &[NodeId] {
        &self.nodes
    }

    fn index(&self, n: &NodeId) -> Option<usize> {
        self.nodes.binary_search(n).ok()
    }

    /// One-way latency in ms, `None` for unknown nodes.
    pub fn get(&self, a: &NodeId, b: &NodeId) -> Option<f64> {
        let (i, j) = (self.index(a)?, self.index(b)?);
        Some(self.values[i * self.nodes.len() + j])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSample {
    pub value: f64,
    pub timestamp: f64,
}

/// Latest application metric sample per (service, pod).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricStore {
    samples: BTreeMap<String, BTreeMap<PodId, MetricSample>>,
}

impl MetricStore {
    /// Records a sample; timestamps must not go backwards per pod.
    pub fn record(&mut self, service: &str, pod: &PodId, value: f64, timestamp: f64) -> Result<(), TelemetryError> {
        if !value.is_finite() {
            return Err(TelemetryError::NonFinite {
                key: pod.to_string(),
                value,
            });
        }
        let per_service = self.samples.entry(service.to_owned()).or_default();
        if let Some(prev) = per_service.get(pod) {
            if timestamp < prev.timestamp {
                return Err(TelemetryError::OutOfOrder {
                    pod: pod.clone(),
                    time: timestamp,
                    latest: prev.timestamp,
                });
            }
        }
        per_service.insert(pod.clone(), MetricSample { value, timestamp });
        Ok(())
    }

    pub fn latest(&self, service: &str, pod: &PodId) -> Option<MetricSample> {
        self.samples.get(service)?.get(pod).copied()
    }

    pub fn remove_pod(&mut self, service: &str, pod: &PodId) {
        if let Some(m) = self.samples.get_mut(service) {
            m.remove(pod);
        }
    }
}

/// Normalized metric score per replica.
///
/// Without a metric spec every replica scores 1.0. Replicas whose latest sample
/// is missing or older than `max_age_s` score 0.0 and are left out of the
/// normalization range.
pub fn metric_scores(
    service: &str,
    replicas: &[PodId],
    store: &MetricStore,
    spec: Option<&MetricSpec>,
    now: f64,
    max_age_s: f64,
) -> BTreeMap<PodId, f64> {
    let Some(spec) = spec else {
        return replicas.iter().map(|r| (r.clone(), 1.0)).collect();
    };
    let fresh: BTreeMap<PodId, f64> = replicas
        .iter()
        .filter_map(|r| {
            let s = store.latest(service, r)?;
            (now - s.timestamp <= max_age_s).then(|| (r.clone(), s.value))
        })
        .collect();
    let normalized = normalize(&fresh, spec.direction).unwrap_or_default();
    replicas
        .iter()
        .map(|r| (r.clone(), normalized.get(r).copied().unwrap_or(0.0)))
        .collect()
}

/// Lower-is-better latency score of each replica as seen from `reference`.
pub fn latency_scores(
    reference: &NodeId,
    replicas: &[(PodId, NodeId)],
    latency: &LatencyMatrix,
) -> BTreeMap<PodId, f64> {
    let raw: BTreeMap<PodId, f64> = replicas
        .iter()
        .map(|(p, n)| (p.clone(), latency.get(reference, n).unwrap_or(f64::INFINITY)))
        .collect();
    match normalize(&raw, Direction::LowerIsBetter) {
        Ok(m) => m,
        // Unreachable replicas (unknown node) get the worst score.
        Err(_) => {
            let finite: BTreeMap<PodId, f64> = raw.iter().filter(|(_, v)| v.is_finite()).map(|(k, v)| (k.clone(), *v)).collect();
            let norm = normalize(&finite, Direction::LowerIsBetter).unwrap_or_default();
            raw.keys().map(|k| (k.clone(), norm.get(k).copied().unwrap_or(0.0))).collect()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplicaScore {
    pub metric_score: f64,
    pub latency_score: f64,
    /// `metric_score * mw + latency_score * lw`.
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceScores {
    pub refreshed_at: f64,
    pub reference: NodeId,
    pub replicas: BTreeMap<PodId, ReplicaScore>,
}

/// Per-service normalized replica scores, the status section a load balancer reads.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReplicaScoreBoard {
    services: BTreeMap<String, ServiceScores>,
}

impl ReplicaScoreBoard {
    pub fn get(&self, service: &str) -> Option<&ServiceScores> {
        self.services.get(service)
    }

    pub fn services(&self) -> impl Iterator<Item = (&str, &ServiceScores)> {
        self.services.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn remove(&mut self, service: &str) {
        self.services.remove(service);
    }

    /// Recomputes one service's entry. With no running replicas the entry is dropped.
    #[allow(clippy::too_many_arguments)]
    pub fn refresh(
        &mut self,
        service: &str,
        replicas: &[(PodId, NodeId)],
        reference: &NodeId,
        latency: &LatencyMatrix,
        metrics: &MetricStore,
        spec: Option<&MetricSpec>,
        now: f64,
        max_age_s: f64,
    ) {
        if replicas.is_empty() {
            self.services.remove(service);
            return;
        }
        let ids: Vec<PodId> = replicas.iter().map(|(p, _)| p.clone()).collect();
        let mv = metric_scores(service, &ids, metrics, spec, now, max_age_s);
        let lv = latency_scores(reference, replicas, latency);
        let (mw, lw) = spec.map_or((0.5, 0.5), |s| (s.metric_weight, s.latency_weight));
        let scores = ids
            .iter()
            .map(|id| {
                let (m, l) = (mv[id], lv[id]);
                (
                    id.clone(),
                    ReplicaScore {
                        metric_score: m,
                        latency_score: l,
                        score: crate::loadbalancer::replica_score(m, l, mw, lw),
                    },
                )
            })
            .collect();
        self.services.insert(
            service.to_owned(),
            ServiceScores {
                refreshed_at: now,
                reference: reference.clone(),
                replicas: scores,
            },
        );
    }

    /// Writes `service,pod,score,timestamp` rows.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["service", "pod", "score", "timestamp"])?;
        for (service, entry) in &self.services {
            for (pod, s) in &entry.replicas {
                w.write_record([
                    service.as_str(),
                    pod.as_str(),
                    &s.score.to_string(),
                    &entry.refreshed_at.to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}
