//! Dependency-aware scoring.
//!
//! For each dependency of the pod, every running replica gets a quality score
//! from its normalized latency to the candidate node and its normalized
//! application metric. The load balancer's selection chain over those scores
//! defines a Markov chain whose stationary distribution is the expected share
//! of requests each replica receives; the dependency's contribution is the
//! share-weighted average replica score.

use std::collections::BTreeMap;

use super::{Plugin, PluginKind, ScoringContext};
use crate::cluster::{ClusterSnapshot, DependencyRef, Node, NodeId, PodId, PodInstance};
use crate::loadbalancer::{chain_probabilities, selection_probabilities};
use crate::markov::{stationary_distribution, MarkovMatrix};
use crate::telemetry::{metric_scores, normalize, Direction};

#[derive(Debug, Clone, Copy)]
pub struct DependenciesPlugin {
    pub metric_max_age_s: f64,
}

impl Default for DependenciesPlugin {
    fn default() -> Self {
        Self { metric_max_age_s: 90.0 }
    }
}

/// Running replicas of a service with their nodes, in pod id order.
fn replicas(snapshot: &ClusterSnapshot, service: &str) -> Vec<(PodId, NodeId)> {
    snapshot
        .replicas_of(service)
        .filter_map(|p| Some((p.id.clone(), p.assignment.clone()?)))
        .collect()
}

/// Lower-is-better latency score per host, normalized over every node hosting a
/// replica of any of the pod's dependencies plus the candidate itself.
fn host_latency_scores(pod: &PodInstance, candidate: &NodeId, snapshot: &ClusterSnapshot) -> BTreeMap<NodeId, f64> {
    let mut raw = BTreeMap::new();
    let lat = snapshot.latency();
    raw.insert(candidate.clone(), lat.get(candidate, candidate).unwrap_or(0.0));
    for dep in &pod.dependencies {
        for (_, host) in replicas(snapshot, &dep.target_service) {
            if let Some(l) = lat.get(candidate, &host) {
                raw.insert(host, l);
            }
        }
    }
    normalize(&raw, Direction::LowerIsBetter).unwrap_or_default()
}

impl DependenciesPlugin {
    /// Per-replica `latency·lw + metric·mw` for one dependency as seen from `candidate`.
    pub fn replica_scores(
        &self,
        pod: &PodInstance,
        candidate: &NodeId,
        dep: &DependencyRef,
        snapshot: &ClusterSnapshot,
    ) -> BTreeMap<PodId, f64> {
        let reps = replicas(snapshot, &dep.target_service);
        if reps.is_empty() {
            return BTreeMap::new();
        }
        let lv = host_latency_scores(pod, candidate, snapshot);
        let ids: Vec<PodId> = reps.iter().map(|(p, _)| p.clone()).collect();
        let spec = snapshot
            .service(&dep.target_service)
            .and_then(|s| s.metric.as_ref());
        let mv = metric_scores(
            &dep.target_service,
            &ids,
            snapshot.metrics(),
            spec,
            snapshot.time(),
            self.metric_max_age_s,
        );
        reps.iter()
            .map(|(p, host)| {
                let l = lv.get(host).copied().unwrap_or(0.0);
                (p.clone(), l * dep.latency_weight + mv[p] * dep.metric_weight)
            })
            .collect()
    }

    /// Node score in [0,1]: 1 for pods without dependencies, otherwise the
    /// dependency-weighted sum of stationary-share-weighted replica scores.
    pub fn node_score(&self, pod: &PodInstance, candidate: &NodeId, snapshot: &ClusterSnapshot) -> f64 {
        if pod.dependencies.is_empty() {
            return 1.0;
        }
        let total_weight: f64 = pod.dependencies.iter().map(|d| d.dep_weight).sum();
        if total_weight <= 0.0 {
            return 0.0;
        }
        let mut score = 0.0;
        for dep in &pod.dependencies {
            let scores = self.replica_scores(pod, candidate, dep, snapshot);
            if scores.is_empty() {
                log::warn!(
                    "pod {} depends on {} which has no running replicas",
                    pod.id,
                    dep.target_service
                );
                continue;
            }
            let values: Vec<f64> = scores.values().copied().collect();
            let pi = markov_matrix(&values)
                .and_then(|m| stationary_distribution(&m).ok())
                .unwrap_or_else(|| vec![1.0 / values.len() as f64; values.len()]);
            let avg: f64 = pi.iter().zip(&values).map(|(p, s)| p * s).sum();
            score += avg * dep.dep_weight / total_weight;
        }
        score.clamp(0.0, 1.0)
    }
}

/// Transition matrix of the load balancer's selection over replicas with the
/// given scores: every row is the per-request selection distribution, since
/// the next pick does not depend on the previous one.
pub fn markov_matrix(scores: &[f64]) -> Option<MarkovMatrix> {
    if scores.is_empty() {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
    let sorted: Vec<f64> = order.iter().map(|&i| scores[i]).collect();
    let mass = selection_probabilities(&chain_probabilities(&sorted).ok()?);
    let mut row = vec![0.0; scores.len()];
    for (k, &i) in order.iter().enumerate() {
        row[i] = mass[k];
    }
    // Re-normalize away rounding from the chain products.
    let s: f64 = row.iter().sum();
    row.iter_mut().for_each(|v| *v /= s);
    MarkovMatrix::identical_rows(&row).ok()
}

impl Plugin for DependenciesPlugin {
    fn kind(&self) -> PluginKind {
        PluginKind::Dependencies
    }

    fn score(&self, pod: &PodInstance, node: &Node, ctx: &ScoringContext<'_>) -> Option<f64> {
        Some(self.node_score(pod, &node.id, ctx.snapshot))
    }
}
