//! Latency/metric-weighted replica selection through a chain of sequential
//! probabilistic rules.
//!
//! Rule `i` accepts with probability `P_i`; a request falls through to rule
//! `i+1` otherwise, and the last rule always accepts. With
//! `P_i = s_i / ∏_{j<i}(1 − P_j)` the overall chance of landing on replica `i`
//! is its normalized score `s_i`.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cluster::{ClusterSnapshot, NodeId, PodId};
use crate::telemetry::latency_scores;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum BalancerError {
    #[error("no scores given")]
    Empty,
    #[error("score {index} is negative or non-finite: {value}")]
    BadScore { index: usize, value: f64 },
}

/// `s = mv·mw + lv·lw`, clamped to [0,1].
pub fn replica_score(metric_score: f64, latency_score: f64, metric_weight: f64, latency_weight: f64) -> f64 {
    (metric_score * metric_weight + latency_score * latency_weight).clamp(0.0, 1.0)
}

/// Scales scores to sum 1; an all-zero vector becomes uniform.
pub fn normalize_scores(scores: &[f64]) -> Result<Vec<f64>, BalancerError> {
    if scores.is_empty() {
        return Err(BalancerError::Empty);
    }
    if let Some((index, &value)) = scores.iter().enumerate().find(|(_, v)| !v.is_finite() || **v < 0.0) {
        return Err(BalancerError::BadScore { index, value });
    }
    let total: f64 = scores.iter().sum();
    if total <= 0.0 {
        let n = scores.len() as f64;
        return Ok(vec![1.0 / n; scores.len()]);
    }
    Ok(scores.iter().map(|s| s / total).collect())
}

/// Per-rule acceptance probabilities for scores in rule order.
///
/// Scores are normalized first. `P_1 = s_1`, `P_i = s_i / ∏_{j<i}(1 − P_j)`,
/// `P_N = 1`.
pub fn chain_probabilities(scores: &[f64]) -> Result<Vec<f64>, BalancerError> {
    let s = normalize_scores(scores)?;
    let n = s.len();
    let mut out = Vec::with_capacity(n);
    let mut remaining = 1.0;
    for (i, &si) in s.iter().enumerate() {
        if i + 1 == n {
            out.push(1.0);
            break;
        }
        let p = if remaining > 0.0 { si / remaining } else { 0.0 };
        debug_assert!(p <= 1.0 + 1e-9, "rule probability {p} > 1");
        let p = p.clamp(0.0, 1.0);
        out.push(p);
        remaining *= 1.0 - p;
    }
    Ok(out)
}

/// Overall probability of each rule being the one that accepts.
pub fn selection_probabilities(rule_probs: &[f64]) -> Vec<f64> {
    let mut through = 1.0;
    rule_probs
        .iter()
        .map(|&p| {
            let q = through * p;
            through *= 1.0 - p;
            q
        })
        .collect()
}

/// Walks the rules in order and returns the index of the accepting one.
pub fn select_index<R: Rng + ?Sized>(rule_probs: &[f64], rng: &mut R) -> usize {
    let last = rule_probs.len() - 1;
    for (i, &p) in rule_probs[..last].iter().enumerate() {
        if rng.random::<f64>() < p {
            return i;
        }
    }
    last
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rule {
    pub replica: PodId,
    pub node: NodeId,
    pub score: f64,
    pub probability: f64,
}

/// Rules for one service, ordered by ascending score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleChain {
    pub rules: Vec<Rule>,
    pub refreshed_at: f64,
}

impl RuleChain {
    /// Builds the chain from raw scores; ties keep replica id order.
    pub fn build(mut scored: Vec<(PodId, NodeId, f64)>, now: f64) -> Result<Self, BalancerError> {
        scored.sort_by(|a, b| a.2.total_cmp(&b.2).then_with(|| a.0.cmp(&b.0)));
        let raw: Vec<f64> = scored.iter().map(|s| s.2).collect();
        let probs = chain_probabilities(&raw)?;
        let normalized = normalize_scores(&raw)?;
        Ok(Self {
            rules: scored
                .into_iter()
                .zip(probs)
                .zip(normalized)
                .map(|(((replica, node, _), probability), score)| Rule {
                    replica,
                    node,
                    score,
                    probability,
                })
                .collect(),
            refreshed_at: now,
        })
    }

    pub fn select<R: Rng + ?Sized>(&self, rng: &mut R) -> &Rule {
        let probs: Vec<f64> = self.rules.iter().map(|r| r.probability).collect();
        &self.rules[select_index(&probs, rng)]
    }

    /// Selection probability per replica.
    pub fn shares(&self) -> BTreeMap<PodId, f64> {
        let probs: Vec<f64> = self.rules.iter().map(|r| r.probability).collect();
        self.rules
            .iter()
            .zip(selection_probabilities(&probs))
            .map(|(r, q)| (r.replica.clone(), q))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BalancerMode {
    /// Every replica equally likely.
    Uniform,
    #[default]
    Weighted,
}

/// One client node's balancer. Chains are swapped whole on refresh.
#[derive(Debug, Clone)]
pub struct LoadBalancer {
    client: NodeId,
    mode: BalancerMode,
    chains: BTreeMap<String, Arc<RuleChain>>,
}

impl LoadBalancer {
    pub fn new(client: NodeId, mode: BalancerMode) -> Self {
        Self {
            client,
            mode,
            chains: BTreeMap::new(),
        }
    }

    pub fn client(&self) -> &NodeId {
        &self.client
    }

    pub fn chain(&self, service: &str) -> Option<&RuleChain> {
        self.chains.get(service).map(|c| c.as_ref())
    }

    /// Rebuilds the chain of every service in `services`.
    ///
    /// Metric scores come from the score board in one lookup per service;
    /// latency scores are recomputed from this balancer's client node. A
    /// service with no running replicas loses its chain.
    pub fn refresh(&mut self, snapshot: &ClusterSnapshot, services: &[String], now: f64) {
        for service in services {
            let replicas: Vec<(PodId, NodeId)> = snapshot
                .replicas_of(service)
                .filter_map(|p| Some((p.id.clone(), p.assignment.clone()?)))
                .collect();
            if replicas.is_empty() {
                self.chains.remove(service);
                continue;
            }
            let scored: Vec<(PodId, NodeId, f64)> = match self.mode {
                BalancerMode::Uniform => replicas.into_iter().map(|(p, n)| (p, n, 1.0)).collect(),
                BalancerMode::Weighted => {
                    let board = snapshot.scoreboard().get(service);
                    let (mw, lw) = snapshot
                        .service(service)
                        .and_then(|s| s.metric.as_ref())
                        .map_or((0.5, 0.5), |m| (m.metric_weight, m.latency_weight));
                    let lv = latency_scores(&self.client, &replicas, snapshot.latency());
                    replicas
                        .into_iter()
                        .map(|(p, n)| {
                            let mv = board
                                .and_then(|b| b.replicas.get(&p))
                                .map_or(0.0, |r| r.metric_score);
                            let s = replica_score(mv, lv[&p], mw, lw);
                            (p, n, s)
                        })
                        .collect()
                }
            };
            let chain = RuleChain::build(scored, now).expect("replica scores are finite and non-negative");
            self.chains.insert(service.clone(), Arc::new(chain));
        }
    }

    pub fn select<R: Rng + ?Sized>(&self, service: &str, rng: &mut R) -> Option<&Rule> {
        Some(self.chains.get(service)?.select(rng))
    }
}
