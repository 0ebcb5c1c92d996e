//! Plugin-driven scheduling: queue sort, Filter → PostFilter → Score, weighted
//! score combination and node selection.

pub mod baseline;
pub mod dependencies;
pub mod location;
pub mod realtime;

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cluster::{ClusterError, ClusterSnapshot, ClusterState, Node, NodeId, PodId, PodInstance};

pub use baseline::BaselinePlugin;
pub use dependencies::DependenciesPlugin;
pub use location::LocationAffinityPlugin;
pub use realtime::RealtimePlugin;

/// Combined scores closer than this are considered tied.
pub const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum SchedulerError {
    #[error("plugin weight for {plugin} must be > 0, got {weight}")]
    BadWeight { plugin: PluginKind, weight: f64 },
    #[error("plugin {0} listed twice")]
    DuplicatePlugin(PluginKind),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PluginKind {
    Baseline,
    Realtime,
    Dependencies,
    LocationAffinity,
}

impl fmt::Display for PluginKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PluginKind::Baseline => "baseline",
            PluginKind::Realtime => "realtime",
            PluginKind::Dependencies => "dependencies",
            PluginKind::LocationAffinity => "location-affinity",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PluginEntry {
    pub name: PluginKind,
    #[serde(default = "default_weight")]
    pub weight: f64,
}

fn default_weight() -> f64 {
    1.0
}

/// How equally scored nodes are separated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieBreak {
    /// Smallest node id wins.
    #[default]
    Lexicographic,
    /// Uniform pick among the tied nodes from the seeded generator.
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchedulerConfig {
    pub plugins: Vec<PluginEntry>,
    #[serde(default)]
    pub tie_break: TieBreak,
    /// Maximum age of a metric sample before it counts as stale.
    #[serde(default = "default_metric_max_age")]
    pub metric_max_age_s: f64,
}

fn default_metric_max_age() -> f64 {
    90.0
}

impl SchedulerConfig {
    pub fn new(plugins: &[(PluginKind, f64)]) -> Self {
        Self {
            plugins: plugins
                .iter()
                .map(|&(name, weight)| PluginEntry { name, weight })
                .collect(),
            tie_break: TieBreak::Lexicographic,
            metric_max_age_s: default_metric_max_age(),
        }
    }

    pub fn with_tie_break(mut self, tie_break: TieBreak) -> Self {
        self.tie_break = tie_break;
        self
    }

    pub fn validate(&self) -> Result<(), SchedulerError> {
        let mut seen = std::collections::BTreeSet::new();
        for p in &self.plugins {
            if !(p.weight.is_finite() && p.weight > 0.0) {
                return Err(SchedulerError::BadWeight {
                    plugin: p.name,
                    weight: p.weight,
                });
            }
            if !seen.insert(p.name) {
                return Err(SchedulerError::DuplicatePlugin(p.name));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FilterResult {
    Feasible,
    Infeasible(String),
}

impl FilterResult {
    pub fn is_feasible(&self) -> bool {
        matches!(self, FilterResult::Feasible)
    }
}

/// Victims to evict on `node` so the pod fits there.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreemptionPlan {
    pub node: NodeId,
    pub victims: Vec<PodId>,
}

/// What a plugin sees while scoring one node.
#[derive(Debug, Clone, Copy)]
pub struct ScoringContext<'a> {
    pub snapshot: &'a ClusterSnapshot,
    /// Nodes that survived filtering, in id order.
    pub candidates: &'a [NodeId],
}

pub trait Plugin: fmt::Debug + Send + Sync {
    fn kind(&self) -> PluginKind;

    fn filter(&self, _pod: &PodInstance, _node: &Node, _snapshot: &ClusterSnapshot) -> FilterResult {
        FilterResult::Feasible
    }

    fn post_filter(&self, _pod: &PodInstance, _snapshot: &ClusterSnapshot) -> Option<PreemptionPlan> {
        None
    }

    /// Score in [0,1]; `None` when the plugin has no Score extension point.
    fn score(&self, _pod: &PodInstance, _node: &Node, _ctx: &ScoringContext<'_>) -> Option<f64> {
        None
    }
}

/// Allocated requests plus the pod's request must fit the node's CPU capacity.
pub fn cpu_fit(pod: &PodInstance, node: &Node, snapshot: &ClusterSnapshot) -> FilterResult {
    let allocated = snapshot.stats(&node.id).allocated_cpu;
    if allocated + pod.cpu_request <= node.cpu_capacity {
        FilterResult::Feasible
    } else {
        FilterResult::Infeasible(format!(
            "insufficient cpu: {allocated}m + {}m > {}m",
            pod.cpu_request, node.cpu_capacity
        ))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleOutcome {
    Assigned(NodeId),
    Unschedulable(String),
    Preempted { victims: Vec<PodId>, node: NodeId },
}

impl ScheduleOutcome {
    /// Node the pod ends up on, if any.
    pub fn node(&self) -> Option<&NodeId> {
        match self {
            ScheduleOutcome::Assigned(n) | ScheduleOutcome::Preempted { node: n, .. } => Some(n),
            ScheduleOutcome::Unschedulable(_) => None,
        }
    }
}

#[derive(Debug)]
pub struct Scheduler {
    config: SchedulerConfig,
    plugins: Vec<(Box<dyn Plugin>, f64)>,
}

impl Scheduler {
    pub fn new(config: SchedulerConfig) -> Result<Self, SchedulerError> {
        config.validate()?;
        let plugins = config
            .plugins
            .iter()
            .map(|p| {
                let plugin: Box<dyn Plugin> = match p.name {
                    PluginKind::Baseline => Box::new(BaselinePlugin::default()),
                    PluginKind::Realtime => Box::new(RealtimePlugin),
                    PluginKind::Dependencies => Box::new(DependenciesPlugin {
                        metric_max_age_s: config.metric_max_age_s,
                    }),
                    PluginKind::LocationAffinity => Box::new(LocationAffinityPlugin),
                };
                (plugin, p.weight)
            })
            .collect();
        Ok(Self { config, plugins })
    }

    pub fn config(&self) -> &SchedulerConfig {
        &self.config
    }

    fn feasible(&self, pod: &PodInstance, node: &Node, snapshot: &ClusterSnapshot) -> FilterResult {
        let fit = cpu_fit(pod, node, snapshot);
        if !fit.is_feasible() {
            return fit;
        }
        for (plugin, _) in &self.plugins {
            let r = plugin.filter(pod, node, snapshot);
            if !r.is_feasible() {
                return r;
            }
        }
        FilterResult::Feasible
    }

    /// Weight-normalized combined score of every candidate, in candidate order.
    pub fn combined_scores(&self, pod: &PodInstance, snapshot: &ClusterSnapshot, candidates: &[NodeId]) -> Vec<f64> {
        let ctx = ScoringContext { snapshot, candidates };
        let mut totals = vec![0.0; candidates.len()];
        let mut weight_sum = 0.0;
        for (plugin, weight) in &self.plugins {
            let mut contributed = false;
            for (total, id) in totals.iter_mut().zip(candidates) {
                let node = snapshot.node(id).expect("candidate node exists");
                if let Some(s) = plugin.score(pod, node, &ctx) {
                    *total += weight * s.clamp(0.0, 1.0);
                    contributed = true;
                }
            }
            if contributed {
                weight_sum += weight;
            }
        }
        if weight_sum > 0.0 {
            totals.iter_mut().for_each(|t| *t /= weight_sum);
        }
        totals
    }

    /// Schedules one pod against a snapshot without touching live state.
    pub fn schedule_one<R: Rng + ?Sized>(
        &self,
        snapshot: &ClusterSnapshot,
        pod: &PodInstance,
        rng: &mut R,
    ) -> ScheduleOutcome {
        if snapshot.nodes().next().is_none() {
            return ScheduleOutcome::Unschedulable("no nodes".into());
        }
        let mut reasons = Vec::new();
        let candidates: Vec<NodeId> = snapshot
            .nodes()
            .filter(|n| match self.feasible(pod, n, snapshot) {
                FilterResult::Feasible => true,
                FilterResult::Infeasible(why) => {
                    reasons.push(format!("{}: {why}", n.id));
                    false
                }
            })
            .map(|n| n.id.clone())
            .collect();
        if candidates.is_empty() {
            for (plugin, _) in &self.plugins {
                if let Some(plan) = plugin.post_filter(pod, snapshot) {
                    if self.plan_is_sound(pod, &plan, snapshot) {
                        return ScheduleOutcome::Preempted {
                            victims: plan.victims,
                            node: plan.node,
                        };
                    }
                }
            }
            return ScheduleOutcome::Unschedulable(reasons.join("; "));
        }
        let scores = self.combined_scores(pod, snapshot, &candidates);
        let best = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let tied: Vec<usize> = (0..candidates.len())
            .filter(|&i| best - scores[i] <= TIE_TOLERANCE)
            .collect();
        let pick = match self.config.tie_break {
            TieBreak::Lexicographic => tied[0],
            TieBreak::Random => tied[rng.random_range(0..tied.len())],
        };
        ScheduleOutcome::Assigned(candidates[pick].clone())
    }

    fn plan_is_sound(&self, pod: &PodInstance, plan: &PreemptionPlan, snapshot: &ClusterSnapshot) -> bool {
        if plan.victims.is_empty() {
            return false;
        }
        let lower = plan.victims.iter().all(|v| {
            snapshot
                .pod(v)
                .is_some_and(|p| p.priority_class < pod.priority_class && p.assignment.as_ref() == Some(&plan.node))
        });
        if !lower {
            return false;
        }
        let after = snapshot.without(&plan.victims);
        after
            .node(&plan.node)
            .is_some_and(|n| self.feasible(pod, n, &after).is_feasible())
    }

    /// Picks the next pod by queue sort: highest priority class first, FIFO within a class.
    pub fn next_in_queue(state: &ClusterState) -> Option<PodId> {
        let mut best: Option<(&PodId, i32)> = None;
        for id in state.queue() {
            let prio = state.pod(id).map_or(i32::MIN, |p| p.priority_class);
            if best.is_none_or(|(_, b)| prio > b) {
                best = Some((id, prio));
            }
        }
        best.map(|(id, _)| id.clone())
    }

    /// Schedules the next queued pod and applies the outcome to live state.
    pub fn schedule_next<R: Rng + ?Sized>(
        &self,
        state: &mut ClusterState,
        time: f64,
        rng: &mut R,
    ) -> Result<Option<(PodId, ScheduleOutcome)>, SchedulerError> {
        let Some(id) = Self::next_in_queue(state) else {
            return Ok(None);
        };
        let snapshot = state.snapshot(None, time)?;
        let pod = snapshot.pod(&id).expect("queued pod exists").clone();
        let outcome = self.schedule_one(&snapshot, &pod, rng);
        match &outcome {
            ScheduleOutcome::Assigned(node) => state.apply_placement(&id, node, time)?,
            ScheduleOutcome::Preempted { victims, node } => {
                for v in victims {
                    state.evict(v, time)?;
                }
                state.apply_placement(&id, node, time)?;
            }
            ScheduleOutcome::Unschedulable(_) => state.mark_unschedulable(&id, time)?,
        }
        Ok(Some((id, outcome)))
    }

    /// Drains the queue one pod at a time; each decision sees the previous ones.
    pub fn run_queue<R: Rng + ?Sized>(
        &self,
        state: &mut ClusterState,
        time: f64,
        rng: &mut R,
    ) -> Result<Vec<(PodId, ScheduleOutcome)>, SchedulerError> {
        let mut out = Vec::new();
        // Preemption can only push pods of strictly lower priority back, so the
        // loop terminates; the cap guards against plugin bugs.
        let cap = 64 * (state.queue().len() + state.pods().count() + 1);
        while let Some(step) = self.schedule_next(state, time, rng)? {
            out.push(step);
            if out.len() >= cap {
                log::warn!("scheduler queue did not drain after {cap} decisions");
                break;
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::cluster::{LatencyParams, Topology, Zone};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn small_cluster(nodes: &[(&str, u32)]) -> ClusterState {
        let zone = Zone {
            id: "Z".into(),
            uplink_ms: 0.1,
            nodes: nodes.iter().map(|(n, _)| NodeId::new(*n)).collect(),
        };
        let topo = Topology::new(vec![zone], LatencyParams::default()).unwrap();
        let ns = nodes
            .iter()
            .map(|(n, cores)| Node::new(*n, "Z").with_cores(*cores).with_cpu_capacity(1000 * *cores as u64))
            .collect();
        ClusterState::new(topo, ns).unwrap()
    }

    pub(crate) fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(1)
    }

    #[test]
    fn single_node_is_assigned() {
        let mut st = small_cluster(&[("n1", 1)]);
        st.submit(PodInstance::new("p", "s", 100), 0.0).unwrap();
        let s = Scheduler::new(SchedulerConfig::new(&[(PluginKind::Baseline, 1.0)])).unwrap();
        let snap = st.snapshot(None, 0.0).unwrap();
        let pod = snap.pod(&"p".into()).unwrap().clone();
        assert_eq!(s.schedule_one(&snap, &pod, &mut rng()), ScheduleOutcome::Assigned("n1".into()));
    }

    #[test]
    fn all_filtered_without_plan_is_unschedulable() {
        let mut st = small_cluster(&[("n1", 1), ("n2", 1)]);
        st.submit(PodInstance::new("big", "s", 5000), 0.0).unwrap();
        let s = Scheduler::new(SchedulerConfig::new(&[(PluginKind::Baseline, 1.0)])).unwrap();
        let snap = st.snapshot(None, 0.0).unwrap();
        let pod = snap.pod(&"big".into()).unwrap().clone();
        assert!(matches!(s.schedule_one(&snap, &pod, &mut rng()), ScheduleOutcome::Unschedulable(_)));
    }

    #[test]
    fn equal_scores_pick_smallest_id() {
        let mut st = small_cluster(&[("n2", 1), ("n1", 1)]);
        st.submit(PodInstance::new("p", "s", 100), 0.0).unwrap();
        let s = Scheduler::new(SchedulerConfig::new(&[(PluginKind::Baseline, 1.0)])).unwrap();
        let snap = st.snapshot(None, 0.0).unwrap();
        let pod = snap.pod(&"p".into()).unwrap().clone();
        assert_eq!(s.schedule_one(&snap, &pod, &mut rng()), ScheduleOutcome::Assigned("n1".into()));
    }

    #[test]
    fn empty_cluster_is_unschedulable() {
        let s = Scheduler::new(SchedulerConfig::new(&[])).unwrap();
        let empty = ClusterState::new(Topology::new(vec![], LatencyParams::default()).unwrap(), vec![]).unwrap();
        let pod = PodInstance::new("p", "s", 1);
        assert_eq!(
            s.schedule_one(&empty.snapshot(None, 0.0).unwrap(), &pod, &mut rng()),
            ScheduleOutcome::Unschedulable("no nodes".into())
        );
    }

    #[test]
    fn config_validation() {
        assert!(matches!(
            SchedulerConfig::new(&[(PluginKind::Baseline, 0.0)]).validate(),
            Err(SchedulerError::BadWeight { .. })
        ));
        assert!(matches!(
            SchedulerConfig::new(&[(PluginKind::Baseline, 1.0), (PluginKind::Baseline, 2.0)]).validate(),
            Err(SchedulerError::DuplicatePlugin(PluginKind::Baseline))
        ));
    }

    #[test]
    fn queue_is_sequential() {
        // Two pods, the second must see the first's placement.
        let mut st = small_cluster(&[("n1", 1), ("n2", 1)]);
        st.submit(PodInstance::new("a", "s", 100), 0.0).unwrap();
        st.submit(PodInstance::new("b", "s", 100), 0.0).unwrap();
        let s = Scheduler::new(SchedulerConfig::new(&[(PluginKind::Baseline, 1.0)])).unwrap();
        let out = s.run_queue(&mut st, 0.0, &mut rng()).unwrap();
        assert_eq!(out[0], ("a".into(), ScheduleOutcome::Assigned("n1".into())));
        assert_eq!(out[1], ("b".into(), ScheduleOutcome::Assigned("n2".into())));
        assert!(s.run_queue(&mut st, 1.0, &mut rng()).unwrap().is_empty());
    }

    #[test]
    fn queue_sorts_by_priority_then_fifo() {
        let mut st = small_cluster(&[("n1", 4)]);
        st.submit(PodInstance::new("low", "s", 1), 0.0).unwrap();
        st.submit(PodInstance::new("hi1", "s", 1).with_priority(5), 0.0).unwrap();
        st.submit(PodInstance::new("hi2", "s", 1).with_priority(5), 0.0).unwrap();
        let s = Scheduler::new(SchedulerConfig::new(&[(PluginKind::Baseline, 1.0)])).unwrap();
        let order: Vec<_> = s
            .run_queue(&mut st, 0.0, &mut rng())
            .unwrap()
            .into_iter()
            .map(|(id, _)| id.0)
            .collect();
        assert_eq!(order, ["hi1", "hi2", "low"]);
    }

    #[test]
    fn weight_scaling_preserves_choice() {
        let mut st = small_cluster(&[("n1", 1), ("n2", 1), ("n3", 1)]);
        st.submit(PodInstance::new("x", "s", 300), 0.0).unwrap();
        st.submit(PodInstance::new("y", "s", 100), 0.0).unwrap();
        st.apply_placement(&"x".into(), &"n1".into(), 0.0).unwrap();
        let snap = st.snapshot(None, 0.0).unwrap();
        let pod = snap.pod(&"y".into()).unwrap().clone();
        let pick = |w: f64| {
            let cfg = SchedulerConfig::new(&[(PluginKind::Baseline, w), (PluginKind::Realtime, 2.0 * w)]);
            Scheduler::new(cfg).unwrap().schedule_one(&snap, &pod, &mut rng())
        };
        assert_eq!(pick(1.0), pick(37.5));
    }
}
