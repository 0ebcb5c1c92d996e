//! Continuous rescheduling: every running pod is periodically dry-run through
//! the scheduler against a snapshot without itself, and evicted when the
//! scheduler would now put it elsewhere.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cluster::{ClusterError, ClusterState, NodeId, PodId};
use crate::scheduler::{ScheduleOutcome, Scheduler, SchedulerError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MonitorConfig {
    pub loop_period_s: f64,
    /// Minimum pod age before it may be evicted.
    pub grace_s: f64,
    /// Minimum time between two evictions of the same pod.
    pub backoff_s: f64,
}

impl Default for MonitorConfig {
    fn default() -> Self {
        Self {
            loop_period_s: 10.0,
            grace_s: 120.0,
            backoff_s: 120.0,
        }
    }
}

impl MonitorConfig {
    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [
            ("loop_period_s", self.loop_period_s),
            ("grace_s", self.grace_s),
            ("backoff_s", self.backoff_s),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(format!("{name} must be > 0, got {v}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SimulationResult {
    Node(NodeId),
    Unschedulable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Eviction {
    pub time: f64,
    pub pod: PodId,
    pub from_node: NodeId,
    pub target_node: NodeId,
}

/// Where the scheduler would place `pod` if it were submitted now.
///
/// Runs against a snapshot that excludes the pod; live state is not touched and
/// preemption plans count as their target node without being applied.
pub fn simulate_scheduling<R: Rng + ?Sized>(
    state: &ClusterState,
    pod: &PodId,
    scheduler: &Scheduler,
    now: f64,
    rng: &mut R,
) -> Result<SimulationResult, ClusterError> {
    let instance = state.pod(pod).ok_or_else(|| ClusterError::PodNotFound(pod.clone()))?;
    if !instance.is_running() {
        return Err(ClusterError::NotRunning(pod.clone()));
    }
    let snapshot = state.snapshot(Some(pod), now)?;
    let mut candidate = instance.clone();
    candidate.assignment = None;
    candidate.status = crate::cluster::PodStatus::Pending;
    Ok(match scheduler.schedule_one(&snapshot, &candidate, rng) {
        ScheduleOutcome::Assigned(n) | ScheduleOutcome::Preempted { node: n, .. } => SimulationResult::Node(n),
        ScheduleOutcome::Unschedulable(_) => SimulationResult::Unschedulable,
    })
}

#[derive(Debug, Clone, Default)]
pub struct StateMonitor {
    config: MonitorConfig,
    /// Time of the most recent eviction per pod; never cleared.
    backoff: BTreeMap<PodId, f64>,
    /// Pods bound to their node, never evaluated.
    pinned: BTreeSet<PodId>,
}

impl StateMonitor {
    pub fn new(config: MonitorConfig) -> Self {
        Self {
            config,
            backoff: BTreeMap::new(),
            pinned: BTreeSet::new(),
        }
    }

    pub fn config(&self) -> &MonitorConfig {
        &self.config
    }

    /// Excludes a pod from every future pass.
    pub fn pin(&mut self, pod: PodId) {
        self.pinned.insert(pod);
    }

    pub fn last_eviction(&self, pod: &PodId) -> Option<f64> {
        self.backoff.get(pod).copied()
    }

    /// One pass over nodes in id order and their pods in id order. A pod is
    /// evicted when the dry run picks another node, it is older than the grace
    /// period and its last eviction is older than the backoff.
    ///
    /// `after_evict` runs right after each eviction, before the next pod is
    /// evaluated; the event loop uses it to let the live scheduler pick the pod up.
    pub fn pass<R, F>(
        &mut self,
        state: &mut ClusterState,
        scheduler: &Scheduler,
        now: f64,
        rng: &mut R,
        mut after_evict: F,
    ) -> Result<Vec<Eviction>, SchedulerError>
    where
        R: Rng + ?Sized,
        F: FnMut(&mut ClusterState, &mut R) -> Result<(), SchedulerError>,
    {
        let mut evictions = Vec::new();
        let nodes: Vec<NodeId> = state.nodes().map(|n| n.id.clone()).collect();
        for node in nodes {
            let pods: Vec<(PodId, f64)> = state.running_on(&node).map(|p| (p.id.clone(), p.start_time)).collect();
            for (pod, start) in pods {
                if self.pinned.contains(&pod) {
                    continue;
                }
                if now - start <= self.config.grace_s {
                    continue;
                }
                if self.backoff.get(&pod).is_some_and(|&t| now - t <= self.config.backoff_s) {
                    continue;
                }
                let SimulationResult::Node(target) = simulate_scheduling(state, &pod, scheduler, now, rng)? else {
                    continue;
                };
                if target == node {
                    continue;
                }
                state.evict(&pod, now)?;
                self.backoff.insert(pod.clone(), now);
                evictions.push(Eviction {
                    time: now,
                    pod,
                    from_node: node.clone(),
                    target_node: target,
                });
                after_evict(state, rng)?;
            }
        }
        Ok(evictions)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::PodInstance;
    use crate::scheduler::tests::{rng, small_cluster};
    use crate::scheduler::{PluginKind, SchedulerConfig};

    fn baseline() -> Scheduler {
        Scheduler::new(SchedulerConfig::new(&[(PluginKind::Baseline, 1.0)])).unwrap()
    }

    fn pass(m: &mut StateMonitor, st: &mut ClusterState, s: &Scheduler, now: f64) -> Vec<Eviction> {
        m.pass(st, s, now, &mut rng(), |st, r| s.run_queue(st, now, r).map(|_| ())).unwrap()
    }

    /// Three pods crammed on n1 at t=0, n2 empty.
    fn crowded() -> ClusterState {
        let mut st = small_cluster(&[("n1", 1), ("n2", 1)]);
        for p in ["a", "b", "c"] {
            st.submit(PodInstance::new(p, "s", 200), 0.0).unwrap();
            st.apply_placement(&p.into(), &"n1".into(), 0.0).unwrap();
        }
        st
    }

    #[test]
    fn single_node_returns_current_node() {
        let mut st = small_cluster(&[("n1", 1)]);
        st.submit(PodInstance::new("a", "s", 100), 0.0).unwrap();
        st.apply_placement(&"a".into(), &"n1".into(), 0.0).unwrap();
        let r = simulate_scheduling(&st, &"a".into(), &baseline(), 10.0, &mut rng()).unwrap();
        assert_eq!(r, SimulationResult::Node("n1".into()));
    }

    #[test]
    fn overloaded_pod_prefers_empty_node_and_dry_run_is_pure() {
        let st = crowded();
        let before = st.snapshot(None, 0.0).unwrap().digest();
        let direct = {
            let snap = st.snapshot(Some(&"a".into()), 5.0).unwrap();
            let mut p = st.pod(&"a".into()).unwrap().clone();
            p.assignment = None;
            p.status = crate::cluster::PodStatus::Pending;
            baseline().schedule_one(&snap, &p, &mut rng())
        };
        let r = simulate_scheduling(&st, &"a".into(), &baseline(), 5.0, &mut rng()).unwrap();
        assert_eq!(r, SimulationResult::Node("n2".into()));
        assert_eq!(direct, ScheduleOutcome::Assigned("n2".into()));
        assert_eq!(st.snapshot(None, 0.0).unwrap().digest(), before);
    }

    #[test]
    fn grace_period_blocks_young_pods() {
        let mut st = crowded();
        let mut m = StateMonitor::new(MonitorConfig::default());
        let s = baseline();
        assert!(pass(&mut m, &mut st, &s, 60.0).is_empty());
        let ev = pass(&mut m, &mut st, &s, 130.0);
        assert_eq!(ev.len(), 1);
        assert_eq!(ev[0].pod.as_str(), "a");
        assert_eq!(ev[0].target_node.as_str(), "n2");
        assert_eq!(m.last_eviction(&"a".into()), Some(130.0));
        assert_eq!(st.pod(&"a".into()).unwrap().assignment, Some("n2".into()));
    }

    #[test]
    fn pinned_pods_are_skipped() {
        let mut st = crowded();
        let mut m = StateMonitor::new(MonitorConfig::default());
        m.pin("a".into());
        let ev = pass(&mut m, &mut st, &baseline(), 130.0);
        assert_eq!(ev[0].pod.as_str(), "b");
        assert!(ev.iter().all(|e| e.pod.as_str() != "a"));
    }

    #[test]
    fn without_rescheduling_evicted_pods_stay_pending() {
        let mut st = crowded();
        let mut m = StateMonitor::new(MonitorConfig::default());
        let ev = m.pass(&mut st, &baseline(), 130.0, &mut rng(), |_, _| Ok(())).unwrap();
        // Each eviction leaves n1 lighter, but pending pods do not count anywhere.
        assert_eq!(ev.len(), 2);
        assert_eq!(st.queue().len(), 2);
    }

    #[test]
    fn optimal_pods_stay() {
        let mut st = small_cluster(&[("n1", 1), ("n2", 1)]);
        for (p, n) in [("a", "n1"), ("b", "n2")] {
            st.submit(PodInstance::new(p, "s", 200), 0.0).unwrap();
            st.apply_placement(&p.into(), &n.into(), 0.0).unwrap();
        }
        let mut m = StateMonitor::new(MonitorConfig::default());
        assert!(pass(&mut m, &mut st, &baseline(), 1000.0).is_empty());
    }

    #[test]
    fn backoff_blocks_repeat_eviction() {
        let mut st = crowded();
        let s = baseline();
        let mut m = StateMonitor::new(MonitorConfig::default());
        m.pass(&mut st, &s, 130.0, &mut rng(), |_, _| Ok(())).unwrap();
        // Put "a" and "b" straight back on the crowded node with an old start time.
        for p in ["a", "b"] {
            st.apply_placement(&p.into(), &"n1".into(), 0.0).unwrap();
        }
        let ev = m.pass(&mut st, &s, 200.0, &mut rng(), |_, _| Ok(())).unwrap();
        assert_eq!(ev.iter().map(|e| e.pod.as_str()).collect::<Vec<_>>(), ["c"]);
        let later = m.pass(&mut st, &s, 260.0, &mut rng(), |_, _| Ok(())).unwrap();
        assert!(later.iter().any(|e| e.pod.as_str() == "a"), "{later:?}");
    }
}
