//! RT-aware filtering, scoring and preemption.
//!
//! A node admits a pod when the summed RT utilization of its running pods plus
//! the pod's own stays within `cores × rt_runtime_us / rt_period_us`.

use std::ops::Add;

use serde::Serialize;

use super::{FilterResult, Plugin, PluginKind, PreemptionPlan, ScoringContext};
use crate::cluster::{ClusterSnapshot, Node, NodeId, PodId, PodInstance, RtPolicy};

/// Slack for floating-point sums when comparing against the quota.
pub const QUOTA_TOLERANCE: f64 = 1e-9;

/// CPU share claimed by RT processes, in cores.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct RtUtilization {
    /// Σ runtime/period over SCHED_DEADLINE processes.
    pub deadline_sum: f64,
    /// Σ declared requests over SCHED_FIFO processes.
    pub fifo_sum: f64,
}

impl RtUtilization {
    pub fn value(&self) -> f64 {
        self.deadline_sum + self.fifo_sum
    }
}

impl Add for RtUtilization {
    type Output = Self;

    fn add(self, rhs: Self) -> Self {
        Self {
            deadline_sum: self.deadline_sum + rhs.deadline_sum,
            fifo_sum: self.fifo_sum + rhs.fifo_sum,
        }
    }
}

pub fn pod_rt_utilization(pod: &PodInstance) -> RtUtilization {
    let mut u = RtUtilization::default();
    for p in &pod.rt_processes {
        match p.policy {
            RtPolicy::Deadline { .. } => u.deadline_sum += p.policy.utilization(),
            RtPolicy::Fifo { .. } => u.fifo_sum += p.policy.utilization(),
        }
    }
    u
}

pub fn node_rt_utilization(node: &NodeId, snapshot: &ClusterSnapshot) -> RtUtilization {
    snapshot.stats(node).rt
}

/// `cores × rt_runtime_us / rt_period_us`.
pub fn rt_capacity(node: &Node) -> f64 {
    node.cores as f64 * node.rt_quota()
}

/// Whether `existing + pod ≤ capacity`.
pub fn fits(existing: f64, pod: f64, capacity: f64) -> bool {
    existing + pod <= capacity + QUOTA_TOLERANCE
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RealtimePlugin;

impl RealtimePlugin {
    fn plan_for_node(&self, pod: &PodInstance, pod_u: f64, node: &Node, snapshot: &ClusterSnapshot) -> Option<(Vec<PodId>, f64)> {
        let cap = rt_capacity(node);
        let mut used = node_rt_utilization(&node.id, snapshot).value();
        let mut cpu = snapshot.stats(&node.id).allocated_cpu;
        let mut victims: Vec<&PodInstance> = snapshot
            .running_on(&node.id)
            .filter(|p| p.is_realtime() && p.priority_class < pod.priority_class)
            .collect();
        victims.sort_by(|a, b| {
            a.priority_class
                .cmp(&b.priority_class)
                .then(pod_rt_utilization(a).value().total_cmp(&pod_rt_utilization(b).value()))
                .then(a.id.cmp(&b.id))
        });
        let mut chosen = Vec::new();
        let mut freed = 0.0;
        for v in victims {
            if fits(used, pod_u, cap) && cpu + pod.cpu_request <= node.cpu_capacity {
                break;
            }
            let vu = pod_rt_utilization(v).value();
            used -= vu;
            freed += vu;
            cpu -= v.cpu_request;
            chosen.push(v.id.clone());
        }
        let ok = fits(used, pod_u, cap) && cpu + pod.cpu_request <= node.cpu_capacity;
        (ok && !chosen.is_empty()).then_some((chosen, freed))
    }
}

impl Plugin for RealtimePlugin {
    fn kind(&self) -> PluginKind {
        PluginKind::Realtime
    }

    fn filter(&self, pod: &PodInstance, node: &Node, snapshot: &ClusterSnapshot) -> FilterResult {
        let pod_u = pod_rt_utilization(pod).value();
        if pod_u <= 0.0 {
            return FilterResult::Feasible;
        }
        let used = node_rt_utilization(&node.id, snapshot).value();
        let cap = rt_capacity(node);
        if fits(used, pod_u, cap) {
            FilterResult::Feasible
        } else {
            FilterResult::Infeasible(format!(
                "rt quota exceeded by {:.4} ({used:.4} + {pod_u:.4} > {cap:.4})",
                used + pod_u - cap
            ))
        }
    }

    fn post_filter(&self, pod: &PodInstance, snapshot: &ClusterSnapshot) -> Option<PreemptionPlan> {
        let pod_u = pod_rt_utilization(pod).value();
        if pod_u <= 0.0 {
            return None;
        }
        let mut best: Option<(usize, f64, NodeId, Vec<PodId>)> = None;
        for node in snapshot.nodes() {
            // Only nodes that could fit at all once RT is cleared are worth planning for.
            if pod_u > rt_capacity(node) + QUOTA_TOLERANCE {
                continue;
            }
            if let Some((victims, freed)) = self.plan_for_node(pod, pod_u, node, snapshot) {
                let key = (victims.len(), freed, node.id.clone());
                let better = match &best {
                    None => true,
                    Some((n, f, id, _)) => (key.0, key.1, &key.2) < (*n, *f, id),
                };
                if better {
                    best = Some((key.0, key.1, key.2, victims));
                }
            }
        }
        best.map(|(_, _, node, victims)| PreemptionPlan { node, victims })
    }

    fn score(&self, _pod: &PodInstance, node: &Node, ctx: &ScoringContext<'_>) -> Option<f64> {
        let used = node_rt_utilization(&node.id, ctx.snapshot).value();
        Some((1.0 - used / rt_capacity(node)).clamp(0.0, 1.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::{ClusterState, ProcessSelector, RtProcessSpec};
    use crate::scheduler::tests::{rng, small_cluster};
    use crate::scheduler::{ScheduleOutcome, Scheduler, SchedulerConfig};
    use proptest::prelude::*;

    fn rt_pod(id: &str, u: f64, prio: i32) -> PodInstance {
        let runtime = (u * 1_000_000.0).round() as u64;
        PodInstance::new(id, "rt", 10)
            .with_priority(prio)
            .with_rt_process(RtProcessSpec::deadline(ProcessSelector::Name(id.into()), runtime, 1_000_000, 1_000_000))
    }

    fn place(st: &mut ClusterState, pod: PodInstance, node: &str) {
        let id = pod.id.clone();
        st.submit(pod, 0.0).unwrap();
        st.apply_placement(&id, &node.into(), 0.0).unwrap();
    }

    #[test]
    fn utilization_examples() {
        assert!((pod_rt_utilization(&rt_pod("h", 0.6, 0)).value() - 0.6).abs() < 1e-12);
        assert_eq!(pod_rt_utilization(&PodInstance::new("r", "s", 1)).value(), 0.0);
        let mixed = PodInstance::new("m", "s", 1)
            .with_rt_process(RtProcessSpec::deadline(ProcessSelector::Pid(1), 200_000, 1_000_000, 1_000_000))
            .with_rt_process(RtProcessSpec::fifo(ProcessSelector::Pid(2), 50, 0.25));
        let u = pod_rt_utilization(&mixed);
        assert!((u.value() - 0.45).abs() < 1e-12);
        assert!((u.fifo_sum - 0.25).abs() < 1e-12);
    }

    #[test]
    fn node_utilization_is_additive() {
        let mut st = small_cluster(&[("n1", 1)]);
        assert_eq!(node_rt_utilization(&"n1".into(), &st.snapshot(None, 0.0).unwrap()).value(), 0.0);
        place(&mut st, rt_pod("a", 0.6, 0), "n1");
        place(&mut st, rt_pod("b", 0.2, 0), "n1");
        let u = node_rt_utilization(&"n1".into(), &st.snapshot(None, 0.0).unwrap()).value();
        assert!((u - 0.8).abs() < 1e-12);
    }

    #[test]
    fn filter_examples() {
        let mut st = small_cluster(&[("n1", 1)]);
        place(&mut st, rt_pod("a", 0.6, 0), "n1");
        let snap = st.snapshot(None, 0.0).unwrap();
        let node = snap.node(&"n1".into()).unwrap();
        assert!(!RealtimePlugin.filter(&rt_pod("x", 0.6, 0), node, &snap).is_feasible());
        assert!(RealtimePlugin.filter(&rt_pod("y", 0.2, 0), node, &snap).is_feasible());
        place(&mut st, rt_pod("c", 0.35, 0), "n1");
        let snap = st.snapshot(None, 0.0).unwrap();
        let node = snap.node(&"n1".into()).unwrap();
        assert!(RealtimePlugin.filter(&PodInstance::new("reg", "s", 1), node, &snap).is_feasible());
    }

    #[test]
    fn score_endpoints() {
        let mut st = small_cluster(&[("n1", 1), ("n2", 1)]);
        place(&mut st, rt_pod("a", 0.95, 0), "n2");
        let snap = st.snapshot(None, 0.0).unwrap();
        let ids = ["n1".into(), "n2".into()];
        let ctx = ScoringContext {
            snapshot: &snap,
            candidates: &ids,
        };
        let p = PodInstance::new("r", "s", 1);
        assert_eq!(RealtimePlugin.score(&p, snap.node(&ids[0]).unwrap(), &ctx), Some(1.0));
        assert!(RealtimePlugin.score(&p, snap.node(&ids[1]).unwrap(), &ctx).unwrap() < 1e-9);
    }

    #[test]
    fn rt_pods_round_robin_over_identical_nodes() {
        let names: Vec<String> = (0..8).map(|i| format!("n{i}")).collect();
        let nodes: Vec<(&str, u32)> = names.iter().map(|n| (n.as_str(), 4)).collect();
        let mut st = small_cluster(&nodes);
        for i in 0..40 {
            st.submit(rt_pod(&format!("rt{i:02}"), 0.1, 0), 0.0).unwrap();
        }
        let s = Scheduler::new(SchedulerConfig::new(&[(PluginKind::Realtime, 1.0)])).unwrap();
        s.run_queue(&mut st, 0.0, &mut rng()).unwrap();
        for n in st.nodes() {
            assert_eq!(st.running_on(&n.id).count(), 5);
        }
    }

    /// Smallest victim set by brute force over all subsets of lower-priority RT pods.
    fn brute_force_plan(pod: &PodInstance, node: &Node, snap: &ClusterSnapshot) -> Option<(usize, f64)> {
        let cands: Vec<&PodInstance> = snap
            .running_on(&node.id)
            .filter(|p| p.is_realtime() && p.priority_class < pod.priority_class)
            .collect();
        let used = node_rt_utilization(&node.id, snap).value();
        let need = pod_rt_utilization(pod).value();
        let mut best: Option<(usize, f64)> = None;
        for mask in 1u32..(1 << cands.len()) {
            let chosen: Vec<_> = (0..cands.len()).filter(|i| mask & (1 << i) != 0).collect();
            let freed: f64 = chosen.iter().map(|&i| pod_rt_utilization(cands[i]).value()).sum();
            if fits(used - freed, need, rt_capacity(node)) {
                let k = (chosen.len(), freed);
                if best.is_none_or(|b| k.0 < b.0 || (k.0 == b.0 && k.1 < b.1)) {
                    best = Some(k);
                }
            }
        }
        best
    }

    #[test]
    fn preemption_plan_matches_brute_force_minimum() {
        // Headroom 0.35 next to two evictable 0.2 pods: one eviction leaves 0.55,
        // short of 0.6, so both must go.
        let mut st = small_cluster(&[("n1", 1)]);
        place(&mut st, rt_pod("keep", 0.2, 20), "n1");
        place(&mut st, rt_pod("v1", 0.2, 1), "n1");
        place(&mut st, rt_pod("v2", 0.2, 1), "n1");
        let snap = st.snapshot(None, 0.0).unwrap();
        let cand = rt_pod("cand", 0.6, 10);
        let plan = RealtimePlugin.post_filter(&cand, &snap).unwrap();
        assert_eq!(plan.victims.len(), 2);
        let bf = brute_force_plan(&cand, snap.node(&"n1".into()).unwrap(), &snap).unwrap();
        assert_eq!(bf.0, plan.victims.len());

        // With 0.45 headroom a single victim is enough.
        let mut st = small_cluster(&[("n1", 1)]);
        place(&mut st, rt_pod("keep", 0.1, 20), "n1");
        place(&mut st, rt_pod("v1", 0.2, 1), "n1");
        place(&mut st, rt_pod("v2", 0.2, 1), "n1");
        let snap = st.snapshot(None, 0.0).unwrap();
        let plan = RealtimePlugin.post_filter(&cand, &snap).unwrap();
        assert_eq!(plan.victims, vec![PodId::new("v1")]);
    }

    #[test]
    fn no_lower_priority_victims_means_unschedulable() {
        let mut st = small_cluster(&[("n1", 1)]);
        place(&mut st, rt_pod("a", 0.6, 10), "n1");
        let s = Scheduler::new(SchedulerConfig::new(&[(PluginKind::Realtime, 1.0)])).unwrap();
        let snap = st.snapshot(None, 0.0).unwrap();
        let out = s.schedule_one(&snap, &rt_pod("b", 0.6, 10), &mut rng());
        assert!(matches!(out, ScheduleOutcome::Unschedulable(_)));
    }

    #[test]
    fn victims_return_to_queue_tail() {
        let mut st = small_cluster(&[("n1", 1)]);
        place(&mut st, rt_pod("low", 0.6, 0), "n1");
        st.submit(rt_pod("other", 0.01, 0), 0.0).unwrap();
        st.submit(rt_pod("high", 0.6, 5), 0.0).unwrap();
        let s = Scheduler::new(SchedulerConfig::new(&[(PluginKind::Realtime, 1.0)])).unwrap();
        let (id, out) = s.schedule_next(&mut st, 1.0, &mut rng()).unwrap().unwrap();
        assert_eq!(id.as_str(), "high");
        assert_eq!(
            out,
            ScheduleOutcome::Preempted {
                victims: vec!["low".into()],
                node: "n1".into()
            }
        );
        assert_eq!(st.queue().back().unwrap().as_str(), "low");
    }

    const GRID: [f64; 5] = [0.1, 0.25, 0.4, 0.6, 0.9];

    proptest! {
        #[test]
        fn feasible_set_matches_direct_evaluation(
            cores in prop::collection::vec(1u32..3, 1..=3),
            placed in prop::collection::vec((0usize..5, 0usize..3), 0..5),
            cand in 0usize..5,
        ) {
            let names: Vec<String> = (0..cores.len()).map(|i| format!("n{i}")).collect();
            let nodes: Vec<(&str, u32)> = names.iter().zip(&cores).map(|(n, c)| (n.as_str(), *c)).collect();
            let mut st = small_cluster(&nodes);
            let mut sums = vec![0.0; cores.len()];
            for (i, (u, n)) in placed.iter().enumerate() {
                let n = n % cores.len();
                sums[n] += GRID[*u];
                place(&mut st, rt_pod(&format!("p{i}"), GRID[*u], 0), &names[n]);
            }
            let snap = st.snapshot(None, 0.0).unwrap();
            let pod = rt_pod("cand", GRID[cand], 0);
            for (i, name) in names.iter().enumerate() {
                let node = snap.node(&name.as_str().into()).unwrap();
                let plugin = RealtimePlugin.filter(&pod, node, &snap).is_feasible();
                let direct = sums[i] + GRID[cand] <= cores[i] as f64 * 0.95 + 1e-9;
                prop_assert_eq!(plugin, direct);
            }
        }

        #[test]
        fn adding_rt_pod_never_raises_score(us in prop::collection::vec(0usize..5, 0..4), extra in 0usize..5) {
            let mut st = small_cluster(&[("n1", 4)]);
            for (i, u) in us.iter().enumerate() {
                place(&mut st, rt_pod(&format!("p{i}"), GRID[*u], 0), "n1");
            }
            let ids = ["n1".into()];
            let before = {
                let snap = st.snapshot(None, 0.0).unwrap();
                let ctx = ScoringContext { snapshot: &snap, candidates: &ids };
                RealtimePlugin.score(&PodInstance::new("r", "s", 1), snap.node(&ids[0]).unwrap(), &ctx).unwrap()
            };
            place(&mut st, rt_pod("extra", GRID[extra], 0), "n1");
            let snap = st.snapshot(None, 0.0).unwrap();
            let ctx = ScoringContext { snapshot: &snap, candidates: &ids };
            let after = RealtimePlugin.score(&PodInstance::new("r", "s", 1), snap.node(&ids[0]).unwrap(), &ctx).unwrap();
            prop_assert!(after <= before);
        }
    }
}
