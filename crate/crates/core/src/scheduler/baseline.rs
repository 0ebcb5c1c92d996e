use super::{Plugin, PluginKind, ScoringContext};
use crate::cluster::{Node, PodInstance};

/// Balanced-allocation scoring used for the default-scheduler comparison:
/// favours nodes with free CPU after placement and few pods relative to the
/// busiest candidate.
#[derive(Debug, Clone, Copy)]
pub struct BaselinePlugin {
    pub cpu_weight: f64,
    pub pod_count_weight: f64,
}

impl Default for BaselinePlugin {
    fn default() -> Self {
        Self {
            cpu_weight: 0.5,
            pod_count_weight: 0.5,
        }
    }
}

impl BaselinePlugin {
    pub fn node_score(&self, pod: &PodInstance, node: &Node, ctx: &ScoringContext<'_>) -> f64 {
        let stats = ctx.snapshot.stats(&node.id);
        let cpu_after = if node.cpu_capacity == 0 {
            1.0
        } else {
            ((stats.allocated_cpu + pod.cpu_request) as f64 / node.cpu_capacity as f64).min(1.0)
        };
        let max_count = ctx
            .candidates
            .iter()
            .map(|c| ctx.snapshot.stats(c).pod_count)
            .max()
            .unwrap_or(0);
        let count_frac = if max_count == 0 {
            0.0
        } else {
            stats.pod_count as f64 / max_count as f64
        };
        let total = self.cpu_weight + self.pod_count_weight;
        (self.cpu_weight * (1.0 - cpu_after) + self.pod_count_weight * (1.0 - count_frac)) / total
    }
}

impl Plugin for BaselinePlugin {
    fn kind(&self) -> PluginKind {
        PluginKind::Baseline
    }

    fn score(&self, pod: &PodInstance, node: &Node, ctx: &ScoringContext<'_>) -> Option<f64> {
        Some(self.node_score(pod, node, ctx))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scheduler::tests::{rng, small_cluster};
    use crate::scheduler::{Scheduler, SchedulerConfig};

    #[test]
    fn empty_node_with_zero_request_scores_one() {
        let st = small_cluster(&[("n1", 1)]);
        let snap = st.snapshot(None, 0.0).unwrap();
        let ids = ["n1".into()];
        let ctx = ScoringContext {
            snapshot: &snap,
            candidates: &ids,
        };
        let pod = PodInstance::new("p", "s", 0);
        let s = BaselinePlugin::default().node_score(&pod, snap.node(&ids[0]).unwrap(), &ctx);
        assert_eq!(s, 1.0);
    }

    #[test]
    fn full_and_busiest_node_scores_zero() {
        let mut st = small_cluster(&[("n1", 1), ("n2", 1)]);
        st.submit(PodInstance::new("a", "s", 1000), 0.0).unwrap();
        st.apply_placement(&"a".into(), &"n1".into(), 0.0).unwrap();
        let snap = st.snapshot(None, 0.0).unwrap();
        let ids = ["n1".into(), "n2".into()];
        let ctx = ScoringContext {
            snapshot: &snap,
            candidates: &ids,
        };
        let pod = PodInstance::new("p", "s", 0);
        assert_eq!(BaselinePlugin::default().node_score(&pod, snap.node(&ids[0]).unwrap(), &ctx), 0.0);
    }

    #[test]
    fn sequential_pods_spread_evenly() {
        let names: Vec<String> = (0..8).map(|i| format!("n{i}")).collect();
        let nodes: Vec<(&str, u32)> = names.iter().map(|n| (n.as_str(), 4)).collect();
        let mut st = small_cluster(&nodes);
        for i in 0..120 {
            st.submit(PodInstance::new(format!("p{i:03}"), "s", 100), 0.0).unwrap();
        }
        let s = Scheduler::new(SchedulerConfig::new(&[(PluginKind::Baseline, 1.0)])).unwrap();
        s.run_queue(&mut st, 0.0, &mut rng()).unwrap();
        for n in st.nodes() {
            let c = st.running_on(&n.id).count();
            assert!((14..=16).contains(&c), "{} has {c}", n.id);
        }
    }
}
