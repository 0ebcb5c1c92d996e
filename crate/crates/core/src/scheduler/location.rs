use super::{Plugin, PluginKind, ScoringContext};
use crate::cluster::{Node, PodInstance};

/// Soft preference for a pod's location scope: 1.0 on the scoped node or any
/// node in the scoped zone, 0.0 elsewhere, 1.0 everywhere for unscoped pods.
#[derive(Debug, Clone, Copy, Default)]
pub struct LocationAffinityPlugin;

impl Plugin for LocationAffinityPlugin {
    fn kind(&self) -> PluginKind {
        PluginKind::LocationAffinity
    }

    fn score(&self, pod: &PodInstance, node: &Node, _ctx: &ScoringContext<'_>) -> Option<f64> {
        let hit = match &pod.location_scope {
            None => true,
            Some(scope) => scope == node.id.as_str() || *scope == node.zone,
        };
        Some(if hit { 1.0 } else { 0.0 })
    }
}
