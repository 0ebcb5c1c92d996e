//! Scenarios shipped with the crate.

use super::scenario::{ScenarioConfig, ScenarioError};

#[derive(Debug, Clone, Copy)]
pub struct BundledScenario {
    pub name: &'static str,
    pub source: &'static str,
}

pub const BUNDLED: [BundledScenario; 5] = [
    BundledScenario {
        name: "fig5-dependencies",
        source: include_str!("../../scenarios/fig5-dependencies.toml"),
    },
    BundledScenario {
        name: "fig6-realtime",
        source: include_str!("../../scenarios/fig6-realtime.toml"),
    },
    BundledScenario {
        name: "fig6-deadline",
        source: include_str!("../../scenarios/fig6-deadline.toml"),
    },
    BundledScenario {
        name: "fig7-monitor",
        source: include_str!("../../scenarios/fig7-monitor.toml"),
    },
    BundledScenario {
        name: "fig9-loadbalancer",
        source: include_str!("../../scenarios/fig9-loadbalancer.toml"),
    },
];

pub fn find(name: &str) -> Option<&'static BundledScenario> {
    BUNDLED.iter().find(|b| b.name == name)
}

impl BundledScenario {
    pub fn load(&self) -> Result<ScenarioConfig, ScenarioError> {
        ScenarioConfig::from_toml(self.source)
    }

    /// The scenario's one-line description.
    pub fn description(&self) -> String {
        self.load().map(|c| c.description).unwrap_or_default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_bundled_scenario_parses_and_matches_its_name() {
        for b in BUNDLED {
            let cfg = b.load().unwrap_or_else(|e| panic!("{}: {e}", b.name));
            assert_eq!(cfg.name, b.name);
            assert!(!cfg.description.is_empty());
        }
    }
}
