//! Golden-file checks for the structured text formats.

use std::path::PathBuf;

use std::collections::BTreeMap;

use edgeorch_core::sim::bundled;
use edgeorch_core::{ClusterDocument, FogServiceSpec};

fn golden(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

fn read(name: &str) -> String {
    std::fs::read_to_string(golden(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

/// Set `UPDATE_GOLDEN=1` to rewrite the expected files.
fn check(name: &str, actual: &str) {
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(golden(name), actual).unwrap();
    }
    assert_eq!(actual, read(name), "{name} differs from its golden file");
}

#[test]
fn descriptor_canonical_json_matches_golden() {
    let spec = FogServiceSpec::from_toml(&read("camera-pipeline.toml")).unwrap();
    assert!(spec.validate().is_empty(), "{:?}", spec.validate());
    check("camera-pipeline.json", &(spec.to_canonical_json() + "\n"));
    let back = FogServiceSpec::from_json(&read("camera-pipeline.json")).unwrap();
    assert_eq!(back, spec);
}

#[test]
fn cluster_document_matches_golden_and_round_trips() {
    let cfg = bundled::find("fig5-dependencies").unwrap().load().unwrap();
    let mut state = cfg.build_state(&BTreeMap::new()).unwrap();
    let spec = state.service("dependency").unwrap().clone();
    for (pod, node) in spec.expand(state.topology(), 0.0).unwrap().into_iter().zip(["P1-A", "P2-A"]) {
        let id = pod.id.clone();
        state.submit(pod, 0.0).unwrap();
        state.apply_placement(&id, &node.into(), 0.0).unwrap();
    }
    let text = ClusterDocument::from_state(&state).to_toml().unwrap();
    check("cluster.toml", &text);
    // The document carries nodes, links and pods but not the service registry.
    let back = ClusterDocument::from_toml(&text).unwrap().into_state().unwrap();
    assert_eq!(ClusterDocument::from_state(&back).to_toml().unwrap(), text);
}

#[test]
fn documented_scenario_example_parses() {
    let doc = std::fs::read_to_string(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../docs/scenarios.md")).unwrap();
    let start = doc.find("```toml\n").expect("toml block") + "```toml\n".len();
    let end = start + doc[start..].find("```").unwrap();
    let cfg = edgeorch_core::sim::ScenarioConfig::from_toml(&doc[start..end]).unwrap();
    assert_eq!(cfg.scheduler.arms.len(), 2);
    let rs = edgeorch_core::sim::run_scenario(&cfg, &Default::default()).unwrap();
    assert!(!rs.requests.is_empty() && rs.requests.iter().all(|r| r.time <= cfg.run.duration_s));
}
