//! Python bindings: FogService descriptors, a schedulable cluster, scenario
//! runs and the load-balancing math.

use std::collections::BTreeMap;
use std::path::PathBuf;

use edgeorch_core::cluster::LinkRef;
use edgeorch_core::loadbalancer;
use edgeorch_core::markov::{self, MarkovMatrix};
use edgeorch_core::scheduler::{PluginEntry, TieBreak};
use edgeorch_core::sim::results::ResultSet;
use edgeorch_core::sim::{bundled, report, run_scenario, Profile, RunOptions, ScenarioConfig};
use edgeorch_core::{ClusterDocument, ClusterState, FogServiceSpec, PluginKind, ScheduleOutcome, Scheduler, SchedulerConfig};
use pyo3::exceptions::{PyKeyError, PyValueError};
use pyo3::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// A FogService descriptor.
#[pyclass(name = "FogService", module = "edgeorch", skip_from_py_object)]
#[derive(Clone)]
struct PyFogService {
    spec: FogServiceSpec,
}

#[pymethods]
impl PyFogService {
    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        FogServiceSpec::from_toml(text).map(|spec| Self { spec }).map_err(value_err)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        FogServiceSpec::from_json(text).map(|spec| Self { spec }).map_err(value_err)
    }

    fn to_json(&self) -> String {
        self.spec.to_canonical_json()
    }

    /// Broken invariants as `field: rule` strings; empty when valid.
    fn validate(&self) -> Vec<String> {
        self.spec.validate().iter().map(|v| v.to_string()).collect()
    }

    #[getter]
    fn name(&self) -> String {
        self.spec.name.clone()
    }

    #[getter]
    fn total_replicas(&self) -> u32 {
        self.spec.total_replicas()
    }

    fn __repr__(&self) -> String {
        format!("FogService({:?}, replicas={})", self.spec.name, self.spec.total_replicas())
    }
}

/// Live cluster state that services can be deployed into and scheduled on.
#[pyclass(name = "Cluster", module = "edgeorch")]
struct PyCluster {
    state: ClusterState,
    time: f64,
}

fn parse_plugins(plugins: Vec<(String, f64)>) -> PyResult<Vec<PluginEntry>> {
    plugins
        .into_iter()
        .map(|(name, weight)| {
            let kind: PluginKind = serde_json::from_value(serde_json::Value::String(name.clone()))
                .map_err(|_| value_err(format!("unknown plugin {name}")))?;
            Ok(PluginEntry { name: kind, weight })
        })
        .collect()
}

#[pymethods]
impl PyCluster {
    /// Builds a cluster from a cluster document.
    #[staticmethod]
    fn from_document(text: &str) -> PyResult<Self> {
        let state = ClusterDocument::from_toml(text)
            .and_then(ClusterDocument::into_state)
            .map_err(value_err)?;
        Ok(Self { state, time: 0.0 })
    }

    fn to_document(&self) -> PyResult<String> {
        ClusterDocument::from_state(&self.state).to_toml().map_err(value_err)
    }

    fn node_ids(&self) -> Vec<String> {
        self.state.nodes().map(|n| n.id.to_string()).collect()
    }

    fn register(&mut self, service: &PyFogService) {
        self.state.register_service(service.spec.clone());
    }

    /// Expands a registered service and queues its pods. Returns the pod ids.
    fn deploy(&mut self, service: &str) -> PyResult<Vec<String>> {
        let spec = self
            .state
            .service(service)
            .ok_or_else(|| PyKeyError::new_err(format!("service {service} is not registered")))?
            .clone();
        let pods = spec.expand(self.state.topology(), self.time).map_err(value_err)?;
        let ids = pods.iter().map(|p| p.id.to_string()).collect();
        for pod in pods {
            self.state.submit(pod, self.time).map_err(value_err)?;
        }
        Ok(ids)
    }

    /// Drains the queue with the given `(plugin, weight)` pairs. Returns one
    /// `(pod, outcome, node)` tuple per decision, where outcome is
    /// `assigned`, `preempted` or `unschedulable`.
    #[pyo3(signature = (plugins, tie_break = "lexicographic", seed = 0))]
    fn schedule(
        &mut self,
        plugins: Vec<(String, f64)>,
        tie_break: &str,
        seed: u64,
    ) -> PyResult<Vec<(String, String, Option<String>)>> {
        let mut config = SchedulerConfig::new(&[]);
        config.plugins = parse_plugins(plugins)?;
        config.tie_break = match tie_break {
            "lexicographic" => TieBreak::Lexicographic,
            "random" => TieBreak::Random,
            other => return Err(value_err(format!("unknown tie break {other}"))),
        };
        let scheduler = Scheduler::new(config).map_err(value_err)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let steps = scheduler.run_queue(&mut self.state, self.time, &mut rng).map_err(value_err)?;
        Ok(steps
            .into_iter()
            .map(|(pod, outcome)| {
                let kind = match &outcome {
                    ScheduleOutcome::Assigned(_) => "assigned",
                    ScheduleOutcome::Preempted { .. } => "preempted",
                    ScheduleOutcome::Unschedulable(_) => "unschedulable",
                };
                (pod.to_string(), kind.to_owned(), outcome.node().map(|n| n.to_string()))
            })
            .collect())
    }

    /// Current node of every pod, `None` when not running.
    fn placements(&self) -> BTreeMap<String, Option<String>> {
        self.state
            .pods()
            .map(|p| {
                let node = p.is_running().then(|| p.assignment.as_ref().map(|n| n.to_string())).flatten();
                (p.id.to_string(), node)
            })
            .collect()
    }

    /// Sets a link's one-way latency; `link` is `uplink:ZONE` or `access:NODE`.
    fn set_link_latency(&mut self, link: &str, latency_ms: f64) -> PyResult<()> {
        let link: LinkRef = link.parse().map_err(value_err)?;
        self.state.set_link_latency(&link, latency_ms).map_err(value_err)
    }

    #[getter]
    fn time(&self) -> f64 {
        self.time
    }

    #[setter]
    fn set_time(&mut self, time: f64) {
        self.time = time;
    }
}

/// A parsed scenario file.
#[pyclass(name = "Scenario", module = "edgeorch")]
struct PyScenario {
    cfg: ScenarioConfig,
}

#[pymethods]
impl PyScenario {
    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        ScenarioConfig::from_toml(text).map(|cfg| Self { cfg }).map_err(value_err)
    }

    #[staticmethod]
    fn bundled(name: &str) -> PyResult<Self> {
        let b = bundled::find(name).ok_or_else(|| PyKeyError::new_err(format!("no bundled scenario {name}")))?;
        b.load().map(|cfg| Self { cfg }).map_err(value_err)
    }

    #[getter]
    fn name(&self) -> String {
        self.cfg.name.clone()
    }

    #[getter]
    fn arms(&self) -> Vec<String> {
        self.cfg.scheduler.arms.iter().map(|a| a.name.clone()).collect()
    }

    /// A fresh cluster with the scenario's topology and services.
    fn cluster(&self) -> PyResult<PyCluster> {
        let state = self.cfg.build_state(&BTreeMap::new()).map_err(value_err)?;
        Ok(PyCluster { state, time: 0.0 })
    }

    #[pyo3(signature = (seed = None, reps = None, profile = "paper", jobs = 0))]
    fn run(&self, py: Python<'_>, seed: Option<u64>, reps: Option<u32>, profile: &str, jobs: usize) -> PyResult<PyResults> {
        let profile = match profile {
            "paper" => Profile::Paper,
            "ci" => Profile::Ci,
            other => return Err(value_err(format!("unknown profile {other}"))),
        };
        let opts = RunOptions {
            seed,
            repetitions: reps,
            profile,
            jobs,
        };
        let rs = py.detach(|| run_scenario(&self.cfg, &opts)).map_err(value_err)?;
        Ok(PyResults { rs })
    }
}

/// Result rows of a scenario run.
#[pyclass(name = "Results", module = "edgeorch")]
struct PyResults {
    rs: ResultSet,
}

#[pymethods]
impl PyResults {
    #[staticmethod]
    fn read(dir: PathBuf) -> PyResult<Self> {
        ResultSet::read_dir(&dir).map(|rs| Self { rs }).map_err(value_err)
    }

    fn write(&self, dir: PathBuf) -> PyResult<()> {
        self.rs.write_dir(&dir).map_err(value_err)
    }

    fn arms(&self) -> Vec<String> {
        self.rs.arms()
    }

    fn summary(&self) -> String {
        report::summary(&self.rs)
    }

    fn comparison(&self) -> String {
        report::comparison(&self.rs)
    }

    fn placement_histogram(&self, arm: &str) -> BTreeMap<String, u64> {
        report::placement_histogram(&self.rs, arm)
    }

    fn request_counts(&self, arm: &str) -> BTreeMap<String, u64> {
        report::request_counts(&self.rs, arm)
    }

    /// RTT in ms at each 1% quantile.
    fn rtt_cdf(&self, arm: &str) -> Vec<(u32, f64)> {
        report::rtt_cdf(&self.rs, arm)
    }

    fn convergence_times(&self, arm: &str) -> Vec<Option<f64>> {
        report::runs(&self.rs, arm)
            .into_iter()
            .map(|r| report::convergence_time(&self.rs, arm, r))
            .collect()
    }

    /// Row counts of placements, timeseries, requests and evictions.
    fn counts(&self) -> BTreeMap<&'static str, usize> {
        BTreeMap::from([
            ("placements", self.rs.placements.len()),
            ("timeseries", self.rs.timeseries.len()),
            ("requests", self.rs.requests.len()),
            ("evictions", self.rs.evictions.len()),
        ])
    }
}

/// Per-rule acceptance probabilities of a rule chain over `scores`.
#[pyfunction]
fn chain_probabilities(scores: Vec<f64>) -> PyResult<Vec<f64>> {
    loadbalancer::chain_probabilities(&scores).map_err(value_err)
}

/// Overall selection probability of each rule.
#[pyfunction]
fn selection_probabilities(rule_probs: Vec<f64>) -> Vec<f64> {
    loadbalancer::selection_probabilities(&rule_probs)
}

/// Stationary distribution of a row-stochastic matrix.
#[pyfunction]
fn stationary_distribution(rows: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
    let m = MarkovMatrix::new(rows).map_err(value_err)?;
    markov::stationary_distribution(&m).map_err(value_err)
}

#[pyfunction]
fn bundled_scenarios() -> Vec<&'static str> {
    bundled::BUNDLED.iter().map(|b| b.name).collect()
}

#[pymodule]
pub fn edgeorch(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyFogService>()?;
    m.add_class::<PyCluster>()?;
    m.add_class::<PyScenario>()?;
    m.add_class::<PyResults>()?;
    m.add_function(wrap_pyfunction!(chain_probabilities, m)?)?;
    m.add_function(wrap_pyfunction!(selection_probabilities, m)?)?;
    m.add_function(wrap_pyfunction!(stationary_distribution, m)?)?;
    m.add_function(wrap_pyfunction!(bundled_scenarios, m)?)?;
    Ok(())
}
