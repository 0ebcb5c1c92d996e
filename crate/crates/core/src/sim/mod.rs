//! Deterministic discrete-event simulator.
//!
//! Each repetition of each arm runs on a fresh cluster with its own seeded
//! generators; simultaneous events run in [`EventKind`] order, then in
//! insertion order.

pub mod bundled;
pub mod report;
pub mod results;
pub mod scenario;

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::sync::atomic::{AtomicUsize, Ordering as AtomicOrdering};
use std::sync::Mutex;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

use crate::cluster::{ClusterState, LinkRef, NodeId, PodId, PodInstance, PodStatus};
use crate::loadbalancer::{LoadBalancer, RuleChain};
use crate::monitor::StateMonitor;
use crate::scheduler::realtime::pod_rt_utilization;
use crate::scheduler::{ScheduleOutcome, Scheduler, SchedulerError};
use crate::telemetry::LatencyMatrix;

pub use results::{EvictionRow, PlacementRow, RequestRow, ResultSet, SampleRow};
pub use scenario::{ArmConfig, ProcessingDelay, Profile, ScenarioConfig, ScenarioError};

/// Kinds of simulation events, in the order they run when simultaneous.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum EventKind {
    LinkChange,
    Metric,
    Submit,
    Schedule,
    MonitorPass,
    LbRefresh,
    Request,
    Sample,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Payload {
    LinkChange(usize),
    Metric(usize),
    Submit { deploy: usize, index: usize },
    Schedule { initial: bool },
    MonitorPass,
    LbRefresh,
    Request { generator: usize, index: u64 },
    Sample,
}

impl Payload {
    fn kind(&self) -> EventKind {
        match self {
            Payload::LinkChange(_) => EventKind::LinkChange,
            Payload::Metric(_) => EventKind::Metric,
            Payload::Submit { .. } => EventKind::Submit,
            Payload::Schedule { .. } => EventKind::Schedule,
            Payload::MonitorPass => EventKind::MonitorPass,
            Payload::LbRefresh => EventKind::LbRefresh,
            Payload::Request { .. } => EventKind::Request,
            Payload::Sample => EventKind::Sample,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Event {
    time: f64,
    seq: u64,
    payload: Payload,
}

impl Event {
    fn key_cmp(&self, other: &Self) -> Ordering {
        self.time
            .total_cmp(&other.time)
            .then(self.payload.kind().cmp(&other.payload.kind()))
            .then(self.seq.cmp(&other.seq))
    }
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.key_cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    // Reversed: BinaryHeap is a max-heap.
    fn cmp(&self, other: &Self) -> Ordering {
        other.key_cmp(self)
    }
}

/// Time-ordered event queue with deterministic tie-breaking.
#[derive(Debug, Default)]
struct EventQueue {
    heap: BinaryHeap<Event>,
    seq: u64,
}

impl EventQueue {
    fn push(&mut self, time: f64, payload: Payload) {
        self.heap.push(Event {
            time,
            seq: self.seq,
            payload,
        });
        self.seq += 1;
    }

    fn pop(&mut self) -> Option<Event> {
        self.heap.pop()
    }
}

/// Run-time overrides for a scenario.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub repetitions: Option<u32>,
    pub profile: Profile,
    /// Worker threads for independent repetitions; 0 picks the machine's parallelism.
    pub jobs: usize,
}

/// Independent generator streams of one run.
struct Streams {
    scheduler: ChaCha8Rng,
    shuffle: ChaCha8Rng,
    balancer: ChaCha8Rng,
    delay: ChaCha8Rng,
}

impl Streams {
    fn new(seed: u64) -> Self {
        let stream = |n| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            r.set_stream(n);
            r
        };
        Self {
            scheduler: stream(0),
            shuffle: stream(1),
            balancer: stream(2),
            delay: stream(3),
        }
    }
}

impl ProcessingDelay {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            ProcessingDelay::Constant { ms } => ms,
            ProcessingDelay::Uniform { min_ms, max_ms } => {
                if max_ms > min_ms {
                    rng.random_range(min_ms..max_ms)
                } else {
                    min_ms
                }
            }
            ProcessingDelay::Exponential { mean_ms } => Exp::new(1.0 / mean_ms).expect("mean validated > 0").sample(rng),
        }
    }
}

/// Round-trip time of one request: both path directions plus processing.
pub fn request_rtt(latency: &LatencyMatrix, client: &NodeId, replica_node: &NodeId, processing_ms: f64) -> Option<f64> {
    Some(2.0 * latency.get(client, replica_node)? + processing_ms)
}

/// One request per `1 / rate_hz` seconds over `duration_s`, each routed
/// through `chain` from `client`.
#[allow(clippy::too_many_arguments)]
pub fn generate_requests<R: Rng + ?Sized>(
    client: &NodeId,
    service: &str,
    rate_hz: f64,
    start_s: f64,
    duration_s: f64,
    chain: &RuleChain,
    latency: &LatencyMatrix,
    delay: &ProcessingDelay,
    rng: &mut R,
) -> Vec<RequestRow> {
    let n = (rate_hz * duration_s).round() as u64;
    (0..n)
        .map(|k| {
            let rule = chain.select(rng);
            let processing = delay.sample(rng);
            RequestRow {
                arm: String::new(),
                run: 0,
                seed: 0,
                time: start_s + k as f64 / rate_hz,
                client: client.to_string(),
                service: service.to_owned(),
                replica: rule.replica.to_string(),
                node: rule.node.to_string(),
                rtt_ms: request_rtt(latency, client, &rule.node, processing).unwrap_or(f64::NAN),
            }
        })
        .collect()
}

/// Runs every arm for the configured number of repetitions. Run `i` of every
/// arm uses seed `seed + i`, so arms are compared on identical seeds.
pub fn run_scenario(cfg: &ScenarioConfig, opts: &RunOptions) -> Result<ResultSet, ScenarioError> {
    cfg.validate()?;
    let reps = opts.repetitions.unwrap_or_else(|| cfg.repetitions(opts.profile));
    if reps == 0 {
        return Err(ScenarioError::Invalid("repetitions must be >= 1".into()));
    }
    let base = opts.seed.unwrap_or(cfg.run.seed);
    let jobs: Vec<(usize, u32)> = (0..cfg.scheduler.arms.len())
        .flat_map(|a| (0..reps).map(move |r| (a, r)))
        .collect();
    let workers = match opts.jobs {
        0 => std::thread::available_parallelism().map_or(1, |n| n.get()),
        n => n,
    }
    .min(jobs.len());

    let slots: Vec<Mutex<Option<Result<ResultSet, ScenarioError>>>> = jobs.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, AtomicOrdering::Relaxed);
                let Some(&(arm, rep)) = jobs.get(i) else { break };
                let seed = base.wrapping_add(rep as u64);
                let out = run_once(cfg, &cfg.scheduler.arms[arm], rep, seed);
                *slots[i].lock().expect("result slot") = Some(out);
            });
        }
    });
    let mut all = ResultSet::default();
    for slot in slots {
        let part = slot.into_inner().expect("result slot").expect("every job ran")?;
        all.extend(part);
    }
    Ok(all)
}

/// One repetition of one arm.
pub fn run_once(cfg: &ScenarioConfig, arm: &ArmConfig, run: u32, seed: u64) -> Result<ResultSet, ScenarioError> {
    Engine::new(cfg, arm, run, seed)?.run()
}

struct Engine<'a> {
    cfg: &'a ScenarioConfig,
    arm: &'a ArmConfig,
    run: u32,
    seed: u64,
    state: ClusterState,
    scheduler: Scheduler,
    initial: Option<Scheduler>,
    monitor: StateMonitor,
    balancer: Option<LoadBalancer>,
    links: Vec<LinkRef>,
    rng: Streams,
    queue: EventQueue,
    recorded: BTreeSet<PodId>,
    /// Pods of spaced deployments still to be submitted.
    staged: BTreeMap<usize, Vec<PodInstance>>,
    out: ResultSet,
}

impl<'a> Engine<'a> {
    fn new(cfg: &'a ScenarioConfig, arm: &'a ArmConfig, run: u32, seed: u64) -> Result<Self, ScenarioError> {
        let links = cfg
            .workload
            .links
            .iter()
            .map(|l| l.link.parse())
            .collect::<Result<Vec<LinkRef>, _>>()?;
        Ok(Self {
            cfg,
            arm,
            run,
            seed,
            state: cfg.build_state(&arm.priority)?,
            scheduler: Scheduler::new(arm.scheduler.clone())?,
            initial: arm.initial.clone().map(Scheduler::new).transpose()?,
            monitor: StateMonitor::new(cfg.monitor.config),
            balancer: cfg
                .loadbalancer
                .as_ref()
                .map(|lb| LoadBalancer::new(lb.client.clone(), arm.balancer)),
            links,
            rng: Streams::new(seed),
            queue: EventQueue::default(),
            recorded: BTreeSet::new(),
            staged: BTreeMap::new(),
            out: ResultSet::default(),
        })
    }

    fn run(mut self) -> Result<ResultSet, ScenarioError> {
        let w = &self.cfg.workload;
        for (i, l) in w.links.iter().enumerate() {
            self.queue.push(l.at, Payload::LinkChange(i));
        }
        for i in 0..w.metrics.len() {
            self.queue.push(0.0, Payload::Metric(i));
        }
        for (i, d) in w.deploy.iter().enumerate() {
            self.queue.push(d.at, Payload::Submit { deploy: i, index: 0 });
        }
        for (i, r) in w.requests.iter().enumerate() {
            if r.count() > 0 {
                self.queue.push(r.start_s, Payload::Request { generator: i, index: 0 });
            }
        }
        if self.cfg.monitor.enabled {
            self.queue.push(self.cfg.monitor.config.loop_period_s, Payload::MonitorPass);
        }
        if self.balancer.is_some() {
            self.queue.push(0.0, Payload::LbRefresh);
        }
        let end = self.cfg.run.duration_s;
        if self.cfg.run.sample_interval_s.is_some() {
            self.queue.push(0.0, Payload::Sample);
        }
        let mut last_sample = None;
        while let Some(ev) = self.queue.pop() {
            if ev.time > end {
                break;
            }
            if ev.payload == Payload::Sample {
                last_sample = Some(ev.time);
            }
            self.handle(ev)?;
        }
        if last_sample != Some(end) {
            self.sample(end);
        }
        self.record_placements();
        Ok(self.out)
    }

    fn handle(&mut self, ev: Event) -> Result<(), ScenarioError> {
        let now = ev.time;
        let w = &self.cfg.workload;
        match ev.payload {
            Payload::LinkChange(i) => {
                self.state.set_link_latency(&self.links[i], w.links[i].latency_ms)?;
            }
            Payload::Metric(i) => {
                let feed = &w.metrics[i];
                for (pod, value) in &feed.values {
                    self.state
                        .metrics_mut()
                        .record(&feed.service, &PodId::new(pod.as_str()), *value, now)
                        .map_err(|e| ScenarioError::Invalid(e.to_string()))?;
                }
                self.queue.push(now + feed.interval_s, Payload::Metric(i));
            }
            Payload::Submit { deploy, index } => self.submit(deploy, index, now)?,
            Payload::Schedule { initial } => {
                let scheduler = match (&self.initial, initial) {
                    (Some(s), true) => s,
                    _ => &self.scheduler,
                };
                let steps = scheduler.run_queue(&mut self.state, now, &mut self.rng.scheduler)?;
                self.push_evictions(preemption_rows(&steps, now));
            }
            Payload::MonitorPass => {
                let mut preempted = Vec::new();
                let scheduler = &self.scheduler;
                let evictions = self.monitor.pass(
                    &mut self.state,
                    scheduler,
                    now,
                    &mut self.rng.scheduler,
                    |st, rng| {
                        let steps = scheduler.run_queue(st, now, rng)?;
                        preempted.extend(preemption_rows(&steps, now));
                        Ok::<_, SchedulerError>(())
                    },
                )?;
                let rows: Vec<_> = evictions
                    .into_iter()
                    .map(|e| Displaced {
                        time: e.time,
                        pod: e.pod,
                        from: e.from_node,
                        target: e.target_node,
                        cause: "monitor",
                    })
                    .chain(preempted)
                    .collect();
                self.push_evictions(rows);
                self.queue
                    .push(now + self.cfg.monitor.config.loop_period_s, Payload::MonitorPass);
            }
            Payload::LbRefresh => self.refresh_balancer(now),
            Payload::Request { generator, index } => self.request(generator, index, now),
            Payload::Sample => {
                self.sample(now);
                let step = self.cfg.run.sample_interval_s.expect("sampling enabled");
                self.queue.push(now + step, Payload::Sample);
            }
        }
        Ok(())
    }

    fn submit(&mut self, i: usize, index: usize, now: f64) -> Result<(), ScenarioError> {
        let d = &self.cfg.workload.deploy[i];
        if index == 0 {
            let mut pods = Vec::new();
            for name in &d.services {
                let spec = self
                    .state
                    .service(name)
                    .ok_or_else(|| ScenarioError::Invalid(format!("unknown service {name}")))?;
                pods.extend(spec.expand(self.state.topology(), now)?);
            }
            if let Some(missing) = d.pin.keys().find(|k| !pods.iter().any(|p| p.id.as_str() == k.as_str())) {
                return Err(ScenarioError::Invalid(format!("deployment pins unknown pod {missing}")));
            }
            if d.shuffle {
                pods.shuffle(&mut self.rng.shuffle);
            }
            if d.record {
                self.recorded.extend(pods.iter().map(|p| p.id.clone()));
            }
            self.staged.insert(i, pods);
        }
        let staged = self.staged.get_mut(&i).expect("deployment staged");
        let batch: Vec<PodInstance> = if d.spacing_s > 0.0 {
            vec![staged[index].clone()]
        } else {
            std::mem::take(staged)
        };
        let remaining = staged.len().saturating_sub(index + 1);
        let mut queued = false;
        for mut pod in batch {
            pod.start_time = now;
            let id = pod.id.clone();
            self.state.submit(pod, now)?;
            match d.pin.get(id.as_str()) {
                Some(node) => {
                    self.state.apply_placement(&id, node, now)?;
                    self.monitor.pin(id);
                }
                None => queued = true,
            }
        }
        if queued {
            self.queue.push(now, Payload::Schedule { initial: true });
        }
        if d.spacing_s > 0.0 && remaining > 0 {
            self.queue.push(
                now + d.spacing_s,
                Payload::Submit {
                    deploy: i,
                    index: index + 1,
                },
            );
        } else {
            self.staged.remove(&i);
        }
        Ok(())
    }

    fn refresh_balancer(&mut self, now: f64) {
        let lb_cfg = self.cfg.loadbalancer.as_ref().expect("balancer configured");
        let client = lb_cfg.client.clone();
        for service in &lb_cfg.services {
            let replicas: Vec<(PodId, NodeId)> = self
                .state
                .pods()
                .filter(|p| &p.service == service && p.is_running())
                .filter_map(|p| Some((p.id.clone(), p.assignment.clone()?)))
                .collect();
            let spec = self.state.service(service).and_then(|s| s.metric.clone());
            let latency = self.state.latency().clone();
            let metrics = self.state.metrics().clone();
            self.state.scoreboard_mut().refresh(
                service,
                &replicas,
                &client,
                &latency,
                &metrics,
                spec.as_ref(),
                now,
                lb_cfg.metric_max_age_s,
            );
        }
        match self.state.snapshot(None, now) {
            Ok(snap) => {
                let lb = self.balancer.as_mut().expect("balancer configured");
                lb.refresh(&snap, &lb_cfg.services, now);
            }
            Err(e) => log::error!("load balancer refresh skipped: {e}"),
        }
        self.queue.push(now + lb_cfg.refresh_s, Payload::LbRefresh);
    }

    fn request(&mut self, generator: usize, index: u64, now: f64) {
        let g = &self.cfg.workload.requests[generator];
        let lb = self.balancer.as_ref().expect("validated: requests need a balancer");
        match lb.select(&g.service, &mut self.rng.balancer) {
            Some(rule) => {
                let processing = g.processing.sample(&mut self.rng.delay);
                let rtt = request_rtt(self.state.latency(), lb.client(), &rule.node, processing).unwrap_or(f64::NAN);
                self.out.requests.push(RequestRow {
                    arm: self.arm.name.clone(),
                    run: self.run,
                    seed: self.seed,
                    time: now,
                    client: lb.client().to_string(),
                    service: g.service.clone(),
                    replica: rule.replica.to_string(),
                    node: rule.node.to_string(),
                    rtt_ms: rtt,
                });
            }
            None => log::debug!("request to {} at t={now} dropped: no replicas", g.service),
        }
        if index + 1 < g.count() {
            let next = g.start_s + (index + 1) as f64 / g.rate_hz;
            self.queue.push(
                next,
                Payload::Request {
                    generator,
                    index: index + 1,
                },
            );
        }
    }

    fn push_evictions(&mut self, rows: Vec<Displaced>) {
        for d in rows {
            self.out.evictions.push(EvictionRow {
                arm: self.arm.name.clone(),
                run: self.run,
                seed: self.seed,
                time: d.time,
                pod: d.pod.to_string(),
                from_node: d.from.to_string(),
                target_node: d.target.to_string(),
                cause: d.cause.to_owned(),
            });
        }
    }

    fn sample(&mut self, now: f64) {
        let mut counts: BTreeMap<&NodeId, (u32, u32, f64)> = self.state.nodes().map(|n| (&n.id, (0, 0, 0.0))).collect();
        let mut pending = (0, 0);
        for p in self.state.pods() {
            match (&p.assignment, p.status) {
                (Some(node), PodStatus::Running) => {
                    let c = counts.get_mut(node).expect("assigned node exists");
                    if p.is_realtime() {
                        c.0 += 1;
                        c.2 += pod_rt_utilization(p).value();
                    } else {
                        c.1 += 1;
                    }
                }
                _ => {
                    if p.is_realtime() {
                        pending.0 += 1;
                    } else {
                        pending.1 += 1;
                    }
                }
            }
        }
        let row = |node: String, rt, regular, util| SampleRow {
            arm: self.arm.name.clone(),
            run: self.run,
            seed: self.seed,
            time: now,
            node,
            rt_pods: rt,
            regular_pods: regular,
            rt_utilization: util,
        };
        let mut rows: Vec<SampleRow> = counts
            .into_iter()
            .map(|(n, (rt, reg, u))| row(n.to_string(), rt, reg, u))
            .collect();
        rows.push(row(results::PENDING_NODE.to_owned(), pending.0, pending.1, 0.0));
        self.out.timeseries.extend(rows);
    }

    fn record_placements(&mut self) {
        for id in &self.recorded {
            let Some(p) = self.state.pod(id) else { continue };
            let status = match p.status {
                PodStatus::Running => "running",
                PodStatus::Pending => "pending",
                PodStatus::Evicted => "evicted",
                PodStatus::Unschedulable => "unschedulable",
            };
            self.out.placements.push(PlacementRow {
                arm: self.arm.name.clone(),
                run: self.run,
                seed: self.seed,
                pod: id.to_string(),
                service: p.service.clone(),
                kind: if p.is_realtime() { "rt" } else { "regular" }.to_owned(),
                node: p.assignment.as_ref().map(|n| n.to_string()).unwrap_or_default(),
                status: status.to_owned(),
            });
        }
    }
}

struct Displaced {
    time: f64,
    pod: PodId,
    from: NodeId,
    target: NodeId,
    cause: &'static str,
}

/// Victims of every preemption among scheduling steps. A victim's former
/// node is the preempting pod's node.
fn preemption_rows(steps: &[(PodId, ScheduleOutcome)], now: f64) -> Vec<Displaced> {
    steps
        .iter()
        .flat_map(|(_, outcome)| match outcome {
            ScheduleOutcome::Preempted { victims, node } => victims
                .iter()
                .map(|v| Displaced {
                    time: now,
                    pod: v.clone(),
                    from: node.clone(),
                    target: node.clone(),
                    cause: "preemption",
                })
                .collect(),
            _ => Vec::new(),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::topology::tests::testbed;

    #[test]
    fn request_rtts_on_the_testbed() {
        let lat = LatencyMatrix::from_topology(&testbed());
        let rtt = |to: &str| request_rtt(&lat, &"P1-A".into(), &to.into(), 0.005).unwrap();
        assert!((rtt("P1-A") - 0.043).abs() < 0.005);
        assert!((3.5..=3.6).contains(&rtt("P4-B")));
    }

    #[test]
    fn ten_hertz_for_a_thousand_seconds_is_ten_thousand_requests() {
        let lat = LatencyMatrix::from_topology(&testbed());
        let chain = RuleChain::build(vec![("s-0".into(), "P1-B".into(), 1.0)], 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rows = generate_requests(
            &"P1-A".into(),
            "s",
            10.0,
            0.0,
            1000.0,
            &chain,
            &lat,
            &ProcessingDelay::default(),
            &mut rng,
        );
        assert_eq!(rows.len(), 10_000);
        assert_eq!(rows[1].time, 0.1);
        assert!(rows.iter().all(|r| r.replica == "s-0" && (r.rtt_ms - 0.065).abs() < 1e-12));
    }

    /// `candidate` depends on two replicas on full nodes, one per zone; it
    /// starts next to the P1 replica and should leave once that replica's
    /// access link slows down.
    fn injection_scenario(links: &str) -> ScenarioConfig {
        ScenarioConfig::from_toml(&format!(
            r#"
name = "injection"
description = "link latency injection"

[topology]
zones = [
    {{ id = "P1", uplink_ms = 0.5, nodes = ["P1-A", "P1-B"] }},
    {{ id = "P2", uplink_ms = 0.8, nodes = ["P2-A", "P2-B"] }},
    {{ id = "P3", uplink_ms = 1.0, nodes = ["P3-A", "P3-B"] }},
]
nodes = [{{ id = "P1-A", cpu_capacity = 100 }}, {{ id = "P3-A", cpu_capacity = 100 }}]

[[services]]
name = "dep"
replicas = 2
cpu_request = 100
cpu_limit = 100

[[services]]
name = "candidate"
replicas = 1
cpu_request = 100
cpu_limit = 100
dependencies = [{{ target_service = "dep", latency_weight = 0.5, metric_weight = 0.5 }}]

[scheduler]
arms = [{{ name = "custom", plugins = [{{ name = "dependencies" }}] }}]

[monitor]
enabled = true

[[workload.deploy]]
services = ["dep"]
pin = {{ dep-0 = "P1-A", dep-1 = "P3-A" }}
record = false

[[workload.deploy]]
services = ["candidate"]
at = 1.0

{links}

[run]
seed = 3
repetitions = 1
duration_s = 300.0
sample_interval_s = 10.0
"#
        ))
        .unwrap()
    }

    #[test]
    fn slowed_link_triggers_migration_after_grace() {
        let links = "[[workload.links]]\nat = 50.0\nlink = \"access:P1-A\"\nlatency_ms = 5.0";
        let rs = run_scenario(&injection_scenario(links), &RunOptions::default()).unwrap();
        assert_eq!(rs.evictions.len(), 1, "{:?}", rs.evictions);
        let e = &rs.evictions[0];
        assert_eq!((e.pod.as_str(), e.from_node.as_str(), e.target_node.as_str()), ("candidate-0", "P1-B", "P3-B"));
        assert_eq!(e.cause, "monitor");
        assert_eq!(e.time, 130.0);
        assert_eq!(rs.placements[0].node, "P3-B");

        let calm = run_scenario(&injection_scenario(""), &RunOptions::default()).unwrap();
        assert!(calm.evictions.is_empty());
        assert_eq!(calm.placements[0].node, "P1-B");
    }

    #[test]
    fn same_seed_same_rows() {
        let cfg = injection_scenario("");
        let opts = RunOptions {
            seed: Some(11),
            ..Default::default()
        };
        assert_eq!(run_scenario(&cfg, &opts).unwrap(), run_scenario(&cfg, &opts).unwrap());
    }
}
