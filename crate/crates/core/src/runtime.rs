//! Node-side runtime handling: RT policy assignment with a pending retry
//! queue, RT cgroup limits, and runtime-class dispatch. All host interaction
//! goes through [`ProcessHost`]; [`SimulatedHost`] records every call.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::cluster::{Node, PodId, PodInstance, ProcessSelector, RtPolicy, RuntimeClass};
use crate::fogservice::FogServiceSpec;

/// Seconds between retries of unmatched RT process specs.
pub const RETRY_INTERVAL_S: f64 = 30.0;
/// Period written to a pod's RT cgroup.
pub const RT_GROUP_PERIOD_US: u64 = 1_000_000;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum RuntimeError {
    #[error("unknown runtime class {0:?}")]
    UnknownClass(String),
    #[error("pod {0} is not running")]
    NotRunning(PodId),
    #[error("host call failed: {0}")]
    Host(String),
}

pub trait ProcessHost {
    /// `(pid, name)` of every process currently in the pod.
    fn list_processes(&self, pod: &PodId) -> Vec<(u32, String)>;
    fn set_policy(&mut self, pod: &PodId, pid: u32, policy: &RtPolicy) -> Result<(), RuntimeError>;
    fn set_rt_group_limits(&mut self, pod: &PodId, period_us: u64, runtime_us: u64) -> Result<(), RuntimeError>;
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HostCall {
    pub time: f64,
    pub pod: PodId,
    pub pid: Option<u32>,
    pub policy: String,
    pub result: String,
}

#[derive(Debug, Clone)]
struct SimProcess {
    pid: u32,
    name: String,
    spawn_at: f64,
}

/// In-memory host whose processes appear at scripted times.
#[derive(Debug, Clone, Default)]
pub struct SimulatedHost {
    now: f64,
    processes: BTreeMap<PodId, Vec<SimProcess>>,
    failing: BTreeSet<u32>,
    calls: Vec<HostCall>,
}

fn describe(policy: &RtPolicy) -> String {
    match policy {
        RtPolicy::Deadline {
            runtime_us,
            deadline_us,
            period_us,
        } => format!("deadline({runtime_us}/{deadline_us}/{period_us})"),
        RtPolicy::Fifo { priority, .. } => format!("fifo({priority})"),
    }
}

impl SimulatedHost {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set_time(&mut self, now: f64) {
        self.now = now;
    }

    pub fn spawn(&mut self, pod: impl Into<PodId>, pid: u32, name: impl Into<String>, at: f64) {
        self.processes.entry(pod.into()).or_default().push(SimProcess {
            pid,
            name: name.into(),
            spawn_at: at,
        });
    }

    /// Makes every later `set_policy` on this pid fail.
    pub fn fail_pid(&mut self, pid: u32) {
        self.failing.insert(pid);
    }

    pub fn heal_pid(&mut self, pid: u32) {
        self.failing.remove(&pid);
    }

    pub fn calls(&self) -> &[HostCall] {
        &self.calls
    }

    /// Writes `time,pod,pid,policy,result` rows.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["time", "pod", "pid", "policy", "result"])?;
        for c in &self.calls {
            w.write_record([
                c.time.to_string(),
                c.pod.to_string(),
                c.pid.map(|p| p.to_string()).unwrap_or_default(),
                c.policy.clone(),
                c.result.clone(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

impl ProcessHost for SimulatedHost {
    fn list_processes(&self, pod: &PodId) -> Vec<(u32, String)> {
        self.processes
            .get(pod)
            .map(|ps| {
                ps.iter()
                    .filter(|p| p.spawn_at <= self.now)
                    .map(|p| (p.pid, p.name.clone()))
                    .collect()
            })
            .unwrap_or_default()
    }

    fn set_policy(&mut self, pod: &PodId, pid: u32, policy: &RtPolicy) -> Result<(), RuntimeError> {
        let result = if self.failing.contains(&pid) {
            Err(RuntimeError::Host(format!("set_policy refused for pid {pid}")))
        } else {
            Ok(())
        };
        self.calls.push(HostCall {
            time: self.now,
            pod: pod.clone(),
            pid: Some(pid),
            policy: describe(policy),
            result: result.as_ref().map_or_else(|e| e.to_string(), |_| "ok".into()),
        });
        result
    }

    fn set_rt_group_limits(&mut self, pod: &PodId, period_us: u64, runtime_us: u64) -> Result<(), RuntimeError> {
        self.calls.push(HostCall {
            time: self.now,
            pod: pod.clone(),
            pid: None,
            policy: format!("rt_group({period_us}/{runtime_us})"),
            result: "ok".into(),
        });
        Ok(())
    }
}

/// RT specs of one pod still waiting for their processes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PendingAssignment {
    pub pod: PodId,
    /// Indices into the pod's `rt_processes`.
    pub unmatched: Vec<usize>,
    pub next_retry: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AssignReport {
    /// `(spec index, pid)` pairs that received their policy in this call.
    pub applied: Vec<(usize, u32)>,
    pub pending: Option<PendingAssignment>,
}

/// Applies RT policies to pod processes, parking unmatched specs for retry.
#[derive(Debug, Clone, Default)]
pub struct RtPriorityManager {
    pending: BTreeMap<PodId, PendingAssignment>,
    applied: BTreeSet<(PodId, usize, u32)>,
    done: BTreeSet<(PodId, usize)>,
}

fn matches(selector: &ProcessSelector, pid: u32, name: &str) -> bool {
    match selector {
        ProcessSelector::Pid(p) => *p == pid,
        ProcessSelector::Name(sub) => name.contains(sub.as_str()),
    }
}

impl RtPriorityManager {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn pending(&self) -> impl Iterator<Item = &PendingAssignment> {
        self.pending.values()
    }

    fn attempt<H: ProcessHost>(&mut self, pod: &PodInstance, specs: &[usize], host: &mut H) -> (Vec<(usize, u32)>, Vec<usize>) {
        let procs = host.list_processes(&pod.id);
        let mut applied = Vec::new();
        let mut unmatched = Vec::new();
        // Declaration order.
        for &idx in specs {
            let spec = &pod.rt_processes[idx];
            let mut matched_any = false;
            let mut failed = false;
            for (pid, _) in procs.iter().filter(|(pid, name)| matches(&spec.selector, *pid, name)) {
                matched_any = true;
                let key = (pod.id.clone(), idx, *pid);
                if self.applied.contains(&key) {
                    continue;
                }
                match host.set_policy(&pod.id, *pid, &spec.policy) {
                    Ok(()) => {
                        self.applied.insert(key);
                        applied.push((idx, *pid));
                    }
                    Err(e) => {
                        log::error!("pod {} spec {idx} pid {pid}: {e}", pod.id);
                        failed = true;
                    }
                }
            }
            if matched_any && !failed {
                self.done.insert((pod.id.clone(), idx));
            } else {
                unmatched.push(idx);
            }
        }
        (applied, unmatched)
    }

    /// Matches every RT spec of a running pod against the host's processes.
    pub fn assign<H: ProcessHost>(&mut self, pod: &PodInstance, host: &mut H, now: f64) -> Result<AssignReport, RuntimeError> {
        if !pod.is_running() {
            return Err(RuntimeError::NotRunning(pod.id.clone()));
        }
        let specs: Vec<usize> = (0..pod.rt_processes.len())
            .filter(|i| !self.done.contains(&(pod.id.clone(), *i)))
            .collect();
        let (applied, unmatched) = self.attempt(pod, &specs, host);
        let pending = if unmatched.is_empty() {
            self.pending.remove(&pod.id);
            None
        } else {
            let entry = PendingAssignment {
                pod: pod.id.clone(),
                unmatched,
                next_retry: now + RETRY_INTERVAL_S,
            };
            self.pending.insert(pod.id.clone(), entry.clone());
            Some(entry)
        };
        Ok(AssignReport { applied, pending })
    }

    /// Retries every pending entry due at `now`. Pods missing from `pods` are dropped.
    pub fn tick<H: ProcessHost>(
        &mut self,
        now: f64,
        pods: &BTreeMap<PodId, PodInstance>,
        host: &mut H,
    ) -> Vec<(PodId, usize, u32)> {
        let due: Vec<PendingAssignment> = self
            .pending
            .values()
            .filter(|p| p.next_retry <= now)
            .cloned()
            .collect();
        let mut out = Vec::new();
        for entry in due {
            let Some(pod) = pods.get(&entry.pod).filter(|p| p.is_running()) else {
                self.pending.remove(&entry.pod);
                continue;
            };
            let (applied, unmatched) = self.attempt(pod, &entry.unmatched, host);
            out.extend(applied.into_iter().map(|(i, pid)| (pod.id.clone(), i, pid)));
            if unmatched.is_empty() {
                self.pending.remove(&entry.pod);
            } else {
                self.pending.insert(
                    entry.pod.clone(),
                    PendingAssignment {
                        pod: entry.pod,
                        unmatched,
                        next_retry: entry.next_retry + RETRY_INTERVAL_S,
                    },
                );
            }
        }
        out
    }

    /// Earliest pending retry time, if any.
    pub fn next_retry(&self) -> Option<f64> {
        self.pending.values().map(|p| p.next_retry).min_by(f64::total_cmp)
    }
}

/// RT cgroup parameters for a service: `(period_us, runtime_us)`.
pub fn rt_group_limits(spec: &FogServiceSpec) -> (u64, u64) {
    (RT_GROUP_PERIOD_US, (spec.rt_limit * RT_GROUP_PERIOD_US as f64).round() as u64)
}

/// CPU limits applied to a placed pod. The CFS limit governs only normal
/// processes; RT time is capped separately by the RT group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct GroupLimits {
    pub cfs_limit_millicores: u64,
    pub rt_period_us: u64,
    pub rt_runtime_us: u64,
    /// Whether `rt_limit` had to be clamped to the node quota.
    pub clamped: bool,
}

pub fn group_limits(pod: &PodInstance, node: &Node) -> GroupLimits {
    let quota = node.rt_quota();
    let clamped = pod.rt_limit > quota;
    if clamped {
        log::warn!(
            "pod {} rt_limit {} exceeds node {} quota {quota}; clamping",
            pod.id,
            pod.rt_limit,
            node.id
        );
    }
    let limit = pod.rt_limit.min(quota).max(0.0);
    GroupLimits {
        cfs_limit_millicores: pod.cpu_limit,
        rt_period_us: RT_GROUP_PERIOD_US,
        rt_runtime_us: (limit * RT_GROUP_PERIOD_US as f64).round() as u64,
        clamped,
    }
}

pub fn apply_group_limits<H: ProcessHost>(pod: &PodInstance, node: &Node, host: &mut H) -> Result<GroupLimits, RuntimeError> {
    let limits = group_limits(pod, node);
    host.set_rt_group_limits(&pod.id, limits.rt_period_us, limits.rt_runtime_us)?;
    Ok(limits)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Lifecycle {
    Create,
    Start,
    Stop,
    Status,
}

/// Stand-in runtime that records the lifecycle calls it receives.
#[derive(Debug, Clone, Default)]
pub struct RecordingRuntime {
    pub calls: Vec<(PodId, Lifecycle)>,
}

#[derive(Debug, Clone, Default)]
pub struct RuntimeDispatcher {
    pub container: RecordingRuntime,
    pub legacy: RecordingRuntime,
}

/// Reads a runtime class name; absent means container.
pub fn parse_runtime_class(raw: Option<&str>) -> Result<RuntimeClass, RuntimeError> {
    match raw {
        None => Ok(RuntimeClass::Container),
        Some("container") => Ok(RuntimeClass::Container),
        Some("legacy") => Ok(RuntimeClass::Legacy),
        Some(other) => Err(RuntimeError::UnknownClass(other.to_owned())),
    }
}

impl RuntimeDispatcher {
    pub fn runtime_for(&mut self, class: RuntimeClass) -> &mut RecordingRuntime {
        match class {
            RuntimeClass::Container => &mut self.container,
            RuntimeClass::Legacy => &mut self.legacy,
        }
    }

    pub fn dispatch(&mut self, pod: &PodInstance, call: Lifecycle) -> RuntimeClass {
        self.runtime_for(pod.runtime_class).calls.push((pod.id.clone(), call));
        pod.runtime_class
    }
}
