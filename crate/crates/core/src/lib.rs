//! Edge-cluster orchestration engine: RT-aware and dependency-aware scheduling,
//! continuous rescheduling, weighted load balancing, and a deterministic
//! discrete-event simulator to drive them.

pub mod cluster;
pub mod fogservice;
pub mod loadbalancer;
pub mod markov;
pub mod monitor;
pub mod runtime;
pub mod sim;
pub mod scheduler;
pub mod telemetry;

pub use cluster::{
    ClusterDocument, ClusterError, ClusterSnapshot, ClusterState, Node, NodeId, PodId, PodInstance, PodStatus,
    Topology,
};
pub use fogservice::{FogServiceError, FogServiceSpec};
pub use loadbalancer::{LoadBalancer, RuleChain};
pub use monitor::{MonitorConfig, StateMonitor};
pub use scheduler::{PluginKind, ScheduleOutcome, Scheduler, SchedulerConfig};
