//! Result rows and their CSV files. Every row carries its arm, run index and seed.

use std::fs::File;
use std::io;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

pub const PLACEMENTS_CSV: &str = "placements.csv";
pub const TIMESERIES_CSV: &str = "timeseries.csv";
pub const REQUESTS_CSV: &str = "requests.csv";
pub const EVICTIONS_CSV: &str = "evictions.csv";

#[derive(Debug, thiserror::Error)]
pub enum ResultsError {
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("{path}: {source}")]
    Csv { path: String, source: csv::Error },
}

/// Final placement of one recorded pod.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacementRow {
    pub arm: String,
    pub run: u32,
    pub seed: u64,
    pub pod: String,
    pub service: String,
    /// `rt` or `regular`.
    pub kind: String,
    /// Empty when the pod is not running.
    pub node: String,
    pub status: String,
}

/// Per-node pod counts at one instant. The `pending` pseudo-node counts
/// pods waiting in the scheduler queue or parked as unschedulable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRow {
    pub arm: String,
    pub run: u32,
    pub seed: u64,
    pub time: f64,
    pub node: String,
    pub rt_pods: u32,
    pub regular_pods: u32,
    pub rt_utilization: f64,
}

pub const PENDING_NODE: &str = "pending";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestRow {
    pub arm: String,
    pub run: u32,
    pub seed: u64,
    pub time: f64,
    pub client: String,
    pub service: String,
    pub replica: String,
    pub node: String,
    pub rtt_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvictionRow {
    pub arm: String,
    pub run: u32,
    pub seed: u64,
    pub time: f64,
    pub pod: String,
    pub from_node: String,
    /// Where the dry run would put the pod; the preempting pod's node for preemptions.
    pub target_node: String,
    /// `monitor` or `preemption`.
    pub cause: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ResultSet {
    pub placements: Vec<PlacementRow>,
    pub timeseries: Vec<SampleRow>,
    pub requests: Vec<RequestRow>,
    pub evictions: Vec<EvictionRow>,
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T], header: &[&str]) -> Result<(), ResultsError> {
    let file = File::create(path).map_err(|source| ResultsError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let wrap = |source| ResultsError::Csv {
        path: path.display().to_string(),
        source,
    };
    // Headers are written by hand so empty files still carry them.
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(io::BufWriter::new(file));
    w.write_record(header).map_err(wrap)?;
    for row in rows {
        w.serialize(row).map_err(wrap)?;
    }
    w.flush().map_err(|source| ResultsError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn read_rows<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, ResultsError> {
    let wrap = |source| ResultsError::Csv {
        path: path.display().to_string(),
        source,
    };
    let mut r = csv::Reader::from_path(path).map_err(wrap)?;
    r.deserialize().collect::<Result<_, _>>().map_err(wrap)
}

impl ResultSet {
    pub fn extend(&mut self, other: ResultSet) {
        self.placements.extend(other.placements);
        self.timeseries.extend(other.timeseries);
        self.requests.extend(other.requests);
        self.evictions.extend(other.evictions);
    }

    pub fn write_dir(&self, dir: &Path) -> Result<(), ResultsError> {
        std::fs::create_dir_all(dir).map_err(|source| ResultsError::Io {
            path: dir.display().to_string(),
            source,
        })?;
        write_rows(
            &dir.join(PLACEMENTS_CSV),
            &self.placements,
            &["arm", "run", "seed", "pod", "service", "kind", "node", "status"],
        )?;
        write_rows(
            &dir.join(TIMESERIES_CSV),
            &self.timeseries,
            &["arm", "run", "seed", "time", "node", "rt_pods", "regular_pods", "rt_utilization"],
        )?;
        write_rows(
            &dir.join(REQUESTS_CSV),
            &self.requests,
            &["arm", "run", "seed", "time", "client", "service", "replica", "node", "rtt_ms"],
        )?;
        write_rows(
            &dir.join(EVICTIONS_CSV),
            &self.evictions,
            &["arm", "run", "seed", "time", "pod", "from_node", "target_node", "cause"],
        )
    }

    pub fn read_dir(dir: &Path) -> Result<Self, ResultsError> {
        Ok(Self {
            placements: read_rows(&dir.join(PLACEMENTS_CSV))?,
            timeseries: read_rows(&dir.join(TIMESERIES_CSV))?,
            requests: read_rows(&dir.join(REQUESTS_CSV))?,
            evictions: read_rows(&dir.join(EVICTIONS_CSV))?,
        })
    }

    /// Arm names in first-seen order.
    pub fn arms(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        let all = self
            .placements
            .iter()
            .map(|r| &r.arm)
            .chain(self.timeseries.iter().map(|r| &r.arm))
            .chain(self.requests.iter().map(|r| &r.arm));
        for a in all {
            if !out.contains(a) {
                out.push(a.clone());
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let rs = ResultSet {
            placements: vec![PlacementRow {
                arm: "custom".into(),
                run: 0,
                seed: 7,
                pod: "p-0".into(),
                service: "p".into(),
                kind: "rt".into(),
                node: String::new(),
                status: "unschedulable".into(),
            }],
            requests: vec![RequestRow {
                arm: "custom".into(),
                run: 0,
                seed: 7,
                time: 0.1,
                client: "a".into(),
                service: "s".into(),
                replica: "s-0".into(),
                node: "a".into(),
                rtt_ms: 0.045,
            }],
            ..Default::default()
        };
        let dir = tempfile::tempdir().unwrap();
        rs.write_dir(dir.path()).unwrap();
        assert_eq!(ResultSet::read_dir(dir.path()).unwrap(), rs);
        let header = std::fs::read_to_string(dir.path().join(EVICTIONS_CSV)).unwrap();
        assert_eq!(header, "arm,run,seed,time,pod,from_node,target_node,cause\n");
    }

    #[test]
    fn missing_file_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(ResultSet::read_dir(dir.path()).is_err());
    }
}
