//! Summary and comparison tables, computed from result rows alone.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::results::{ResultSet, SampleRow, PENDING_NODE};

/// Nearest-rank quantile of sorted data, `q` in (0, 1].
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty data");
    let rank = (q * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RttStats {
    pub count: usize,
    pub mean: f64,
    pub std_dev: f64,
    pub p50: f64,
    pub p90: f64,
    pub p99: f64,
    pub max: f64,
}

pub fn sorted_rtts(rs: &ResultSet, arm: &str) -> Vec<f64> {
    let mut v: Vec<f64> = rs.requests.iter().filter(|r| r.arm == arm).map(|r| r.rtt_ms).collect();
    v.sort_by(f64::total_cmp);
    v
}

pub fn rtt_stats(rs: &ResultSet, arm: &str) -> Option<RttStats> {
    let v = sorted_rtts(rs, arm);
    if v.is_empty() {
        return None;
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    Some(RttStats {
        count: v.len(),
        mean,
        std_dev: var.sqrt(),
        p50: quantile(&v, 0.5),
        p90: quantile(&v, 0.9),
        p99: quantile(&v, 0.99),
        max: *v.last().expect("non-empty"),
    })
}

/// RTT at each 1% quantile, 1% through 100%.
pub fn rtt_cdf(rs: &ResultSet, arm: &str) -> Vec<(u32, f64)> {
    let v = sorted_rtts(rs, arm);
    if v.is_empty() {
        return Vec::new();
    }
    (1..=100).map(|p| (p, quantile(&v, p as f64 / 100.0))).collect()
}

/// Requests received per replica, over all runs of an arm.
pub fn request_counts(rs: &ResultSet, arm: &str) -> BTreeMap<String, u64> {
    let mut out = BTreeMap::new();
    for r in rs.requests.iter().filter(|r| r.arm == arm) {
        *out.entry(r.replica.clone()).or_default() += 1;
    }
    out
}

/// Recorded pods per final node over all runs of an arm; unplaced pods count under "".
pub fn placement_histogram(rs: &ResultSet, arm: &str) -> BTreeMap<String, u64> {
    let mut out = BTreeMap::new();
    for p in rs.placements.iter().filter(|p| p.arm == arm) {
        *out.entry(p.node.clone()).or_default() += 1;
    }
    out
}

pub fn runs(rs: &ResultSet, arm: &str) -> Vec<u32> {
    let mut v: Vec<u32> = rs
        .placements
        .iter()
        .filter(|p| p.arm == arm)
        .map(|p| p.run)
        .chain(rs.timeseries.iter().filter(|s| s.arm == arm).map(|s| s.run))
        .chain(rs.requests.iter().filter(|s| s.arm == arm).map(|s| s.run))
        .collect();
    v.sort_unstable();
    v.dedup();
    v
}

/// `(rt, regular)` pod counts per node.
pub type Allocation = BTreeMap<String, (u32, u32)>;

/// Per-node `(rt, regular)` counts at each sample time of one run.
pub fn samples_by_time(rs: &ResultSet, arm: &str, run: u32) -> Vec<(f64, Allocation)> {
    let mut out: Vec<(f64, Allocation)> = Vec::new();
    let rows: Vec<&SampleRow> = rs.timeseries.iter().filter(|s| s.arm == arm && s.run == run).collect();
    for s in rows {
        if out.last().is_none_or(|(t, _)| *t != s.time) {
            out.push((s.time, BTreeMap::new()));
        }
        out.last_mut()
            .expect("pushed")
            .1
            .insert(s.node.clone(), (s.rt_pods, s.regular_pods));
    }
    out
}

/// Final per-node `(rt, regular)` counts of one run, pending pseudo-node excluded.
pub fn final_allocation(rs: &ResultSet, arm: &str, run: u32) -> Allocation {
    let mut all = samples_by_time(rs, arm, run).pop().map(|(_, m)| m).unwrap_or_default();
    all.remove(PENDING_NODE);
    all
}

/// Time from which the sampled allocation never changes again. `None` when
/// the run has fewer than two samples.
pub fn convergence_time(rs: &ResultSet, arm: &str, run: u32) -> Option<f64> {
    let samples = samples_by_time(rs, arm, run);
    if samples.len() < 2 {
        return None;
    }
    let last = &samples.last().expect("non-empty").1;
    let mut t = samples.last().expect("non-empty").0;
    for (time, alloc) in samples.iter().rev() {
        if alloc != last {
            break;
        }
        t = *time;
    }
    Some(t)
}

fn eviction_counts(rs: &ResultSet, arm: &str) -> BTreeMap<String, u64> {
    let mut out = BTreeMap::new();
    for e in rs.evictions.iter().filter(|e| e.arm == arm) {
        *out.entry(e.cause.clone()).or_default() += 1;
    }
    out
}

fn node_label(n: &str) -> &str {
    if n.is_empty() {
        "(unplaced)"
    } else {
        n
    }
}

/// Per-arm summary: allocation tables, RTT statistics and eviction counts.
pub fn summary(rs: &ResultSet) -> String {
    let mut s = String::new();
    for arm in rs.arms() {
        let runs = runs(rs, &arm);
        let _ = writeln!(s, "== {arm} ({} runs) ==", runs.len());
        let hist = placement_histogram(rs, &arm);
        if !hist.is_empty() {
            let _ = writeln!(s, "placements");
            for (node, count) in &hist {
                let _ = writeln!(s, "  {:<12} {count:>8}", node_label(node));
            }
        }
        let mut mean_alloc: BTreeMap<String, (f64, f64)> = BTreeMap::new();
        for run in &runs {
            for (node, (rt, reg)) in final_allocation(rs, &arm, *run) {
                let e = mean_alloc.entry(node).or_default();
                e.0 += rt as f64 / runs.len() as f64;
                e.1 += reg as f64 / runs.len() as f64;
            }
        }
        if !mean_alloc.is_empty() {
            let _ = writeln!(s, "final allocation (mean per run)");
            let _ = writeln!(s, "  {:<12} {:>8} {:>8}", "node", "rt", "regular");
            for (node, (rt, reg)) in &mean_alloc {
                let _ = writeln!(s, "  {node:<12} {rt:>8.2} {reg:>8.2}");
            }
        }
        let ev = eviction_counts(rs, &arm);
        let _ = writeln!(
            s,
            "evictions: monitor {} preemption {}",
            ev.get("monitor").copied().unwrap_or(0),
            ev.get("preemption").copied().unwrap_or(0)
        );
        if let Some(st) = rtt_stats(rs, &arm) {
            let _ = writeln!(
                s,
                "requests {}: rtt mean {:.4} ms, sd {:.4}, p50 {:.4}, p90 {:.4}, p99 {:.4}, max {:.4}",
                st.count, st.mean, st.std_dev, st.p50, st.p90, st.p99, st.max
            );
            for (replica, n) in request_counts(rs, &arm) {
                let _ = writeln!(s, "  {replica:<12} {n:>8}");
            }
        }
        let conv: Vec<f64> = runs.iter().filter_map(|r| convergence_time(rs, &arm, *r)).collect();
        if !conv.is_empty() {
            let max = conv.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mean = conv.iter().sum::<f64>() / conv.len() as f64;
            let _ = writeln!(s, "convergence time: mean {mean:.1} s, max {max:.1} s");
        }
        s.push('\n');
    }
    s
}

/// Side-by-side comparison of all arms.
pub fn comparison(rs: &ResultSet) -> String {
    let arms = rs.arms();
    let mut s = String::new();
    let header = |s: &mut String, first: &str| {
        let _ = write!(s, "{first:<12}");
        for a in &arms {
            let _ = write!(s, " {a:>14}");
        }
        s.push('\n');
    };

    let hists: Vec<_> = arms.iter().map(|a| placement_histogram(rs, a)).collect();
    let mut nodes: Vec<&String> = hists.iter().flat_map(|h| h.keys()).collect();
    nodes.sort();
    nodes.dedup();
    if !nodes.is_empty() {
        s.push_str("allocation histogram\n");
        header(&mut s, "node");
        for n in nodes {
            let _ = write!(s, "{:<12}", node_label(n));
            for h in &hists {
                let _ = write!(s, " {:>14}", h.get(n).copied().unwrap_or(0));
            }
            s.push('\n');
        }
        s.push('\n');
    }

    let cdfs: Vec<_> = arms.iter().map(|a| rtt_cdf(rs, a)).collect();
    if cdfs.iter().any(|c| !c.is_empty()) {
        s.push_str("rtt cdf (ms)\n");
        header(&mut s, "quantile");
        for i in 0..100 {
            let _ = write!(s, "{:<12}", format!("{}%", i + 1));
            for c in &cdfs {
                match c.get(i) {
                    Some((_, v)) => {
                        let _ = write!(s, " {v:>14.4}");
                    }
                    None => {
                        let _ = write!(s, " {:>14}", "-");
                    }
                }
            }
            s.push('\n');
        }
        s.push('\n');
    }

    let conv: Vec<Vec<f64>> = arms
        .iter()
        .map(|a| runs(rs, a).into_iter().filter_map(|r| convergence_time(rs, a, r)).collect())
        .collect();
    if conv.iter().any(|c| !c.is_empty()) {
        s.push_str("convergence time (s)\n");
        header(&mut s, "stat");
        for (label, f) in [
            ("mean", (|c: &[f64]| c.iter().sum::<f64>() / c.len() as f64) as fn(&[f64]) -> f64),
            ("max", |c: &[f64]| c.iter().copied().fold(f64::NEG_INFINITY, f64::max)),
        ] {
            let _ = write!(s, "{label:<12}");
            for c in &conv {
                if c.is_empty() {
                    let _ = write!(s, " {:>14}", "-");
                } else {
                    let _ = write!(s, " {:>14.1}", f(c));
                }
            }
            s.push('\n');
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_rank_quantiles() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&v, 0.25), 1.0);
        assert_eq!(quantile(&v, 0.26), 2.0);
        assert_eq!(quantile(&v, 1.0), 4.0);
        assert_eq!(quantile(&v, 0.001), 1.0);
    }

    fn sample(time: f64, node: &str, rt: u32) -> SampleRow {
        SampleRow {
            arm: "a".into(),
            run: 0,
            seed: 0,
            time,
            node: node.into(),
            rt_pods: rt,
            regular_pods: 0,
            rt_utilization: 0.0,
        }
    }

    #[test]
    fn convergence_is_start_of_stable_suffix() {
        let rs = ResultSet {
            timeseries: vec![
                sample(0.0, "n", 3),
                sample(1.0, "n", 2),
                sample(2.0, "n", 1),
                sample(3.0, "n", 1),
                sample(4.0, "n", 1),
            ],
            ..Default::default()
        };
        assert_eq!(convergence_time(&rs, "a", 0), Some(2.0));
        assert_eq!(final_allocation(&rs, "a", 0)["n"], (1, 0));
    }
}
