//! Run metrics: per-flow records, per-iteration records, percentile
//! summaries, and CSV export. All exports iterate in a fixed order so two
//! runs with the same seed produce byte-identical files.

use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::fabric::LinkId;
use crate::net::Net;
use crate::packet::N_QUEUES;
use crate::sim::SimTime;

/// Flat, serialization-friendly view of one flow's lifetime.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FlowRecord {
    pub flow: u32,
    pub kind: String,
    pub transport: String,
    pub src_host: usize,
    pub dst_host: usize,
    pub bytes_offered: u64,
    pub bytes_delivered: u64,
    pub pkts_sent: u64,
    pub pkts_arrived: u64,
    pub drops_selective: u64,
    pub drops_buffer: u64,
    pub drops_early: u64,
    pub retransmit_rounds: u64,
    pub timeout_count: u64,
    pub marks_seen: u64,
    pub opened_ns: u64,
    pub finished_ns: Option<u64>,
    pub fct_ns: Option<u64>,
}

/// Builds records for every flow, in flow-id order.
pub fn flow_records(net: &Net) -> Vec<FlowRecord> {
    net.flows
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let c = f.counters();
            let p = f.path();
            FlowRecord {
                flow: i as u32,
                kind: f.kind().as_str().to_string(),
                transport: f.transport_name().to_string(),
                src_host: p.src_host,
                dst_host: p.dst_host,
                bytes_offered: c.bytes_offered,
                bytes_delivered: c.bytes_delivered,
                pkts_sent: c.pkts_sent,
                pkts_arrived: c.pkts_arrived,
                drops_selective: c.drops_selective,
                drops_buffer: c.drops_buffer,
                drops_early: c.drops_early,
                retransmit_rounds: c.retransmit_rounds,
                timeout_count: c.timeout_count,
                marks_seen: c.marks_seen,
                opened_ns: c.opened_at.as_nanos(),
                finished_ns: c.finished_at.map(|t| t.as_nanos()),
                fct_ns: c.fct().map(|t| t.as_nanos()),
            }
        })
        .collect()
}

/// One training iteration as observed by the workload driver.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: u32,
    /// When the first gradient packet of this iteration left a worker.
    pub comm_start_ns: u64,
    /// When the last worker cleared the global barrier.
    pub barrier_ns: u64,
    /// barrier - comm_start.
    pub comm_ns: u64,
}

/// Per-port, per-queue counters snapshot for the counters CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PortQueueRecord {
    pub link: u32,
    pub from_node: u32,
    pub to_node: u32,
    pub queue: u8,
    pub enqueued: u64,
    pub dequeued: u64,
    pub marked: u64,
    pub selective_drops: u64,
    pub buffer_drops: u64,
    pub bytes_enqueued: u64,
}

/// Collects switch counters in (link, queue) order, skipping rows with no
/// activity to keep files small.
pub fn port_queue_records(net: &Net) -> Vec<PortQueueRecord> {
    let mut rows = Vec::new();
    for l in 0..net.topo.n_links() {
        let link = LinkId(l as u32);
        let port = net.port(link);
        let ends = net.topo.link(link);
        for qi in 0..N_QUEUES {
            let c = &port.counters[qi];
            if c.enqueued == 0 && c.selective_drops == 0 && c.buffer_drops == 0 {
                continue;
            }
            rows.push(PortQueueRecord {
                link: l as u32,
                from_node: ends.from.0,
                to_node: ends.to.0,
                queue: qi as u8,
                enqueued: c.enqueued,
                dequeued: c.dequeued,
                marked: c.marked,
                selective_drops: c.selective_drops,
                buffer_drops: c.buffer_drops,
                bytes_enqueued: c.bytes_enqueued,
            });
        }
    }
    rows
}

/// Summary statistics over a set of durations, using nearest-rank
/// percentiles (the p-th percentile is the value at rank `ceil(p/100 * n)`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DurationStats {
    pub n: usize,
    pub mean_ns: u64,
    pub min_ns: u64,
    pub p50_ns: u64,
    pub p95_ns: u64,
    pub p99_ns: u64,
    pub max_ns: u64,
}

/// Nearest-rank percentile over an unsorted slice; `p` in (0, 100].
pub fn percentile(values: &[u64], p: f64) -> u64 {
    assert!(!values.is_empty(), "percentile of empty set");
    assert!(p > 0.0 && p <= 100.0, "percentile must lie in (0, 100]");
    let mut v = values.to_vec();
    v.sort_unstable();
    let rank = ((p / 100.0) * v.len() as f64).ceil() as usize;
    v[rank.max(1) - 1]
}

pub fn duration_stats(values: &[u64]) -> Option<DurationStats> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_unstable();
    let sum: u128 = v.iter().map(|x| *x as u128).sum();
    let rank = |p: f64| -> u64 {
        let r = ((p / 100.0) * v.len() as f64).ceil() as usize;
        v[r.max(1) - 1]
    };
    Some(DurationStats {
        n: v.len(),
        mean_ns: (sum / v.len() as u128) as u64,
        min_ns: v[0],
        p50_ns: rank(50.0),
        p95_ns: rank(95.0),
        p99_ns: rank(99.0),
        max_ns: *v.last().unwrap(),
    })
}

/// FCT statistics over the finished flows of one kind (pass `None` to take
/// every finished flow).
pub fn fct_stats(records: &[FlowRecord], kind: Option<&str>) -> Option<DurationStats> {
    let fcts: Vec<u64> = records
        .iter()
        .filter(|r| kind.is_none_or(|k| r.kind == k))
        .filter_map(|r| r.fct_ns)
        .collect();
    duration_stats(&fcts)
}

/// Projected job completion time:
/// `epochs x (compute + 2 x network)`, the push and the pull each paying
/// the network time once.
pub fn estimate_jct(epochs: u64, compute_per_iter: SimTime, network: SimTime) -> SimTime {
    let per_iter = compute_per_iter.as_nanos() as u128 + 2 * network.as_nanos() as u128;
    SimTime((epochs as u128 * per_iter) as u64)
}

/// Mean one-way network time of the measured iterations: half the mean
/// barrier-to-barrier communication time, since a barrier spans both the
/// push and the pull direction. Feeds `estimate_jct`.
pub fn mean_network_time(iters: &[IterationRecord]) -> Option<SimTime> {
    if iters.is_empty() {
        return None;
    }
    let mean_comm: u128 =
        iters.iter().map(|r| r.comm_ns as u128).sum::<u128>() / iters.len() as u128;
    Some(SimTime((mean_comm / 2) as u64))
}

/// Verifies per-flow packet conservation at quiescence: everything emitted
/// either arrived or was dropped (and counted).
pub fn check_conservation(net: &Net) -> Result<(), String> {
    for (i, f) in net.flows.iter().enumerate() {
        let c = f.counters();
        if c.in_flight() != 0 {
            return Err(format!(
                "flow {i}: sent {} != arrived {} + selective {} + buffer {}",
                c.pkts_sent, c.pkts_arrived, c.drops_selective, c.drops_buffer
            ));
        }
    }
    Ok(())
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_flow_csv(path: &Path, rows: &[FlowRecord]) -> io::Result<()> {
    write_csv(path, rows)
}

pub fn write_iteration_csv(path: &Path, rows: &[IterationRecord]) -> io::Result<()> {
    write_csv(path, rows)
}

pub fn write_port_queue_csv(path: &Path, rows: &[PortQueueRecord]) -> io::Result<()> {
    write_csv(path, rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_rank_percentiles() {
        let v: Vec<u64> = (1..=10).collect();
        assert_eq!(percentile(&v, 50.0), 5);
        assert_eq!(percentile(&v, 95.0), 10);
        assert_eq!(percentile(&v, 10.0), 1);
        assert_eq!(percentile(&v, 100.0), 10);
        let hundred: Vec<u64> = (1..=100).collect();
        assert_eq!(percentile(&hundred, 99.0), 99);
        assert_eq!(percentile(&hundred, 50.0), 50);
        assert_eq!(percentile(&[42], 99.0), 42);
    }

    #[test]
    fn percentile_is_order_free() {
        let v = vec![9, 1, 5, 3, 7];
        assert_eq!(percentile(&v, 50.0), 5);
        assert_eq!(percentile(&v, 99.0), 9);
    }

    #[test]
    fn stats_summary() {
        let v: Vec<u64> = (1..=4).map(|x| x * 100).collect();
        let s = duration_stats(&v).unwrap();
        assert_eq!(s.n, 4);
        assert_eq!(s.mean_ns, 250);
        assert_eq!(s.min_ns, 100);
        assert_eq!(s.max_ns, 400);
        assert_eq!(s.p50_ns, 200);
        assert!(duration_stats(&[]).is_none());
    }

    #[test]
    fn jct_projection() {
        // One epoch of pure compute is just the compute time.
        assert_eq!(estimate_jct(1, SimTime(10_000_000), SimTime(0)), SimTime(10_000_000));
        // 100 epochs x (10 ms + 2 x 5 ms) = 2 s.
        assert_eq!(
            estimate_jct(100, SimTime(10_000_000), SimTime(5_000_000)),
            SimTime(2_000_000_000)
        );
        // Cross-check against explicit multiplication with inflated epochs
        // and halved network time.
        let (epochs, compute, network) = (110u64, 10_000_000u64, 2_500_000u64);
        let jct = estimate_jct(epochs, SimTime(compute), SimTime(network));
        assert_eq!(jct.as_nanos(), epochs * (compute + 2 * network));
        let iters = vec![
            IterationRecord { iteration: 0, comm_start_ns: 0, barrier_ns: 300, comm_ns: 300 },
            IterationRecord { iteration: 1, comm_start_ns: 400, barrier_ns: 900, comm_ns: 500 },
        ];
        // Mean barrier time 400 covers push + pull, so one-way is 200.
        assert_eq!(mean_network_time(&iters), Some(SimTime(200)));
        assert_eq!(mean_network_time(&[]), None);
    }
}
