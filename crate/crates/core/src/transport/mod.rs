//! Transport endpoints. Both transports are state machines driven by the
//! network loop in [`crate::net`]: packet arrivals, timer expiries and flow
//! opens mutate flow state and emit packets through a context object.

pub mod bounded;
pub mod reliable;

use crate::fabric::{select_path, FlowKey, LbPolicy, NodeId, Route};
use crate::packet::{data_queue, QueueIndex};
use crate::sim::SimTime;

/// Why a flow exists; carried through to the flow record CSV.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowKind {
    Push,
    Pull,
    Chunk,
    Background,
    Bench,
}

impl FlowKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            FlowKind::Push => "push",
            FlowKind::Pull => "pull",
            FlowKind::Chunk => "chunk",
            FlowKind::Background => "background",
            FlowKind::Bench => "bench",
        }
    }
}

/// Endpoint addressing and routing shared by both transports.
#[derive(Debug, Clone)]
pub struct FlowPath {
    pub src_host: usize,
    pub dst_host: usize,
    pub src: NodeId,
    pub dst: NodeId,
    pub routes_fwd: Vec<Route>,
    pub routes_rev: Vec<Route>,
    pub policy: LbPolicy,
    pub salt: u64,
    pub flow_id: u64,
}

impl FlowPath {
    /// Route for the packet with emission index `pkt_index` in the given
    /// direction. Control packets pass `pinned = true` to stay on the
    /// flow's hash-pinned path regardless of the data policy.
    pub fn route(&self, forward: bool, pkt_index: u64, pinned: bool) -> Route {
        if self.routes_fwd.is_empty() {
            return Route::new(); // colocated endpoints: loopback, no links
        }
        let (routes, key) = if forward {
            (&self.routes_fwd, FlowKey { src: self.src, dst: self.dst, flow_id: self.flow_id })
        } else {
            (&self.routes_rev, FlowKey { src: self.dst, dst: self.src, flow_id: self.flow_id })
        };
        let policy = if pinned { LbPolicy::FlowEcmp } else { self.policy };
        let idx = select_path(policy, key, pkt_index, routes.len(), self.salt);
        routes[idx].clone()
    }
}

/// Per-packet (queue, importance) assignment for a bounded flow, indexed by
/// the packet's position in the original partition.
#[derive(Debug, Clone)]
pub struct TagPlan {
    /// One (data class, important) pair per partition packet; `None` means
    /// uniform tagging with the defaults below.
    pub per_packet: Option<Vec<(u8, bool)>>,
    pub default_class: u8,
    pub default_important: bool,
}

impl TagPlan {
    pub fn uniform(class: u8, important: bool) -> Self {
        TagPlan { per_packet: None, default_class: class, default_important: important }
    }

    pub fn tag(&self, packet_index: usize) -> (QueueIndex, bool) {
        match &self.per_packet {
            Some(v) if !v.is_empty() => {
                let (class, imp) = v[packet_index.min(v.len() - 1)];
                (data_queue(class), imp)
            }
            _ => (data_queue(self.default_class), self.default_important),
        }
    }
}

/// Flow-lifetime counters; the single source for flow records and
/// conservation checks. Packet counts cover every packet the flow emitted
/// (data, signal, ACK); `drops_early` is the subset of arrived data packets
/// that were discarded because they beat the rendezvous.
#[derive(Debug, Clone, Copy, Default)]
pub struct FlowCounters {
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
    pub opened_at: SimTime,
    pub finished_at: Option<SimTime>,
}

impl FlowCounters {
    /// Packets still in flight (or queued) when the run ended.
    pub fn in_flight(&self) -> u64 {
        self.pkts_sent - self.pkts_arrived - self.drops_selective - self.drops_buffer
    }

    pub fn fct(&self) -> Option<SimTime> {
        self.finished_at.map(|t| t.saturating_sub(self.opened_at))
    }
}
