//! Simulation packets: payload kinds for both transports plus the queueing
//! metadata switches act on.

use crate::codec::{GradientRange, TensorSpec};
use crate::fabric::Route;
use crate::sim::SimTime;

/// Number of strict-priority queues per egress port.
pub const N_QUEUES: usize = 8;

/// Data classes available to the workload: queues 1..=7. Queue 0 is reserved
/// for the signal channel.
pub const N_DATA_CLASSES: u8 = (N_QUEUES - 1) as u8;

/// Flow handle; dense index into the network's flow table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FlowId(pub u32);

/// Egress queue index, equal to the packet's header priority field.
/// 0 is the highest priority and is reserved for signal traffic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct QueueIndex(pub u8);

/// Maps a workload data priority (0 = most important layer class, up to
/// `N_DATA_CLASSES - 1`) onto its reserved queue, skipping the signal queue.
pub fn data_queue(data_priority: u8) -> QueueIndex {
    QueueIndex(1 + data_priority.min(N_DATA_CLASSES - 1))
}

/// Control messages of the bounded transport's reliable signal channel.
#[derive(Debug, Clone, PartialEq)]
pub enum SignalMessage {
    /// Rendezvous: announces the tensor and its loss bound alongside the
    /// first data packets (zero-RTT).
    FlowStart { tensor: TensorSpec, bound: f64 },
    /// Sender exhausted its current pass.
    FlowStop,
    /// Receiver asks for these missing ranges (lowest-first, MTU-capped).
    RetransmitRequest { ranges: Vec<GradientRange> },
    /// Receiver-measured arrival rate over the last period.
    RateReport { bps: u64 },
    /// Receiver reached its completion bound.
    FlowFinish,
    /// Sender acknowledges the finish; receiver may release state.
    FinishConfirm,
}

/// What a packet carries.
#[derive(Debug, Clone, PartialEq)]
pub enum PacketKind {
    /// Bounded-transport gradient payload (unreliable channel).
    Data { tensor_id: u64, range: GradientRange },
    /// Signal-channel message. `to_receiver` is true for sender-to-receiver
    /// messages; `sseq` orders messages within that direction.
    Signal { sseq: u32, to_receiver: bool, msg: SignalMessage },
    /// Acknowledges signal `sseq` of the direction flagged by `for_s2r`.
    SignalAck { sseq: u32, for_s2r: bool },
    /// Reliable-transport data segment (packet-granular sequence space).
    Seg { index: u64, sent_at: SimTime, retx: bool },
    /// Reliable-transport cumulative ACK with ECN echo of the acked segment.
    Ack { cum: u64, ce_echo: bool, ts_echo: Option<SimTime> },
}

#[derive(Debug, Clone)]
pub struct Packet {
    pub flow: FlowId,
    pub size_bytes: u32,
    pub queue: QueueIndex,
    /// Marked instead of selectively dropped when over threshold.
    pub ecn_capable: bool,
    /// Set by a switch that accepted the packet above threshold.
    pub ce_marked: bool,
    /// Per-flow emission counter across all packet kinds, including
    /// retransmissions; feeds per-packet path hashing and traces.
    pub seq: u32,
    pub route: Route,
    pub hop: u8,
    pub kind: PacketKind,
}

impl Packet {
    pub fn is_signal(&self) -> bool {
        matches!(self.kind, PacketKind::Signal { .. } | PacketKind::SignalAck { .. })
    }
}
