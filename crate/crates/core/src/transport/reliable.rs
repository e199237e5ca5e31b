//! Reliable baseline transport: packet-granular loss recovery in the
//! NewReno style, with an optional ECN-reacting mode that scales the window
//! by the observed marking fraction.
//!
//! The sequence space counts segments, not bytes: segment `i` is the i-th
//! MTU-sized slice of the transfer. Every arriving segment triggers an
//! immediate cumulative ACK. Loss recovery uses three duplicate ACKs for
//! fast retransmit and a go-back-N retransmission timeout with exponential
//! backoff floored at `rto_min`.

use std::collections::BTreeSet;

use crate::net::{AppEvent, NetConfig, TimerKind, TxCtx};
use crate::packet::{FlowId, Packet, PacketKind, QueueIndex};
use crate::sim::{EventHandle, SimTime};
use crate::transport::{FlowCounters, FlowKind, FlowPath};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReliableMode {
    NewReno,
    /// NewReno recovery plus per-window ECN reaction; data segments are
    /// ECN-capable only in this mode.
    Dctcp,
}

#[derive(Debug, Clone, Copy)]
pub struct ReliableConfig {
    pub mode: ReliableMode,
    /// Lower bound for every retransmission timeout.
    pub rto_min: SimTime,
    /// Initial window in segments.
    pub init_cwnd: u32,
    /// Duplicate-ACK threshold for fast retransmit.
    pub dupack_thresh: u32,
    /// ECN estimation gain as 1/2^shift (4 gives g = 1/16).
    pub g_shift: u32,
}

impl Default for ReliableConfig {
    fn default() -> Self {
        ReliableConfig {
            mode: ReliableMode::NewReno,
            rto_min: SimTime::from_millis(5),
            init_cwnd: 10,
            dupack_thresh: 3,
            g_shift: 4,
        }
    }
}

/// RFC-style smoothed RTT tracking. The first sample seeds the estimator;
/// samples from retransmitted segments are never fed in.
#[derive(Debug, Clone, Copy)]
pub struct RttEstimator {
    pub srtt: Option<SimTime>,
    pub rttvar: SimTime,
    rto_min: SimTime,
}

impl RttEstimator {
    pub fn new(rto_min: SimTime) -> Self {
        RttEstimator { srtt: None, rttvar: SimTime(0), rto_min }
    }

    pub fn on_sample(&mut self, rtt: SimTime) {
        match self.srtt {
            None => {
                self.srtt = Some(rtt);
                self.rttvar = SimTime(rtt.as_nanos() / 2);
            }
            Some(srtt) => {
                let err = srtt.as_nanos().abs_diff(rtt.as_nanos());
                self.rttvar = SimTime((3 * self.rttvar.as_nanos() + err) / 4);
                self.srtt = Some(SimTime((7 * srtt.as_nanos() + rtt.as_nanos()) / 8));
            }
        }
    }

    /// Base timeout before exponential backoff: `max(rto_min, srtt + 4*var)`,
    /// or `rto_min` alone before the first sample.
    pub fn rto(&self) -> SimTime {
        match self.srtt {
            None => self.rto_min,
            Some(srtt) => {
                let raw = srtt.as_nanos() + 4 * self.rttvar.as_nanos();
                SimTime(raw.max(self.rto_min.as_nanos()))
            }
        }
    }
}

/// Per-window ECN accounting: tracks the marked fraction F over one window
/// of ACKed segments and maintains the running estimate alpha.
#[derive(Debug, Clone, Copy)]
pub struct EcnEstimator {
    pub alpha: f64,
    g: f64,
    window_end: u64,
    acked: u64,
    marked: u64,
}

impl EcnEstimator {
    pub fn new(g_shift: u32) -> Self {
        EcnEstimator { alpha: 1.0, g: 1.0 / (1u64 << g_shift) as f64, window_end: 0, acked: 0, marked: 0 }
    }

    /// Feeds one cumulative ACK covering `newly` segments. Returns
    /// `Some(alpha)` when the ACK closes a window that saw at least one
    /// mark, which is the only case where the window is cut.
    pub fn on_ack(&mut self, newly: u64, ce_echo: bool, cum: u64, snd_nxt: u64) -> Option<f64> {
        self.acked += newly;
        if ce_echo {
            self.marked += newly;
        }
        if cum < self.window_end {
            return None;
        }
        let f = if self.acked == 0 { 0.0 } else { self.marked as f64 / self.acked as f64 };
        self.alpha = (1.0 - self.g) * self.alpha + self.g * f;
        let had_marks = self.marked > 0;
        self.acked = 0;
        self.marked = 0;
        self.window_end = snd_nxt;
        had_marks.then_some(self.alpha)
    }
}

#[derive(Debug, Clone)]
pub struct ReliableSpec {
    pub path: FlowPath,
    pub total_bytes: u64,
    pub queue: QueueIndex,
    pub kind: FlowKind,
    pub cfg: ReliableConfig,
}

#[derive(Debug)]
pub struct ReliableFlow {
    pub id: FlowId,
    pub spec: ReliableSpec,
    /// Transfer length in segments.
    total: u64,
    seg_wire: u32,
    last_seg_wire: u32,
    payload_per_seg: u32,
    // Sender state.
    snd_una: u64,
    snd_nxt: u64,
    /// Congestion window in segments; fractional growth accumulates.
    pub cwnd: f64,
    ssthresh: f64,
    dupacks: u32,
    recover: u64,
    in_recovery: bool,
    pub rtt: RttEstimator,
    pub ecn: EcnEstimator,
    rto_handle: Option<EventHandle>,
    backoff: u32,
    next_seq: u32,
    // Receiver state.
    rcv_nxt: u64,
    ooo: BTreeSet<u64>,
    done_notified: bool,
    pub counters: FlowCounters,
}

impl ReliableFlow {
    pub fn new(id: FlowId, spec: ReliableSpec, net: &NetConfig, now: SimTime) -> Self {
        assert!(spec.total_bytes > 0, "reliable flow must carry data");
        let payload = net.mtu_bytes - net.header_bytes;
        let total = spec.total_bytes.div_ceil(payload as u64);
        let rem = spec.total_bytes - (total - 1) * payload as u64;
        let cfg = spec.cfg;
        let mut counters = FlowCounters { opened_at: now, ..Default::default() };
        counters.bytes_offered = spec.total_bytes;
        ReliableFlow {
            id,
            spec,
            total,
            seg_wire: payload + net.header_bytes,
            last_seg_wire: rem as u32 + net.header_bytes,
            payload_per_seg: payload,
            snd_una: 0,
            snd_nxt: 0,
            cwnd: cfg.init_cwnd as f64,
            ssthresh: f64::INFINITY,
            dupacks: 0,
            recover: 0,
            in_recovery: false,
            rtt: RttEstimator::new(cfg.rto_min),
            ecn: EcnEstimator::new(cfg.g_shift),
            rto_handle: None,
            backoff: 0,
            next_seq: 0,
            rcv_nxt: 0,
            ooo: BTreeSet::new(),
            done_notified: false,
            counters,
        }
    }

    /// All data acknowledged; sender side is closed.
    pub fn closed(&self) -> bool {
        self.snd_una == self.total
    }

    /// Receiver holds the whole transfer.
    pub fn delivered(&self) -> bool {
        self.rcv_nxt == self.total
    }

    fn flight(&self) -> u64 {
        self.snd_nxt - self.snd_una
    }

    fn wire_bytes(&self, index: u64) -> u32 {
        if index + 1 == self.total {
            self.last_seg_wire
        } else {
            self.seg_wire
        }
    }

    fn payload_bytes(&self, index: u64) -> u64 {
        if index + 1 == self.total {
            (self.last_seg_wire - (self.seg_wire - self.payload_per_seg)) as u64
        } else {
            self.payload_per_seg as u64
        }
    }
}

fn send_seg(flow: &mut ReliableFlow, index: u64, retx: bool, ctx: &mut TxCtx) {
    let seq = flow.next_seq;
    flow.next_seq += 1;
    let route = flow.spec.path.route(true, seq as u64, false);
    flow.counters.pkts_sent += 1;
    ctx.out.push(Packet {
        flow: flow.id,
        size_bytes: flow.wire_bytes(index),
        queue: flow.spec.queue,
        ecn_capable: flow.spec.cfg.mode == ReliableMode::Dctcp,
        ce_marked: false,
        seq,
        route,
        hop: 0,
        kind: PacketKind::Seg { index, sent_at: ctx.now, retx },
    });
}

fn send_ack(flow: &mut ReliableFlow, ce_echo: bool, ts_echo: Option<SimTime>, ctx: &mut TxCtx) {
    let seq = flow.next_seq;
    flow.next_seq += 1;
    let route = flow.spec.path.route(false, seq as u64, true);
    let cum = flow.rcv_nxt;
    flow.counters.pkts_sent += 1;
    ctx.out.push(Packet {
        flow: flow.id,
        size_bytes: ctx.cfg.ctrl_bytes,
        queue: flow.spec.queue,
        ecn_capable: true,
        ce_marked: false,
        seq,
        route,
        hop: 0,
        kind: PacketKind::Ack { cum, ce_echo, ts_echo },
    });
}

/// Fills the window: transmits new segments while cwnd allows.
fn send_allowed(flow: &mut ReliableFlow, ctx: &mut TxCtx) {
    let win = flow.cwnd as u64;
    while flow.snd_nxt < flow.total && flow.flight() < win {
        let index = flow.snd_nxt;
        flow.snd_nxt += 1;
        send_seg(flow, index, false, ctx);
    }
    if flow.flight() > 0 && flow.rto_handle.is_none() {
        arm_rto(flow, ctx);
    }
}

fn arm_rto(flow: &mut ReliableFlow, ctx: &mut TxCtx) {
    let base = flow.rtt.rto().as_nanos();
    let backoff = flow.backoff.min(16);
    let timeout = SimTime(base.saturating_mul(1 << backoff));
    flow.rto_handle =
        Some(ctx.q.schedule_in(timeout, crate::net::Ev::Timer(flow.id, TimerKind::Rto)));
}

fn restart_rto(flow: &mut ReliableFlow, ctx: &mut TxCtx) {
    if let Some(h) = flow.rto_handle.take() {
        ctx.q.cancel(h);
    }
    if flow.flight() > 0 {
        arm_rto(flow, ctx);
    }
}

pub fn open(flow: &mut ReliableFlow, ctx: &mut TxCtx) {
    send_allowed(flow, ctx);
}

pub fn on_timer(flow: &mut ReliableFlow, kind: TimerKind, ctx: &mut TxCtx) {
    assert!(matches!(kind, TimerKind::Rto), "reliable transport only arms RTO timers");
    flow.rto_handle = None;
    if flow.flight() == 0 {
        return;
    }
    flow.counters.timeout_count += 1;
    flow.ssthresh = (flow.flight() as f64 / 2.0).max(2.0);
    flow.cwnd = 1.0;
    flow.snd_nxt = flow.snd_una; // go-back-N
    flow.dupacks = 0;
    flow.in_recovery = false;
    flow.backoff += 1;
    send_allowed(flow, ctx);
}

pub fn on_packet(flow: &mut ReliableFlow, pkt: Packet, ctx: &mut TxCtx) {
    flow.counters.pkts_arrived += 1;
    if pkt.ce_marked {
        flow.counters.marks_seen += 1;
    }
    match pkt.kind {
        PacketKind::Seg { index, sent_at, retx } => {
            on_seg(flow, index, pkt.ce_marked, sent_at, retx, ctx)
        }
        PacketKind::Ack { cum, ce_echo, ts_echo } => on_ack(flow, cum, ce_echo, ts_echo, ctx),
        other => unreachable!("bounded-transport packet delivered to reliable flow: {other:?}"),
    }
}

fn on_seg(
    flow: &mut ReliableFlow,
    index: u64,
    ce: bool,
    sent_at: SimTime,
    retx: bool,
    ctx: &mut TxCtx,
) {
    if index >= flow.rcv_nxt && !flow.ooo.contains(&index) {
        flow.ooo.insert(index);
        while flow.ooo.remove(&flow.rcv_nxt) {
            flow.counters.bytes_delivered += flow.payload_bytes(flow.rcv_nxt);
            flow.rcv_nxt += 1;
        }
    }
    if flow.delivered() && !flow.done_notified {
        flow.done_notified = true;
        flow.counters.finished_at = Some(ctx.now);
        ctx.notify.push(AppEvent::FlowDone(flow.id));
    }
    // Karn's rule: never take an RTT sample from a retransmitted segment.
    let ts = (!retx).then_some(sent_at);
    send_ack(flow, ce, ts, ctx);
}

fn on_ack(flow: &mut ReliableFlow, cum: u64, ce_echo: bool, ts_echo: Option<SimTime>, ctx: &mut TxCtx) {
    if cum > flow.snd_una {
        let newly = cum - flow.snd_una;
        if let Some(ts) = ts_echo {
            flow.rtt.on_sample(ctx.now - ts);
        }
        flow.backoff = 0;
        if flow.spec.cfg.mode == ReliableMode::Dctcp {
            if let Some(alpha) = flow.ecn.on_ack(newly, ce_echo, cum, flow.snd_nxt) {
                flow.cwnd = (flow.cwnd * (1.0 - alpha / 2.0)).max(1.0);
            }
        }
        if flow.in_recovery {
            // `recover` holds snd_nxt at recovery entry; an ACK covering it
            // (cum is the next expected index) is a full ACK.
            if cum >= flow.recover {
                // Full ACK ends recovery; deflate to ssthresh.
                flow.cwnd = flow.ssthresh;
                flow.in_recovery = false;
                flow.dupacks = 0;
                flow.snd_una = cum;
            } else {
                // Partial ACK: the next hole was also lost. Retransmit it,
                // deflate by the amount acked, and stay in recovery.
                flow.snd_una = cum;
                flow.cwnd = (flow.cwnd - newly as f64 + 1.0).max(1.0);
                send_seg(flow, flow.snd_una, true, ctx);
            }
        } else {
            flow.dupacks = 0;
            flow.snd_una = cum;
            if flow.cwnd < flow.ssthresh {
                flow.cwnd += newly as f64; // slow start
            } else {
                flow.cwnd += newly as f64 / flow.cwnd; // congestion avoidance
            }
        }
        // After a go-back-N reset, a late ACK for pre-reset flight can move
        // snd_una past snd_nxt; pull snd_nxt along so flight() stays sound.
        if flow.snd_nxt < flow.snd_una {
            flow.snd_nxt = flow.snd_una;
        }
        if flow.closed() {
            if let Some(h) = flow.rto_handle.take() {
                ctx.q.cancel(h);
            }
            return;
        }
        send_allowed(flow, ctx);
        restart_rto(flow, ctx);
    } else if cum == flow.snd_una && flow.flight() > 0 {
        if flow.in_recovery {
            flow.cwnd += 1.0; // inflate while the hole drains
            send_allowed(flow, ctx);
        } else {
            flow.dupacks += 1;
            if flow.dupacks == flow.spec.cfg.dupack_thresh {
                flow.counters.retransmit_rounds += 1;
                flow.ssthresh = (flow.flight() as f64 / 2.0).max(2.0);
                flow.cwnd = flow.ssthresh + flow.spec.cfg.dupack_thresh as f64;
                flow.recover = flow.snd_nxt;
                flow.in_recovery = true;
                send_seg(flow, flow.snd_una, true, ctx);
            }
        }
    }
}
