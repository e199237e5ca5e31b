//! Bounded-loss transport.
//!
//! Gradients travel on an unreliable data channel that never arms a timer;
//! control messages travel on a reliable, strictly prioritized signal
//! channel (per-message ACK plus retransmit timer). A transfer finishes when
//! the receiver holds at least `1 - bound` of the tensor; the receiver then
//! announces completion and the two sides close with a finish/confirm
//! handshake while on-the-fly gradients keep merging.

use std::collections::{BTreeMap, VecDeque};

use crate::codec::{partition, GradientRange, RangeBitmap, TensorSpec};
use crate::net::{AppEvent, NetConfig, TimerKind, TxCtx};
use crate::packet::{FlowId, Packet, PacketKind, QueueIndex, SignalMessage};
use crate::sim::{tx_time, EventHandle, SimTime};
use crate::transport::{FlowCounters, FlowKind, FlowPath, TagPlan};

/// Direction of a transfer inside one training step; pulls tolerate less
/// loss because aggregated gradients fan out to every worker.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Push,
    Pull,
}

/// Loss bound actually applied to a flow: pushes use `p`, pulls use
/// `p * pull_factor`.
pub fn effective_bound(p: f64, stage: Stage, pull_factor: f64) -> f64 {
    match stage {
        Stage::Push => p,
        Stage::Pull => p * pull_factor,
    }
}

/// Number of gradients that must arrive before the flow may finish:
/// `ceil((1 - bound) * n)`, computed once with a tiny epsilon so exact
/// fractions like 0.9 * 350 do not round up spuriously.
pub fn required_count(n_gradients: u32, bound: f64) -> u32 {
    assert!((0.0..=1.0).contains(&bound), "loss bound must lie in [0, 1]");
    let exact = (1.0 - bound) * n_gradients as f64;
    (exact - 1e-9).ceil().max(0.0) as u32
}

/// Rate-control knobs. `delta_milli` and `ai_milli` are fixed-point
/// per-mille values so comparisons stay in integer arithmetic.
#[derive(Debug, Clone, Copy)]
pub struct RateControlConfig {
    /// Measurement and adjustment period.
    pub period: SimTime,
    /// Multiplicative-decrease trigger: halve when
    /// `send_rate > delta * recv_rate`. 2000 means delta = 2.
    pub delta_milli: u64,
    /// Additive-increase step as a fraction of line rate. 50 means 5%.
    pub ai_milli: u64,
}

impl Default for RateControlConfig {
    fn default() -> Self {
        RateControlConfig { period: SimTime::from_micros(200), delta_milli: 2000, ai_milli: 50 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RatePhase {
    LineRateStart,
    CongestionAvoidance,
}

/// The minimal two-state rate controller.
#[derive(Debug, Clone, Copy)]
pub struct RateController {
    pub phase: RatePhase,
    pub rate_bps: u64,
    pub line_rate_bps: u64,
    cfg: RateControlConfig,
    /// Halving never goes below one MTU per period.
    floor_bps: u64,
}

impl RateController {
    pub fn new(line_rate_bps: u64, mtu_bytes: u32, cfg: RateControlConfig) -> Self {
        let floor_bps =
            ((mtu_bytes as u128 * 8 * 1_000_000_000) / cfg.period.as_nanos() as u128).max(1) as u64;
        RateController {
            phase: RatePhase::LineRateStart,
            rate_bps: line_rate_bps,
            line_rate_bps,
            cfg,
            floor_bps,
        }
    }

    fn overshooting(&self, recv_bps: u64) -> bool {
        self.rate_bps as u128 * 1000 > self.cfg.delta_milli as u128 * recv_bps as u128
    }

    fn halve(&mut self) {
        self.rate_bps = (self.rate_bps / 2).max(self.floor_bps);
    }

    /// One control step, fed by the latest receiver rate report.
    pub fn on_report(&mut self, recv_bps: u64) {
        match self.phase {
            RatePhase::LineRateStart => {
                if self.overshooting(recv_bps) {
                    self.halve();
                    self.phase = RatePhase::CongestionAvoidance;
                }
            }
            RatePhase::CongestionAvoidance => {
                if self.overshooting(recv_bps) {
                    self.halve();
                } else {
                    let step = self.line_rate_bps / 1000 * self.cfg.ai_milli;
                    self.rate_bps = (self.rate_bps + step).min(self.line_rate_bps);
                }
            }
        }
    }

    /// A retransmission round restarts the transfer aggressively.
    pub fn on_retransmit_request(&mut self) {
        self.phase = RatePhase::LineRateStart;
        self.rate_bps = self.line_rate_bps;
    }
}

/// One direction of the reliable signal channel. The sending half lives at
/// the message origin; the delivery half (in-order reassembly) lives at the
/// opposite end. Both are stored with the flow.
#[derive(Debug, Default)]
pub struct SignalChannel {
    next_sseq: u32,
    /// Outstanding messages by sseq, with their retransmit timer.
    unacked: BTreeMap<u32, (SignalMessage, EventHandle)>,
    /// Next sseq the delivery half hands to the protocol.
    next_deliver: u32,
    ooo: BTreeMap<u32, SignalMessage>,
}

impl SignalChannel {
    pub fn outstanding(&self) -> usize {
        self.unacked.len()
    }
}

#[derive(Debug, Clone)]
pub struct BoundedSpec {
    pub path: FlowPath,
    pub tensor: TensorSpec,
    /// Effective loss bound for this flow (stage already applied).
    pub bound: f64,
    pub line_rate_bps: u64,
    pub tags: TagPlan,
    pub kind: FlowKind,
    pub rate_cfg: RateControlConfig,
}

#[derive(Debug)]
pub struct BoundedSender {
    pub rc: RateController,
    cursor: VecDeque<GradientRange>,
    pace_timer: Option<EventHandle>,
    stop_sent_for_pass: bool,
    got_finish: bool,
    per_packet: u32,
    pub last_report_bps: Option<u64>,
}

#[derive(Debug)]
pub struct BoundedReceiver {
    pub bitmap: RangeBitmap,
    pub required: u32,
    pub finish_sent_at: Option<SimTime>,
    pub confirmed: bool,
    bytes_this_period: u64,
    report_timer: Option<EventHandle>,
    pub requests_sent: u64,
    /// Set once a flow-stop found the bound unmet; from then on the receiver
    /// owns recovery and re-requests only after arrivals go quiet, so repairs
    /// that are still queued behind other traffic are not asked for twice.
    repairing: bool,
    quiet_timer: Option<EventHandle>,
}

#[derive(Debug)]
pub struct BoundedFlow {
    pub id: FlowId,
    pub spec: BoundedSpec,
    pub sender: BoundedSender,
    pub receiver: Option<BoundedReceiver>,
    sig_s2r: SignalChannel,
    sig_r2s: SignalChannel,
    /// Per-flow emission counter over every packet kind.
    next_seq: u32,
    pub counters: FlowCounters,
}

impl BoundedFlow {
    pub fn new(id: FlowId, spec: BoundedSpec, mtu_payload: u32, now: SimTime) -> Self {
        let ranges = partition(&spec.tensor, mtu_payload).expect("tensor must packetize");
        let per_packet = mtu_payload / spec.tensor.bytes_per_gradient;
        let rc = RateController::new(spec.line_rate_bps, mtu_payload, spec.rate_cfg);
        let mut counters = FlowCounters { opened_at: now, ..Default::default() };
        counters.bytes_offered = spec.tensor.total_bytes();
        BoundedFlow {
            id,
            spec,
            sender: BoundedSender {
                rc,
                cursor: ranges.into(),
                pace_timer: None,
                stop_sent_for_pass: false,
                got_finish: false,
                per_packet,
                last_report_bps: None,
            },
            receiver: None,
            sig_s2r: SignalChannel::default(),
            sig_r2s: SignalChannel::default(),
            next_seq: 0,
            counters,
        }
    }

    /// True once the receiver has announced completion.
    pub fn finished(&self) -> bool {
        self.receiver.as_ref().is_some_and(|r| r.finish_sent_at.is_some())
    }

    /// True once the finish/confirm handshake has fully closed the flow.
    pub fn closed(&self) -> bool {
        self.receiver.as_ref().is_some_and(|r| r.confirmed)
            && self.sig_s2r.unacked.is_empty()
            && self.sig_r2s.unacked.is_empty()
    }

    fn next_seq(&mut self) -> u32 {
        let s = self.next_seq;
        self.next_seq += 1;
        s
    }
}

fn ctrl_size(cfg: &NetConfig, msg: &SignalMessage) -> u32 {
    let extra = match msg {
        SignalMessage::RetransmitRequest { ranges } => 8 * ranges.len() as u32,
        _ => 0,
    };
    (cfg.ctrl_bytes + extra).min(cfg.mtu_bytes)
}

/// Emits `msg` on the signal channel in the given direction and arms its
/// retransmit timer.
fn send_signal(flow: &mut BoundedFlow, to_receiver: bool, msg: SignalMessage, ctx: &mut TxCtx) {
    let ch = if to_receiver { &mut flow.sig_s2r } else { &mut flow.sig_r2s };
    let sseq = ch.next_sseq;
    ch.next_sseq += 1;
    let timeout = signal_timeout(ctx);
    let handle = ctx.q.schedule_in(
        timeout,
        crate::net::Ev::Timer(flow.id, TimerKind::SignalRetx { s2r: to_receiver, sseq }),
    );
    ch.unacked.insert(sseq, (msg.clone(), handle));
    let seq = flow.next_seq();
    push_signal_packet(flow, to_receiver, sseq, msg, seq, ctx);
}

fn signal_timeout(ctx: &TxCtx) -> SimTime {
    SimTime(ctx.base_rtt.as_nanos() * ctx.cfg.signal_timeout_rtts as u64)
}

fn push_signal_packet(
    flow: &mut BoundedFlow,
    to_receiver: bool,
    sseq: u32,
    msg: SignalMessage,
    seq: u32,
    ctx: &mut TxCtx,
) {
    let size = ctrl_size(ctx.cfg, &msg);
    let route = flow.spec.path.route(to_receiver, seq as u64, true);
    flow.counters.pkts_sent += 1;
    ctx.out.push(Packet {
        flow: flow.id,
        size_bytes: size,
        queue: QueueIndex(0),
        ecn_capable: true,
        ce_marked: false,
        seq,
        route,
        hop: 0,
        kind: PacketKind::Signal { sseq, to_receiver, msg },
    });
}

fn send_signal_ack(flow: &mut BoundedFlow, for_s2r: bool, sseq: u32, ctx: &mut TxCtx) {
    // The ACK travels opposite to the message it acknowledges.
    let to_receiver = !for_s2r;
    let seq = flow.next_seq();
    let size = ctx.cfg.ctrl_bytes;
    let route = flow.spec.path.route(to_receiver, seq as u64, true);
    flow.counters.pkts_sent += 1;
    ctx.out.push(Packet {
        flow: flow.id,
        size_bytes: size,
        queue: QueueIndex(0),
        ecn_capable: true,
        ce_marked: false,
        seq,
        route,
        hop: 0,
        kind: PacketKind::SignalAck { sseq, for_s2r },
    });
}

/// Opens the flow: rendezvous signal plus first data leave at the same
/// instant (zero-RTT).
pub fn open(flow: &mut BoundedFlow, ctx: &mut TxCtx) {
    let msg = SignalMessage::FlowStart { tensor: flow.spec.tensor, bound: flow.spec.bound };
    send_signal(flow, true, msg, ctx);
    let h = ctx.q.schedule(ctx.now, crate::net::Ev::Timer(flow.id, TimerKind::Pace));
    flow.sender.pace_timer = Some(h);
}

fn pace_interval(flow: &BoundedFlow, wire_bytes: u32) -> SimTime {
    tx_time(wire_bytes as u64, flow.sender.rc.rate_bps)
}

fn emit_data(flow: &mut BoundedFlow, range: GradientRange, ctx: &mut TxCtx) -> u32 {
    let payload = range.count * flow.spec.tensor.bytes_per_gradient;
    let wire = payload + ctx.cfg.header_bytes;
    let packet_index = (range.start / flow.sender.per_packet) as usize;
    let (queue, important) = flow.spec.tags.tag(packet_index);
    let seq = flow.next_seq();
    let route = flow.spec.path.route(true, seq as u64, false);
    flow.counters.pkts_sent += 1;
    ctx.out.push(Packet {
        flow: flow.id,
        size_bytes: wire,
        queue,
        ecn_capable: important,
        ce_marked: false,
        seq,
        route,
        hop: 0,
        kind: PacketKind::Data { tensor_id: flow.spec.tensor.tensor_id, range },
    });
    wire
}

fn on_pace(flow: &mut BoundedFlow, ctx: &mut TxCtx) {
    flow.sender.pace_timer = None;
    if flow.sender.got_finish {
        return;
    }
    if let Some(range) = flow.sender.cursor.pop_front() {
        let wire = emit_data(flow, range, ctx);
        let next = ctx.now + pace_interval(flow, wire);
        flow.sender.pace_timer =
            Some(ctx.q.schedule(next, crate::net::Ev::Timer(flow.id, TimerKind::Pace)));
    } else if !flow.sender.stop_sent_for_pass {
        flow.sender.stop_sent_for_pass = true;
        send_signal(flow, true, SignalMessage::FlowStop, ctx);
    }
}

/// Chunks arbitrary missing runs back into per-packet ranges.
fn rechunk(ranges: &[GradientRange], per_packet: u32) -> VecDeque<GradientRange> {
    let mut out = VecDeque::new();
    for r in ranges {
        let mut start = r.start;
        let end = r.end();
        while start < end {
            let count = per_packet.min(end - start);
            out.push_back(GradientRange { start, count });
            start += count;
        }
    }
    out
}

fn create_receiver(flow: &mut BoundedFlow, bound: f64, ctx: &mut TxCtx) {
    if flow.receiver.is_some() {
        return;
    }
    let n = flow.spec.tensor.n_gradients;
    let required = required_count(n, bound);
    let report = ctx.q.schedule_in(
        ctx.cfg.rate.period,
        crate::net::Ev::Timer(flow.id, TimerKind::Report),
    );
    flow.receiver = Some(BoundedReceiver {
        bitmap: RangeBitmap::new(n),
        required,
        finish_sent_at: None,
        confirmed: false,
        bytes_this_period: 0,
        report_timer: Some(report),
        requests_sent: 0,
        repairing: false,
        quiet_timer: None,
    });
    maybe_finish(flow, ctx);
}

/// Edge-triggered completion check; emits flow-finish exactly once.
fn maybe_finish(flow: &mut BoundedFlow, ctx: &mut TxCtx) {
    let Some(rx) = flow.receiver.as_mut() else { return };
    if rx.finish_sent_at.is_some() || rx.bitmap.received() < rx.required {
        return;
    }
    rx.finish_sent_at = Some(ctx.now);
    if let Some(h) = rx.report_timer.take() {
        ctx.q.cancel(h);
    }
    if let Some(h) = rx.quiet_timer.take() {
        ctx.q.cancel(h);
    }
    flow.counters.finished_at = Some(ctx.now);
    send_signal(flow, false, SignalMessage::FlowFinish, ctx);
    ctx.notify.push(AppEvent::FlowDone(flow.id));
}

fn on_report_timer(flow: &mut BoundedFlow, ctx: &mut TxCtx) {
    let period_ns = ctx.cfg.rate.period.as_nanos();
    let Some(rx) = flow.receiver.as_mut() else { return };
    rx.report_timer = None;
    let bps = ((rx.bytes_this_period as u128 * 8 * 1_000_000_000) / period_ns as u128) as u64;
    rx.bytes_this_period = 0;
    if rx.finish_sent_at.is_some() {
        return;
    }
    rx.report_timer = Some(
        ctx.q
            .schedule_in(ctx.cfg.rate.period, crate::net::Ev::Timer(flow.id, TimerKind::Report)),
    );
    send_signal(flow, false, SignalMessage::RateReport { bps }, ctx);
}

/// How long arrivals must stall before the receiver concludes that nothing
/// further is in flight: one worst-case drain of the shared switch pool at
/// line rate, plus the signal timeout as slack for the request round-trip.
fn repair_quiet(flow: &BoundedFlow, ctx: &TxCtx) -> SimTime {
    signal_timeout(ctx) + tx_time(ctx.cfg.shared_pool_bytes as u64, flow.spec.line_rate_bps)
}

/// Asks for the lowest missing ranges, capped to one request packet, and
/// re-arms the quiet timer that guards against the request itself being lost.
fn issue_repair_request(flow: &mut BoundedFlow, ctx: &mut TxCtx) {
    let mtu_payload = (ctx.cfg.mtu_bytes - ctx.cfg.header_bytes) as usize;
    let timeout = repair_quiet(flow, ctx);
    let Some(rx) = flow.receiver.as_mut() else { return };
    let mut missing = rx.bitmap.missing_runs();
    missing.truncate(mtu_payload / 8);
    debug_assert!(!missing.is_empty(), "bound unmet implies missing ranges");
    rx.requests_sent += 1;
    if let Some(h) = rx.quiet_timer.take() {
        ctx.q.cancel(h);
    }
    rx.quiet_timer =
        Some(ctx.q.schedule_in(timeout, crate::net::Ev::Timer(flow.id, TimerKind::Quiet)));
    send_signal(flow, false, SignalMessage::RetransmitRequest { ranges: missing }, ctx);
}

/// No data arrived for a full signal timeout while the bound was unmet:
/// whatever was outstanding is gone, so ask again.
fn on_quiet(flow: &mut BoundedFlow, ctx: &mut TxCtx) {
    let Some(rx) = flow.receiver.as_mut() else { return };
    rx.quiet_timer = None;
    if rx.finish_sent_at.is_some() || !rx.repairing {
        return;
    }
    issue_repair_request(flow, ctx);
}

fn on_signal_retx(flow: &mut BoundedFlow, s2r: bool, sseq: u32, ctx: &mut TxCtx) {
    let timeout = signal_timeout(ctx);
    let ch = if s2r { &mut flow.sig_s2r } else { &mut flow.sig_r2s };
    let Some((msg, _)) = ch.unacked.get(&sseq) else { return };
    let msg = msg.clone();
    let handle = ctx
        .q
        .schedule_in(timeout, crate::net::Ev::Timer(flow.id, TimerKind::SignalRetx { s2r, sseq }));
    ch.unacked.insert(sseq, (msg.clone(), handle));
    let seq = flow.next_seq();
    push_signal_packet(flow, s2r, sseq, msg, seq, ctx);
}

pub fn on_timer(flow: &mut BoundedFlow, kind: TimerKind, ctx: &mut TxCtx) {
    match kind {
        TimerKind::Pace => on_pace(flow, ctx),
        TimerKind::Report => on_report_timer(flow, ctx),
        TimerKind::SignalRetx { s2r, sseq } => on_signal_retx(flow, s2r, sseq, ctx),
        TimerKind::Quiet => on_quiet(flow, ctx),
        TimerKind::Rto => unreachable!("bounded transport never arms data timers"),
    }
}

/// Handles a packet delivered to either endpoint of this flow.
pub fn on_packet(flow: &mut BoundedFlow, pkt: Packet, ctx: &mut TxCtx) {
    flow.counters.pkts_arrived += 1;
    if pkt.ce_marked {
        flow.counters.marks_seen += 1;
    }
    match pkt.kind {
        PacketKind::Data { range, .. } => on_data(flow, range, pkt.size_bytes, ctx),
        PacketKind::Signal { sseq, to_receiver, msg } => {
            send_signal_ack(flow, to_receiver, sseq, ctx);
            deliver_in_order(flow, to_receiver, sseq, msg, ctx);
        }
        PacketKind::SignalAck { sseq, for_s2r } => {
            let ch = if for_s2r { &mut flow.sig_s2r } else { &mut flow.sig_r2s };
            if let Some((_, h)) = ch.unacked.remove(&sseq) {
                ctx.q.cancel(h);
            }
        }
        PacketKind::Seg { .. } | PacketKind::Ack { .. } => {
            unreachable!("reliable segment delivered to bounded flow")
        }
    }
}

fn on_data(flow: &mut BoundedFlow, range: GradientRange, wire_bytes: u32, ctx: &mut TxCtx) {
    let bpg = flow.spec.tensor.bytes_per_gradient as u64;
    let Some(rx) = flow.receiver.as_mut() else {
        // Data beat the rendezvous: discard; the gradients count against the
        // loss budget exactly like network drops.
        flow.counters.drops_early += 1;
        return;
    };
    rx.bytes_this_period += wire_bytes as u64;
    let before = rx.bitmap.received();
    rx.bitmap.merge(range).expect("data range within tensor");
    let newly = rx.bitmap.received() - before;
    flow.counters.bytes_delivered += newly as u64 * bpg;
    maybe_finish(flow, ctx);
    // Every arrival during repair pushes the quiet deadline out: as long as
    // the pipe is still delivering, outstanding data may yet close the gap.
    let timeout = repair_quiet(flow, ctx);
    let Some(rx) = flow.receiver.as_mut() else { return };
    if rx.repairing && rx.finish_sent_at.is_none() {
        if let Some(h) = rx.quiet_timer.take() {
            ctx.q.cancel(h);
        }
        rx.quiet_timer =
            Some(ctx.q.schedule_in(timeout, crate::net::Ev::Timer(flow.id, TimerKind::Quiet)));
    }
}

fn deliver_in_order(
    flow: &mut BoundedFlow,
    to_receiver: bool,
    sseq: u32,
    msg: SignalMessage,
    ctx: &mut TxCtx,
) {
    {
        let ch = if to_receiver { &mut flow.sig_s2r } else { &mut flow.sig_r2s };
        if sseq < ch.next_deliver {
            return; // duplicate of an already delivered message
        }
        ch.ooo.insert(sseq, msg);
    }
    loop {
        let next = {
            let ch = if to_receiver { &mut flow.sig_s2r } else { &mut flow.sig_r2s };
            match ch.ooo.remove(&ch.next_deliver) {
                Some(m) => {
                    ch.next_deliver += 1;
                    m
                }
                None => break,
            }
        };
        if to_receiver {
            handle_s2r(flow, next, ctx);
        } else {
            handle_r2s(flow, next, ctx);
        }
    }
}

/// Sender-to-receiver control messages, processed at the receiver.
fn handle_s2r(flow: &mut BoundedFlow, msg: SignalMessage, ctx: &mut TxCtx) {
    match msg {
        SignalMessage::FlowStart { bound, .. } => create_receiver(flow, bound, ctx),
        SignalMessage::FlowStop => {
            maybe_finish(flow, ctx);
            let timeout = repair_quiet(flow, ctx);
            let Some(rx) = flow.receiver.as_mut() else { return };
            if rx.finish_sent_at.is_some() || rx.repairing {
                return;
            }
            // The stop rides the top-priority signal queue and can overtake
            // data still draining from lower-priority queues, so the gap seen
            // right now overstates the real loss. Enter repair mode and let
            // the quiet timer request whatever is still missing once the
            // pipe has actually gone silent.
            rx.repairing = true;
            if let Some(h) = rx.quiet_timer.take() {
                ctx.q.cancel(h);
            }
            rx.quiet_timer =
                Some(ctx.q.schedule_in(timeout, crate::net::Ev::Timer(flow.id, TimerKind::Quiet)));
        }
        SignalMessage::FinishConfirm => {
            if let Some(rx) = flow.receiver.as_mut() {
                rx.confirmed = true;
                if let Some(h) = rx.report_timer.take() {
                    ctx.q.cancel(h);
                }
            }
        }
        other => unreachable!("unexpected sender-to-receiver message {other:?}"),
    }
}

/// Receiver-to-sender control messages, processed at the sender.
fn handle_r2s(flow: &mut BoundedFlow, msg: SignalMessage, ctx: &mut TxCtx) {
    match msg {
        SignalMessage::RateReport { bps } => {
            flow.sender.last_report_bps = Some(bps);
            if !flow.sender.got_finish {
                flow.sender.rc.on_report(bps);
            }
        }
        SignalMessage::RetransmitRequest { ranges } => {
            if flow.sender.got_finish {
                return;
            }
            flow.counters.retransmit_rounds += 1;
            flow.sender.rc.on_retransmit_request();
            flow.sender.cursor = rechunk(&ranges, flow.sender.per_packet);
            flow.sender.stop_sent_for_pass = false;
            if flow.sender.pace_timer.is_none() {
                flow.sender.pace_timer =
                    Some(ctx.q.schedule(ctx.now, crate::net::Ev::Timer(flow.id, TimerKind::Pace)));
            }
        }
        SignalMessage::FlowFinish => {
            if !flow.sender.got_finish {
                flow.sender.got_finish = true;
                if let Some(h) = flow.sender.pace_timer.take() {
                    ctx.q.cancel(h);
                }
                send_signal(flow, true, SignalMessage::FinishConfirm, ctx);
            }
        }
        other => unreachable!("unexpected receiver-to-sender message {other:?}"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const G: u64 = 1_000_000_000;

    fn rc(line_gbps: u64) -> RateController {
        RateController::new(line_gbps * G, 1500, RateControlConfig::default())
    }

    #[test]
    fn line_rate_start_halves_on_overshoot_and_leaves() {
        // Sending 10 Gb/s against a 4 Gb/s report with delta = 2:
        // 10 > 8, so halve to 5 and move to congestion avoidance.
        let mut c = rc(10);
        assert_eq!(c.phase, RatePhase::LineRateStart);
        c.on_report(4 * G);
        assert_eq!(c.rate_bps, 5 * G);
        assert_eq!(c.phase, RatePhase::CongestionAvoidance);
    }

    #[test]
    fn line_rate_start_holds_without_overshoot() {
        let mut c = rc(10);
        c.on_report(5 * G); // 10 > 10 is false: stay at line rate
        assert_eq!(c.rate_bps, 10 * G);
        assert_eq!(c.phase, RatePhase::LineRateStart);
    }

    #[test]
    fn congestion_avoidance_additive_increase() {
        // At 10 Gb/s with a 6 Gb/s report on a 40 Gb/s line: 10 <= 12, so
        // add 5% of line rate = 2 Gb/s.
        let mut c = rc(40);
        c.phase = RatePhase::CongestionAvoidance;
        c.rate_bps = 10 * G;
        c.on_report(6 * G);
        assert_eq!(c.rate_bps, 12 * G);
        assert_eq!(c.phase, RatePhase::CongestionAvoidance);
    }

    #[test]
    fn congestion_avoidance_caps_at_line_rate() {
        let mut c = rc(10);
        c.phase = RatePhase::CongestionAvoidance;
        c.rate_bps = 9_900_000_000;
        c.on_report(9 * G);
        assert_eq!(c.rate_bps, 10 * G, "increase must cap at line rate");
    }

    #[test]
    fn halving_floors_at_one_mtu_per_period() {
        let mut c = rc(10);
        c.phase = RatePhase::CongestionAvoidance;
        // 1500 B / 200 us = 60 Mb/s floor.
        for _ in 0..40 {
            c.on_report(1);
        }
        assert_eq!(c.rate_bps, 60_000_000);
    }

    #[test]
    fn retransmit_request_resets_to_line_rate_start() {
        let mut c = rc(10);
        c.on_report(4 * G);
        assert_eq!(c.phase, RatePhase::CongestionAvoidance);
        c.on_retransmit_request();
        assert_eq!(c.phase, RatePhase::LineRateStart);
        assert_eq!(c.rate_bps, 10 * G);
    }

    #[test]
    fn effective_bound_by_stage() {
        assert_eq!(effective_bound(0.10, Stage::Push, 0.5), 0.10);
        assert_eq!(effective_bound(0.10, Stage::Pull, 0.5), 0.05);
        assert_eq!(effective_bound(0.0, Stage::Push, 0.5), 0.0);
    }

    #[test]
    fn required_count_edges() {
        assert_eq!(required_count(350, 0.10), 315);
        assert_eq!(required_count(350, 0.0), 350, "p = 0 demands full delivery");
        assert_eq!(required_count(350, 1.0), 0);
        assert_eq!(required_count(100, 0.001), 100, "sub-gradient bounds round up");
        assert_eq!(required_count(1000, 0.001), 999);
    }

    #[test]
    fn rechunk_respects_packet_capacity() {
        let runs = vec![GradientRange::new(100, 800), GradientRange::new(1000, 10)];
        let chunks = rechunk(&runs, 350);
        let sizes: Vec<u32> = chunks.iter().map(|r| r.count).collect();
        assert_eq!(sizes, vec![350, 350, 100, 10]);
        assert_eq!(chunks.front().unwrap().start, 100);
    }
}
