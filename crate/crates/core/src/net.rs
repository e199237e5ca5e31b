//! The network: ports, links, flows, and the event loop that binds them.
//!
//! Every directed link owns one strict-priority egress port at its `from`
//! node. Packets carry their full route; the network only moves them from
//! port to port and hands endpoint deliveries to the owning transport.
//! Workload logic lives behind the [`App`] trait and communicates with the
//! network through [`AppEvent`]s on the same event queue, so a whole run is
//! a single deterministic drain.

use std::collections::VecDeque;

use crate::fabric::{LbPolicy, LinkId, NodeKind, Route, Topology};
use crate::packet::{FlowId, Packet, QueueIndex};
use crate::sim::{drain, tx_time, EventQueue, SimStats, SimTime, StopWhen};
use crate::switch::{BufferMode, DropCause, EnqueueResult, PortConfig, PriorityPort, SharedPool};
use crate::transport::bounded::{self, BoundedFlow, BoundedSpec, RateControlConfig};
use crate::transport::reliable::{self, ReliableConfig, ReliableFlow, ReliableSpec};
use crate::transport::{FlowCounters, FlowKind, FlowPath};

/// Everything the event queue can fire.
#[derive(Debug, Clone)]
pub enum Ev {
    /// The port feeding this link is ready to transmit its next packet.
    Dequeue(LinkId),
    /// The packet finished serialization plus propagation on this link.
    Arrive(LinkId, Packet),
    /// A transport timer for this flow.
    Timer(FlowId, TimerKind),
    /// Workload-level event, dispatched to the [`App`] driver.
    App(AppEvent),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimerKind {
    /// Bounded sender: emit the next paced data packet.
    Pace,
    /// Bounded receiver: publish a rate report.
    Report,
    /// Bounded signal channel: retransmit message `sseq` of one direction.
    SignalRetx { s2r: bool, sseq: u32 },
    /// Bounded receiver: arrivals went quiet while the loss bound is unmet.
    Quiet,
    /// Reliable sender: retransmission timeout.
    Rto,
}

/// Events owned by the workload driver rather than the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AppEvent {
    /// The flow's receiver reached completion.
    FlowDone(FlowId),
    /// A compute phase (forward/backward slice) finished on this worker.
    Compute { worker: u32, token: u32 },
    /// Background-traffic generator tick.
    Background(u32),
    /// Deferred flow open.
    Open(u32),
    /// Periodic measurement hook.
    Sample(u32),
}

/// Mutable view handed to transport handlers: the clock, the event queue
/// for timers, static config, and output buffers for packets to inject and
/// app events to raise.
pub struct TxCtx<'a> {
    pub now: SimTime,
    pub q: &'a mut EventQueue<Ev>,
    pub cfg: &'a NetConfig,
    pub base_rtt: SimTime,
    pub out: &'a mut Vec<Packet>,
    pub notify: &'a mut Vec<AppEvent>,
}

/// Static network parameters shared by every flow.
#[derive(Debug, Clone, Copy)]
pub struct NetConfig {
    /// Wire size cap for data packets (payload + header).
    pub mtu_bytes: u32,
    /// Fixed per-packet header overhead inside `mtu_bytes`.
    pub header_bytes: u32,
    /// Wire size of control packets (signals, ACKs).
    pub ctrl_bytes: u32,
    /// Signal-channel retransmit timer, in multiples of the base RTT.
    pub signal_timeout_rtts: u32,
    /// Shared buffer budget per switch, used when ports run `BufferMode::Shared`.
    pub shared_pool_bytes: u64,
    pub rate: RateControlConfig,
    pub reliable: ReliableConfig,
    /// Applied to every switch egress port. Host NICs always get
    /// [`PortConfig::host_nic`].
    pub port: PortConfig,
    pub lb: LbPolicy,
}

impl NetConfig {
    pub fn mtu_payload(&self) -> u32 {
        self.mtu_bytes - self.header_bytes
    }
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig {
            mtu_bytes: 1500,
            header_bytes: 100,
            ctrl_bytes: 64,
            signal_timeout_rtts: 4,
            shared_pool_bytes: 12_000_000,
            rate: RateControlConfig::default(),
            reliable: ReliableConfig::default(),
            port: PortConfig::host_nic(),
            lb: LbPolicy::FlowEcmp,
        }
    }
}

/// One dropped packet, for drop-rate analysis.
#[derive(Debug, Clone, Copy)]
pub struct DropRecord {
    pub at: SimTime,
    pub link: LinkId,
    pub flow: FlowId,
    pub queue: QueueIndex,
    pub cause: DropCause,
}

#[derive(Debug)]
pub enum FlowState {
    Bounded(BoundedFlow),
    Reliable(ReliableFlow),
}

impl FlowState {
    pub fn counters(&self) -> &FlowCounters {
        match self {
            FlowState::Bounded(f) => &f.counters,
            FlowState::Reliable(f) => &f.counters,
        }
    }

    pub fn counters_mut(&mut self) -> &mut FlowCounters {
        match self {
            FlowState::Bounded(f) => &mut f.counters,
            FlowState::Reliable(f) => &mut f.counters,
        }
    }

    pub fn kind(&self) -> FlowKind {
        match self {
            FlowState::Bounded(f) => f.spec.kind,
            FlowState::Reliable(f) => f.spec.kind,
        }
    }

    pub fn path(&self) -> &FlowPath {
        match self {
            FlowState::Bounded(f) => &f.spec.path,
            FlowState::Reliable(f) => &f.spec.path,
        }
    }

    pub fn transport_name(&self) -> &'static str {
        match self {
            FlowState::Bounded(_) => "bounded",
            FlowState::Reliable(_) => "reliable",
        }
    }

    pub fn as_bounded(&self) -> Option<&BoundedFlow> {
        match self {
            FlowState::Bounded(f) => Some(f),
            _ => None,
        }
    }

    pub fn as_reliable(&self) -> Option<&ReliableFlow> {
        match self {
            FlowState::Reliable(f) => Some(f),
            _ => None,
        }
    }
}

fn deliver_packet(flow: &mut FlowState, pkt: Packet, ctx: &mut TxCtx) {
    match flow {
        FlowState::Bounded(f) => bounded::on_packet(f, pkt, ctx),
        FlowState::Reliable(f) => reliable::on_packet(f, pkt, ctx),
    }
}

fn dispatch_timer(flow: &mut FlowState, kind: TimerKind, ctx: &mut TxCtx) {
    match flow {
        FlowState::Bounded(f) => bounded::on_timer(f, kind, ctx),
        FlowState::Reliable(f) => reliable::on_timer(f, kind, ctx),
    }
}

pub struct Net {
    pub topo: Topology,
    pub cfg: NetConfig,
    /// One egress port per directed link, indexed by `LinkId`.
    ports: Vec<PriorityPort>,
    busy: Vec<bool>,
    /// One shared buffer pool per node (only switch nodes draw from them).
    pools: Vec<SharedPool>,
    pub flows: Vec<FlowState>,
    salt: u64,
    pub base_rtt: SimTime,
    pub drops: Vec<DropRecord>,
    /// Scripted fault injection: a packet for which the script returns true
    /// vanishes at its current hop and counts as a selective drop. The
    /// script may keep state (for one-shot or nth-transmission drops).
    pub fault_script: Option<Box<dyn FnMut(&Packet) -> bool>>,
}

impl Net {
    pub fn new(topo: Topology, cfg: NetConfig, salt: u64) -> Self {
        let ports = (0..topo.n_links())
            .map(|l| {
                let from = topo.link(LinkId(l as u32)).from;
                let pc = match topo.node_kind(from) {
                    NodeKind::Host => PortConfig::host_nic(),
                    NodeKind::Tor | NodeKind::Core => cfg.port,
                };
                PriorityPort::new(pc)
            })
            .collect();
        let pools = (0..topo.n_nodes()).map(|_| SharedPool::new(cfg.shared_pool_bytes)).collect();
        let base_rtt = topo.base_rtt();
        Net {
            topo,
            cfg,
            ports,
            busy: vec![false; 0],
            pools,
            flows: Vec::new(),
            salt,
            base_rtt,
            drops: Vec::new(),
            fault_script: None,
        }
        .init_busy()
    }

    fn init_busy(mut self) -> Self {
        self.busy = vec![false; self.ports.len()];
        self
    }

    pub fn port(&self, link: LinkId) -> &PriorityPort {
        &self.ports[link.0 as usize]
    }

    pub fn flow(&self, id: FlowId) -> &FlowState {
        &self.flows[id.0 as usize]
    }

    /// Builds the path descriptor between two hosts under the configured
    /// load-balancing policy. `flow_id` seeds path hashing.
    pub fn path_between(&self, src_host: usize, dst_host: usize, flow_id: u64) -> FlowPath {
        let routes_fwd = self.topo.equal_cost_routes(src_host, dst_host);
        let routes_rev = self.topo.equal_cost_routes(dst_host, src_host);
        FlowPath {
            src_host,
            dst_host,
            src: self.topo.host(src_host),
            dst: self.topo.host(dst_host),
            routes_fwd,
            routes_rev,
            policy: self.cfg.lb,
            salt: self.salt,
            flow_id,
        }
    }

    pub fn open_bounded(&mut self, q: &mut EventQueue<Ev>, spec: BoundedSpec) -> FlowId {
        let id = FlowId(self.flows.len() as u32);
        let flow = BoundedFlow::new(id, spec, self.cfg.mtu_payload(), q.now());
        self.flows.push(FlowState::Bounded(flow));
        self.flow_event(q, id, |f, ctx| match f {
            FlowState::Bounded(b) => bounded::open(b, ctx),
            FlowState::Reliable(_) => unreachable!(),
        });
        id
    }

    pub fn open_reliable(&mut self, q: &mut EventQueue<Ev>, spec: ReliableSpec) -> FlowId {
        let id = FlowId(self.flows.len() as u32);
        let flow = ReliableFlow::new(id, spec, &self.cfg, q.now());
        self.flows.push(FlowState::Reliable(flow));
        self.flow_event(q, id, |f, ctx| match f {
            FlowState::Reliable(r) => reliable::open(r, ctx),
            FlowState::Bounded(_) => unreachable!(),
        });
        id
    }

    /// Network-side event dispatch. `Ev::App` never reaches this; the run
    /// loop routes it to the driver.
    pub fn handle(&mut self, q: &mut EventQueue<Ev>, ev: Ev) {
        match ev {
            Ev::Dequeue(link) => self.on_dequeue(q, link),
            Ev::Arrive(link, pkt) => self.on_arrive(q, link, pkt),
            Ev::Timer(fid, kind) => self.flow_event(q, fid, |f, ctx| dispatch_timer(f, kind, ctx)),
            Ev::App(_) => unreachable!("app events are handled by the driver"),
        }
    }

    /// Runs one transport handler, then injects the packets it produced and
    /// schedules the app events it raised.
    fn flow_event<F>(&mut self, q: &mut EventQueue<Ev>, fid: FlowId, f: F)
    where
        F: FnOnce(&mut FlowState, &mut TxCtx),
    {
        let mut out = Vec::new();
        self.apply(q, fid, f, &mut out);
        self.flush(q, out);
    }

    fn apply<F>(&mut self, q: &mut EventQueue<Ev>, fid: FlowId, f: F, out: &mut Vec<Packet>)
    where
        F: FnOnce(&mut FlowState, &mut TxCtx),
    {
        let now = q.now();
        let mut notify = Vec::new();
        {
            let flow = self.flows.get_mut(fid.0 as usize).expect("unknown flow id");
            let mut ctx = TxCtx {
                now,
                q,
                cfg: &self.cfg,
                base_rtt: self.base_rtt,
                out,
                notify: &mut notify,
            };
            f(flow, &mut ctx);
        }
        for ev in notify {
            q.schedule(now, Ev::App(ev));
        }
    }

    /// Injects freshly emitted packets. Colocated endpoints have empty
    /// routes and deliver at the same instant, which may emit more packets.
    fn flush(&mut self, q: &mut EventQueue<Ev>, out: Vec<Packet>) {
        let mut work: VecDeque<Packet> = out.into();
        while let Some(pkt) = work.pop_front() {
            if pkt.route.is_empty() {
                let fid = pkt.flow;
                let mut more = Vec::new();
                self.apply(q, fid, |f, ctx| deliver_packet(f, pkt, ctx), &mut more);
                work.extend(more);
            } else {
                self.enqueue_port(q, pkt);
            }
        }
    }

    fn enqueue_port(&mut self, q: &mut EventQueue<Ev>, pkt: Packet) {
        let link = pkt.route[pkt.hop as usize];
        let scripted = match self.fault_script.as_mut() {
            Some(script) => script(&pkt),
            None => false,
        };
        if scripted {
            let c = self.flows[pkt.flow.0 as usize].counters_mut();
            c.drops_selective += 1;
            self.drops.push(DropRecord {
                at: q.now(),
                link,
                flow: pkt.flow,
                queue: pkt.queue,
                cause: DropCause::Selective,
            });
            return;
        }
        let li = link.0 as usize;
        let from = self.topo.link(link).from;
        let shared = matches!(self.ports[li].config().buffer, BufferMode::Shared);
        let pool = shared.then(|| &mut self.pools[from.0 as usize]);
        match self.ports[li].enqueue(pkt, pool) {
            EnqueueResult::Queued { .. } => {
                if !self.busy[li] {
                    self.busy[li] = true;
                    q.schedule(q.now(), Ev::Dequeue(link));
                }
            }
            EnqueueResult::Dropped { pkt, cause } => {
                let c = self.flows[pkt.flow.0 as usize].counters_mut();
                match cause {
                    DropCause::Selective => c.drops_selective += 1,
                    DropCause::Buffer => c.drops_buffer += 1,
                }
                self.drops.push(DropRecord {
                    at: q.now(),
                    link,
                    flow: pkt.flow,
                    queue: pkt.queue,
                    cause,
                });
            }
        }
    }

    fn on_dequeue(&mut self, q: &mut EventQueue<Ev>, link: LinkId) {
        let li = link.0 as usize;
        let from = self.topo.link(link).from;
        let shared = matches!(self.ports[li].config().buffer, BufferMode::Shared);
        let pool = shared.then(|| &mut self.pools[from.0 as usize]);
        match self.ports[li].dequeue(pool) {
            Some(pkt) => {
                let l = self.topo.link(link);
                let tx = tx_time(pkt.size_bytes as u64, l.bandwidth_bps);
                q.schedule(q.now() + tx + l.prop_delay, Ev::Arrive(link, pkt));
                q.schedule(q.now() + tx, Ev::Dequeue(link));
            }
            None => self.busy[li] = false,
        }
    }

    fn on_arrive(&mut self, q: &mut EventQueue<Ev>, link: LinkId, mut pkt: Packet) {
        debug_assert_eq!(pkt.route[pkt.hop as usize], link, "arrival link disagrees with route");
        pkt.hop += 1;
        if (pkt.hop as usize) < pkt.route.len() {
            self.enqueue_port(q, pkt);
        } else {
            let fid = pkt.flow;
            let mut out = Vec::new();
            self.apply(q, fid, |f, ctx| deliver_packet(f, pkt, ctx), &mut out);
            self.flush(q, out);
        }
    }

    /// Sum of selective and buffer drops recorded so far.
    pub fn total_drops(&self) -> u64 {
        self.drops.len() as u64
    }
}

/// Reverse of `data_queue`: used when exporting per-route summaries.
pub fn route_hops(route: &Route) -> usize {
    route.len()
}

/// Workload driver: receives every [`AppEvent`] in timestamp order and may
/// open flows or schedule further app events in response.
pub trait App {
    fn on_event(&mut self, net: &mut Net, q: &mut EventQueue<Ev>, ev: AppEvent);
}

/// Driver that ignores every app event; useful for pure-network tests.
pub struct NoopApp;

impl App for NoopApp {
    fn on_event(&mut self, _net: &mut Net, _q: &mut EventQueue<Ev>, _ev: AppEvent) {}
}

/// Drains the queue to completion (or to the stop time), dispatching
/// network events to `net` and app events to `app`.
pub fn run_sim(net: &mut Net, q: &mut EventQueue<Ev>, app: &mut dyn App, stop: StopWhen) -> SimStats {
    drain(q, stop, |_, ev, q| match ev {
        Ev::App(a) => app.on_event(net, q, a),
        other => net.handle(q, other),
    })
}
