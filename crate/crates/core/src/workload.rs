//! Training workloads: synchronous data-parallel training over a parameter
//! server or a ring all-reduce, plus a Poisson background-traffic generator
//! and small scenario drivers (incast bursts, periodic drop sampling).
//!
//! Drivers implement [`App`] composition through [`Drivers`]: the network
//! raises [`AppEvent`]s and the drivers open flows in response, so the whole
//! workload executes inside the single deterministic event drain.

use std::collections::HashMap;

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Exp, LogNormal};

use crate::codec::TensorSpec;
use crate::metrics::IterationRecord;
use crate::net::{AppEvent, Ev, Net};
use crate::packet::{data_queue, FlowId, N_DATA_CLASSES};
use crate::sim::{EventQueue, RngHub, SimTime};
use crate::transport::bounded::{effective_bound, BoundedSpec, Stage};
use crate::transport::reliable::ReliableSpec;
use crate::transport::{FlowKind, TagPlan};

// ---------------------------------------------------------------------------
// Model profiles
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct LayerSpec {
    pub name: String,
    /// Gradient (parameter) count of this layer.
    pub params: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelProfile {
    pub name: String,
    pub bytes_per_gradient: u32,
    pub layers: Vec<LayerSpec>,
}

impl ModelProfile {
    pub fn total_params(&self) -> u64 {
        self.layers.iter().map(|l| l.params).sum()
    }

    pub fn total_bytes(&self) -> u64 {
        self.total_params() * self.bytes_per_gradient as u64
    }

    /// Data class of a layer: front layers (low index) map to class 0, the
    /// most protected, back layers to the last class.
    pub fn class_of(&self, layer: usize) -> u8 {
        let l = self.layers.len();
        if l <= 1 {
            return 0;
        }
        let c = layer * N_DATA_CLASSES as usize / l;
        c.min(N_DATA_CLASSES as usize - 1) as u8
    }
}

fn layer(name: &str, params: u64) -> LayerSpec {
    LayerSpec { name: name.to_string(), params }
}

/// Three-layer toy model for fast tests.
pub fn tiny() -> ModelProfile {
    ModelProfile {
        name: "tiny".into(),
        bytes_per_gradient: 4,
        layers: vec![layer("conv1", 25_000), layer("fc1", 50_000), layer("out", 25_000)],
    }
}

/// Six-layer MLP around one million parameters.
pub fn mlp_1m() -> ModelProfile {
    ModelProfile {
        name: "mlp-1m".into(),
        bytes_per_gradient: 4,
        layers: vec![
            layer("fc1", 200_704),
            layer("fc2", 262_144),
            layer("fc3", 262_144),
            layer("fc4", 131_072),
            layer("fc5", 131_072),
            layer("out", 40_960),
        ],
    }
}

/// Inception-style convolutional model, roughly 6.8M parameters, with the
/// characteristic small-front / heavier-middle distribution.
pub fn googlenet_like() -> ModelProfile {
    ModelProfile {
        name: "googlenet-like".into(),
        bytes_per_gradient: 4,
        layers: vec![
            layer("conv1", 9_408),
            layer("conv2", 114_688),
            layer("inc3a", 163_696),
            layer("inc3b", 388_736),
            layer("inc4a", 376_176),
            layer("inc4b", 449_160),
            layer("inc4c", 510_104),
            layer("inc4d", 605_376),
            layer("inc4e", 868_352),
            layer("inc5a", 1_043_456),
            layer("inc5b", 1_444_080),
            layer("fc", 1_024_000),
        ],
    }
}

/// Convolution-light, fully-connected-heavy model, roughly 61M parameters.
pub fn alexnet_like() -> ModelProfile {
    ModelProfile {
        name: "alexnet-like".into(),
        bytes_per_gradient: 4,
        layers: vec![
            layer("conv1", 34_848),
            layer("conv2", 307_200),
            layer("conv3", 884_736),
            layer("conv4", 663_552),
            layer("conv5", 442_368),
            layer("fc6", 37_748_736),
            layer("fc7", 16_777_216),
            layer("fc8", 4_096_000),
        ],
    }
}

pub fn profile_by_name(name: &str) -> Option<ModelProfile> {
    match name {
        "tiny" => Some(tiny()),
        "mlp-1m" => Some(mlp_1m()),
        "googlenet-like" => Some(googlenet_like()),
        "alexnet-like" => Some(alexnet_like()),
        _ => None,
    }
}

/// Serializes a profile in the line format:
/// `model <name> bytes_per_gradient <n>` then one `layer <name> <params>`
/// line per layer. `#` starts a comment.
pub fn write_profile(p: &ModelProfile) -> String {
    let mut s = format!("model {} bytes_per_gradient {}\n", p.name, p.bytes_per_gradient);
    for l in &p.layers {
        s.push_str(&format!("layer {} {}\n", l.name, l.params));
    }
    s
}

pub fn parse_profile(text: &str) -> Result<ModelProfile, String> {
    let mut name = None;
    let mut bpg = 4u32;
    let mut layers = Vec::new();
    for (ln, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.as_slice() {
            ["model", n, "bytes_per_gradient", b] => {
                name = Some(n.to_string());
                bpg = b.parse().map_err(|e| format!("line {}: {e}", ln + 1))?;
            }
            ["layer", n, p] => {
                let params: u64 = p.parse().map_err(|e| format!("line {}: {e}", ln + 1))?;
                layers.push(layer(n, params));
            }
            _ => return Err(format!("line {}: unrecognized: {line}", ln + 1)),
        }
    }
    let name = name.ok_or("missing model header line")?;
    if layers.is_empty() {
        return Err("profile has no layers".into());
    }
    Ok(ModelProfile { name, bytes_per_gradient: bpg, layers })
}

// ---------------------------------------------------------------------------
// Tagging
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Tagging {
    /// Every packet of every tensor gets the same class and importance.
    Uniform { class: u8, important: bool },
    /// Class follows layer depth; importance is fixed.
    LayerClasses { important: bool },
    /// Class follows layer depth; importance per packet from synthetic
    /// gradient magnitudes (packets whose mean magnitude exceeds the median
    /// packet mean of the tensor are important).
    Magnitude { sigma: f64 },
}

/// Builds the per-packet tag plan for one tensor.
fn build_tags(
    tagging: Tagging,
    class: u8,
    n_grads: u32,
    per_packet: u32,
    scale: f64,
    rng: &mut ChaCha12Rng,
) -> TagPlan {
    match tagging {
        Tagging::Uniform { class, important } => TagPlan::uniform(class, important),
        Tagging::LayerClasses { important } => TagPlan::uniform(class, important),
        Tagging::Magnitude { sigma } => {
            let dist = LogNormal::new(scale.ln(), sigma).expect("valid log-normal");
            let n_pkts = n_grads.div_ceil(per_packet) as usize;
            let mut means = Vec::with_capacity(n_pkts);
            let mut remaining = n_grads;
            for _ in 0..n_pkts {
                let take = remaining.min(per_packet);
                remaining -= take;
                let sum: f64 = (0..take).map(|_| dist.sample(rng)).sum();
                means.push(sum / take as f64);
            }
            let mut sorted = means.clone();
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let median = sorted[sorted.len() / 2];
            let per_packet_tags = means.iter().map(|m| (class, *m > median)).collect();
            TagPlan { per_packet: Some(per_packet_tags), default_class: class, default_important: false }
        }
    }
}

/// Per-layer magnitude scale: front layers carry larger average gradients,
/// decaying geometrically toward the back.
fn layer_scale(layer: usize, n_layers: usize) -> f64 {
    if n_layers <= 1 {
        return 1.0;
    }
    let pos = layer as f64 / (n_layers - 1) as f64;
    2.0 * (0.25f64).powf(pos) // 2.0 at the front, 0.5 at the back
}

// ---------------------------------------------------------------------------
// Training driver (parameter server and ring)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scheme {
    /// Workers push layer gradients to sharded servers and pull aggregates.
    ParameterServer { n_servers: u32, shard_threshold_bytes: u64 },
    /// Chunked ring all-reduce over all workers.
    Ring,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransportSel {
    Bounded,
    Reliable,
}

#[derive(Debug, Clone)]
pub struct TrainSpec {
    pub model: ModelProfile,
    pub n_workers: u32,
    pub scheme: Scheme,
    pub transport: TransportSel,
    /// Loss bound p for pushes; pulls use `p * pull_factor`.
    pub bound: f64,
    pub pull_factor: f64,
    pub iterations: u32,
    /// Forward + backward compute per iteration.
    pub compute: SimTime,
    pub tagging: Tagging,
}

/// One unit of transfer: a parameter-server shard or a ring chunk.
#[derive(Debug, Clone)]
struct TensorMeta {
    /// Owning layer (parameter server) or chunk index (ring).
    layer: usize,
    /// Destination server index (parameter server only).
    server: u32,
    n_grads: u32,
    class: u8,
    tags: TagPlan,
}

#[derive(Debug, Clone, Copy)]
enum FlowRole {
    Push { tensor: usize },
    Pull,
    RingStep,
}

pub struct TrainDriver {
    pub spec: TrainSpec,
    tensors: Vec<TensorMeta>,
    /// Backward-pass completion offset of each layer from iteration start;
    /// the last layer finishes first.
    bp_done_at: Vec<SimTime>,
    iter: u32,
    comm_start: Option<SimTime>,
    barrier_left: u64,
    push_left: HashMap<usize, u32>,
    roles: HashMap<FlowId, FlowRole>,
    next_flow_id: u64,
    // Ring state.
    step: u32,
    step_left: u32,
    pub iterations_log: Vec<IterationRecord>,
    pub done: bool,
}

impl TrainDriver {
    pub fn new(spec: TrainSpec, net: &Net, hub: &RngHub) -> Self {
        let mut rng = hub.stream("workload/tags");
        let per_packet = net.cfg.mtu_payload() / spec.model.bytes_per_gradient;
        let n_layers = spec.model.layers.len();
        let mut tensors = Vec::new();
        match spec.scheme {
            Scheme::ParameterServer { n_servers, shard_threshold_bytes } => {
                for (li, l) in spec.model.layers.iter().enumerate() {
                    let class = spec.model.class_of(li);
                    let scale = layer_scale(li, n_layers);
                    let bytes = l.params * spec.model.bytes_per_gradient as u64;
                    let shards: Vec<(u32, u64)> = if bytes > shard_threshold_bytes && n_servers > 1
                    {
                        // Split across every server, remainder on the last.
                        let per = l.params / n_servers as u64;
                        (0..n_servers)
                            .map(|s| {
                                let extra = if s + 1 == n_servers {
                                    l.params - per * n_servers as u64
                                } else {
                                    0
                                };
                                (s, per + extra)
                            })
                            .filter(|(_, p)| *p > 0)
                            .collect()
                    } else {
                        vec![(li as u32 % n_servers, l.params)]
                    };
                    for (server, params) in shards {
                        let n_grads = u32::try_from(params).expect("shard fits u32 gradients");
                        let tags =
                            build_tags(spec.tagging, class, n_grads, per_packet, scale, &mut rng);
                        tensors.push(TensorMeta { layer: li, server, n_grads, class, tags });
                    }
                }
            }
            Scheme::Ring => {
                let n = spec.n_workers as u64;
                let total = spec.model.total_params();
                let per = total / n;
                for c in 0..spec.n_workers {
                    let params =
                        if c as u64 + 1 == n { total - per * (n - 1) } else { per };
                    let n_grads = u32::try_from(params).expect("chunk fits u32 gradients");
                    // Ring chunks span layers; use the middle class and a
                    // neutral scale.
                    let class = N_DATA_CLASSES / 2;
                    let tags =
                        build_tags(spec.tagging, class, n_grads, per_packet, 1.0, &mut rng);
                    tensors.push(TensorMeta { layer: c as usize, server: 0, n_grads, class, tags });
                }
            }
        }

        // Backward pass: 1/3 forward, 2/3 backward, layers finishing from
        // the back; layer completion lags proportional to parameter mass.
        let total = spec.model.total_params().max(1);
        let fw = spec.compute.as_nanos() / 3;
        let bp = spec.compute.as_nanos() - fw;
        let mut bp_done_at = vec![SimTime(0); n_layers];
        let mut cum = 0u64;
        for li in (0..n_layers).rev() {
            cum += spec.model.layers[li].params;
            bp_done_at[li] = SimTime(fw + bp * cum / total);
        }

        TrainDriver {
            spec,
            tensors,
            bp_done_at,
            iter: 0,
            comm_start: None,
            barrier_left: 0,
            push_left: HashMap::new(),
            roles: HashMap::new(),
            next_flow_id: 0,
            step: 0,
            step_left: 0,
            iterations_log: Vec::new(),
            done: false,
        }
    }

    fn worker_host(&self, net: &Net, w: u32) -> usize {
        w as usize % net.topo.n_hosts()
    }

    fn server_host(&self, net: &Net, s: u32) -> usize {
        (self.spec.n_workers + s) as usize % net.topo.n_hosts()
    }

    /// Kicks iteration `self.iter` at the current time: schedules the
    /// per-layer backward-pass completions (parameter server) or the first
    /// ring step.
    pub fn start_iteration(&mut self, net: &mut Net, q: &mut EventQueue<Ev>) {
        self.comm_start = None;
        match self.spec.scheme {
            Scheme::ParameterServer { .. } => {
                self.barrier_left = self.tensors.len() as u64 * self.spec.n_workers as u64;
                for (t, _) in self.tensors.iter().enumerate() {
                    self.push_left.insert(t, self.spec.n_workers);
                }
                let n_layers = self.spec.model.layers.len();
                for w in 0..self.spec.n_workers {
                    for li in 0..n_layers {
                        q.schedule_in(
                            self.bp_done_at[li],
                            Ev::App(AppEvent::Compute { worker: w, token: li as u32 }),
                        );
                    }
                }
                let _ = net;
            }
            Scheme::Ring => {
                self.step = 0;
                self.open_ring_step(net, q);
            }
        }
    }

    fn effective(&self, stage: Stage) -> f64 {
        effective_bound(self.spec.bound, stage, self.spec.pull_factor)
    }

    fn open_flow(
        &mut self,
        net: &mut Net,
        q: &mut EventQueue<Ev>,
        src: usize,
        dst: usize,
        tensor: usize,
        stage: Stage,
        kind: FlowKind,
        role: FlowRole,
    ) {
        let meta = self.tensors[tensor].clone();
        let fid = self.next_flow_id;
        self.next_flow_id += 1;
        let path = net.path_between(src, dst, fid);
        let id = match self.spec.transport {
            TransportSel::Bounded => net.open_bounded(
                q,
                BoundedSpec {
                    path,
                    tensor: TensorSpec {
                        tensor_id: fid,
                        n_gradients: meta.n_grads,
                        bytes_per_gradient: self.spec.model.bytes_per_gradient,
                    },
                    bound: self.effective(stage),
                    line_rate_bps: net.topo.host_link_bps(src),
                    tags: meta.tags.clone(),
                    kind,
                    rate_cfg: net.cfg.rate,
                },
            ),
            TransportSel::Reliable => net.open_reliable(
                q,
                ReliableSpec {
                    path,
                    total_bytes: meta.n_grads as u64 * self.spec.model.bytes_per_gradient as u64,
                    queue: data_queue(meta.class),
                    kind,
                    cfg: net.cfg.reliable,
                },
            ),
        };
        self.roles.insert(id, role);
        if self.comm_start.is_none() {
            self.comm_start = Some(q.now());
        }
    }

    fn open_ring_step(&mut self, net: &mut Net, q: &mut EventQueue<Ev>) {
        let n = self.spec.n_workers;
        self.step_left = n;
        let stage = if self.step < n - 1 { Stage::Push } else { Stage::Pull };
        let kind = FlowKind::Chunk;
        for i in 0..n {
            let chunk = ((i as i64 - self.step as i64).rem_euclid(n as i64)) as usize;
            let src = self.worker_host(net, i);
            let dst = self.worker_host(net, (i + 1) % n);
            self.open_flow(net, q, src, dst, chunk, stage, kind, FlowRole::RingStep);
        }
    }

    fn finish_iteration(&mut self, net: &mut Net, q: &mut EventQueue<Ev>) {
        let now = q.now();
        let start = self.comm_start.unwrap_or(now);
        self.iterations_log.push(IterationRecord {
            iteration: self.iter,
            comm_start_ns: start.as_nanos(),
            barrier_ns: now.as_nanos(),
            comm_ns: now.as_nanos() - start.as_nanos(),
        });
        self.iter += 1;
        if self.iter < self.spec.iterations {
            match self.spec.scheme {
                // The next backward pass overlaps nothing: schedule its
                // layer completions relative to the barrier.
                Scheme::ParameterServer { .. } => self.start_iteration(net, q),
                // Ring steps carry no per-layer timing; the next iteration
                // starts after the full compute block.
                Scheme::Ring => {
                    q.schedule_in(
                        self.spec.compute,
                        Ev::App(AppEvent::Compute { worker: 0, token: u32::MAX }),
                    );
                }
            }
        } else {
            self.done = true;
        }
    }

    pub fn owns(&self, id: FlowId) -> bool {
        self.roles.contains_key(&id)
    }

    pub fn on_event(&mut self, net: &mut Net, q: &mut EventQueue<Ev>, ev: AppEvent) {
        match ev {
            AppEvent::Compute { worker, token } => match self.spec.scheme {
                Scheme::ParameterServer { .. } => {
                    let li = token as usize;
                    let src = self.worker_host(net, worker);
                    let push_tensors: Vec<usize> = self
                        .tensors
                        .iter()
                        .enumerate()
                        .filter(|(_, m)| m.layer == li)
                        .map(|(t, _)| t)
                        .collect();
                    for t in push_tensors {
                        let dst = self.server_host(net, self.tensors[t].server);
                        self.open_flow(
                            net,
                            q,
                            src,
                            dst,
                            t,
                            Stage::Push,
                            FlowKind::Push,
                            FlowRole::Push { tensor: t },
                        );
                    }
                }
                Scheme::Ring => {
                    debug_assert_eq!(token, u32::MAX, "ring uses compute only as iteration kick");
                    self.start_iteration(net, q);
                }
            },
            AppEvent::FlowDone(id) => {
                let Some(role) = self.roles.get(&id).copied() else { return };
                match role {
                    FlowRole::Push { tensor } => {
                        let left = self.push_left.get_mut(&tensor).expect("push accounting");
                        *left -= 1;
                        if *left == 0 {
                            // Aggregate ready: fan the tensor back out.
                            let src = self.server_host(net, self.tensors[tensor].server);
                            for w in 0..self.spec.n_workers {
                                let dst = self.worker_host(net, w);
                                self.open_flow(
                                    net,
                                    q,
                                    src,
                                    dst,
                                    tensor,
                                    Stage::Pull,
                                    FlowKind::Pull,
                                    FlowRole::Pull,
                                );
                            }
                        }
                    }
                    FlowRole::Pull => {
                        self.barrier_left -= 1;
                        if self.barrier_left == 0 {
                            self.finish_iteration(net, q);
                        }
                    }
                    FlowRole::RingStep => {
                        self.step_left -= 1;
                        if self.step_left == 0 {
                            self.step += 1;
                            if self.step < 2 * (self.spec.n_workers - 1) {
                                self.open_ring_step(net, q);
                            } else {
                                self.finish_iteration(net, q);
                            }
                        }
                    }
                }
            }
            _ => {}
        }
    }
}

// ---------------------------------------------------------------------------
// Background traffic
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy)]
pub struct BackgroundSpec {
    /// Target utilization of each rack uplink direction, 0..1.
    pub load: f64,
    /// Mean flow size in bytes (log-normal).
    pub mean_bytes: f64,
    pub sigma: f64,
    pub transport: TransportSel,
    pub class: u8,
    /// Loss bound when riding the bounded transport.
    pub bound: f64,
    /// Stop generating new flows at this time (existing ones finish).
    pub stop_at: Option<SimTime>,
}

impl Default for BackgroundSpec {
    fn default() -> Self {
        BackgroundSpec {
            load: 0.2,
            mean_bytes: 200_000.0,
            sigma: 1.0,
            transport: TransportSel::Reliable,
            class: N_DATA_CLASSES - 1,
            bound: 0.0,
            stop_at: None,
        }
    }
}

pub struct BackgroundGen {
    spec: BackgroundSpec,
    rng: ChaCha12Rng,
    inter_arrival: Exp<f64>,
    size_dist: LogNormal<f64>,
    next_flow_id: u64,
    pub opened: u64,
}

impl BackgroundGen {
    /// Sizes the Poisson arrival rate so the expected inter-rack byte rate
    /// fills `load` of every rack uplink. With uniformly random host pairs a
    /// known fraction of flows stays intra-rack and never touches a core
    /// link; the rate corrects for that.
    pub fn new(spec: BackgroundSpec, net: &Net, hub: &RngHub) -> Self {
        let topo = &net.topo;
        let n_hosts = topo.n_hosts() as f64;
        let hosts_per_tor = n_hosts / topo.n_tors() as f64;
        let inter_rack_frac = if n_hosts > 1.0 {
            1.0 - (hosts_per_tor - 1.0) / (n_hosts - 1.0)
        } else {
            0.0
        };
        let uplinks = (topo.n_tors() * topo.n_cores()) as f64;
        let core_bps = if topo.n_cores() > 0 {
            topo.link(topo.tor_uplink(0, 0)).bandwidth_bps as f64
        } else {
            0.0
        };
        // flows/ns such that: rate * E[size] * f_ir / uplinks = load * C/8.
        let lambda_per_ns = if inter_rack_frac > 0.0 && core_bps > 0.0 {
            spec.load * core_bps / 8.0 * uplinks / (spec.mean_bytes * inter_rack_frac) / 1e9
        } else {
            0.0
        };
        let mu = spec.mean_bytes.ln() - spec.sigma * spec.sigma / 2.0;
        BackgroundGen {
            spec,
            rng: hub.stream("workload/background"),
            inter_arrival: Exp::new(lambda_per_ns.max(1e-18)).expect("positive rate"),
            size_dist: LogNormal::new(mu, spec.sigma).expect("valid log-normal"),
            next_flow_id: 1 << 32,
            opened: 0,
        }
    }

    /// Schedules the first arrival; call once before the run.
    pub fn start(&mut self, q: &mut EventQueue<Ev>) {
        let dt = self.inter_arrival.sample(&mut self.rng).ceil() as u64;
        q.schedule_in(SimTime(dt.max(1)), Ev::App(AppEvent::Background(0)));
    }

    pub fn on_event(&mut self, net: &mut Net, q: &mut EventQueue<Ev>, ev: AppEvent) {
        let AppEvent::Background(_) = ev else { return };
        if let Some(stop) = self.spec.stop_at {
            if q.now() >= stop {
                return;
            }
        }
        let n_hosts = net.topo.n_hosts();
        let src = self.rng.gen_range(0..n_hosts);
        let mut dst = self.rng.gen_range(0..n_hosts - 1);
        if dst >= src {
            dst += 1;
        }
        let bytes = (self.size_dist.sample(&mut self.rng) as u64).max(1_400);
        let fid = self.next_flow_id;
        self.next_flow_id += 1;
        let path = net.path_between(src, dst, fid);
        match self.spec.transport {
            TransportSel::Reliable => {
                net.open_reliable(
                    q,
                    ReliableSpec {
                        path,
                        total_bytes: bytes,
                        queue: data_queue(self.spec.class),
                        kind: FlowKind::Background,
                        cfg: net.cfg.reliable,
                    },
                );
            }
            TransportSel::Bounded => {
                let bpg = 4;
                let n_gradients = (bytes / bpg as u64).max(1) as u32;
                net.open_bounded(
                    q,
                    BoundedSpec {
                        path,
                        tensor: TensorSpec { tensor_id: fid, n_gradients, bytes_per_gradient: bpg },
                        bound: self.spec.bound,
                        line_rate_bps: net.topo.host_link_bps(src),
                        tags: TagPlan::uniform(self.spec.class, false),
                        kind: FlowKind::Background,
                        rate_cfg: net.cfg.rate,
                    },
                );
            }
        }
        self.opened += 1;
        let dt = self.inter_arrival.sample(&mut self.rng).ceil() as u64;
        q.schedule_in(SimTime(dt.max(1)), Ev::App(AppEvent::Background(0)));
    }
}

// ---------------------------------------------------------------------------
// Scenario drivers
// ---------------------------------------------------------------------------

/// Synchronized incast: every sender fires one equal-size flow at the same
/// receiver, for one or more rounds.
#[derive(Debug, Clone)]
pub struct IncastSpec {
    pub senders: Vec<usize>,
    pub receiver: usize,
    pub grads_per_flow: u32,
    pub bytes_per_gradient: u32,
    pub transport: TransportSel,
    pub bound: f64,
    pub class: u8,
    pub important: bool,
    pub rounds: u32,
    pub round_interval: SimTime,
}

pub struct IncastDriver {
    pub spec: IncastSpec,
    pub flows: Vec<FlowId>,
    next_flow_id: u64,
    pub completions: u64,
}

impl IncastDriver {
    pub fn new(spec: IncastSpec) -> Self {
        IncastDriver { spec, flows: Vec::new(), next_flow_id: 1 << 40, completions: 0 }
    }

    /// Schedules every round's open event up front.
    pub fn start(&mut self, q: &mut EventQueue<Ev>) {
        for r in 0..self.spec.rounds {
            let at = SimTime(self.spec.round_interval.as_nanos() * r as u64);
            q.schedule(q.now() + at, Ev::App(AppEvent::Open(r)));
        }
    }

    pub fn owns(&self, id: FlowId) -> bool {
        self.flows.contains(&id)
    }

    pub fn on_event(&mut self, net: &mut Net, q: &mut EventQueue<Ev>, ev: AppEvent) {
        match ev {
            AppEvent::Open(_) => {
                let senders = self.spec.senders.clone();
                for src in senders {
                    let fid = self.next_flow_id;
                    self.next_flow_id += 1;
                    let path = net.path_between(src, self.spec.receiver, fid);
                    let id = match self.spec.transport {
                        TransportSel::Bounded => net.open_bounded(
                            q,
                            BoundedSpec {
                                path,
                                tensor: TensorSpec {
                                    tensor_id: fid,
                                    n_gradients: self.spec.grads_per_flow,
                                    bytes_per_gradient: self.spec.bytes_per_gradient,
                                },
                                bound: self.spec.bound,
                                line_rate_bps: net.topo.host_link_bps(src),
                                tags: TagPlan::uniform(self.spec.class, self.spec.important),
                                kind: FlowKind::Bench,
                                rate_cfg: net.cfg.rate,
                            },
                        ),
                        TransportSel::Reliable => net.open_reliable(
                            q,
                            ReliableSpec {
                                path,
                                total_bytes: self.spec.grads_per_flow as u64
                                    * self.spec.bytes_per_gradient as u64,
                                queue: data_queue(self.spec.class),
                                kind: FlowKind::Bench,
                                cfg: net.cfg.reliable,
                            },
                        ),
                    };
                    self.flows.push(id);
                }
            }
            AppEvent::FlowDone(id) if self.owns(id) => self.completions += 1,
            _ => {}
        }
    }
}

/// Samples drop and send counters over fixed windows for a set of monitored
/// flows; used to check per-period drop fractions against the loss bound.
pub struct DropSampler {
    pub period: SimTime,
    pub until: SimTime,
    pub monitored: Vec<FlowId>,
    prev_drops: u64,
    prev_sent: u64,
    /// (drops, sent) per complete window.
    pub windows: Vec<(u64, u64)>,
}

impl DropSampler {
    pub fn new(period: SimTime, until: SimTime) -> Self {
        DropSampler { period, until, monitored: Vec::new(), prev_drops: 0, prev_sent: 0, windows: Vec::new() }
    }

    pub fn start(&mut self, q: &mut EventQueue<Ev>) {
        q.schedule_in(self.period, Ev::App(AppEvent::Sample(0)));
    }

    fn totals(&self, net: &Net) -> (u64, u64) {
        let mut drops = 0;
        let mut sent = 0;
        for id in &self.monitored {
            let c = net.flow(*id).counters();
            drops += c.drops_selective + c.drops_buffer;
            sent += c.pkts_sent;
        }
        (drops, sent)
    }

    pub fn on_event(&mut self, net: &mut Net, q: &mut EventQueue<Ev>, ev: AppEvent) {
        let AppEvent::Sample(_) = ev else { return };
        let (drops, sent) = self.totals(net);
        self.windows.push((drops - self.prev_drops, sent - self.prev_sent));
        self.prev_drops = drops;
        self.prev_sent = sent;
        if q.now() < self.until {
            q.schedule_in(self.period, Ev::App(AppEvent::Sample(0)));
        }
    }
}

// ---------------------------------------------------------------------------
// Composition
// ---------------------------------------------------------------------------

/// Routes app events to whichever driver is present and owns them.
#[derive(Default)]
pub struct Drivers {
    pub train: Option<TrainDriver>,
    pub background: Option<BackgroundGen>,
    pub incast: Option<IncastDriver>,
    pub sampler: Option<DropSampler>,
}

impl crate::net::App for Drivers {
    fn on_event(&mut self, net: &mut Net, q: &mut EventQueue<Ev>, ev: AppEvent) {
        match ev {
            AppEvent::FlowDone(id) => {
                if let Some(t) = self.train.as_mut() {
                    if t.owns(id) {
                        t.on_event(net, q, ev);
                        return;
                    }
                }
                if let Some(i) = self.incast.as_mut() {
                    if i.owns(id) {
                        i.on_event(net, q, ev);
                    }
                }
                // Background completions need no bookkeeping.
            }
            AppEvent::Compute { .. } => {
                if let Some(t) = self.train.as_mut() {
                    t.on_event(net, q, ev);
                }
            }
            AppEvent::Background(_) => {
                if let Some(b) = self.background.as_mut() {
                    b.on_event(net, q, ev);
                }
            }
            AppEvent::Open(_) => {
                if let Some(i) = self.incast.as_mut() {
                    i.on_event(net, q, ev);
                }
            }
            AppEvent::Sample(_) => {
                if let Some(s) = self.sampler.as_mut() {
                    s.on_event(net, q, ev);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profile_roundtrip() {
        let p = googlenet_like();
        let text = write_profile(&p);
        let back = parse_profile(&text).unwrap();
        assert_eq!(p, back);
        assert_eq!(p.total_params(), 6_997_232);
    }

    #[test]
    fn profile_parse_rejects_garbage() {
        assert!(parse_profile("layer a 10\n").is_err(), "missing header");
        assert!(parse_profile("model m bytes_per_gradient 4\n").is_err(), "no layers");
        assert!(parse_profile("model m bytes_per_gradient 4\nnoise\n").is_err());
    }

    #[test]
    fn classes_span_front_to_back() {
        let p = googlenet_like();
        assert_eq!(p.class_of(0), 0, "front layer is the most protected class");
        assert_eq!(p.class_of(p.layers.len() - 1), N_DATA_CLASSES - 1);
        for i in 1..p.layers.len() {
            assert!(p.class_of(i) >= p.class_of(i - 1), "classes are monotone in depth");
        }
    }

    #[test]
    fn backward_pass_finishes_back_layers_first() {
        let spec = TrainSpec {
            model: tiny(),
            n_workers: 2,
            scheme: Scheme::ParameterServer { n_servers: 1, shard_threshold_bytes: 4_000_000 },
            transport: TransportSel::Bounded,
            bound: 0.1,
            pull_factor: 0.5,
            iterations: 1,
            compute: SimTime::from_millis(30),
            tagging: Tagging::Uniform { class: 0, important: false },
        };
        let topo = crate::fabric::Topology::leaf_spine(crate::fabric::LeafSpineParams {
            n_core: 1,
            n_tor: 1,
            hosts_per_tor: 4,
            host_link_bps: 10_000_000_000,
            core_link_bps: 10_000_000_000,
            link_delay: SimTime::from_micros(1),
        });
        let net = Net::new(topo, crate::net::NetConfig::default(), 1);
        let d = TrainDriver::new(spec, &net, &RngHub::new(7));
        // fw = 10ms; layer 2 (25k of 100k params) completes at 10 + 20*0.25,
        // layer 1 at 10 + 20*0.75, layer 0 at the full 30ms.
        assert_eq!(d.bp_done_at[2], SimTime::from_millis(15));
        assert_eq!(d.bp_done_at[1], SimTime::from_millis(25));
        assert_eq!(d.bp_done_at[0], SimTime::from_millis(30));
        assert!(d.bp_done_at[2] < d.bp_done_at[0], "back layer gradients land first");
    }

    #[test]
    fn magnitude_tagging_marks_about_half_the_packets() {
        let mut rng = RngHub::new(3).stream("t");
        let plan = build_tags(Tagging::Magnitude { sigma: 1.0 }, 2, 35_000, 350, 1.0, &mut rng);
        let v = plan.per_packet.as_ref().unwrap();
        assert_eq!(v.len(), 100);
        let important = v.iter().filter(|(_, i)| *i).count();
        assert!((30..=70).contains(&important), "median split puts ~half above: {important}");
        assert!(v.iter().all(|(c, _)| *c == 2));
    }

    #[test]
    fn ring_chunks_cover_the_model_exactly() {
        let spec = TrainSpec {
            model: ModelProfile {
                name: "flat".into(),
                bytes_per_gradient: 4,
                layers: vec![layer("all", 1_000_003)],
            },
            n_workers: 4,
            scheme: Scheme::Ring,
            transport: TransportSel::Bounded,
            bound: 0.1,
            pull_factor: 0.5,
            iterations: 1,
            compute: SimTime::from_millis(10),
            tagging: Tagging::Uniform { class: 3, important: false },
        };
        let topo = crate::fabric::Topology::leaf_spine(crate::fabric::LeafSpineParams {
            n_core: 1,
            n_tor: 1,
            hosts_per_tor: 4,
            host_link_bps: 10_000_000_000,
            core_link_bps: 10_000_000_000,
            link_delay: SimTime::from_micros(1),
        });
        let net = Net::new(topo, crate::net::NetConfig::default(), 1);
        let d = TrainDriver::new(spec, &net, &RngHub::new(7));
        assert_eq!(d.tensors.len(), 4);
        let total: u64 = d.tensors.iter().map(|t| t.n_grads as u64).sum();
        assert_eq!(total, 1_000_003, "chunks tile the model with no loss");
    }
}
