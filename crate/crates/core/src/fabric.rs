//! Fabric model: two-tier leaf-spine topologies, equal-cost route
//! enumeration, and the three load-balancing policies.
//!
//! Links are directed; a full-duplex cable is two `Link`s with independent
//! egress queues. Routes are computed at the source and carried by the
//! packet, so a route is just the ordered list of directed links to traverse.

use crate::sim::{tx_time, SimTime};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub u32);

/// Index of a directed link; also indexes the egress port that feeds it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LinkId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    Host,
    Tor,
    Core,
}

#[derive(Debug, Clone, Copy)]
pub struct Link {
    pub from: NodeId,
    pub to: NodeId,
    pub bandwidth_bps: u64,
    pub prop_delay: SimTime,
}

/// Parameters for `Topology::leaf_spine`.
#[derive(Debug, Clone, Copy)]
pub struct LeafSpineParams {
    pub n_core: u32,
    pub n_tor: u32,
    pub hosts_per_tor: u32,
    pub host_link_bps: u64,
    pub core_link_bps: u64,
    /// Propagation delay applied to every link.
    pub link_delay: SimTime,
}

/// Smallest packet used when backing per-link delay out of a target RTT.
pub const MIN_PACKET_BYTES: u64 = 64;

impl LeafSpineParams {
    /// Derives the per-link propagation delay that makes the 4-hop
    /// host-to-host round trip of a minimum-size packet equal `base_rtt`.
    ///
    /// A 4-hop path crosses two host links and two core links each way, so
    /// the round trip is 8 serializations plus 8 propagation delays.
    pub fn delay_for_base_rtt(base_rtt: SimTime, host_link_bps: u64, core_link_bps: u64) -> SimTime {
        let ser = 4 * tx_time(MIN_PACKET_BYTES, host_link_bps).as_nanos()
            + 4 * tx_time(MIN_PACKET_BYTES, core_link_bps).as_nanos();
        SimTime(base_rtt.as_nanos().saturating_sub(ser) / 8)
    }
}

/// A source-computed path: the directed links to traverse, in order.
pub type Route = Vec<LinkId>;

#[derive(Debug, Clone)]
pub struct Topology {
    nodes: Vec<NodeKind>,
    links: Vec<Link>,
    hosts: Vec<NodeId>,
    tors: Vec<NodeId>,
    cores: Vec<NodeId>,
    /// host index -> tor index
    host_tor: Vec<u32>,
    /// host index -> uplink, downlink
    host_up: Vec<LinkId>,
    host_down: Vec<LinkId>,
    /// tor index * n_core + core index -> uplink, downlink
    tor_up: Vec<LinkId>,
    tor_down: Vec<LinkId>,
    n_core: u32,
}

impl Topology {
    /// Builds a two-tier leaf-spine fabric: every ToR connects to every core
    /// switch, hosts hang off ToRs. With `n_core = 0` the fabric degenerates
    /// to isolated racks (only intra-rack paths exist).
    pub fn leaf_spine(p: LeafSpineParams) -> Topology {
        assert!(p.n_tor >= 1 && p.hosts_per_tor >= 1, "need at least one rack with hosts");
        let mut t = Topology {
            nodes: Vec::new(),
            links: Vec::new(),
            hosts: Vec::new(),
            tors: Vec::new(),
            cores: Vec::new(),
            host_tor: Vec::new(),
            host_up: Vec::new(),
            host_down: Vec::new(),
            tor_up: Vec::new(),
            tor_down: Vec::new(),
            n_core: p.n_core,
        };
        for _ in 0..p.n_core {
            let core = t.add_node(NodeKind::Core);
            t.cores.push(core);
        }
        for tor_i in 0..p.n_tor {
            let tor = t.add_node(NodeKind::Tor);
            t.tors.push(tor);
            for core_i in 0..p.n_core {
                let core = t.cores[core_i as usize];
                let up = t.add_link(tor, core, p.core_link_bps, p.link_delay);
                let down = t.add_link(core, tor, p.core_link_bps, p.link_delay);
                t.tor_up.push(up);
                t.tor_down.push(down);
            }
            for _ in 0..p.hosts_per_tor {
                let host = t.add_node(NodeKind::Host);
                t.hosts.push(host);
                t.host_tor.push(tor_i);
                let up = t.add_link(host, tor, p.host_link_bps, p.link_delay);
                let down = t.add_link(tor, host, p.host_link_bps, p.link_delay);
                t.host_up.push(up);
                t.host_down.push(down);
            }
        }
        t
    }

    fn add_node(&mut self, kind: NodeKind) -> NodeId {
        self.nodes.push(kind);
        NodeId(self.nodes.len() as u32 - 1)
    }

    fn add_link(&mut self, from: NodeId, to: NodeId, bw: u64, delay: SimTime) -> LinkId {
        self.links.push(Link { from, to, bandwidth_bps: bw, prop_delay: delay });
        LinkId(self.links.len() as u32 - 1)
    }

    pub fn n_links(&self) -> usize {
        self.links.len()
    }
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }
    pub fn link(&self, id: LinkId) -> &Link {
        &self.links[id.0 as usize]
    }
    pub fn node_kind(&self, id: NodeId) -> NodeKind {
        self.nodes[id.0 as usize]
    }
    pub fn n_hosts(&self) -> usize {
        self.hosts.len()
    }
    pub fn n_tors(&self) -> usize {
        self.tors.len()
    }
    pub fn n_cores(&self) -> usize {
        self.cores.len()
    }
    /// The i-th host (creation order: rack by rack).
    pub fn host(&self, i: usize) -> NodeId {
        self.hosts[i]
    }
    pub fn host_index(&self, n: NodeId) -> Option<usize> {
        self.hosts.iter().position(|h| *h == n)
    }
    pub fn rack_of_host(&self, host_index: usize) -> u32 {
        self.host_tor[host_index]
    }
    pub fn host_uplink(&self, host_index: usize) -> LinkId {
        self.host_up[host_index]
    }
    pub fn host_link_bps(&self, host_index: usize) -> u64 {
        self.link(self.host_up[host_index]).bandwidth_bps
    }
    /// Uplink from `tor` to `core` (indices, not NodeIds).
    pub fn tor_uplink(&self, tor: u32, core: u32) -> LinkId {
        self.tor_up[(tor * self.n_core + core) as usize]
    }
    pub fn core_downlink(&self, tor: u32, core: u32) -> LinkId {
        self.tor_down[(tor * self.n_core + core) as usize]
    }

    /// All equal-cost routes between two hosts, ascending by core index.
    ///
    /// Intra-rack pairs have exactly one two-hop route and never touch the
    /// core tier; inter-rack pairs have one four-hop route per core switch.
    /// `src == dst` yields no routes (loopback never enters the network).
    pub fn equal_cost_routes(&self, src_host: usize, dst_host: usize) -> Vec<Route> {
        if src_host == dst_host {
            return Vec::new();
        }
        let (rs, rd) = (self.host_tor[src_host], self.host_tor[dst_host]);
        if rs == rd {
            return vec![vec![self.host_up[src_host], self.host_down[dst_host]]];
        }
        (0..self.n_core)
            .map(|c| {
                vec![
                    self.host_up[src_host],
                    self.tor_uplink(rs, c),
                    self.core_downlink(rd, c),
                    self.host_down[dst_host],
                ]
            })
            .collect()
    }

    /// Round-trip time of a minimum-size packet over `route` and back along
    /// the mirrored reverse path, assuming idle queues.
    pub fn base_rtt_of_route(&self, route: &Route) -> SimTime {
        let one_way: u64 = route
            .iter()
            .map(|l| {
                let link = self.link(*l);
                link.prop_delay.as_nanos() + tx_time(MIN_PACKET_BYTES, link.bandwidth_bps).as_nanos()
            })
            .sum();
        SimTime(one_way * 2)
    }

    /// Fabric-wide base RTT: the round trip over the longest-hop route class
    /// present (4-hop if the fabric has a core tier, else 2-hop).
    pub fn base_rtt(&self) -> SimTime {
        let route = if self.n_core > 0 && self.n_tors() > 1 {
            self.equal_cost_routes(0, self.hosts.len() - 1).remove(0)
        } else {
            self.equal_cost_routes(0, 1).remove(0)
        };
        self.base_rtt_of_route(&route)
    }
}

/// Load-balancing policy for picking among equal-cost routes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LbPolicy {
    /// One hash-pinned path per flow.
    FlowEcmp,
    /// Uniform hash over (flow, packet index): per-packet spraying.
    PacketSpray,
    /// Source-routed round-robin over paths by packet index.
    RoundRobin,
}

fn mix64(x: u64) -> u64 {
    // splitmix64 finalizer; published mixing function, stable across runs.
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Key identifying a unidirectional flow for path hashing.
#[derive(Debug, Clone, Copy)]
pub struct FlowKey {
    pub src: NodeId,
    pub dst: NodeId,
    pub flow_id: u64,
}

/// Picks the route index for a packet under `policy`.
///
/// `salt` is derived from the run seed so ECMP placements vary across seeds
/// but are identical for identical runs.
pub fn select_path(
    policy: LbPolicy,
    key: FlowKey,
    packet_index: u64,
    n_paths: usize,
    salt: u64,
) -> usize {
    assert!(n_paths > 0, "no route to destination");
    if n_paths == 1 {
        return 0;
    }
    let base = mix64(salt ^ mix64((key.src.0 as u64) << 32 | key.dst.0 as u64) ^ mix64(key.flow_id));
    let h = match policy {
        LbPolicy::FlowEcmp => base,
        LbPolicy::PacketSpray => mix64(base ^ packet_index),
        LbPolicy::RoundRobin => return (packet_index % n_paths as u64) as usize,
    };
    (h % n_paths as u64) as usize
}

#[cfg(test)]
mod tests {
    use super::*;

    fn paper_fabric() -> Topology {
        let delay = LeafSpineParams::delay_for_base_rtt(
            SimTime::from_nanos(85_200),
            100_000_000_000,
            100_000_000_000,
        );
        Topology::leaf_spine(LeafSpineParams {
            n_core: 4,
            n_tor: 9,
            hosts_per_tor: 16,
            host_link_bps: 100_000_000_000,
            core_link_bps: 100_000_000_000,
            link_delay: delay,
        })
    }

    #[test]
    fn leaf_spine_counts() {
        let t = paper_fabric();
        assert_eq!(t.n_hosts(), 144);
        assert_eq!(t.n_tors(), 9);
        assert_eq!(t.n_cores(), 4);
        // Each host: 2 links; each tor-core pair: 2 links.
        assert_eq!(t.n_links(), 144 * 2 + 9 * 4 * 2);
    }

    #[test]
    fn base_rtt_reconstructs_target() {
        let t = paper_fabric();
        assert_eq!(t.base_rtt(), SimTime::from_nanos(85_200));
    }

    #[test]
    fn inter_rack_routes_one_per_core() {
        let t = paper_fabric();
        let routes = t.equal_cost_routes(0, 140);
        assert_eq!(routes.len(), 4);
        for r in &routes {
            assert_eq!(r.len(), 4);
            assert_eq!(t.link(r[0]).from, t.host(0));
            assert_eq!(t.link(r[3]).to, t.host(140));
        }
        // Distinct middle hops.
        let mids: std::collections::HashSet<_> = routes.iter().map(|r| r[1]).collect();
        assert_eq!(mids.len(), 4);
    }

    #[test]
    fn intra_rack_never_crosses_core() {
        let t = paper_fabric();
        for (a, b) in [(0usize, 1usize), (2, 15), (16, 17)] {
            let routes = t.equal_cost_routes(a, b);
            if t.rack_of_host(a) == t.rack_of_host(b) {
                assert_eq!(routes.len(), 1);
                assert_eq!(routes[0].len(), 2);
                for l in &routes[0] {
                    assert!(!matches!(t.node_kind(t.link(*l).from), NodeKind::Core));
                    assert!(!matches!(t.node_kind(t.link(*l).to), NodeKind::Core));
                }
            }
        }
    }

    #[test]
    fn loopback_has_no_route() {
        let t = paper_fabric();
        assert!(t.equal_cost_routes(3, 3).is_empty());
    }

    #[test]
    fn ecmp_is_constant_per_flow() {
        let key = FlowKey { src: NodeId(1), dst: NodeId(9), flow_id: 77 };
        let first = select_path(LbPolicy::FlowEcmp, key, 0, 4, 42);
        for pkt in 1..1000u64 {
            assert_eq!(select_path(LbPolicy::FlowEcmp, key, pkt, 4, 42), first);
        }
    }

    #[test]
    fn round_robin_cycles() {
        let key = FlowKey { src: NodeId(1), dst: NodeId(9), flow_id: 1 };
        let picks: Vec<usize> =
            (0..8).map(|i| select_path(LbPolicy::RoundRobin, key, i, 4, 0)).collect();
        assert_eq!(picks, vec![0, 1, 2, 3, 0, 1, 2, 3]);
    }

    #[test]
    fn spray_is_near_uniform() {
        // Chi-square over 4 bins for 100k packets; 99.9th percentile of
        // chi2(3) is 16.27. Also require each bin within 25% +- 1%.
        let key = FlowKey { src: NodeId(3), dst: NodeId(121), flow_id: 5 };
        let n = 100_000u64;
        let mut bins = [0u64; 4];
        for pkt in 0..n {
            bins[select_path(LbPolicy::PacketSpray, key, pkt, 4, 7)] += 1;
        }
        let expect = n as f64 / 4.0;
        let chi2: f64 = bins.iter().map(|&b| (b as f64 - expect).powi(2) / expect).sum();
        assert!(chi2 < 16.27, "chi2 = {chi2}, bins = {bins:?}");
        for b in bins {
            let frac = b as f64 / n as f64;
            assert!((frac - 0.25).abs() < 0.01, "bin fraction {frac}");
        }
    }

    #[test]
    fn distinct_seeds_move_ecmp_placements() {
        let key = FlowKey { src: NodeId(0), dst: NodeId(50), flow_id: 3 };
        let picks: std::collections::HashSet<usize> =
            (0..64).map(|salt| select_path(LbPolicy::FlowEcmp, key, 0, 4, salt)).collect();
        assert!(picks.len() > 1, "salt must influence placement");
    }
}
