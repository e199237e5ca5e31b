//! Whole-workload runs: parameter-server and ring training over the
//! simulated fabric, and background-traffic load calibration.

use gradsim::fabric::{LeafSpineParams, Topology};
use gradsim::metrics::{check_conservation, flow_records};
use gradsim::net::{run_sim, Net, NetConfig};
use gradsim::sim::{EventQueue, RngHub, SimTime, StopWhen};
use gradsim::workload::{
    tiny, BackgroundGen, BackgroundSpec, Drivers, LayerSpec, ModelProfile, Scheme, Tagging,
    TrainDriver, TrainSpec, TransportSel,
};

const GBPS: u64 = 1_000_000_000;

fn rack_of_four() -> Topology {
    Topology::leaf_spine(LeafSpineParams {
        n_core: 1,
        n_tor: 1,
        hosts_per_tor: 4,
        host_link_bps: 10 * GBPS,
        core_link_bps: 10 * GBPS,
        link_delay: SimTime::from_micros(1),
    })
}

fn two_racks() -> Topology {
    Topology::leaf_spine(LeafSpineParams {
        n_core: 2,
        n_tor: 2,
        hosts_per_tor: 4,
        host_link_bps: 10 * GBPS,
        core_link_bps: 10 * GBPS,
        link_delay: SimTime::from_micros(1),
    })
}

fn ps_spec(transport: TransportSel) -> TrainSpec {
    TrainSpec {
        model: tiny(),
        n_workers: 2,
        scheme: Scheme::ParameterServer { n_servers: 1, shard_threshold_bytes: 4_000_000 },
        transport,
        bound: 0.1,
        pull_factor: 0.5,
        iterations: 2,
        compute: SimTime::from_millis(1),
        tagging: Tagging::LayerClasses { important: false },
    }
}

fn run_training(topo: Topology, spec: TrainSpec) -> (Net, TrainDriver) {
    let net_cfg = NetConfig::default();
    let mut net = Net::new(topo, net_cfg, 0xabcd);
    let mut q = EventQueue::new();
    let hub = RngHub::new(42);
    let mut train = TrainDriver::new(spec, &net, &hub);
    train.start_iteration(&mut net, &mut q);
    let mut drivers = Drivers { train: Some(train), ..Drivers::default() };
    run_sim(&mut net, &mut q, &mut drivers, StopWhen::Quiet);
    (net, drivers.train.take().unwrap())
}

#[test]
fn parameter_server_bounded_runs_to_the_barrier() {
    let (net, train) = run_training(rack_of_four(), ps_spec(TransportSel::Bounded));
    assert!(train.done, "both iterations must finish");
    assert_eq!(train.iterations_log.len(), 2);

    let records = flow_records(&net);
    // 3 tensors x 2 workers, push + pull, times 2 iterations.
    assert_eq!(records.len(), 24);
    assert_eq!(records.iter().filter(|r| r.kind == "push").count(), 12);
    assert_eq!(records.iter().filter(|r| r.kind == "pull").count(), 12);
    assert!(records.iter().all(|r| r.fct_ns.is_some()), "every flow reached its bound");
    check_conservation(&net).unwrap();

    // First pushes leave only after the backward pass reaches the last
    // layer: fw = 1ms/3, plus the last layer's quarter of the bp time
    // (floor arithmetic lands at 499_999 ns).
    let first_grad_ns = 499_999;
    for (i, it) in train.iterations_log.iter().enumerate() {
        assert_eq!(it.iteration as usize, i);
        assert!(it.comm_ns > 0);
        assert!(it.barrier_ns > it.comm_start_ns);
        let iter_start = if i == 0 { 0 } else { train.iterations_log[i - 1].barrier_ns };
        assert!(
            it.comm_start_ns >= iter_start + first_grad_ns,
            "pushes cannot precede gradients (iteration {i})"
        );
    }
    // Iterations are serialized by the barrier.
    assert!(train.iterations_log[1].comm_start_ns >= train.iterations_log[0].barrier_ns);
}

#[test]
fn parameter_server_reliable_matches_flow_accounting() {
    let (net, train) = run_training(rack_of_four(), ps_spec(TransportSel::Reliable));
    assert!(train.done);
    let records = flow_records(&net);
    assert_eq!(records.len(), 24);
    // The reliable baseline delivers every byte it offers.
    for r in &records {
        assert_eq!(r.bytes_delivered, r.bytes_offered, "flow {}", r.flow);
    }
    check_conservation(&net).unwrap();
}

#[test]
fn ring_runs_six_steps_of_equal_chunks() {
    let model = ModelProfile {
        name: "flat-4mb".into(),
        bytes_per_gradient: 4,
        layers: vec![LayerSpec { name: "all".into(), params: 1_000_000 }],
    };
    let spec = TrainSpec {
        model,
        n_workers: 4,
        scheme: Scheme::Ring,
        transport: TransportSel::Bounded,
        bound: 0.1,
        pull_factor: 0.5,
        iterations: 1,
        compute: SimTime::from_millis(1),
        tagging: Tagging::Uniform { class: 3, important: false },
    };
    let (net, train) = run_training(rack_of_four(), spec);
    assert!(train.done);

    let records = flow_records(&net);
    // 2(n-1) = 6 steps, 4 chunk flows each.
    assert_eq!(records.len(), 24);
    assert!(records.iter().all(|r| r.kind == "chunk"));
    // A 4 MB model over 4 workers moves 1 MB chunks.
    assert!(records.iter().all(|r| r.bytes_offered == 1_000_000));
    check_conservation(&net).unwrap();

    // Neighbors only: each flow's destination is the next worker.
    for r in &records {
        assert_eq!(r.dst_host, (r.src_host + 1) % 4, "ring neighbor topology");
    }
}

#[test]
fn background_generator_hits_the_requested_load() {
    let mut net = Net::new(two_racks(), NetConfig::default(), 99);
    let mut q = EventQueue::new();
    let hub = RngHub::new(1234);
    let spec = BackgroundSpec {
        load: 0.25,
        mean_bytes: 200_000.0,
        sigma: 1.0,
        transport: TransportSel::Reliable,
        ..BackgroundSpec::default()
    };
    let mut bg = BackgroundGen::new(spec, &net, &hub);
    let horizon = SimTime::from_millis(50);
    bg.start(&mut q);
    let mut drivers = Drivers { background: Some(bg), ..Drivers::default() };
    run_sim(&mut net, &mut q, &mut drivers, StopWhen::At(horizon));

    let opened = drivers.background.as_ref().unwrap().opened;
    assert!(opened > 100, "expected hundreds of background flows, got {opened}");

    // Average utilization across every rack uplink (tor -> core).
    let mut bytes = 0u64;
    let mut n_up = 0u64;
    for t in 0..net.topo.n_tors() as u32 {
        for c in 0..net.topo.n_cores() as u32 {
            let link = net.topo.tor_uplink(t, c);
            let port = net.port(link);
            bytes += port.counters.iter().map(|qc| qc.bytes_enqueued).sum::<u64>();
            n_up += 1;
        }
    }
    let capacity = 10.0 * GBPS as f64 / 8.0 * (horizon.as_nanos() as f64 / 1e9);
    let util = bytes as f64 / (capacity * n_up as f64);
    // Target 0.25 of each uplink; headers, ACK overhead and Poisson noise
    // push the measurement around, but it must land near the target.
    assert!(
        (0.17..=0.40).contains(&util),
        "uplink utilization {util:.3} strayed from the 0.25 target"
    );
}
