//! Deterministic packet-level simulator for distributed-training traffic.
//!
//! The crate couples a discrete-event network core with two transports:
//! a bounded-loss transport that finishes a tensor transfer once a
//! configured fraction of its gradients has arrived, and a reliable
//! baseline (NewReno, optionally DCTCP) for comparison. Around those sit
//! a leaf-spine fabric with strict-priority switches and selective
//! dropping, workload drivers for parameter-server and ring
//! synchronization, queueing analytics for choosing drop thresholds, and
//! a small SGD lab measuring how gradient loss inflates epochs-to-target.
//!
//! Module map:
//!
//! * [`sim`] virtual clock, event queue, seeded RNG streams
//! * [`codec`] tensor partitioning and range bitmaps
//! * [`fabric`] leaf-spine topology, routes, load balancing
//! * [`switch`] strict-priority ports with threshold dropping
//! * [`packet`] wire-level packet model
//! * [`transport`] the bounded-loss transport and the reliable baseline
//! * [`net`] glues fabric, ports and transports into one event loop
//! * [`workload`] model profiles, sync schemes, tagging, background traffic
//! * [`metrics`] flow records, percentile stats, CSV emission
//! * [`queueing`] M/M/1/m analytics and threshold optimization
//! * [`sgdlab`] drop-tolerance experiments on small training tasks
//! * [`config`] run configuration and presets
//! * [`runner`] executes runs and writes result directories

pub mod codec;
pub mod config;
pub mod fabric;
pub mod metrics;
pub mod net;
pub mod packet;
pub mod queueing;
pub mod runner;
pub mod scalar;
pub mod sgdlab;
pub mod sim;
pub mod switch;
pub mod transport;
pub mod workload;

pub use scalar::Scalar;

/// Default scalar width for the analytic modules.
pub type Real = f64;
