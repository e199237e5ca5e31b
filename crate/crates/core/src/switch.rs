//! Output-queued egress port with strict-priority scheduling and
//! occupancy-threshold selective dropping.
//!
//! Each directed link owns one `PriorityPort` of `N_QUEUES` FIFO queues.
//! Queue 0 is reserved for signal traffic and is served first; data queues
//! follow in index order. A packet whose own queue sits above its threshold
//! at arrival is CE-marked if it is ECN-capable and dropped otherwise;
//! buffer exhaustion drops regardless of flags.

use std::collections::VecDeque;

use crate::packet::{Packet, QueueIndex, N_QUEUES};

/// No threshold: only buffer exhaustion can reject the packet.
pub const UNLIMITED: u64 = u64::MAX;

/// Per-queue occupancy thresholds in bytes, compared strictly
/// (`occupancy > threshold` triggers mark-or-drop).
pub type Thresholds = [u64; N_QUEUES];

/// Arithmetic threshold ladder over the data queues: queue 1 (the highest
/// data priority, carrying the most drop-tolerant layers) gets `base`,
/// queue k gets `base * (1 + (k-1) * step)`. The signal queue is unlimited.
pub fn ladder(base_bytes: u64, step: f64) -> Thresholds {
    let mut t = [UNLIMITED; N_QUEUES];
    for (k, slot) in t.iter_mut().enumerate().skip(1) {
        let factor = 1.0 + (k as f64 - 1.0) * step;
        *slot = (base_bytes as f64 * factor).round() as u64;
    }
    t
}

/// Same threshold on every data queue; signal queue unlimited.
pub fn uniform(bytes: u64) -> Thresholds {
    let mut t = [bytes; N_QUEUES];
    t[0] = UNLIMITED;
    t
}

/// Thresholds disabled everywhere: drops only on buffer exhaustion.
pub fn unlimited() -> Thresholds {
    [UNLIMITED; N_QUEUES]
}

/// Buffer accounting regime for a port.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BufferMode {
    /// Fixed byte budget private to this port.
    PerPort { bytes: u64 },
    /// Draws from the owning switch's shared pool.
    Shared,
}

/// Byte pool shared by all ports of one switch (used with `BufferMode::Shared`).
#[derive(Debug, Clone, Copy)]
pub struct SharedPool {
    pub used: u64,
    pub budget: u64,
}

impl SharedPool {
    pub fn new(budget: u64) -> Self {
        SharedPool { used: 0, budget }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DropCause {
    Selective,
    Buffer,
}

/// Result of offering a packet to a port.
#[derive(Debug)]
pub enum EnqueueResult {
    Queued { marked: bool },
    Dropped { pkt: Packet, cause: DropCause },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct QueueCounters {
    pub enqueued: u64,
    pub dequeued: u64,
    pub marked: u64,
    pub selective_drops: u64,
    pub buffer_drops: u64,
    pub bytes_enqueued: u64,
}

#[derive(Debug, Clone, Copy)]
pub struct PortConfig {
    pub thresholds: Thresholds,
    pub buffer: BufferMode,
}

impl PortConfig {
    /// Host NIC egress: effectively unbounded, no selective dropping.
    pub fn host_nic() -> Self {
        PortConfig { thresholds: unlimited(), buffer: BufferMode::PerPort { bytes: UNLIMITED } }
    }
}

#[derive(Debug)]
pub struct PriorityPort {
    queues: [VecDeque<Packet>; N_QUEUES],
    occupancy: [u64; N_QUEUES],
    total: u64,
    cfg: PortConfig,
    pub counters: [QueueCounters; N_QUEUES],
}

impl PriorityPort {
    pub fn new(cfg: PortConfig) -> Self {
        PriorityPort {
            queues: Default::default(),
            occupancy: [0; N_QUEUES],
            total: 0,
            cfg,
            counters: [QueueCounters::default(); N_QUEUES],
        }
    }

    pub fn config(&self) -> &PortConfig {
        &self.cfg
    }

    /// Queue a packet lands in: its header priority field.
    pub fn classify(pkt: &Packet) -> QueueIndex {
        assert!((pkt.queue.0 as usize) < N_QUEUES, "priority out of range");
        pkt.queue
    }

    pub fn occupancy_bytes(&self, q: QueueIndex) -> u64 {
        self.occupancy[q.0 as usize]
    }

    pub fn total_bytes(&self) -> u64 {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0 && self.queues.iter().all(|q| q.is_empty())
    }

    fn buffer_full(&self, size: u64, pool: Option<&SharedPool>) -> bool {
        match self.cfg.buffer {
            BufferMode::PerPort { bytes } => self.total.saturating_add(size) > bytes,
            BufferMode::Shared => {
                let pool = pool.expect("shared buffer mode requires a pool");
                pool.used.saturating_add(size) > pool.budget
            }
        }
    }

    /// Offers a packet. Occupancy is compared against the packet's own
    /// queue threshold before insertion.
    pub fn enqueue(&mut self, mut pkt: Packet, mut pool: Option<&mut SharedPool>) -> EnqueueResult {
        let q = Self::classify(&pkt).0 as usize;
        let size = pkt.size_bytes as u64;
        if self.buffer_full(size, pool.as_deref()) {
            self.counters[q].buffer_drops += 1;
            return EnqueueResult::Dropped { pkt, cause: DropCause::Buffer };
        }
        let over = self.occupancy[q] > self.cfg.thresholds[q];
        let marked = if over {
            if !pkt.ecn_capable {
                self.counters[q].selective_drops += 1;
                return EnqueueResult::Dropped { pkt, cause: DropCause::Selective };
            }
            pkt.ce_marked = true;
            self.counters[q].marked += 1;
            true
        } else {
            false
        };
        self.counters[q].enqueued += 1;
        self.counters[q].bytes_enqueued += size;
        self.occupancy[q] += size;
        self.total += size;
        if let Some(pool) = pool.as_deref_mut() {
            pool.used += size;
        }
        self.queues[q].push_back(pkt);
        EnqueueResult::Queued { marked }
    }

    /// Pops the head of the lowest-index non-empty queue (strict priority).
    pub fn dequeue(&mut self, mut pool: Option<&mut SharedPool>) -> Option<Packet> {
        for q in 0..N_QUEUES {
            if let Some(pkt) = self.queues[q].pop_front() {
                let size = pkt.size_bytes as u64;
                self.occupancy[q] -= size;
                self.total -= size;
                self.counters[q].dequeued += 1;
                if let Some(pool) = pool.as_deref_mut() {
                    pool.used -= size;
                }
                debug_assert_eq!(
                    self.total,
                    self.occupancy.iter().sum::<u64>(),
                    "occupancy accounting out of sync"
                );
                return Some(pkt);
            }
        }
        None
    }
}
