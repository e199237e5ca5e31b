//! Discrete-event core: virtual clock, cancellable event queue, seeded RNG streams.
//!
//! Everything downstream (links, switches, transports, workloads) is driven by
//! one `EventQueue`. Determinism rests on three rules enforced here:
//!
//! * time is integer nanoseconds, never floating point,
//! * events firing at the same instant are processed in insertion order,
//! * all randomness flows from named streams derived from one master seed.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Virtual time in integer nanoseconds since simulation start.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct SimTime(pub u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);

    pub fn from_nanos(ns: u64) -> Self {
        SimTime(ns)
    }
    pub fn from_micros(us: u64) -> Self {
        SimTime(us * 1_000)
    }
    pub fn from_millis(ms: u64) -> Self {
        SimTime(ms * 1_000_000)
    }
    pub fn from_secs(s: u64) -> Self {
        SimTime(s * 1_000_000_000)
    }

    pub fn as_nanos(self) -> u64 {
        self.0
    }
    pub fn as_micros_f64(self) -> f64 {
        self.0 as f64 / 1e3
    }
    pub fn as_millis_f64(self) -> f64 {
        self.0 as f64 / 1e6
    }
    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1e9
    }

    pub fn saturating_sub(self, other: SimTime) -> SimTime {
        SimTime(self.0.saturating_sub(other.0))
    }
}

impl std::ops::Add for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 + rhs.0)
    }
}

impl std::ops::Sub for SimTime {
    type Output = SimTime;
    fn sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 - rhs.0)
    }
}

impl std::fmt::Display for SimTime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}ns", self.0)
    }
}

/// Serialization delay of `bytes` on a `bandwidth_bps` link, rounded toward +inf
/// so a busy link is never released a nanosecond early.
pub fn tx_time(bytes: u64, bandwidth_bps: u64) -> SimTime {
    assert!(bandwidth_bps > 0, "link bandwidth must be positive");
    let bits = bytes as u128 * 8 * 1_000_000_000;
    SimTime(bits.div_ceil(bandwidth_bps as u128) as u64)
}

/// Handle for a scheduled event; cancelling is O(1) and lazy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EventHandle(u64);

struct Scheduled<K> {
    fire_at: SimTime,
    seq: u64,
    kind: K,
}

impl<K> PartialEq for Scheduled<K> {
    fn eq(&self, other: &Self) -> bool {
        self.seq == other.seq
    }
}
impl<K> Eq for Scheduled<K> {}
impl<K> PartialOrd for Scheduled<K> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<K> Ord for Scheduled<K> {
    // Reversed so the BinaryHeap becomes a min-heap on (fire_at, seq).
    fn cmp(&self, other: &Self) -> Ordering {
        (other.fire_at, other.seq).cmp(&(self.fire_at, self.seq))
    }
}

/// Counters reported after a run. Conservation invariant:
/// `scheduled == processed + cancelled + pending`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SimStats {
    pub scheduled: u64,
    pub processed: u64,
    pub cancelled: u64,
    pub pending: u64,
    pub end_time: SimTime,
}

/// Pending-event queue plus the virtual clock.
///
/// `K` is the event payload; the owner decides what events mean. Two events
/// scheduled for the same instant fire in the order they were scheduled.
pub struct EventQueue<K> {
    heap: BinaryHeap<Scheduled<K>>,
    /// Seqs still in the heap and not cancelled.
    live: HashSet<u64>,
    /// Seqs cancelled but not yet lazily removed from the heap.
    cancelled: HashSet<u64>,
    now: SimTime,
    next_seq: u64,
    n_scheduled: u64,
    n_processed: u64,
    n_cancelled: u64,
}

impl<K> Default for EventQueue<K> {
    fn default() -> Self {
        Self::new()
    }
}

impl<K> EventQueue<K> {
    pub fn new() -> Self {
        EventQueue {
            heap: BinaryHeap::new(),
            live: HashSet::new(),
            cancelled: HashSet::new(),
            now: SimTime::ZERO,
            next_seq: 0,
            n_scheduled: 0,
            n_processed: 0,
            n_cancelled: 0,
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    /// Schedules `kind` to fire at absolute time `at`.
    ///
    /// Panics if `at` lies in the past: that is a programming error in the
    /// caller and silently reordering time would corrupt every result.
    pub fn schedule(&mut self, at: SimTime, kind: K) -> EventHandle {
        assert!(
            at >= self.now,
            "scheduled event at {} behind clock {}",
            at,
            self.now
        );
        let seq = self.next_seq;
        self.next_seq += 1;
        self.n_scheduled += 1;
        self.live.insert(seq);
        self.heap.push(Scheduled { fire_at: at, seq, kind });
        EventHandle(seq)
    }

    pub fn schedule_in(&mut self, delay: SimTime, kind: K) -> EventHandle {
        self.schedule(self.now + delay, kind)
    }

    /// Cancels a pending event. Returns true iff the event had not yet fired
    /// and was not already cancelled; a cancelled event never fires.
    pub fn cancel(&mut self, handle: EventHandle) -> bool {
        if self.live.remove(&handle.0) {
            self.cancelled.insert(handle.0);
            self.n_cancelled += 1;
            true
        } else {
            false
        }
    }

    /// Earliest pending fire time, discarding cancelled entries lazily.
    pub fn peek_time(&mut self) -> Option<SimTime> {
        while let Some(head) = self.heap.peek() {
            if self.cancelled.remove(&head.seq) {
                self.heap.pop();
            } else {
                return Some(head.fire_at);
            }
        }
        None
    }

    /// Removes and returns the next event, advancing the clock to it.
    pub fn pop(&mut self) -> Option<(SimTime, K)> {
        while let Some(head) = self.heap.pop() {
            if self.cancelled.remove(&head.seq) {
                continue;
            }
            self.live.remove(&head.seq);
            debug_assert!(head.fire_at >= self.now, "clock moved backwards");
            self.now = head.fire_at;
            self.n_processed += 1;
            return Some((head.fire_at, head.kind));
        }
        None
    }

    pub fn pending(&self) -> u64 {
        self.n_scheduled - self.n_processed - self.n_cancelled
    }

    pub fn stats(&self) -> SimStats {
        SimStats {
            scheduled: self.n_scheduled,
            processed: self.n_processed,
            cancelled: self.n_cancelled,
            pending: self.pending(),
            end_time: self.now,
        }
    }
}

/// When `drain` should stop pulling events.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopWhen {
    /// Run until no events remain.
    Quiet,
    /// Run through events with `fire_at <= t`; the clock ends at
    /// `min(t, last event time)`.
    At(SimTime),
}

/// Runs the queue to completion or to a stop time, dispatching each event to
/// `handle`. The handler may schedule and cancel freely.
pub fn drain<K>(
    queue: &mut EventQueue<K>,
    stop: StopWhen,
    mut handle: impl FnMut(SimTime, K, &mut EventQueue<K>),
) -> SimStats {
    loop {
        let Some(t) = queue.peek_time() else { break };
        if let StopWhen::At(stop_t) = stop {
            if t > stop_t {
                queue.now = stop_t.max(queue.now);
                break;
            }
        }
        let (t, kind) = queue.pop().expect("peeked event vanished");
        handle(t, kind, queue);
    }
    queue.stats()
}

/// Master seed plus named-stream derivation.
///
/// Identical `(seed, label)` pairs always yield identical generators, and
/// distinct labels yield statistically independent streams, so adding a
/// consumer of randomness never perturbs existing ones.
#[derive(Debug, Clone, Copy)]
pub struct RngHub {
    seed: u64,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

impl RngHub {
    pub fn new(seed: u64) -> Self {
        RngHub { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// 64-bit sub-seed for `label`, mixing FNV-1a over the label bytes with
    /// the master seed through a splitmix64 finalizer.
    pub fn stream_seed(&self, label: &str) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in label.as_bytes() {
            h ^= *b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        splitmix64(self.seed ^ splitmix64(h))
    }

    /// Deterministic ChaCha12 generator for the named stream.
    pub fn stream(&self, label: &str) -> ChaCha12Rng {
        let mut key = [0u8; 32];
        let mut s = self.stream_seed(label);
        for chunk in key.chunks_mut(8) {
            s = splitmix64(s);
            chunk.copy_from_slice(&s.to_le_bytes());
        }
        ChaCha12Rng::from_seed(key)
    }
}
