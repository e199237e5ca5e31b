//! Tensor-to-packet codec: fixed-size gradient ranges and the receiver-side
//! range bitmap.
//!
//! A tensor is a flat array of fixed-width gradients. Packets carry
//! closed-open index ranges `[start, start+count)`; a gradient never spans
//! two packets, so any subset of packets decodes without reassembly state.

use thiserror::Error;

/// Shape of one tensor on the wire.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TensorSpec {
    pub tensor_id: u64,
    /// Number of gradients in the tensor.
    pub n_gradients: u32,
    /// Wire width of one gradient, bytes (4 for f32).
    pub bytes_per_gradient: u32,
}

impl TensorSpec {
    pub fn total_bytes(&self) -> u64 {
        self.n_gradients as u64 * self.bytes_per_gradient as u64
    }
}

/// Closed-open run of gradient indices `[start, start+count)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GradientRange {
    pub start: u32,
    pub count: u32,
}

impl GradientRange {
    pub fn new(start: u32, count: u32) -> Self {
        GradientRange { start, count }
    }
    pub fn end(&self) -> u32 {
        self.start + self.count
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CodecError {
    #[error("range [{start}, {end}) exceeds tensor of {n} gradients")]
    RangeOutOfBounds { start: u32, end: u32, n: u32 },
    #[error("payload of {mtu_payload} bytes cannot hold one {bytes_per_gradient}-byte gradient")]
    PayloadTooSmall { mtu_payload: u32, bytes_per_gradient: u32 },
    #[error("empty range")]
    EmptyRange,
}

/// Splits a tensor into per-packet ranges.
///
/// Every range but the last holds exactly `floor(mtu_payload /
/// bytes_per_gradient)` gradients; the ranges tile `[0, n_gradients)` in
/// order with no overlap.
pub fn partition(spec: &TensorSpec, mtu_payload: u32) -> Result<Vec<GradientRange>, CodecError> {
    let per_packet = mtu_payload / spec.bytes_per_gradient;
    if per_packet == 0 {
        return Err(CodecError::PayloadTooSmall {
            mtu_payload,
            bytes_per_gradient: spec.bytes_per_gradient,
        });
    }
    let mut out = Vec::with_capacity(spec.n_gradients.div_ceil(per_packet) as usize);
    let mut start = 0u32;
    while start < spec.n_gradients {
        let count = per_packet.min(spec.n_gradients - start);
        out.push(GradientRange { start, count });
        start += count;
    }
    Ok(out)
}

/// Gradients-per-packet for a payload size (the range length `partition`
/// emits for all but the final packet).
pub fn gradients_per_packet(mtu_payload: u32, bytes_per_gradient: u32) -> u32 {
    mtu_payload / bytes_per_gradient
}

/// Set of received gradient indices for one tensor.
///
/// Merging is idempotent, commutative and associative, so the bitmap is
/// insensitive to duplication and reordering of packets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RangeBitmap {
    n: u32,
    words: Vec<u64>,
    set: u32,
}

impl RangeBitmap {
    pub fn new(n_gradients: u32) -> Self {
        RangeBitmap {
            n: n_gradients,
            words: vec![0u64; (n_gradients as usize).div_ceil(64)],
            set: 0,
        }
    }

    pub fn n_gradients(&self) -> u32 {
        self.n
    }

    /// Count of distinct gradients received.
    pub fn received(&self) -> u32 {
        self.set
    }

    pub fn received_fraction(&self) -> f64 {
        if self.n == 0 {
            return 1.0;
        }
        self.set as f64 / self.n as f64
    }

    pub fn contains(&self, idx: u32) -> bool {
        idx < self.n && self.words[(idx / 64) as usize] >> (idx % 64) & 1 == 1
    }

    /// Marks `range` received. Re-merging any sub- or superset of already
    /// received indices is a no-op for those indices.
    pub fn merge(&mut self, range: GradientRange) -> Result<(), CodecError> {
        if range.count == 0 {
            return Err(CodecError::EmptyRange);
        }
        let end = range
            .start
            .checked_add(range.count)
            .filter(|&e| e <= self.n)
            .ok_or(CodecError::RangeOutOfBounds {
                start: range.start,
                end: range.start.saturating_add(range.count),
                n: self.n,
            })?;
        let (mut bit, last) = (range.start, end);
        while bit < last {
            let w = (bit / 64) as usize;
            let lo = bit % 64;
            let span = (64 - lo).min(last - bit);
            let mask = if span == 64 {
                u64::MAX
            } else {
                ((1u64 << span) - 1) << lo
            };
            let newly = mask & !self.words[w];
            self.words[w] |= mask;
            self.set += newly.count_ones();
            bit += span;
        }
        Ok(())
    }

    /// Maximal runs of received indices, ascending.
    pub fn received_runs(&self) -> Vec<GradientRange> {
        self.runs(true)
    }

    /// Maximal runs of missing indices, ascending: the exact set complement
    /// of the received runs within `[0, n)`.
    pub fn missing_runs(&self) -> Vec<GradientRange> {
        self.runs(false)
    }

    fn runs(&self, want_set: bool) -> Vec<GradientRange> {
        let mut out = Vec::new();
        let mut run_start: Option<u32> = None;
        for idx in 0..self.n {
            let bit = self.contains(idx);
            match (bit == want_set, run_start) {
                (true, None) => run_start = Some(idx),
                (false, Some(s)) => {
                    out.push(GradientRange { start: s, count: idx - s });
                    run_start = None;
                }
                _ => {}
            }
        }
        if let Some(s) = run_start {
            out.push(GradientRange { start: s, count: self.n - s });
        }
        out
    }
}

/// Byte length of the packed data-packet header.
pub const WIRE_HEADER_BYTES: usize = 22;

/// Packed per-packet header as written to trace files:
/// tensor_id (8B LE), start (4B LE), count (4B LE), seq (4B LE),
/// priority (1B), flags (1B).
///
/// Flag bits: bit 0 = importance (ECN-capable), bit 1 = signal channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WireHeader {
    pub tensor_id: u64,
    pub start: u32,
    pub count: u32,
    pub seq: u32,
    pub priority: u8,
    pub flags: u8,
}

pub const FLAG_IMPORTANT: u8 = 0b0000_0001;
pub const FLAG_SIGNAL: u8 = 0b0000_0010;

impl WireHeader {
    pub fn encode(&self) -> [u8; WIRE_HEADER_BYTES] {
        let mut b = [0u8; WIRE_HEADER_BYTES];
        b[0..8].copy_from_slice(&self.tensor_id.to_le_bytes());
        b[8..12].copy_from_slice(&self.start.to_le_bytes());
        b[12..16].copy_from_slice(&self.count.to_le_bytes());
        b[16..20].copy_from_slice(&self.seq.to_le_bytes());
        b[20] = self.priority;
        b[21] = self.flags;
        b
    }

    pub fn decode(b: &[u8; WIRE_HEADER_BYTES]) -> Self {
        WireHeader {
            tensor_id: u64::from_le_bytes(b[0..8].try_into().unwrap()),
            start: u32::from_le_bytes(b[8..12].try_into().unwrap()),
            count: u32::from_le_bytes(b[12..16].try_into().unwrap()),
            seq: u32::from_le_bytes(b[16..20].try_into().unwrap()),
            priority: b[20],
            flags: b[21],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(n: u32) -> TensorSpec {
        TensorSpec { tensor_id: 1, n_gradients: n, bytes_per_gradient: 4 }
    }

    #[test]
    fn partition_fills_packets_at_350_gradients() {
        // 1400-byte payload / 4-byte gradients = 350 per packet.
        assert_eq!(gradients_per_packet(1400, 4), 350);
        let ranges = partition(&spec(701), 1400).unwrap();
        assert_eq!(
            ranges,
            vec![
                GradientRange::new(0, 350),
                GradientRange::new(350, 350),
                GradientRange::new(700, 1)
            ]
        );
    }

    #[test]
    fn partition_single_packet_tensor() {
        let ranges = partition(&spec(10), 1400).unwrap();
        assert_eq!(ranges, vec![GradientRange::new(0, 10)]);
    }

    #[test]
    fn partition_tiles_exactly() {
        for n in [1u32, 349, 350, 351, 699, 700, 701, 12345] {
            let ranges = partition(&spec(n), 1400).unwrap();
            let mut next = 0u32;
            for r in &ranges {
                assert_eq!(r.start, next, "gap or overlap at {}", r.start);
                assert!(r.count > 0);
                next = r.end();
            }
            assert_eq!(next, n);
        }
    }

    #[test]
    fn partition_rejects_tiny_payload() {
        assert_eq!(
            partition(&spec(10), 3),
            Err(CodecError::PayloadTooSmall { mtu_payload: 3, bytes_per_gradient: 4 })
        );
    }

    #[test]
    fn merge_counts_and_is_idempotent() {
        let mut bm = RangeBitmap::new(1050);
        bm.merge(GradientRange::new(0, 350)).unwrap();
        assert_eq!(bm.received(), 350);
        bm.merge(GradientRange::new(0, 350)).unwrap();
        assert_eq!(bm.received(), 350, "duplicate merge must not double count");
        bm.merge(GradientRange::new(300, 100)).unwrap();
        assert_eq!(bm.received(), 400, "overlap counts new bits only");
    }

    #[test]
    fn merge_rejects_out_of_bounds() {
        let mut bm = RangeBitmap::new(100);
        assert!(matches!(
            bm.merge(GradientRange::new(90, 20)),
            Err(CodecError::RangeOutOfBounds { .. })
        ));
        assert_eq!(bm.received(), 0);
    }

    #[test]
    fn missing_is_exact_complement() {
        let mut bm = RangeBitmap::new(1050);
        bm.merge(GradientRange::new(0, 350)).unwrap();
        bm.merge(GradientRange::new(700, 350)).unwrap();
        assert_eq!(bm.missing_runs(), vec![GradientRange::new(350, 350)]);
        assert_eq!(
            bm.received_runs(),
            vec![GradientRange::new(0, 350), GradientRange::new(700, 350)]
        );
    }

    #[test]
    fn merge_is_order_independent() {
        let ranges = [
            GradientRange::new(128, 64),
            GradientRange::new(0, 1),
            GradientRange::new(63, 66),
            GradientRange::new(500, 12),
        ];
        let mut fwd = RangeBitmap::new(512);
        for r in ranges {
            fwd.merge(r).unwrap();
        }
        let mut rev = RangeBitmap::new(512);
        for r in ranges.iter().rev() {
            rev.merge(*r).unwrap();
        }
        assert_eq!(fwd, rev);
    }

    #[test]
    fn fraction_and_word_boundaries() {
        let mut bm = RangeBitmap::new(64);
        bm.merge(GradientRange::new(0, 64)).unwrap();
        assert_eq!(bm.received_fraction(), 1.0);
        assert_eq!(bm.missing_runs(), vec![]);

        let mut bm = RangeBitmap::new(130);
        bm.merge(GradientRange::new(62, 5)).unwrap();
        assert_eq!(bm.received(), 5);
        assert!(bm.contains(62) && bm.contains(66) && !bm.contains(67));
    }

    #[test]
    fn wire_header_round_trips_bit_exactly() {
        let h = WireHeader {
            tensor_id: 0xdead_beef_0102_0304,
            start: 7_000_000,
            count: 350,
            seq: 42,
            priority: 3,
            flags: FLAG_IMPORTANT,
        };
        let bytes = h.encode();
        assert_eq!(bytes.len(), WIRE_HEADER_BYTES);
        assert_eq!(WireHeader::decode(&bytes), h);
    }

    #[test]
    fn range_key_overhead_below_one_percent() {
        // Two 32-bit range keys on a 1400-byte payload.
        let overhead = 8.0 / 1400.0;
        assert!(overhead < 0.01, "range keys cost {overhead:.4} of payload");
    }
}
