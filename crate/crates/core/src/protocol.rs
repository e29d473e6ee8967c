//! Mask wire frames, the synchronous neighbor exchange and bit accounting.
//!
//! Frame layout (all integers little-endian):
//!
//! ```text
//! 0..4    magic "MKFR"
//! 4..6    version (1)
//! 6..8    segment count
//! 8..12   sender id
//! 12..16  round index
//! then per segment, in ascending layer order:
//!         layer index (u32), entry count (u32),
//!         ceil(count / 8) payload bytes, entry i at bit i % 8 of byte i / 8,
//!         unused high bits of the last byte zero
//! ```

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::masking::{BitMask, BitMaskSet};
use crate::nn::ParamSet;
use crate::topology::Graph;

pub const MAGIC: [u8; 4] = *b"MKFR";
pub const VERSION: u16 = 1;
pub const FRAME_HEADER_BYTES: usize = 16;
pub const SEGMENT_HEADER_BYTES: usize = 8;
/// Bits per transmitted real-valued parameter.
pub const REAL_BITS: u64 = 32;

/// Encoded mask message.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskFrame {
    bytes: Vec<u8>,
}

impl MaskFrame {
    /// Wraps raw bytes after checking the fixed header.
    pub fn from_bytes(bytes: Vec<u8>) -> Result<Self> {
        if bytes.len() < FRAME_HEADER_BYTES {
            return Err(Error::protocol(None, format!("frame of {} bytes is shorter than its header", bytes.len())));
        }
        if bytes[0..4] != MAGIC {
            return Err(Error::protocol(None, format!("bad magic {:02x?}", &bytes[0..4])));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != VERSION {
            return Err(Error::protocol(None, format!("unsupported version {version}")));
        }
        Ok(MaskFrame { bytes })
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.bytes
    }

    pub fn segment_count(&self) -> usize {
        u16::from_le_bytes([self.bytes[6], self.bytes[7]]) as usize
    }

    pub fn sender(&self) -> usize {
        read_u32(&self.bytes, 8) as usize
    }

    pub fn round(&self) -> u32 {
        read_u32(&self.bytes, 12)
    }

    /// Fixed header plus per-segment headers.
    pub fn header_bytes(&self) -> usize {
        FRAME_HEADER_BYTES + SEGMENT_HEADER_BYTES * self.segment_count()
    }

    /// Mask entries carried, one bit each (padding excluded).
    pub fn payload_bits(&self) -> u64 {
        let mut off = FRAME_HEADER_BYTES;
        let mut bits = 0u64;
        for _ in 0..self.segment_count() {
            if off + SEGMENT_HEADER_BYTES > self.bytes.len() {
                break;
            }
            let n = read_u32(&self.bytes, off + 4) as u64;
            bits += n;
            off += SEGMENT_HEADER_BYTES + (n as usize).div_ceil(8);
        }
        bits
    }
}

fn read_u32(b: &[u8], off: usize) -> u32 {
    u32::from_le_bytes([b[off], b[off + 1], b[off + 2], b[off + 3]])
}

/// Serializes a mask set. Layers are written in the set's (ascending) order.
pub fn encode_mask(masks: &BitMaskSet, sender: usize, round: u32) -> Result<MaskFrame> {
    let segments = u16::try_from(masks.len()).map_err(|_| Error::Argument(format!("{} layers exceed the frame limit", masks.len())))?;
    let sender = u32::try_from(sender).map_err(|_| Error::Argument(format!("sender id {sender} exceeds u32")))?;
    let payload: usize = masks.masks().iter().map(|m| m.len().div_ceil(8)).sum();
    let mut bytes = Vec::with_capacity(FRAME_HEADER_BYTES + SEGMENT_HEADER_BYTES * masks.len() + payload);
    bytes.extend_from_slice(&MAGIC);
    bytes.extend_from_slice(&VERSION.to_le_bytes());
    bytes.extend_from_slice(&segments.to_le_bytes());
    bytes.extend_from_slice(&sender.to_le_bytes());
    bytes.extend_from_slice(&round.to_le_bytes());
    for (layer, mask) in masks.iter() {
        let layer = u32::try_from(layer).map_err(|_| Error::Argument(format!("layer index {layer} exceeds u32")))?;
        let n = u32::try_from(mask.len()).map_err(|_| Error::Argument(format!("layer {layer} has too many entries")))?;
        bytes.extend_from_slice(&layer.to_le_bytes());
        bytes.extend_from_slice(&n.to_le_bytes());
        let start = bytes.len();
        bytes.resize(start + mask.len().div_ceil(8), 0);
        for (i, bit) in mask.iter().enumerate() {
            if bit {
                bytes[start + i / 8] |= 1 << (i % 8);
            }
        }
    }
    Ok(MaskFrame { bytes })
}

/// Inverse of [`encode_mask`], validated against the expected
/// `(layer index, shape)` list.
pub fn decode_mask(frame: &MaskFrame, expected: &[(usize, Vec<usize>)]) -> Result<BitMaskSet> {
    let b = &frame.bytes;
    if frame.segment_count() != expected.len() {
        return Err(Error::protocol(
            None,
            format!("frame has {} segments, expected {}", frame.segment_count(), expected.len()),
        ));
    }
    let mut off = FRAME_HEADER_BYTES;
    let mut entries = Vec::with_capacity(expected.len());
    for (seg, (layer, shape)) in expected.iter().enumerate() {
        if off + SEGMENT_HEADER_BYTES > b.len() {
            return Err(Error::protocol(Some(seg), "truncated segment header"));
        }
        let got_layer = read_u32(b, off) as usize;
        let n = read_u32(b, off + 4) as usize;
        if got_layer != *layer {
            return Err(Error::protocol(Some(seg), format!("layer index {got_layer}, expected {layer}")));
        }
        let want: usize = shape.iter().product();
        if n != want {
            return Err(Error::protocol(Some(seg), format!("{n} entries, expected {want} for layer {layer}")));
        }
        off += SEGMENT_HEADER_BYTES;
        let len = n.div_ceil(8);
        if off + len > b.len() {
            return Err(Error::protocol(Some(seg), "truncated payload"));
        }
        let payload = &b[off..off + len];
        if n % 8 != 0 && payload[len - 1] >> (n % 8) != 0 {
            return Err(Error::protocol(Some(seg), "nonzero padding bits"));
        }
        let mut mask = BitMask::zeros(shape);
        for i in 0..n {
            if payload[i / 8] >> (i % 8) & 1 == 1 {
                mask.set(i, true);
            }
        }
        entries.push((*layer, mask));
        off += len;
    }
    if off != b.len() {
        return Err(Error::protocol(None, format!("{} trailing bytes", b.len() - off)));
    }
    BitMaskSet::new(entries)
}

/// Payload cost of a mask set: one bit per entry.
pub fn account_mask_bits(masks: &BitMaskSet) -> u64 {
    masks.total_len() as u64
}

/// Payload cost of real-valued parameters: 32 bits each.
pub fn account_real_bits(params: &ParamSet) -> u64 {
    params.total_len() as u64 * REAL_BITS
}

/// Header bits of a frame carrying `layers` segments.
pub fn header_bits(layers: usize) -> u64 {
    ((FRAME_HEADER_BYTES + SEGMENT_HEADER_BYTES * layers) * 8) as u64
}

/// Bits moved by one agent in one round.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Traffic {
    pub sent_payload: u64,
    pub sent_header: u64,
    pub recv_payload: u64,
    pub recv_header: u64,
}

/// Per-agent, per-round bit counts. Every unicast copy is counted.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CommLedger {
    agents: usize,
    rounds: BTreeMap<u64, Vec<Traffic>>,
}

impl CommLedger {
    pub fn new(agents: usize) -> Self {
        CommLedger {
            agents,
            rounds: BTreeMap::new(),
        }
    }

    pub fn agents(&self) -> usize {
        self.agents
    }

    /// One message from `from` to `to`.
    pub fn record(&mut self, round: u64, from: usize, to: usize, payload_bits: u64, header_bits: u64) {
        let row = self
            .rounds
            .entry(round)
            .or_insert_with(|| vec![Traffic::default(); self.agents]);
        row[from].sent_payload += payload_bits;
        row[from].sent_header += header_bits;
        row[to].recv_payload += payload_bits;
        row[to].recv_header += header_bits;
    }

    pub fn round(&self, round: u64) -> Option<&[Traffic]> {
        self.rounds.get(&round).map(Vec::as_slice)
    }

    pub fn rounds(&self) -> impl Iterator<Item = (u64, &[Traffic])> {
        self.rounds.iter().map(|(&k, v)| (k, v.as_slice()))
    }

    /// Payload bits sent by all agents in `round`.
    pub fn round_payload(&self, round: u64) -> u64 {
        self.round(round).map_or(0, |r| r.iter().map(|t| t.sent_payload).sum())
    }

    /// Totals per agent over rounds `<= upto`.
    pub fn cumulative(&self, upto: u64) -> Vec<Traffic> {
        let mut acc = vec![Traffic::default(); self.agents];
        for (_, row) in self.rounds.range(..=upto) {
            for (a, t) in acc.iter_mut().zip(row) {
                a.sent_payload += t.sent_payload;
                a.sent_header += t.sent_header;
                a.recv_payload += t.recv_payload;
                a.recv_header += t.recv_header;
            }
        }
        acc
    }

    /// Network-wide totals over all rounds.
    pub fn totals(&self) -> Traffic {
        self.cumulative(u64::MAX).iter().fold(Traffic::default(), |mut s, t| {
            s.sent_payload += t.sent_payload;
            s.sent_header += t.sent_header;
            s.recv_payload += t.recv_payload;
            s.recv_header += t.recv_header;
            s
        })
    }
}

/// Synchronous barrier: delivers each agent's frame to all of its
/// neighbors. Inbox `i` holds the frames of exactly `N(i)`, ordered by
/// ascending sender id. The outbox may be in any order but must hold
/// exactly one frame per agent.
pub fn exchange(graph: &Graph, outbox: &[MaskFrame], round: u64, ledger: &mut CommLedger) -> Result<Vec<Vec<MaskFrame>>> {
    let n = graph.node_count();
    let mut by_sender: Vec<Option<&MaskFrame>> = vec![None; n];
    for f in outbox {
        let s = f.sender();
        if s >= n {
            return Err(Error::Simulation(format!("frame from unknown agent {s}")));
        }
        if by_sender[s].replace(f).is_some() {
            return Err(Error::Simulation(format!("agent {s} sent two frames in round {round}")));
        }
    }
    if let Some(missing) = by_sender.iter().position(Option::is_none) {
        return Err(Error::Simulation(format!(
            "no frame from agent {missing} in round {round}: barrier not satisfied"
        )));
    }
    let mut inboxes = Vec::with_capacity(n);
    for i in 0..n {
        let mut inbox = Vec::with_capacity(graph.degree(i));
        for &j in graph.neighbors(i) {
            let f = by_sender[j].expect("checked above");
            ledger.record(round, j, i, f.payload_bits(), (f.header_bytes() * 8) as u64);
            inbox.push(f.clone());
        }
        inboxes.push(inbox);
    }
    Ok(inboxes)
}
