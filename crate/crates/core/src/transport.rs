//! Wire format for compressed frames, a lossy link model and the fusion
//! center's reorder buffer.
//!
//! Frame layout, little-endian, 20-byte header:
//!
//! | offset | size | field         |
//! |--------|------|---------------|
//! | 0      | 4    | magic `CASF`  |
//! | 4      | 1    | version       |
//! | 5      | 2    | node id       |
//! | 7      | 4    | frame index   |
//! | 11     | 1    | D             |
//! | 12     | 2    | F'            |
//! | 14     | 1    | rank          |
//! | 15     | 1    | flags         |
//! | 16     | 4    | payload CRC32 |
//!
//! The payload follows: `D * rank` f32 values of the left block, row-major,
//! then `rank * F'` values of the right block, row-major.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::compressor::{decompress_sequence, SvdFactors};
use crate::error::{Error, Result};
use crate::model::{FeatureTensor, WindowMask};

pub const MAGIC: &[u8; 4] = b"CASF";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 20;

/// Set on the last frame of a node's stream.
pub const FLAG_END_OF_STREAM: u8 = 0x01;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameHeader {
    pub version: u8,
    pub node_id: u16,
    pub frame_index: u32,
    pub d: u8,
    pub f_prime: u16,
    pub rank: u8,
    pub flags: u8,
    pub payload_crc: u32,
}

impl FrameHeader {
    pub fn payload_len(&self) -> usize {
        4 * (self.d as usize + self.f_prime as usize) * self.rank as usize
    }

    pub fn frame_len(&self) -> usize {
        HEADER_LEN + self.payload_len()
    }

    fn parse(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::Frame(format!("{} bytes is shorter than a header", bytes.len())));
        }
        if &bytes[..4] != MAGIC {
            return Err(Error::Frame("bad magic".into()));
        }
        let h = Self {
            version: bytes[4],
            node_id: u16::from_le_bytes([bytes[5], bytes[6]]),
            frame_index: u32::from_le_bytes(bytes[7..11].try_into().unwrap()),
            d: bytes[11],
            f_prime: u16::from_le_bytes([bytes[12], bytes[13]]),
            rank: bytes[14],
            flags: bytes[15],
            payload_crc: u32::from_le_bytes(bytes[16..20].try_into().unwrap()),
        };
        if h.version != VERSION {
            return Err(Error::Frame(format!("unsupported version {}", h.version)));
        }
        let max = (h.d as usize).min(h.f_prime as usize);
        if h.rank == 0 || h.rank as usize > max {
            return Err(Error::Frame(format!(
                "rank {} invalid for {}x{} frame",
                h.rank, h.d, h.f_prime
            )));
        }
        Ok(h)
    }
}

/// A decoded frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub header: FrameHeader,
    pub factors: SvdFactors,
}

pub fn serialize(f: &SvdFactors, node_id: u16, frame_index: u32) -> Result<Vec<u8>> {
    serialize_with_flags(f, node_id, frame_index, 0)
}

pub fn serialize_with_flags(
    f: &SvdFactors,
    node_id: u16,
    frame_index: u32,
    flags: u8,
) -> Result<Vec<u8>> {
    let d = u8::try_from(f.d()).map_err(|_| Error::Frame(format!("D = {} exceeds 255", f.d())))?;
    let f_prime = u16::try_from(f.f_prime())
        .map_err(|_| Error::Frame(format!("F' = {} exceeds 65535", f.f_prime())))?;
    let rank = u8::try_from(f.rank()).expect("rank <= D");

    let mut payload = Vec::with_capacity(4 * f.payload_len());
    for v in f.left.iter().chain(f.right.iter()) {
        payload.extend_from_slice(&v.to_le_bytes());
    }
    let crc = crc32fast::hash(&payload);

    let mut out = Vec::with_capacity(HEADER_LEN + payload.len());
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&node_id.to_le_bytes());
    out.extend_from_slice(&frame_index.to_le_bytes());
    out.push(d);
    out.extend_from_slice(&f_prime.to_le_bytes());
    out.push(rank);
    out.push(flags);
    out.extend_from_slice(&crc.to_le_bytes());
    out.extend_from_slice(&payload);
    Ok(out)
}

/// Decodes one frame occupying exactly `bytes`.
pub fn deserialize(bytes: &[u8]) -> Result<Frame> {
    let (frame, used) = decode_prefix(bytes)?;
    if used != bytes.len() {
        return Err(Error::Frame(format!(
            "{} trailing bytes after frame",
            bytes.len() - used
        )));
    }
    Ok(frame)
}

/// Decodes the frame at the start of `bytes`, returning it and its length.
pub fn decode_prefix(bytes: &[u8]) -> Result<(Frame, usize)> {
    let header = FrameHeader::parse(bytes)?;
    let len = header.frame_len();
    if bytes.len() < len {
        return Err(Error::Frame(format!(
            "truncated payload: need {len} bytes, have {}",
            bytes.len()
        )));
    }
    let payload = &bytes[HEADER_LEN..len];
    let actual = crc32fast::hash(payload);
    if actual != header.payload_crc {
        return Err(Error::Crc {
            expected: header.payload_crc,
            actual,
        });
    }
    let mut values = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()));
    let (d, fp, a) = (
        header.d as usize,
        header.f_prime as usize,
        header.rank as usize,
    );
    let left = Array2::from_shape_vec((d, a), values.by_ref().take(d * a).collect())
        .expect("length from header");
    let right = Array2::from_shape_vec((a, fp), values.collect()).expect("length from header");
    Ok((
        Frame {
            header,
            factors: SvdFactors::new(left, right)?,
        },
        len,
    ))
}

/// Independent per-frame loss and bounded delay, reproducible from the
/// seed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelModel {
    pub drop_prob: f64,
    pub max_delay_frames: u32,
    pub jitter_seed: u64,
}

impl Default for ChannelModel {
    fn default() -> Self {
        Self::lossless()
    }
}

impl ChannelModel {
    pub fn lossless() -> Self {
        Self {
            drop_prob: 0.0,
            max_delay_frames: 0,
            jitter_seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.drop_prob) {
            return Err(Error::Config(format!(
                "drop probability {} outside [0, 1]",
                self.drop_prob
            )));
        }
        Ok(())
    }

    /// Same loss statistics with a seed decorrelated per node.
    pub fn for_node(&self, node_id: u16) -> Self {
        Self {
            jitter_seed: self
                .jitter_seed
                .wrapping_add((node_id as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)),
            ..*self
        }
    }
}

/// Bytes handed to the link at `tick`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Datagram {
    pub tick: u64,
    pub bytes: Vec<u8>,
}

/// Drops or delays every datagram independently. The output is ordered by
/// arrival tick, ties kept in send order.
pub fn channel_apply(stream: Vec<Datagram>, ch: &ChannelModel) -> Vec<Datagram> {
    let mut rng = ChaCha8Rng::seed_from_u64(ch.jitter_seed);
    let mut out: Vec<Datagram> = stream
        .into_iter()
        .filter_map(|mut dg| {
            let lost = rng.random::<f64>() < ch.drop_prob;
            let delay = rng.random_range(0..=ch.max_delay_frames) as u64;
            if lost {
                None
            } else {
                dg.tick += delay;
                Some(dg)
            }
        })
        .collect();
    out.sort_by_key(|dg| dg.tick);
    out
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AssemblyStats {
    pub received: usize,
    pub discarded_late: usize,
    pub duplicates: usize,
    pub corrupt: usize,
    pub unknown_node: usize,
    /// Largest number of frames held for one node at any time.
    pub peak_buffered: usize,
}

#[derive(Debug, Default)]
struct NodeBuffer {
    frames: BTreeMap<u32, SvdFactors>,
}

/// Fusion-center reorder buffer.
///
/// Query `k` runs at tick `k + future` and reads frames `k - past ..=
/// k + future`. A frame whose last possible query has already run when it
/// arrives is discarded and counted.
#[derive(Debug)]
pub struct FcAssembler {
    past: usize,
    future: usize,
    nodes: BTreeMap<u16, NodeBuffer>,
    stats: AssemblyStats,
}

impl FcAssembler {
    pub fn new(node_ids: &[u16], past: usize, future: usize) -> Self {
        Self {
            past,
            future,
            nodes: node_ids.iter().map(|&id| (id, NodeBuffer::default())).collect(),
            stats: AssemblyStats::default(),
        }
    }

    pub fn stats(&self) -> AssemblyStats {
        self.stats
    }

    /// Last tick at which frame `index` can still be used.
    pub fn deadline(&self, index: u32) -> u64 {
        index as u64 + self.past as u64 + self.future as u64
    }

    /// Accepts one datagram arriving at `tick`.
    pub fn receive(&mut self, bytes: &[u8], tick: u64) {
        let frame = match deserialize(bytes) {
            Ok(f) => f,
            Err(_) => {
                self.stats.corrupt += 1;
                return;
            }
        };
        let idx = frame.header.frame_index;
        if tick > self.deadline(idx) {
            self.stats.discarded_late += 1;
            return;
        }
        let Some(buf) = self.nodes.get_mut(&frame.header.node_id) else {
            self.stats.unknown_node += 1;
            return;
        };
        if buf.frames.insert(idx, frame.factors).is_some() {
            self.stats.duplicates += 1;
        } else {
            self.stats.received += 1;
        }
        self.stats.peak_buffered = self.stats.peak_buffered.max(buf.frames.len());
    }

    /// Frames visible to query `k` for `node`, one slot per window
    /// position; `None` is a gap.
    pub fn window(&self, node: u16, k: usize) -> Vec<Option<&SvdFactors>> {
        let buf = self.nodes.get(&node);
        (0..self.past + self.future + 1)
            .map(|o| {
                let j = k as isize - self.past as isize + o as isize;
                if j < 0 {
                    return None;
                }
                buf.and_then(|b| b.frames.get(&(j as u32)))
            })
            .collect()
    }

    /// Drops frames no query at or after `k` can read.
    pub fn evict_before(&mut self, k: usize) {
        let keep_from = k.saturating_sub(self.past) as u32;
        for buf in self.nodes.values_mut() {
            buf.frames = buf.frames.split_off(&keep_from);
        }
    }

    pub fn buffered(&self, node: u16) -> usize {
        self.nodes.get(&node).map_or(0, |b| b.frames.len())
    }
}

/// Everything the fusion center learned about one node's stream.
#[derive(Debug, Clone)]
pub struct ReceivedSequence {
    pub node_id: u16,
    pub d: usize,
    pub f_prime: usize,
    /// Every frame that was usable by at least one query.
    pub frames: Vec<Option<SvdFactors>>,
    pub mask: WindowMask,
}

impl ReceivedSequence {
    /// Decompressed features; frames never received are zero.
    pub fn features(&self) -> Result<FeatureTensor> {
        decompress_sequence(&self.frames, self.d, self.f_prime)
    }

    pub fn n_frames(&self) -> usize {
        self.frames.len()
    }
}

/// Runs the query loop for `n_frames` frames over deliveries merged from
/// every node (ordered by arrival tick).
pub fn fc_assemble(
    deliveries: &[Datagram],
    node_ids: &[u16],
    n_frames: usize,
    d: usize,
    f_prime: usize,
    past: usize,
    future: usize,
) -> (Vec<ReceivedSequence>, AssemblyStats) {
    let mut asm = FcAssembler::new(node_ids, past, future);
    let width = past + future + 1;
    let mut avail = vec![vec![vec![false; width]; n_frames]; node_ids.len()];
    let mut frames: Vec<Vec<Option<SvdFactors>>> = vec![vec![None; n_frames]; node_ids.len()];
    let mut next = 0;
    for k in 0..n_frames {
        let now = (k + future) as u64;
        while next < deliveries.len() && deliveries[next].tick <= now {
            asm.receive(&deliveries[next].bytes, deliveries[next].tick);
            next += 1;
        }
        for (n, &id) in node_ids.iter().enumerate() {
            for (o, slot) in asm.window(id, k).into_iter().enumerate() {
                let j = k as isize - past as isize + o as isize;
                if let Some(f) = slot {
                    if (j as usize) < n_frames {
                        avail[n][k][o] = true;
                        frames[n][j as usize].get_or_insert_with(|| f.clone());
                    }
                }
            }
        }
        asm.evict_before(k + 1);
    }
    // Datagrams after the last query still count towards lateness.
    for dg in &deliveries[next..] {
        asm.receive(&dg.bytes, dg.tick);
    }
    let seqs = node_ids
        .iter()
        .enumerate()
        .map(|(n, &id)| {
            let slots = &avail[n];
            ReceivedSequence {
                node_id: id,
                d,
                f_prime,
                frames: std::mem::take(&mut frames[n]),
                mask: WindowMask::from_fn(n_frames, past, future, |k, j| {
                    slots[k][j + past - k]
                }),
            }
        })
        .collect();
    (seqs, asm.stats())
}

/// Byte and frame counters for a simulated link.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LinkStats {
    pub frames_sent: usize,
    pub bytes_sent: usize,
    pub payload_bytes_sent: usize,
    pub frames_delivered: usize,
    pub assembly: AssemblyStats,
}

/// Serializes every node's factors, pushes them through the channel and
/// assembles them at the fusion center. Node `i` of `streams` is sent with
/// id `i + 1`; id 0 is the fusion center itself.
pub fn simulate_link(
    streams: &[Vec<SvdFactors>],
    ch: &ChannelModel,
    past: usize,
    future: usize,
) -> Result<(Vec<ReceivedSequence>, LinkStats)> {
    ch.validate()?;
    let mut stats = LinkStats::default();
    let mut deliveries = Vec::new();
    let mut node_ids = Vec::with_capacity(streams.len());
    let (mut n_frames, mut d, mut f_prime) = (0, 0, 0);
    for (i, stream) in streams.iter().enumerate() {
        let id = u16::try_from(i + 1).map_err(|_| Error::Config("too many nodes".into()))?;
        node_ids.push(id);
        n_frames = n_frames.max(stream.len());
        let mut datagrams = Vec::with_capacity(stream.len());
        for (t, f) in stream.iter().enumerate() {
            d = f.d();
            f_prime = f.f_prime();
            let flags = if t + 1 == stream.len() {
                FLAG_END_OF_STREAM
            } else {
                0
            };
            let bytes = serialize_with_flags(f, id, t as u32, flags)?;
            stats.frames_sent += 1;
            stats.bytes_sent += bytes.len();
            stats.payload_bytes_sent += bytes.len() - HEADER_LEN;
            datagrams.push(Datagram {
                tick: t as u64,
                bytes,
            });
        }
        deliveries.extend(channel_apply(datagrams, &ch.for_node(id)));
    }
    stats.frames_delivered = deliveries.len();
    deliveries.sort_by_key(|dg| dg.tick);
    let (seqs, assembly) = fc_assemble(&deliveries, &node_ids, n_frames, d, f_prime, past, future);
    stats.assembly = assembly;
    Ok((seqs, stats))
}

/// Concatenation of frames, as written to a `.casf` file.
pub fn write_container(path: impl AsRef<Path>, frames: &[Vec<u8>]) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, frames.concat()).map_err(|e| Error::io(path, e))
}

/// Summary of a `.casf` file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReplayReport {
    pub frames: usize,
    pub corrupt: usize,
    pub payload_bytes: usize,
    /// Per node: (frames, first index, last index, missing indices).
    pub nodes: BTreeMap<u16, NodeReplay>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct NodeReplay {
    pub frames: usize,
    pub first: u32,
    pub last: u32,
    pub missing: usize,
    pub rank: u8,
    pub ended: bool,
}

/// Walks a container. CRC failures are counted and skipped; a header that
/// cannot be parsed ends the walk with an error since frame boundaries are
/// lost.
pub fn replay(bytes: &[u8]) -> Result<(Vec<Frame>, ReplayReport)> {
    let mut pos = 0;
    let mut frames = Vec::new();
    let mut report = ReplayReport::default();
    while pos < bytes.len() {
        let header = FrameHeader::parse(&bytes[pos..])
            .map_err(|e| Error::Frame(format!("at byte {pos}: {e}")))?;
        let len = header.frame_len();
        if pos + len > bytes.len() {
            return Err(Error::Frame(format!("at byte {pos}: truncated frame")));
        }
        match decode_prefix(&bytes[pos..pos + len]) {
            Ok((frame, _)) => {
                report.frames += 1;
                report.payload_bytes += header.payload_len();
                let node = report.nodes.entry(header.node_id).or_insert(NodeReplay {
                    first: header.frame_index,
                    ..Default::default()
                });
                node.frames += 1;
                node.first = node.first.min(header.frame_index);
                node.last = node.last.max(header.frame_index);
                node.rank = header.rank;
                node.ended |= header.flags & FLAG_END_OF_STREAM != 0;
                frames.push(frame);
            }
            Err(Error::Crc { .. }) => report.corrupt += 1,
            Err(e) => return Err(e),
        }
        pos += len;
    }
    for node in report.nodes.values_mut() {
        node.missing = (node.last - node.first + 1) as usize - node.frames;
    }
    Ok((frames, report))
}
