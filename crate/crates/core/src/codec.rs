//! Intra-only block-DCT codec with a CRF-style quality knob.
//!
//! Each frame is coded independently:
//!
//! 1. edge-replicate to a multiple of 8 in both directions,
//! 2. level-shift by -128 and apply an orthonormal 8×8 DCT-II,
//! 3. quantize each coefficient with [`quantizer_step`] (round half away from zero),
//! 4. scan in zigzag order and entropy-code with LEB128 varints.
//!
//! # Bitstream
//!
//! ```text
//! offset  size  field
//! 0       4     magic "BDC1"
//! 4       2     width, big-endian u16
//! 6       2     height, big-endian u16
//! 8       1     crf (0..=51)
//! 9       ...   blocks, raster order over the padded frame
//! ```
//!
//! Each block is:
//!
//! ```text
//! svarint  DC level minus the previous block's DC level (first block: minus 0)
//! uvarint  n = number of non-zero AC levels (0..=63)
//! n times:
//!   uvarint  zero run preceding the level, in zigzag scan positions
//!   svarint  level (never 0)
//! ```
//!
//! `uvarint` is unsigned LEB128; `svarint` is zigzag-mapped
//! (`0,-1,1,-2,.. -> 0,1,2,3,..`) then LEB128. Frames are self-delimiting, so
//! a sequence bitstream is the plain concatenation of frame bitstreams.

use std::sync::OnceLock;

use crate::exec::Execution;
use crate::frameio::{Fps, Frame, VideoSequence};
use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"BDC1";
pub const HEADER_BYTES: usize = 9;
pub const MAX_CRF: u8 = 51;

const N: usize = 8;
const BLOCK: usize = N * N;

/// Natural (row-major) index of each zigzag scan position.
pub const ZIGZAG: [usize; BLOCK] = [
    0, 1, 8, 16, 9, 2, 3, 10, 17, 24, 32, 25, 18, 11, 4, 5, 12, 19, 26, 33, 40, 48, 41, 34, 27,
    20, 13, 6, 7, 14, 21, 28, 35, 42, 49, 56, 57, 50, 43, 36, 29, 22, 15, 23, 30, 37, 44, 51, 58,
    59, 52, 45, 38, 31, 39, 46, 53, 60, 61, 54, 47, 55, 62, 63,
];

/// Compression knob in `0..=51`; 0 is near-lossless, 51 is coarsest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize)]
pub struct QualityLevel(u8);

impl QualityLevel {
    pub const MIN: QualityLevel = QualityLevel(0);
    pub const MAX: QualityLevel = QualityLevel(MAX_CRF);

    pub fn new(crf: u8) -> Result<Self> {
        if crf > MAX_CRF {
            return Err(Error::Domain(format!("crf {crf} outside 0..=51")));
        }
        Ok(QualityLevel(crf))
    }

    pub fn crf(self) -> u8 {
        self.0
    }

    /// Moves by `delta` crf units, saturating at both ends.
    pub fn offset(self, delta: i32) -> QualityLevel {
        QualityLevel((self.0 as i32 + delta).clamp(0, MAX_CRF as i32) as u8)
    }
}

impl std::fmt::Display for QualityLevel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.0.fmt(f)
    }
}

/// Quantizer base per zigzag position: 3.5 at DC, rising by 1/2 per unit of
/// horizontal + vertical frequency.
fn base_step(coeff_index: usize) -> f64 {
    let natural = ZIGZAG[coeff_index];
    let (u, v) = (natural / N, natural % N);
    3.5 + 0.5 * (u + v) as f64
}

/// Quantizer step for a zigzag coefficient position:
/// `max(1, round(base[k] * 2^((crf - 18) / 6)))`.
pub fn quantizer_step(crf: u8, coeff_index: usize) -> Result<u32> {
    if crf > MAX_CRF {
        return Err(Error::Domain(format!("crf {crf} outside 0..=51")));
    }
    if coeff_index >= BLOCK {
        return Err(Error::Domain(format!("coefficient index {coeff_index} outside 0..64")));
    }
    Ok(step_unchecked(crf, coeff_index))
}

fn step_unchecked(crf: u8, k: usize) -> u32 {
    let scale = 2f64.powf((crf as f64 - 18.0) / 6.0);
    (base_step(k) * scale).round().max(1.0) as u32
}

/// All 64 steps for a crf, indexed by zigzag position.
fn step_table(q: QualityLevel) -> &'static [f64; BLOCK] {
    static TABLES: OnceLock<Vec<[f64; BLOCK]>> = OnceLock::new();
    let tables = TABLES.get_or_init(|| {
        (0..=MAX_CRF)
            .map(|crf| std::array::from_fn(|k| step_unchecked(crf, k) as f64))
            .collect()
    });
    &tables[q.0 as usize]
}

/// `COS[u][x] = c(u) cos((2x + 1) u pi / 16)`, orthonormal.
fn cos_table() -> &'static [[f64; N]; N] {
    static TABLE: OnceLock<[[f64; N]; N]> = OnceLock::new();
    TABLE.get_or_init(|| {
        std::array::from_fn(|u| {
            let c = if u == 0 { (1.0 / N as f64).sqrt() } else { (2.0 / N as f64).sqrt() };
            std::array::from_fn(|x| {
                c * (((2 * x + 1) as f64 * u as f64 * std::f64::consts::PI) / 16.0).cos()
            })
        })
    })
}

fn fdct(block: &[f64; BLOCK]) -> [f64; BLOCK] {
    let c = cos_table();
    let mut tmp = [0.0; BLOCK];
    // rows
    for y in 0..N {
        for u in 0..N {
            let mut s = 0.0;
            for x in 0..N {
                s += c[u][x] * block[y * N + x];
            }
            tmp[y * N + u] = s;
        }
    }
    let mut out = [0.0; BLOCK];
    // columns
    for u in 0..N {
        for v in 0..N {
            let mut s = 0.0;
            for y in 0..N {
                s += c[v][y] * tmp[y * N + u];
            }
            out[v * N + u] = s;
        }
    }
    out
}

fn idct(coeffs: &[f64; BLOCK]) -> [f64; BLOCK] {
    let c = cos_table();
    let mut tmp = [0.0; BLOCK];
    for u in 0..N {
        for y in 0..N {
            let mut s = 0.0;
            for v in 0..N {
                s += c[v][y] * coeffs[v * N + u];
            }
            tmp[y * N + u] = s;
        }
    }
    let mut out = [0.0; BLOCK];
    for y in 0..N {
        for x in 0..N {
            let mut s = 0.0;
            for u in 0..N {
                s += c[u][x] * tmp[y * N + u];
            }
            out[y * N + x] = s;
        }
    }
    out
}

/// One coded frame. `payload` holds block data only; the 9-byte header is
/// rebuilt from the other fields by [`CompressedFrame::to_bytes`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompressedFrame {
    pub width: u16,
    pub height: u16,
    pub quality: QualityLevel,
    pub payload: Vec<u8>,
}

impl CompressedFrame {
    pub fn size_bits(&self) -> u64 {
        ((HEADER_BYTES + self.payload.len()) * 8) as u64
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_BYTES + self.payload.len());
        self.write_to(&mut out);
        out
    }

    fn write_to(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&self.width.to_be_bytes());
        out.extend_from_slice(&self.height.to_be_bytes());
        out.push(self.quality.0);
        out.extend_from_slice(&self.payload);
    }

    /// Parses exactly one frame; trailing bytes are an error.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (frame, used) = Self::parse_prefix(bytes)?;
        if used != bytes.len() {
            return Err(Error::Bitstream(format!(
                "{} trailing bytes after frame",
                bytes.len() - used
            )));
        }
        Ok(frame)
    }

    /// Parses one frame from the front of `bytes`, returning it and the
    /// number of bytes it occupied.
    pub fn parse_prefix(bytes: &[u8]) -> Result<(Self, usize)> {
        if bytes.len() < HEADER_BYTES {
            return Err(Error::Bitstream("truncated header".into()));
        }
        if &bytes[..4] != MAGIC {
            return Err(Error::Bitstream("bad magic".into()));
        }
        let width = u16::from_be_bytes([bytes[4], bytes[5]]);
        let height = u16::from_be_bytes([bytes[6], bytes[7]]);
        if width == 0 || height == 0 {
            return Err(Error::Bitstream(format!("zero dimension {width}x{height}")));
        }
        let quality = QualityLevel::new(bytes[8])
            .map_err(|_| Error::Bitstream(format!("crf {} out of range", bytes[8])))?;
        let body = &bytes[HEADER_BYTES..];
        let blocks = block_count(width as usize, height as usize);
        let mut reader = Reader::new(body);
        let mut dc_pred = 0i64;
        for _ in 0..blocks {
            read_block(&mut reader, &mut dc_pred)?;
        }
        let used = reader.pos;
        Ok((
            CompressedFrame {
                width,
                height,
                quality,
                payload: body[..used].to_vec(),
            },
            HEADER_BYTES + used,
        ))
    }
}

fn padded(len: usize) -> usize {
    len.div_ceil(N) * N
}

fn block_count(width: usize, height: usize) -> usize {
    (padded(width) / N) * (padded(height) / N)
}

fn put_uvarint(out: &mut Vec<u8>, mut v: u64) {
    loop {
        let byte = (v & 0x7f) as u8;
        v >>= 7;
        if v == 0 {
            out.push(byte);
            return;
        }
        out.push(byte | 0x80);
    }
}

fn put_svarint(out: &mut Vec<u8>, v: i64) {
    put_uvarint(out, ((v << 1) ^ (v >> 63)) as u64);
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Reader { bytes, pos: 0 }
    }

    fn uvarint(&mut self) -> Result<u64> {
        let mut v = 0u64;
        for shift in (0..64).step_by(7) {
            let byte = *self
                .bytes
                .get(self.pos)
                .ok_or_else(|| Error::Bitstream("truncated block data".into()))?;
            self.pos += 1;
            v |= ((byte & 0x7f) as u64) << shift;
            if byte & 0x80 == 0 {
                return Ok(v);
            }
        }
        Err(Error::Bitstream("varint overflow".into()))
    }

    fn svarint(&mut self) -> Result<i64> {
        let u = self.uvarint()?;
        Ok(((u >> 1) as i64) ^ -((u & 1) as i64))
    }
}

/// Largest level magnitude a valid stream can carry: DC of an all-255 block
/// is 127 * 8 = 1016 at step 1.
const MAX_LEVEL: i64 = 1 << 16;

/// Reads one block into zigzag-ordered levels. `dc_pred` carries the DC
/// predictor across blocks.
fn read_block(reader: &mut Reader<'_>, dc_pred: &mut i64) -> Result<[i64; BLOCK]> {
    let mut levels = [0i64; BLOCK];
    let dc = dc_pred
        .checked_add(reader.svarint()?)
        .filter(|dc| dc.abs() <= MAX_LEVEL)
        .ok_or_else(|| Error::Bitstream("DC level out of range".into()))?;
    levels[0] = dc;
    *dc_pred = dc;
    let count = reader.uvarint()?;
    if count > (BLOCK - 1) as u64 {
        return Err(Error::Bitstream(format!("{count} AC levels in one block")));
    }
    let mut pos = 1usize;
    for _ in 0..count {
        let run = reader.uvarint()?;
        let level = reader.svarint()?;
        if level == 0 || level.abs() > MAX_LEVEL {
            return Err(Error::Bitstream(format!("invalid AC level {level}")));
        }
        let at = pos as u64 + run;
        if at >= BLOCK as u64 {
            return Err(Error::Bitstream("zero run past end of block".into()));
        }
        levels[at as usize] = level;
        pos = at as usize + 1;
    }
    Ok(levels)
}

pub fn encode_frame(frame: &Frame, q: QualityLevel) -> CompressedFrame {
    let (w, h) = (frame.width() as usize, frame.height() as usize);
    let (pw, ph) = (padded(w), padded(h));
    let steps = step_table(q);
    let px = frame.pixels();
    let mut payload = Vec::with_capacity(block_count(w, h) * 4);
    let mut dc_pred = 0i64;
    for by in (0..ph).step_by(N) {
        for bx in (0..pw).step_by(N) {
            let mut block = [0.0; BLOCK];
            for y in 0..N {
                let sy = (by + y).min(h - 1);
                for x in 0..N {
                    let sx = (bx + x).min(w - 1);
                    block[y * N + x] = px[sy * w + sx] as f64 - 128.0;
                }
            }
            let coeffs = fdct(&block);
            let mut levels = [0i64; BLOCK];
            for (k, level) in levels.iter_mut().enumerate() {
                *level = (coeffs[ZIGZAG[k]] / steps[k]).round() as i64;
            }
            put_svarint(&mut payload, levels[0] - dc_pred);
            dc_pred = levels[0];
            let nonzero = levels[1..].iter().filter(|&&l| l != 0).count();
            put_uvarint(&mut payload, nonzero as u64);
            let mut run = 0u64;
            for &level in &levels[1..] {
                if level == 0 {
                    run += 1;
                } else {
                    put_uvarint(&mut payload, run);
                    put_svarint(&mut payload, level);
                    run = 0;
                }
            }
        }
    }
    CompressedFrame {
        width: frame.width() as u16,
        height: frame.height() as u16,
        quality: q,
        payload,
    }
}

pub fn decode_frame(cf: &CompressedFrame) -> Result<Frame> {
    let (w, h) = (cf.width as usize, cf.height as usize);
    if w == 0 || h == 0 {
        return Err(Error::Bitstream(format!("zero dimension {w}x{h}")));
    }
    let (pw, ph) = (padded(w), padded(h));
    let steps = step_table(cf.quality);
    let mut reader = Reader::new(&cf.payload);
    let mut dc_pred = 0i64;
    let mut out = vec![0u8; w * h];
    for by in (0..ph).step_by(N) {
        for bx in (0..pw).step_by(N) {
            let levels = read_block(&mut reader, &mut dc_pred)?;
            let mut coeffs = [0.0; BLOCK];
            for k in 0..BLOCK {
                coeffs[ZIGZAG[k]] = levels[k] as f64 * steps[k];
            }
            let samples = idct(&coeffs);
            for y in 0..N.min(h.saturating_sub(by)) {
                for x in 0..N.min(w.saturating_sub(bx)) {
                    let v = (samples[y * N + x] + 128.0).round().clamp(0.0, 255.0);
                    out[(by + y) * w + bx + x] = v as u8;
                }
            }
        }
    }
    if reader.pos != cf.payload.len() {
        return Err(Error::Bitstream(format!(
            "{} trailing payload bytes",
            cf.payload.len() - reader.pos
        )));
    }
    Frame::new(cf.width as u32, cf.height as u32, out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedSequence {
    pub frames: Vec<CompressedFrame>,
    pub total_size_bits: u64,
}

impl EncodedSequence {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for f in &self.frames {
            f.write_to(&mut out);
        }
        out
    }
}

pub fn encode_sequence(seq: &VideoSequence, q: QualityLevel) -> Result<EncodedSequence> {
    encode_sequence_with(seq, q, Execution::default())
}

pub fn encode_sequence_with(
    seq: &VideoSequence,
    q: QualityLevel,
    exec: Execution,
) -> Result<EncodedSequence> {
    if seq.is_empty() {
        return Err(Error::EmptyInput("cannot encode an empty sequence"));
    }
    let frames = exec.map(seq.frames(), |f| encode_frame(f, q));
    let total_size_bits = frames.iter().map(CompressedFrame::size_bits).sum();
    Ok(EncodedSequence {
        frames,
        total_size_bits,
    })
}

pub fn decode_sequence(frames: &[CompressedFrame], fps: Fps, exec: Execution) -> Result<VideoSequence> {
    let decoded = exec.try_map(frames, decode_frame)?;
    VideoSequence::from_frames(fps, decoded)
}

/// Splits a concatenated multi-frame bitstream.
pub fn read_stream(mut bytes: &[u8]) -> Result<Vec<CompressedFrame>> {
    let mut frames = Vec::new();
    while !bytes.is_empty() {
        let (f, used) = CompressedFrame::parse_prefix(bytes)?;
        frames.push(f);
        bytes = &bytes[used..];
    }
    Ok(frames)
}
