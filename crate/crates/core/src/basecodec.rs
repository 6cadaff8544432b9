//! Base-layer lossy codec.
//!
//! A sequential-DCT grayscale codec in the style of baseline JPEG: 8x8
//! blocks, Annex K luminance quantization scaled by the IJG quality
//! convention, zigzag scan, DC prediction and AC run-length coding with the
//! Annex K typical Huffman tables. The bitstream is wrapped in a private
//! container rather than JFIF:
//!
//! ```text
//! offset  size  field
//! 0       4     magic "MSRB"
//! 4       4     width   (u32 LE)
//! 8       4     height  (u32 LE)
//! 12      1     quality (1..=100)
//! 13      4     payload length in bytes (u32 LE)
//! 17      n     entropy-coded payload
//! ```
//!
//! Entropy-coded bits are packed MSB first; the final byte is padded with
//! 1-bits. There is no byte stuffing and there are no markers.

use std::sync::OnceLock;

use thiserror::Error;

use crate::pixel::{round_clamp_u8, ImagePlane};

pub const BASE_MAGIC: &[u8; 4] = b"MSRB";
pub const BASE_HEADER_LEN: usize = 17;

/// ITU-T T.81 Annex K table K.1, natural (row-major) order.
pub const ANNEX_K_LUMA: [u16; 64] = [
    16, 11, 10, 16, 24, 40, 51, 61, //
    12, 12, 14, 19, 26, 58, 60, 55, //
    14, 13, 16, 24, 40, 57, 69, 56, //
    14, 17, 22, 29, 51, 87, 80, 62, //
    18, 22, 37, 56, 68, 109, 103, 77, //
    24, 35, 55, 64, 81, 104, 113, 92, //
    49, 64, 78, 87, 103, 121, 120, 101, //
    72, 92, 95, 98, 112, 100, 103, 99,
];

/// Zigzag position -> natural index.
pub const ZIGZAG: [usize; 64] = [
    0, 1, 8, 16, 9, 2, 3, 10, 17, 24, 32, 25, 18, 11, 4, 5, 12, 19, 26, 33, 40, 48, 41, 34, 27,
    20, 13, 6, 7, 14, 21, 28, 35, 42, 49, 56, 57, 50, 43, 36, 29, 22, 15, 23, 30, 37, 44, 51, 58,
    59, 52, 45, 38, 31, 39, 46, 53, 60, 61, 54, 47, 55, 62, 63,
];

const DC_LUMA_BITS: [u8; 16] = [0, 1, 5, 1, 1, 1, 1, 1, 1, 0, 0, 0, 0, 0, 0, 0];
const DC_LUMA_VALS: [u8; 12] = [0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11];
const AC_LUMA_BITS: [u8; 16] = [0, 2, 1, 3, 3, 2, 4, 3, 5, 5, 4, 4, 0, 0, 1, 0x7d];
#[rustfmt::skip]
const AC_LUMA_VALS: [u8; 162] = [
    0x01, 0x02, 0x03, 0x00, 0x04, 0x11, 0x05, 0x12, 0x21, 0x31, 0x41, 0x06, 0x13, 0x51, 0x61, 0x07,
    0x22, 0x71, 0x14, 0x32, 0x81, 0x91, 0xa1, 0x08, 0x23, 0x42, 0xb1, 0xc1, 0x15, 0x52, 0xd1, 0xf0,
    0x24, 0x33, 0x62, 0x72, 0x82, 0x09, 0x0a, 0x16, 0x17, 0x18, 0x19, 0x1a, 0x25, 0x26, 0x27, 0x28,
    0x29, 0x2a, 0x34, 0x35, 0x36, 0x37, 0x38, 0x39, 0x3a, 0x43, 0x44, 0x45, 0x46, 0x47, 0x48, 0x49,
    0x4a, 0x53, 0x54, 0x55, 0x56, 0x57, 0x58, 0x59, 0x5a, 0x63, 0x64, 0x65, 0x66, 0x67, 0x68, 0x69,
    0x6a, 0x73, 0x74, 0x75, 0x76, 0x77, 0x78, 0x79, 0x7a, 0x83, 0x84, 0x85, 0x86, 0x87, 0x88, 0x89,
    0x8a, 0x92, 0x93, 0x94, 0x95, 0x96, 0x97, 0x98, 0x99, 0x9a, 0xa2, 0xa3, 0xa4, 0xa5, 0xa6, 0xa7,
    0xa8, 0xa9, 0xaa, 0xb2, 0xb3, 0xb4, 0xb5, 0xb6, 0xb7, 0xb8, 0xb9, 0xba, 0xc2, 0xc3, 0xc4, 0xc5,
    0xc6, 0xc7, 0xc8, 0xc9, 0xca, 0xd2, 0xd3, 0xd4, 0xd5, 0xd6, 0xd7, 0xd8, 0xd9, 0xda, 0xe1, 0xe2,
    0xe3, 0xe4, 0xe5, 0xe6, 0xe7, 0xe8, 0xe9, 0xea, 0xf1, 0xf2, 0xf3, 0xf4, 0xf5, 0xf6, 0xf7, 0xf8,
    0xf9, 0xfa,
];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BaseCodecError {
    #[error("quality factor {0} outside 1..=100")]
    Quality(u32),
    #[error("container: {0}")]
    Container(String),
    #[error("stream truncated at byte {offset}")]
    Truncated { offset: usize },
    #[error("corrupt stream at byte {offset}: {reason}")]
    Corrupt { offset: usize, reason: &'static str },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct QualityFactor(u8);

impl QualityFactor {
    pub fn new(q: u32) -> Result<Self, BaseCodecError> {
        if (1..=100).contains(&q) {
            Ok(Self(q as u8))
        } else {
            Err(BaseCodecError::Quality(q))
        }
    }

    pub fn get(self) -> u8 {
        self.0
    }
}

/// IJG scaling of the Annex K table, natural order.
pub fn quant_table(q: QualityFactor) -> [u16; 64] {
    let q = u32::from(q.0);
    let scale = if q < 50 { 5000 / q } else { 200 - 2 * q };
    let mut t = [0u16; 64];
    for (dst, &base) in t.iter_mut().zip(ANNEX_K_LUMA.iter()) {
        *dst = ((u32::from(base) * scale + 50) / 100).clamp(1, 255) as u16;
    }
    t
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BaseBitstream {
    pub width: u32,
    pub height: u32,
    pub q: QualityFactor,
    pub payload: Vec<u8>,
    pub bit_count: u64,
}

impl BaseBitstream {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(BASE_HEADER_LEN + self.payload.len());
        out.extend_from_slice(BASE_MAGIC);
        out.extend_from_slice(&self.width.to_le_bytes());
        out.extend_from_slice(&self.height.to_le_bytes());
        out.push(self.q.get());
        out.extend_from_slice(&(self.payload.len() as u32).to_le_bytes());
        out.extend_from_slice(&self.payload);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, BaseCodecError> {
        if bytes.len() < BASE_HEADER_LEN {
            return Err(BaseCodecError::Container(format!(
                "{} bytes is shorter than the {BASE_HEADER_LEN}-byte header",
                bytes.len()
            )));
        }
        if &bytes[0..4] != BASE_MAGIC {
            return Err(BaseCodecError::Container("bad magic".into()));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let width = u32_at(4);
        let height = u32_at(8);
        if width == 0 || height == 0 {
            return Err(BaseCodecError::Container("zero dimension".into()));
        }
        let q = QualityFactor::new(u32::from(bytes[12]))?;
        let len = u32_at(13) as usize;
        let payload = &bytes[BASE_HEADER_LEN..];
        if payload.len() != len {
            return Err(BaseCodecError::Container(format!(
                "payload length field {len} but {} bytes follow",
                payload.len()
            )));
        }
        Ok(Self {
            width,
            height,
            q,
            payload: payload.to_vec(),
            bit_count: 8 * len as u64,
        })
    }
}

/// Base-layer rate in bits (payload only, container header excluded).
pub fn rate_of(stream: &BaseBitstream) -> u64 {
    stream.bit_count
}

// ---------------------------------------------------------------------------
// DCT
// ---------------------------------------------------------------------------

fn dct_basis() -> &'static [[f64; 8]; 8] {
    static BASIS: OnceLock<[[f64; 8]; 8]> = OnceLock::new();
    BASIS.get_or_init(|| {
        let mut c = [[0.0; 8]; 8];
        for (u, row) in c.iter_mut().enumerate() {
            let alpha = if u == 0 {
                (1.0f64 / 8.0).sqrt()
            } else {
                (2.0f64 / 8.0).sqrt()
            };
            for (x, v) in row.iter_mut().enumerate() {
                *v = alpha
                    * ((2.0 * x as f64 + 1.0) * u as f64 * std::f64::consts::PI / 16.0).cos();
            }
        }
        c
    })
}

/// Orthonormal 2-D DCT-II of a level-shifted block.
pub fn fdct(block: &[f64; 64]) -> [f64; 64] {
    let c = dct_basis();
    let mut tmp = [0.0; 64];
    for y in 0..8 {
        for u in 0..8 {
            tmp[y * 8 + u] = (0..8).map(|x| c[u][x] * block[y * 8 + x]).sum();
        }
    }
    let mut out = [0.0; 64];
    for v in 0..8 {
        for u in 0..8 {
            out[v * 8 + u] = (0..8).map(|y| c[v][y] * tmp[y * 8 + u]).sum();
        }
    }
    out
}

pub fn idct(coeffs: &[f64; 64]) -> [f64; 64] {
    let c = dct_basis();
    let mut tmp = [0.0; 64];
    for v in 0..8 {
        for x in 0..8 {
            tmp[v * 8 + x] = (0..8).map(|u| c[u][x] * coeffs[v * 8 + u]).sum();
        }
    }
    let mut out = [0.0; 64];
    for y in 0..8 {
        for x in 0..8 {
            out[y * 8 + x] = (0..8).map(|v| c[v][y] * tmp[v * 8 + x]).sum();
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Huffman
// ---------------------------------------------------------------------------

struct HuffTable {
    /// (code, length) indexed by symbol value.
    encode: [(u16, u8); 256],
    /// Per code length L (1..=16): smallest code, largest code (-1 if none),
    /// and index into `values` of the first symbol with that length.
    mincode: [i32; 17],
    maxcode: [i32; 17],
    valptr: [usize; 17],
    values: Vec<u8>,
}

impl HuffTable {
    fn build(bits: &[u8; 16], values: &[u8]) -> Self {
        let mut encode = [(0u16, 0u8); 256];
        let mut mincode = [0i32; 17];
        let mut maxcode = [-1i32; 17];
        let mut valptr = [0usize; 17];
        let mut code: i32 = 0;
        let mut k = 0usize;
        for len in 1..=16 {
            let n = bits[len - 1] as usize;
            valptr[len] = k;
            mincode[len] = code;
            for _ in 0..n {
                encode[values[k] as usize] = (code as u16, len as u8);
                code += 1;
                k += 1;
            }
            maxcode[len] = if n > 0 { code - 1 } else { -1 };
            code <<= 1;
        }
        Self {
            encode,
            mincode,
            maxcode,
            valptr,
            values: values.to_vec(),
        }
    }
}

fn dc_table() -> &'static HuffTable {
    static T: OnceLock<HuffTable> = OnceLock::new();
    T.get_or_init(|| HuffTable::build(&DC_LUMA_BITS, &DC_LUMA_VALS))
}

fn ac_table() -> &'static HuffTable {
    static T: OnceLock<HuffTable> = OnceLock::new();
    T.get_or_init(|| HuffTable::build(&AC_LUMA_BITS, &AC_LUMA_VALS))
}

struct BitWriter {
    out: Vec<u8>,
    acc: u32,
    nbits: u32,
}

impl BitWriter {
    fn new() -> Self {
        Self {
            out: Vec::new(),
            acc: 0,
            nbits: 0,
        }
    }

    fn put(&mut self, value: u32, len: u32) {
        debug_assert!(len <= 16);
        if len == 0 {
            return;
        }
        self.acc = (self.acc << len) | (value & ((1 << len) - 1));
        self.nbits += len;
        while self.nbits >= 8 {
            self.nbits -= 8;
            self.out.push((self.acc >> self.nbits) as u8);
        }
        self.acc &= (1 << self.nbits) - 1;
    }

    fn finish(mut self) -> Vec<u8> {
        if self.nbits > 0 {
            let pad = 8 - self.nbits;
            self.put((1 << pad) - 1, pad);
        }
        self.out
    }
}

struct BitReader<'a> {
    data: &'a [u8],
    pos: usize,
    bit: u32,
}

impl<'a> BitReader<'a> {
    fn new(data: &'a [u8]) -> Self {
        Self {
            data,
            pos: 0,
            bit: 0,
        }
    }

    fn read_bit(&mut self) -> Result<u32, BaseCodecError> {
        let byte = *self
            .data
            .get(self.pos)
            .ok_or(BaseCodecError::Truncated { offset: self.pos })?;
        let b = (byte >> (7 - self.bit)) & 1;
        self.bit += 1;
        if self.bit == 8 {
            self.bit = 0;
            self.pos += 1;
        }
        Ok(u32::from(b))
    }

    fn read_bits(&mut self, n: u32) -> Result<u32, BaseCodecError> {
        let mut v = 0;
        for _ in 0..n {
            v = (v << 1) | self.read_bit()?;
        }
        Ok(v)
    }

    fn decode(&mut self, t: &HuffTable) -> Result<u8, BaseCodecError> {
        let start = self.pos;
        let mut code: i32 = 0;
        for len in 1..=16 {
            code = (code << 1) | self.read_bit()? as i32;
            if code <= t.maxcode[len] {
                return Ok(t.values[t.valptr[len] + (code - t.mincode[len]) as usize]);
            }
        }
        Err(BaseCodecError::Corrupt {
            offset: start,
            reason: "invalid huffman code",
        })
    }
}

/// Magnitude category and the low `size` bits to emit.
#[inline]
fn categorize(v: i32) -> (u32, u32) {
    if v == 0 {
        return (0, 0);
    }
    let size = 32 - v.unsigned_abs().leading_zeros();
    let bits = if v < 0 { (v - 1) as u32 } else { v as u32 };
    (size, bits & ((1 << size) - 1))
}

#[inline]
fn extend(bits: u32, size: u32) -> i32 {
    if size == 0 {
        return 0;
    }
    let v = bits as i32;
    if v < (1 << (size - 1)) {
        v - (1 << size) + 1
    } else {
        v
    }
}

/// Entropy-codes blocks of zigzag-ordered quantized coefficients.
pub fn entropy_encode(blocks: &[[i32; 64]]) -> Vec<u8> {
    let (dc, ac) = (dc_table(), ac_table());
    let mut w = BitWriter::new();
    let mut pred = 0i32;
    for block in blocks {
        let diff = block[0] - pred;
        pred = block[0];
        let (size, bits) = categorize(diff);
        let (code, len) = dc.encode[size as usize];
        w.put(u32::from(code), u32::from(len));
        w.put(bits, size);

        let mut run = 0u32;
        for &c in &block[1..] {
            if c == 0 {
                run += 1;
                continue;
            }
            while run >= 16 {
                let (code, len) = ac.encode[0xf0];
                w.put(u32::from(code), u32::from(len));
                run -= 16;
            }
            let (size, bits) = categorize(c);
            let (code, len) = ac.encode[((run << 4) | size) as usize];
            w.put(u32::from(code), u32::from(len));
            w.put(bits, size);
            run = 0;
        }
        if run > 0 {
            let (code, len) = ac.encode[0x00];
            w.put(u32::from(code), u32::from(len));
        }
    }
    w.finish()
}

/// Inverse of [`entropy_encode`] for a known block count.
pub fn entropy_decode(payload: &[u8], block_count: usize) -> Result<Vec<[i32; 64]>, BaseCodecError> {
    let (dc, ac) = (dc_table(), ac_table());
    let mut r = BitReader::new(payload);
    let mut pred = 0i32;
    let mut blocks = Vec::with_capacity(block_count);
    for _ in 0..block_count {
        let mut block = [0i32; 64];
        let size = u32::from(r.decode(dc)?);
        if size > 11 {
            return Err(BaseCodecError::Corrupt {
                offset: r.pos,
                reason: "dc category out of range",
            });
        }
        pred += extend(r.read_bits(size)?, size);
        block[0] = pred;
        let mut k = 1usize;
        while k < 64 {
            let sym = r.decode(ac)?;
            let (run, size) = (usize::from(sym >> 4), u32::from(sym & 0x0f));
            if size == 0 {
                if run == 15 {
                    k += 16;
                    continue;
                }
                break;
            }
            k += run;
            if k > 63 {
                return Err(BaseCodecError::Corrupt {
                    offset: r.pos,
                    reason: "run past end of block",
                });
            }
            block[k] = extend(r.read_bits(size)?, size);
            k += 1;
        }
        if k > 64 {
            return Err(BaseCodecError::Corrupt {
                offset: r.pos,
                reason: "zero run past end of block",
            });
        }
        blocks.push(block);
    }
    // Only 1-bit padding inside the last byte may remain.
    while r.bit != 0 {
        if r.read_bit()? != 1 {
            return Err(BaseCodecError::Corrupt {
                offset: r.pos,
                reason: "non-padding bits after last block",
            });
        }
    }
    if r.pos != payload.len() {
        return Err(BaseCodecError::Corrupt {
            offset: r.pos,
            reason: "trailing bytes after last block",
        });
    }
    Ok(blocks)
}

// ---------------------------------------------------------------------------
// Codec
// ---------------------------------------------------------------------------

#[inline]
fn blocks_along(n: usize) -> usize {
    n.div_ceil(8)
}

pub fn base_encode(plane: &ImagePlane, q: QualityFactor) -> BaseBitstream {
    let qt = quant_table(q);
    let (bw, bh) = (blocks_along(plane.width()), blocks_along(plane.height()));
    let mut blocks = Vec::with_capacity(bw * bh);
    for by in 0..bh {
        for bx in 0..bw {
            let mut px = [0.0; 64];
            for y in 0..8 {
                for x in 0..8 {
                    let s = plane.get_clamped((bx * 8 + x) as isize, (by * 8 + y) as isize);
                    px[y * 8 + x] = f64::from(s) - 128.0;
                }
            }
            let coeffs = fdct(&px);
            let mut zz = [0i32; 64];
            for (k, &n) in ZIGZAG.iter().enumerate() {
                zz[k] = (coeffs[n] / f64::from(qt[n])).round() as i32;
            }
            blocks.push(zz);
        }
    }
    let payload = entropy_encode(&blocks);
    BaseBitstream {
        width: plane.width() as u32,
        height: plane.height() as u32,
        q,
        bit_count: 8 * payload.len() as u64,
        payload,
    }
}

pub fn base_decode(stream: &BaseBitstream) -> Result<ImagePlane, BaseCodecError> {
    let (w, h) = (stream.width as usize, stream.height as usize);
    if w == 0 || h == 0 {
        return Err(BaseCodecError::Container("zero dimension".into()));
    }
    let qt = quant_table(stream.q);
    let (bw, bh) = (blocks_along(w), blocks_along(h));
    let blocks = entropy_decode(&stream.payload, bw * bh)?;
    let mut out = vec![0u8; w * h];
    for (i, zz) in blocks.iter().enumerate() {
        let (bx, by) = (i % bw, i / bw);
        let mut coeffs = [0.0; 64];
        for (k, &n) in ZIGZAG.iter().enumerate() {
            coeffs[n] = f64::from(zz[k]) * f64::from(qt[n]);
        }
        let px = idct(&coeffs);
        for y in 0..8 {
            let iy = by * 8 + y;
            if iy >= h {
                break;
            }
            for x in 0..8 {
                let ix = bx * 8 + x;
                if ix >= w {
                    break;
                }
                out[iy * w + ix] = round_clamp_u8(px[y * 8 + x] + 128.0);
            }
        }
    }
    Ok(ImagePlane::new(w, h, out).expect("dimensions checked"))
}
