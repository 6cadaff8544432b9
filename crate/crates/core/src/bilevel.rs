//! Lossless bi-level coding of metadata planes.
//!
//! Generic-region style: each bit-plane is scanned in raster order and every
//! site is coded with an adaptive binary range coder whose probability is
//! selected by a 10-site causal context.
//!
//! # Context template (template id 0)
//!
//! For the site at `(x, y)` the context index is built from these neighbours,
//! first entry in the most significant bit:
//!
//! ```text
//! bit 9..7   (x-1, y-2) (x, y-2) (x+1, y-2)
//! bit 6..2   (x-2, y-1) (x-1, y-1) (x, y-1) (x+1, y-1) (x+2, y-1)
//! bit 1..0   (x-2, y)   (x-1, y)
//!
//!                 . X X X .          row y-2
//!                 X X X X X          row y-1
//!                 X X ?              row y
//! ```
//!
//! Neighbours outside the plane read as 0. Depth-2 planes are coded as the
//! low bit-plane followed by the high bit-plane; the high plane uses 11-bit
//! contexts whose extra bit 10 is the co-located low bit.
//!
//! # Arithmetic coder
//!
//! A carry-propagating range coder with a 32-bit range and 33-bit low
//! register (the LZMA construction). Each context holds a 16-bit probability
//! `p` that the next bit is 0, initialised to 32768. For a bit with
//! probability `p`, `bound = (range >> 16) * p`; a 0 keeps `[low, low+bound)`,
//! a 1 takes the rest. Adaptation after each bit:
//!
//! ```text
//! bit == 0:  p += (65536 - p) >> 5
//! bit == 1:  p -= p >> 5
//! ```
//!
//! The range is renormalized (shifted left by 8 with a byte emitted) while it
//! is below 2^24. Flushing emits five bytes of `low`. The decoder primes its
//! code register with the first five payload bytes.
//!
//! # Container
//!
//! ```text
//! offset  size  field
//! 0       4     magic "MSRM"
//! 4       4     width   (u32 LE)
//! 8       4     height  (u32 LE)
//! 12      1     depth (1 or 2)
//! 13      1     template id (0)
//! 14      4     payload length in bytes (u32 LE)
//! 18      n     range-coded payload
//! ```

use thiserror::Error;

use crate::metagen::MetadataPlane;

pub const META_MAGIC: &[u8; 4] = b"MSRM";
pub const META_HEADER_LEN: usize = 18;
pub const TEMPLATE_ID: u8 = 0;

const PROB_BITS: u32 = 16;
const PROB_INIT: u16 = 1 << (PROB_BITS - 1);
const ADAPT_SHIFT: u32 = 5;
const TOP: u32 = 1 << 24;
const CONTEXT_BITS: u32 = 10;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BilevelError {
    #[error("container: {0}")]
    Container(String),
    #[error("unknown context template {0}")]
    Template(u8),
    #[error("payload truncated at byte {offset}")]
    Truncated { offset: usize },
    #[error("payload has {extra} unused trailing bytes")]
    Trailing { extra: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MetaBitstream {
    pub width: u32,
    pub height: u32,
    pub depth: u8,
    pub template_id: u8,
    pub payload: Vec<u8>,
    pub bit_count: u64,
}

impl MetaBitstream {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(META_HEADER_LEN + self.payload.len());
        out.extend_from_slice(META_MAGIC);
        out.extend_from_slice(&self.width.to_le_bytes());
        out.extend_from_slice(&self.height.to_le_bytes());
        out.push(self.depth);
        out.push(self.template_id);
        out.extend_from_slice(&(self.payload.len() as u32).to_le_bytes());
        out.extend_from_slice(&self.payload);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, BilevelError> {
        if bytes.len() < META_HEADER_LEN {
            return Err(BilevelError::Container(format!(
                "{} bytes is shorter than the {META_HEADER_LEN}-byte header",
                bytes.len()
            )));
        }
        if &bytes[0..4] != META_MAGIC {
            return Err(BilevelError::Container("bad magic".into()));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let (width, height) = (u32_at(4), u32_at(8));
        let depth = bytes[12];
        let template_id = bytes[13];
        let len = u32_at(14) as usize;
        if width == 0 || height == 0 {
            return Err(BilevelError::Container("zero dimension".into()));
        }
        if depth != 1 && depth != 2 {
            return Err(BilevelError::Container(format!("depth {depth}")));
        }
        if template_id != TEMPLATE_ID {
            return Err(BilevelError::Template(template_id));
        }
        let payload = &bytes[META_HEADER_LEN..];
        if payload.len() != len {
            return Err(BilevelError::Container(format!(
                "payload length field {len} but {} bytes follow",
                payload.len()
            )));
        }
        Ok(Self {
            width,
            height,
            depth,
            template_id,
            payload: payload.to_vec(),
            bit_count: 8 * len as u64,
        })
    }
}

/// Metadata rate in bits, container header included.
pub fn meta_rate(stream: &MetaBitstream) -> u64 {
    stream.bit_count + 8 * META_HEADER_LEN as u64
}

// ---------------------------------------------------------------------------
// Range coder
// ---------------------------------------------------------------------------

#[inline]
fn adapt(p: &mut u16, bit: bool) {
    if bit {
        *p -= *p >> ADAPT_SHIFT;
    } else {
        *p += (((1u32 << PROB_BITS) - u32::from(*p)) >> ADAPT_SHIFT) as u16;
    }
}

pub struct RangeEncoder {
    low: u64,
    range: u32,
    cache: u8,
    cache_size: u64,
    out: Vec<u8>,
}

impl Default for RangeEncoder {
    fn default() -> Self {
        Self::new()
    }
}

impl RangeEncoder {
    pub fn new() -> Self {
        Self {
            low: 0,
            range: u32::MAX,
            cache: 0,
            cache_size: 1,
            out: Vec::new(),
        }
    }

    fn shift_low(&mut self) {
        if (self.low as u32) < 0xff00_0000 || (self.low >> 32) != 0 {
            let carry = (self.low >> 32) as u8;
            let mut temp = self.cache;
            loop {
                self.out.push(temp.wrapping_add(carry));
                temp = 0xff;
                self.cache_size -= 1;
                if self.cache_size == 0 {
                    break;
                }
            }
            self.cache = ((self.low >> 24) & 0xff) as u8;
        }
        self.cache_size += 1;
        self.low = (self.low & 0x00ff_ffff) << 8;
    }

    pub fn encode(&mut self, prob: &mut u16, bit: bool) {
        let bound = (self.range >> PROB_BITS) * u32::from(*prob);
        if bit {
            self.low += u64::from(bound);
            self.range -= bound;
        } else {
            self.range = bound;
        }
        adapt(prob, bit);
        while self.range < TOP {
            self.range <<= 8;
            self.shift_low();
        }
    }

    pub fn finish(mut self) -> Vec<u8> {
        for _ in 0..5 {
            self.shift_low();
        }
        self.out
    }
}

pub struct RangeDecoder<'a> {
    data: &'a [u8],
    pos: usize,
    range: u32,
    code: u32,
}

impl<'a> RangeDecoder<'a> {
    pub fn new(data: &'a [u8]) -> Result<Self, BilevelError> {
        let mut d = Self {
            data,
            pos: 0,
            range: u32::MAX,
            code: 0,
        };
        for _ in 0..5 {
            d.code = (d.code << 8) | u32::from(d.next_byte()?);
        }
        Ok(d)
    }

    fn next_byte(&mut self) -> Result<u8, BilevelError> {
        let b = *self
            .data
            .get(self.pos)
            .ok_or(BilevelError::Truncated { offset: self.pos })?;
        self.pos += 1;
        Ok(b)
    }

    pub fn decode(&mut self, prob: &mut u16) -> Result<bool, BilevelError> {
        let bound = (self.range >> PROB_BITS) * u32::from(*prob);
        let bit = if self.code < bound {
            self.range = bound;
            false
        } else {
            self.code -= bound;
            self.range -= bound;
            true
        };
        adapt(prob, bit);
        while self.range < TOP {
            self.range <<= 8;
            self.code = (self.code << 8) | u32::from(self.next_byte()?);
        }
        Ok(bit)
    }

    pub fn consumed(&self) -> usize {
        self.pos
    }
}

// ---------------------------------------------------------------------------
// Context modelling
// ---------------------------------------------------------------------------

/// Template-0 context of site `(x, y)` in a bit-plane.
#[inline]
pub fn context(plane: &[u8], width: usize, x: usize, y: usize) -> usize {
    let at = |dx: isize, dy: isize| -> usize {
        let (nx, ny) = (x as isize + dx, y as isize + dy);
        if nx < 0 || ny < 0 || nx >= width as isize {
            0
        } else {
            usize::from(plane[ny as usize * width + nx as usize])
        }
    };
    (at(-1, -2) << 9)
        | (at(0, -2) << 8)
        | (at(1, -2) << 7)
        | (at(-2, -1) << 6)
        | (at(-1, -1) << 5)
        | (at(0, -1) << 4)
        | (at(1, -1) << 3)
        | (at(2, -1) << 2)
        | (at(-2, 0) << 1)
        | at(-1, 0)
}

fn bit_planes(m: &MetadataPlane) -> Vec<Vec<u8>> {
    (0..m.depth())
        .map(|b| m.sites().iter().map(|&v| (v >> b) & 1).collect())
        .collect()
}

pub fn meta_encode(m: &MetadataPlane) -> MetaBitstream {
    let (w, h) = (m.width(), m.height());
    let planes = bit_planes(m);
    let mut enc = RangeEncoder::new();
    for (b, plane) in planes.iter().enumerate() {
        let extra = if b == 0 { 0 } else { 1 };
        let mut probs = vec![PROB_INIT; 1 << (CONTEXT_BITS + extra)];
        for y in 0..h {
            for x in 0..w {
                let mut ctx = context(plane, w, x, y);
                if b > 0 {
                    ctx |= usize::from(planes[0][y * w + x]) << CONTEXT_BITS;
                }
                enc.encode(&mut probs[ctx], plane[y * w + x] != 0);
            }
        }
    }
    let payload = enc.finish();
    MetaBitstream {
        width: w as u32,
        height: h as u32,
        depth: m.depth(),
        template_id: TEMPLATE_ID,
        bit_count: 8 * payload.len() as u64,
        payload,
    }
}

pub fn meta_decode(stream: &MetaBitstream) -> Result<MetadataPlane, BilevelError> {
    if stream.template_id != TEMPLATE_ID {
        return Err(BilevelError::Template(stream.template_id));
    }
    if stream.depth != 1 && stream.depth != 2 {
        return Err(BilevelError::Container(format!("depth {}", stream.depth)));
    }
    let (w, h) = (stream.width as usize, stream.height as usize);
    if w == 0 || h == 0 {
        return Err(BilevelError::Container("zero dimension".into()));
    }
    let mut dec = RangeDecoder::new(&stream.payload)?;
    let mut planes: Vec<Vec<u8>> = Vec::with_capacity(stream.depth as usize);
    for b in 0..stream.depth as usize {
        let extra = if b == 0 { 0 } else { 1 };
        let mut probs = vec![PROB_INIT; 1 << (CONTEXT_BITS + extra)];
        let mut plane = vec![0u8; w * h];
        for y in 0..h {
            for x in 0..w {
                let mut ctx = context(&plane, w, x, y);
                if b > 0 {
                    ctx |= usize::from(planes[0][y * w + x]) << CONTEXT_BITS;
                }
                plane[y * w + x] = u8::from(dec.decode(&mut probs[ctx])?);
            }
        }
        planes.push(plane);
    }
    let extra = stream.payload.len() - dec.consumed();
    if extra != 0 {
        return Err(BilevelError::Trailing { extra });
    }
    let sites = (0..w * h)
        .map(|i| planes.iter().enumerate().fold(0u8, |acc, (b, p)| acc | (p[i] << b)))
        .collect();
    Ok(MetadataPlane::new(w, h, stream.depth, sites).expect("decoded values fit depth"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn plane(w: usize, h: usize, depth: u8, sites: Vec<u8>) -> MetadataPlane {
        MetadataPlane::new(w, h, depth, sites).unwrap()
    }

    #[test]
    fn all_zero_64_is_tiny() {
        let m = MetadataPlane::zeros(64, 64, 1).unwrap();
        let s = meta_encode(&m);
        assert!(s.payload.len() < 16, "{} bytes", s.payload.len());
        assert_eq!(meta_decode(&s).unwrap(), m);
    }

    #[test]
    fn random_bits_do_not_compress() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let sites: Vec<u8> = (0..64 * 64).map(|_| rng.gen_range(0..2)).collect();
            let s = meta_encode(&plane(64, 64, 1, sites));
            assert!(s.bit_count as f64 >= 0.95 * 4096.0, "{}", s.bit_count);
        }
    }

    #[test]
    fn context_layout_is_frozen() {
        // single set site at (2, 0); query contexts around it
        let mut p = vec![0u8; 5 * 3];
        p[2] = 1;
        assert_eq!(context(&p, 5, 3, 0), 0b01); // left neighbour
        assert_eq!(context(&p, 5, 4, 0), 0b10); // two to the left
        assert_eq!(context(&p, 5, 0, 1), 1 << 2); // (x+2, y-1)
        assert_eq!(context(&p, 5, 2, 1), 1 << 4); // directly above
        assert_eq!(context(&p, 5, 4, 1), 1 << 6); // (x-2, y-1)
        assert_eq!(context(&p, 5, 1, 2), 1 << 7); // (x+1, y-2)
        assert_eq!(context(&p, 5, 2, 2), 1 << 8); // directly two above
        assert_eq!(context(&p, 5, 3, 2), 1 << 9); // (x-1, y-2)
        assert_eq!(context(&p, 5, 0, 2), 0); // (x+2, y-2) not in template
    }

    #[test]
    fn container_round_trip_and_rate() {
        let m = plane(3, 2, 2, vec![0, 1, 2, 3, 0, 2]);
        let s = meta_encode(&m);
        let bytes = s.to_bytes();
        assert_eq!(MetaBitstream::from_bytes(&bytes).unwrap(), s);
        assert_eq!(meta_rate(&s), 8 * bytes.len() as u64);
        let mut bad = bytes.clone();
        bad[13] = 4;
        assert_eq!(MetaBitstream::from_bytes(&bad), Err(BilevelError::Template(4)));
        assert!(MetaBitstream::from_bytes(&bytes[..10]).is_err());
    }

    #[test]
    fn truncated_payload_is_an_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let sites: Vec<u8> = (0..32 * 32).map(|_| rng.gen_range(0..2)).collect();
        let mut s = meta_encode(&plane(32, 32, 1, sites));
        s.payload.truncate(s.payload.len() - 3);
        assert!(matches!(meta_decode(&s), Err(BilevelError::Truncated { .. })));
    }

    #[test]
    fn trailing_bytes_are_an_error() {
        let mut s = meta_encode(&MetadataPlane::zeros(8, 8, 1).unwrap());
        s.payload.push(0);
        assert!(matches!(meta_decode(&s), Err(BilevelError::Trailing { extra: 1 })));
    }

    #[test]
    fn exhaustive_tiny_planes() {
        for (w, h) in [(1, 1), (2, 1), (1, 3), (2, 2), (3, 3), (4, 2), (2, 4)] {
            let n = w * h;
            for bits in 0u32..(1 << n) {
                let sites: Vec<u8> = (0..n).map(|i| ((bits >> i) & 1) as u8).collect();
                let m = plane(w, h, 1, sites);
                assert_eq!(meta_decode(&meta_encode(&m)).unwrap(), m);
            }
        }
    }

    proptest! {
        #[test]
        fn round_trip_random_planes(
            w in 1usize..48, h in 1usize..48, depth in 1u8..=2,
            density in 0.0f64..1.0, seed in any::<u64>(),
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let max = 1u8 << depth;
            let sites: Vec<u8> = (0..w * h)
                .map(|_| if rng.gen_bool(density) { rng.gen_range(1..max) } else { 0 })
                .collect();
            let m = plane(w, h, depth, sites);
            let s = meta_encode(&m);
            prop_assert_eq!(s.bit_count, 8 * s.payload.len() as u64);
            prop_assert_eq!(meta_decode(&s).unwrap(), m);
        }
    }
}
