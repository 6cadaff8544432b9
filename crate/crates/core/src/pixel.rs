//! Pixel rasters, colour conversion, resampling and binary PNM I/O.
//!
//! Every other module speaks [`ImagePlane`]: a row-major 8-bit grayscale
//! raster. Colour data enters through [`ImageFrame`] and is reduced to luma
//! with [`to_grayscale`] before any coding or measurement.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PixelError {
    #[error("invalid dimensions {width}x{height}")]
    InvalidDimensions { width: usize, height: usize },
    #[error("sample buffer has {actual} entries, expected {expected}")]
    SampleCount { expected: usize, actual: usize },
    #[error("frame must have 1 or 3 planes, got {0}")]
    PlaneCount(usize),
    #[error("plane {index} is {got_w}x{got_h}, expected {want_w}x{want_h}")]
    PlaneMismatch {
        index: usize,
        want_w: usize,
        want_h: usize,
        got_w: usize,
        got_h: usize,
    },
    #[error("frame sequence is empty")]
    EmptySequence,
}

/// PNM parse failure. `field` names the header field or section at fault.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("pnm {field}: {reason}")]
pub struct PnmError {
    pub field: &'static str,
    pub reason: String,
}

impl PnmError {
    fn new(field: &'static str, reason: impl Into<String>) -> Self {
        Self {
            field,
            reason: reason.into(),
        }
    }
}

/// Round half away from zero, then clamp into the 8-bit range.
///
/// This is the single rounding rule used across the crate.
#[inline]
pub fn round_clamp_u8(v: f64) -> u8 {
    if v.is_nan() {
        return 0;
    }
    v.round().clamp(0.0, 255.0) as u8
}

/// A single 8-bit channel, row-major.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImagePlane {
    width: usize,
    height: usize,
    samples: Vec<u8>,
}

impl fmt::Debug for ImagePlane {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ImagePlane")
            .field("width", &self.width)
            .field("height", &self.height)
            .finish_non_exhaustive()
    }
}

impl ImagePlane {
    pub fn new(width: usize, height: usize, samples: Vec<u8>) -> Result<Self, PixelError> {
        if width == 0 || height == 0 {
            return Err(PixelError::InvalidDimensions { width, height });
        }
        let expected = width * height;
        if samples.len() != expected {
            return Err(PixelError::SampleCount {
                expected,
                actual: samples.len(),
            });
        }
        Ok(Self {
            width,
            height,
            samples,
        })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Result<Self, PixelError> {
        Self::new(width, height, vec![value; width * height])
    }

    /// Builds a plane by evaluating `f(x, y)` at every site.
    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> u8,
    ) -> Result<Self, PixelError> {
        if width == 0 || height == 0 {
            return Err(PixelError::InvalidDimensions { width, height });
        }
        let mut samples = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                samples.push(f(x, y));
            }
        }
        Ok(Self {
            width,
            height,
            samples,
        })
    }

    /// Rounds and clamps a float raster of matching size.
    pub fn from_f64(width: usize, height: usize, values: &[f64]) -> Result<Self, PixelError> {
        Self::new(width, height, values.iter().map(|&v| round_clamp_u8(v)).collect())
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn samples(&self) -> &[u8] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<u8> {
        self.samples
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.samples[y * self.width + x]
    }

    /// Sample with coordinates clamped to the raster (edge replication).
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> u8 {
        let cx = x.clamp(0, self.width as isize - 1) as usize;
        let cy = y.clamp(0, self.height as isize - 1) as usize;
        self.samples[cy * self.width + cx]
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.samples.iter().map(|&v| f64::from(v)).collect()
    }

    pub fn same_dims(&self, other: &ImagePlane) -> bool {
        self.width == other.width && self.height == other.height
    }
}

/// One grayscale plane or three RGB planes of identical size.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageFrame {
    planes: Vec<ImagePlane>,
}

impl ImageFrame {
    pub fn new(planes: Vec<ImagePlane>) -> Result<Self, PixelError> {
        if planes.len() != 1 && planes.len() != 3 {
            return Err(PixelError::PlaneCount(planes.len()));
        }
        let (w, h) = (planes[0].width, planes[0].height);
        for (index, p) in planes.iter().enumerate().skip(1) {
            if p.width != w || p.height != h {
                return Err(PixelError::PlaneMismatch {
                    index,
                    want_w: w,
                    want_h: h,
                    got_w: p.width,
                    got_h: p.height,
                });
            }
        }
        Ok(Self { planes })
    }

    pub fn gray(plane: ImagePlane) -> Self {
        Self {
            planes: vec![plane],
        }
    }

    pub fn planes(&self) -> &[ImagePlane] {
        &self.planes
    }

    pub fn width(&self) -> usize {
        self.planes[0].width
    }

    pub fn height(&self) -> usize {
        self.planes[0].height
    }

    pub fn is_rgb(&self) -> bool {
        self.planes.len() == 3
    }
}

impl From<ImagePlane> for ImageFrame {
    fn from(plane: ImagePlane) -> Self {
        Self::gray(plane)
    }
}

/// Ordered, dimensionally homogeneous frames.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameSequence {
    frames: Vec<ImageFrame>,
}

impl FrameSequence {
    pub fn new(frames: Vec<ImageFrame>) -> Result<Self, PixelError> {
        let first = frames.first().ok_or(PixelError::EmptySequence)?;
        let (w, h) = (first.width(), first.height());
        for (index, f) in frames.iter().enumerate().skip(1) {
            if f.width() != w || f.height() != h {
                return Err(PixelError::PlaneMismatch {
                    index,
                    want_w: w,
                    want_h: h,
                    got_w: f.width(),
                    got_h: f.height(),
                });
            }
        }
        Ok(Self { frames })
    }

    pub fn from_planes(planes: Vec<ImagePlane>) -> Result<Self, PixelError> {
        Self::new(planes.into_iter().map(ImageFrame::gray).collect())
    }

    pub fn frames(&self) -> &[ImageFrame] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

// ---------------------------------------------------------------------------
// PNM
// ---------------------------------------------------------------------------

struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl HeaderCursor<'_> {
    fn skip_whitespace_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b' ' | b'\t' | b'\n' | b'\r' | 0x0b | 0x0c => self.pos += 1,
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                _ => break,
            }
        }
    }

    fn read_uint(&mut self, field: &'static str) -> Result<usize, PnmError> {
        self.skip_whitespace_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(PnmError::new(field, "expected a decimal integer"));
        }
        let text = std::str::from_utf8(&self.bytes[start..self.pos]).expect("ascii digits");
        text.parse::<usize>()
            .map_err(|_| PnmError::new(field, format!("value {text} out of range")))
    }
}

/// Decodes a binary PGM (P5) or PPM (P6) file with maxval 255.
pub fn load_pnm(bytes: &[u8]) -> Result<ImageFrame, PnmError> {
    if bytes.len() < 2 || bytes[0] != b'P' {
        return Err(PnmError::new("magic", "missing 'P' signature"));
    }
    let channels = match bytes[1] {
        b'5' => 1,
        b'6' => 3,
        other => {
            return Err(PnmError::new(
                "magic",
                format!("unsupported variant P{}", other as char),
            ))
        }
    };
    let mut cur = HeaderCursor { bytes, pos: 2 };
    let width = cur.read_uint("width")?;
    let height = cur.read_uint("height")?;
    let maxval = cur.read_uint("maxval")?;
    if width == 0 || height == 0 {
        return Err(PnmError::new(
            if width == 0 { "width" } else { "height" },
            "must be at least 1",
        ));
    }
    if maxval != 255 {
        return Err(PnmError::new("maxval", format!("{maxval} is not 255")));
    }
    match bytes.get(cur.pos) {
        Some(c) if c.is_ascii_whitespace() => cur.pos += 1,
        _ => return Err(PnmError::new("maxval", "missing whitespace before payload")),
    }
    let count = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(channels))
        .ok_or_else(|| PnmError::new("width", "dimensions overflow"))?;
    let payload = &bytes[cur.pos..];
    if payload.len() < count {
        return Err(PnmError::new(
            "payload",
            format!("truncated: {} of {count} bytes", payload.len()),
        ));
    }
    let payload = &payload[..count];
    let planes = if channels == 1 {
        vec![ImagePlane {
            width,
            height,
            samples: payload.to_vec(),
        }]
    } else {
        (0..3)
            .map(|c| ImagePlane {
                width,
                height,
                samples: payload.iter().skip(c).step_by(3).copied().collect(),
            })
            .collect()
    };
    Ok(ImageFrame { planes })
}

/// Encodes with the canonical header `P5\n<w> <h>\n255\n`.
pub fn save_pnm(frame: &ImageFrame) -> Vec<u8> {
    let magic = if frame.is_rgb() { "P6" } else { "P5" };
    let header = format!("{magic}\n{} {}\n255\n", frame.width(), frame.height());
    let n = frame.width() * frame.height();
    let mut out = Vec::with_capacity(header.len() + n * frame.planes.len());
    out.extend_from_slice(header.as_bytes());
    if frame.is_rgb() {
        let [r, g, b] = [&frame.planes[0], &frame.planes[1], &frame.planes[2]];
        for i in 0..n {
            out.extend_from_slice(&[r.samples[i], g.samples[i], b.samples[i]]);
        }
    } else {
        out.extend_from_slice(&frame.planes[0].samples);
    }
    out
}

// ---------------------------------------------------------------------------
// Colour
// ---------------------------------------------------------------------------

/// BT.601 luma. Grayscale frames pass through unchanged.
pub fn to_grayscale(frame: &ImageFrame) -> ImagePlane {
    if !frame.is_rgb() {
        return frame.planes[0].clone();
    }
    let [r, g, b] = [&frame.planes[0], &frame.planes[1], &frame.planes[2]];
    let samples = r
        .samples
        .iter()
        .zip(&g.samples)
        .zip(&b.samples)
        .map(|((&r, &g), &b)| {
            round_clamp_u8(0.299 * f64::from(r) + 0.587 * f64::from(g) + 0.114 * f64::from(b))
        })
        .collect();
    ImagePlane {
        width: r.width,
        height: r.height,
        samples,
    }
}

// ---------------------------------------------------------------------------
// Resampling
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResampleKernel {
    Nearest,
    Bicubic,
}

impl std::str::FromStr for ResampleKernel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "nearest" => Ok(Self::Nearest),
            "bicubic" => Ok(Self::Bicubic),
            other => Err(format!("unknown resample kernel '{other}'")),
        }
    }
}

/// Catmull-Rom cubic (a = -0.5).
#[inline]
pub(crate) fn cubic_weight(t: f64) -> f64 {
    const A: f64 = -0.5;
    let t = t.abs();
    if t < 1.0 {
        ((A + 2.0) * t - (A + 3.0)) * t * t + 1.0
    } else if t < 2.0 {
        ((A * t - 5.0 * A) * t + 8.0 * A) * t - 4.0 * A
    } else {
        0.0
    }
}

/// Per-output-index contributions: (first source index, weights).
///
/// Pixel centres are aligned (`src = (dst + 0.5) * in / out - 0.5`). When
/// shrinking, the kernel support is stretched by the reduction factor so the
/// filter also acts as an anti-alias prefilter. Taps outside the source are
/// clamped to the edge.
fn cubic_taps(in_len: usize, out_len: usize) -> Vec<Vec<(usize, f64)>> {
    let ratio = in_len as f64 / out_len as f64;
    let support_scale = ratio.max(1.0);
    let radius = 2.0 * support_scale;
    (0..out_len)
        .map(|o| {
            let center = (o as f64 + 0.5) * ratio - 0.5;
            let lo = (center - radius).floor() as isize;
            let hi = (center + radius).ceil() as isize;
            let mut taps: Vec<(usize, f64)> = Vec::with_capacity((hi - lo + 1) as usize);
            let mut sum = 0.0;
            for s in lo..=hi {
                let w = cubic_weight((s as f64 - center) / support_scale);
                if w == 0.0 {
                    continue;
                }
                let idx = s.clamp(0, in_len as isize - 1) as usize;
                sum += w;
                match taps.iter_mut().find(|(i, _)| *i == idx) {
                    Some(t) => t.1 += w,
                    None => taps.push((idx, w)),
                }
            }
            for t in &mut taps {
                t.1 /= sum;
            }
            taps
        })
        .collect()
}

/// Separable bicubic resize on a float raster; no rounding.
pub(crate) fn resample_bicubic_f64(
    src: &[f64],
    width: usize,
    height: usize,
    new_width: usize,
    new_height: usize,
) -> Vec<f64> {
    let htaps = cubic_taps(width, new_width);
    let vtaps = cubic_taps(height, new_height);
    let mut tmp = vec![0.0; new_width * height];
    for y in 0..height {
        let row = &src[y * width..(y + 1) * width];
        for (x, taps) in htaps.iter().enumerate() {
            tmp[y * new_width + x] = taps.iter().map(|&(i, w)| row[i] * w).sum();
        }
    }
    let mut out = vec![0.0; new_width * new_height];
    for (y, taps) in vtaps.iter().enumerate() {
        for x in 0..new_width {
            out[y * new_width + x] = taps.iter().map(|&(i, w)| tmp[i * new_width + x] * w).sum();
        }
    }
    out
}

/// Resizes a plane to `new_width` x `new_height`.
///
/// # Panics
/// If either new dimension is zero.
pub fn resample(
    plane: &ImagePlane,
    new_width: usize,
    new_height: usize,
    kernel: ResampleKernel,
) -> ImagePlane {
    assert!(new_width >= 1 && new_height >= 1, "resample target must be non-empty");
    if new_width == plane.width && new_height == plane.height {
        return plane.clone();
    }
    match kernel {
        ResampleKernel::Nearest => {
            let (w, h) = (plane.width, plane.height);
            let xs: Vec<usize> = (0..new_width)
                .map(|x| ((2 * x + 1) * w) / (2 * new_width))
                .collect();
            ImagePlane::from_fn(new_width, new_height, |x, y| {
                let sy = ((2 * y + 1) * h) / (2 * new_height);
                plane.get(xs[x], sy)
            })
            .expect("non-empty target")
        }
        ResampleKernel::Bicubic => {
            let out = resample_bicubic_f64(
                &plane.to_f64(),
                plane.width,
                plane.height,
                new_width,
                new_height,
            );
            ImagePlane::from_f64(new_width, new_height, &out).expect("non-empty target")
        }
    }
}
