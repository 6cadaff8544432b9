//! Sender-side metadata extraction.
//!
//! The primary modality is a Canny edge map computed on the full-resolution
//! reference. A 2-bit quantized gradient-magnitude map is offered as a
//! second, denser modality. Gradient magnitudes are on a 0-255 scale (Sobel
//! divided by 4), so thresholds read as intensity steps.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::filter::{convolve_separable, gaussian_weights_3sigma, sobel};
use crate::pixel::{ImageFrame, ImagePlane};

/// Quantizer boundaries of [`gradient_2bit`].
pub const GRAD2_THRESHOLDS: [f64; 3] = [16.0, 48.0, 112.0];

/// Geometric step between adjacent sparsity levels.
pub const DEFAULT_SWEEP_RATIO: f64 = 1.5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetaError {
    #[error("invalid canny parameters: {0}")]
    Params(String),
    #[error("metadata depth must be 1 or 2, got {0}")]
    Depth(u8),
    #[error("metadata site {index} has value {value}, too large for depth {depth}")]
    SiteValue { index: usize, value: u8, depth: u8 },
    #[error("metadata plane must be non-empty with {expected} sites, got {actual}")]
    Sites { expected: usize, actual: usize },
    #[error("sparsity sweep needs at least 2 levels, got {0}")]
    Levels(usize),
    #[error("pooling factor must be >= 1")]
    Factor,
}

/// Side-information raster aligned to the full-resolution grid.
///
/// One value per site, row-major. Depth 1 holds 0/1, depth 2 holds 0..=3.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetadataPlane {
    width: usize,
    height: usize,
    depth: u8,
    sites: Vec<u8>,
}

impl std::fmt::Debug for MetadataPlane {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MetadataPlane")
            .field("width", &self.width)
            .field("height", &self.height)
            .field("depth", &self.depth)
            .field("set", &self.count_nonzero())
            .finish()
    }
}

impl MetadataPlane {
    pub fn new(width: usize, height: usize, depth: u8, sites: Vec<u8>) -> Result<Self, MetaError> {
        if depth != 1 && depth != 2 {
            return Err(MetaError::Depth(depth));
        }
        let expected = width * height;
        if width == 0 || height == 0 || sites.len() != expected {
            return Err(MetaError::Sites {
                expected,
                actual: sites.len(),
            });
        }
        if let Some((index, &value)) = sites.iter().enumerate().find(|(_, &v)| v >> depth != 0) {
            return Err(MetaError::SiteValue { index, value, depth });
        }
        Ok(Self {
            width,
            height,
            depth,
            sites,
        })
    }

    pub fn zeros(width: usize, height: usize, depth: u8) -> Result<Self, MetaError> {
        Self::new(width, height, depth, vec![0; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn depth(&self) -> u8 {
        self.depth
    }

    pub fn sites(&self) -> &[u8] {
        &self.sites
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.sites[y * self.width + x]
    }

    pub fn count_nonzero(&self) -> usize {
        self.sites.iter().filter(|&&v| v != 0).count()
    }

    /// Fraction of nonzero sites.
    pub fn density(&self) -> f64 {
        self.count_nonzero() as f64 / self.sites.len() as f64
    }

    /// Depth-1 map of sites whose value is at least `level`.
    pub fn threshold(&self, level: u8) -> MetadataPlane {
        MetadataPlane {
            width: self.width,
            height: self.height,
            depth: 1,
            sites: self.sites.iter().map(|&v| u8::from(v >= level)).collect(),
        }
    }

    /// Whether every nonzero site of `self` is nonzero in `other`.
    pub fn is_subset_of(&self, other: &MetadataPlane) -> bool {
        self.sites.len() == other.sites.len()
            && self.sites.iter().zip(&other.sites).all(|(&a, &b)| a == 0 || b != 0)
    }

    /// Visual export: 0/255 for depth 1, 0/85/170/255 for depth 2.
    pub fn to_debug_plane(&self) -> ImagePlane {
        let scale = if self.depth == 1 { 255 } else { 85 };
        ImagePlane::new(
            self.width,
            self.height,
            self.sites.iter().map(|&v| v * scale).collect(),
        )
        .expect("metadata dimensions are valid")
    }

    pub fn to_debug_pgm(&self) -> Vec<u8> {
        crate::pixel::save_pnm(&ImageFrame::gray(self.to_debug_plane()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CannyParams {
    pub gauss_sigma: f64,
    pub low_thresh: f64,
    pub high_thresh: f64,
}

impl Default for CannyParams {
    fn default() -> Self {
        Self {
            gauss_sigma: 1.4,
            low_thresh: 40.0,
            high_thresh: 100.0,
        }
    }
}

impl CannyParams {
    pub fn new(gauss_sigma: f64, low_thresh: f64, high_thresh: f64) -> Result<Self, MetaError> {
        let p = Self {
            gauss_sigma,
            low_thresh,
            high_thresh,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), MetaError> {
        if !(self.gauss_sigma > 0.0 && self.gauss_sigma.is_finite()) {
            return Err(MetaError::Params(format!("sigma {} must be > 0", self.gauss_sigma)));
        }
        if !(self.low_thresh > 0.0 && self.low_thresh <= self.high_thresh) {
            return Err(MetaError::Params(format!(
                "need 0 < low ({}) <= high ({})",
                self.low_thresh, self.high_thresh
            )));
        }
        Ok(())
    }

    /// Both thresholds multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            gauss_sigma: self.gauss_sigma,
            low_thresh: self.low_thresh * factor,
            high_thresh: self.high_thresh * factor,
        }
    }
}

/// Smoothed gradient field of a plane.
pub(crate) struct Gradients {
    pub gx: Vec<f64>,
    pub gy: Vec<f64>,
    pub mag: Vec<f64>,
}

pub(crate) fn gradients(plane: &ImagePlane, sigma: f64) -> Gradients {
    let (w, h) = (plane.width(), plane.height());
    let smooth = convolve_separable(&plane.to_f64(), w, h, &gaussian_weights_3sigma(sigma));
    let (gx, gy) = sobel(&smooth, w, h);
    let mag = gx.iter().zip(&gy).map(|(a, b)| a.hypot(*b)).collect();
    Gradients { gx, gy, mag }
}

/// Thins the magnitude field to ridge sites.
///
/// Gradient direction is quantized into four sectors. A site survives when
/// its magnitude is strictly greater than the neighbour behind it along the
/// gradient and at least the neighbour ahead of it; this breaks plateau ties
/// so symmetric ridges come out one site wide. Neighbours outside the raster
/// count as zero.
pub(crate) fn non_maximum_suppression(g: &Gradients, width: usize, height: usize) -> Vec<f64> {
    let (wi, hi) = (width as isize, height as isize);
    let mag_at = |x: isize, y: isize| {
        if x < 0 || y < 0 || x >= wi || y >= hi {
            0.0
        } else {
            g.mag[(y * wi + x) as usize]
        }
    };
    let mut out = vec![0.0; g.mag.len()];
    for y in 0..hi {
        for x in 0..wi {
            let i = (y * wi + x) as usize;
            let m = g.mag[i];
            if m <= 0.0 {
                continue;
            }
            let mut angle = g.gy[i].atan2(g.gx[i]).to_degrees();
            if angle < 0.0 {
                angle += 180.0;
            }
            let (dx, dy) = if !(22.5..157.5).contains(&angle) {
                (1, 0)
            } else if angle < 67.5 {
                (1, 1)
            } else if angle < 112.5 {
                (0, 1)
            } else {
                (-1, 1)
            };
            let behind = mag_at(x - dx, y - dy);
            let ahead = mag_at(x + dx, y + dy);
            if m > behind && m >= ahead {
                out[i] = m;
            }
        }
    }
    out
}

/// Double-threshold hysteresis with 8-connected linking from strong sites.
pub(crate) fn hysteresis(nms: &[f64], width: usize, height: usize, low: f64, high: f64) -> Vec<u8> {
    let mut out = vec![0u8; nms.len()];
    let mut stack = Vec::new();
    for (i, &m) in nms.iter().enumerate() {
        if m >= high && m > 0.0 && out[i] == 0 {
            out[i] = 1;
            stack.push(i);
            while let Some(j) = stack.pop() {
                let (x, y) = ((j % width) as isize, (j / width) as isize);
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        let (nx, ny) = (x + dx, y + dy);
                        if nx < 0 || ny < 0 || nx >= width as isize || ny >= height as isize {
                            continue;
                        }
                        let k = ny as usize * width + nx as usize;
                        if out[k] == 0 && nms[k] >= low && nms[k] > 0.0 {
                            out[k] = 1;
                            stack.push(k);
                        }
                    }
                }
            }
        }
    }
    out
}

/// Intermediate Canny products, for inspection and testing.
pub struct CannyStages {
    pub magnitude: Vec<f64>,
    pub suppressed: Vec<f64>,
    pub edges: MetadataPlane,
}

pub fn canny_stages(plane: &ImagePlane, params: &CannyParams) -> Result<CannyStages, MetaError> {
    params.validate()?;
    let (w, h) = (plane.width(), plane.height());
    let g = gradients(plane, params.gauss_sigma);
    let nms = non_maximum_suppression(&g, w, h);
    let edges = hysteresis(&nms, w, h, params.low_thresh, params.high_thresh);
    Ok(CannyStages {
        magnitude: g.mag,
        suppressed: nms,
        edges: MetadataPlane {
            width: w,
            height: h,
            depth: 1,
            sites: edges,
        },
    })
}

/// Canny edge map (depth 1).
pub fn canny(plane: &ImagePlane, params: &CannyParams) -> Result<MetadataPlane, MetaError> {
    Ok(canny_stages(plane, params)?.edges)
}

/// Edge maps of decreasing density.
#[derive(Debug, Clone)]
pub struct SparsitySweep {
    pub maps: Vec<MetadataPlane>,
    pub params: Vec<CannyParams>,
    /// Set when every level came out empty.
    pub all_empty: bool,
}

/// `levels` Canny maps with thresholds scaled by `ratio^i` from `base`.
pub fn sweep_sparsity_with_ratio(
    plane: &ImagePlane,
    base: &CannyParams,
    levels: usize,
    ratio: f64,
) -> Result<SparsitySweep, MetaError> {
    if levels < 2 {
        return Err(MetaError::Levels(levels));
    }
    if !(ratio >= 1.0 && ratio.is_finite()) {
        return Err(MetaError::Params(format!("sweep ratio {ratio} must be >= 1")));
    }
    base.validate()?;
    let (w, h) = (plane.width(), plane.height());
    // thresholds only affect hysteresis, so the gradient work is shared
    let g = gradients(plane, base.gauss_sigma);
    let nms = non_maximum_suppression(&g, w, h);
    let params: Vec<CannyParams> = (0..levels)
        .map(|i| base.scaled(ratio.powi(i as i32)))
        .collect();
    let maps: Vec<MetadataPlane> = params
        .iter()
        .map(|p| MetadataPlane {
            width: w,
            height: h,
            depth: 1,
            sites: hysteresis(&nms, w, h, p.low_thresh, p.high_thresh),
        })
        .collect();
    let all_empty = maps.iter().all(|m| m.count_nonzero() == 0);
    Ok(SparsitySweep {
        maps,
        params,
        all_empty,
    })
}

pub fn sweep_sparsity(
    plane: &ImagePlane,
    base: &CannyParams,
    levels: usize,
) -> Result<SparsitySweep, MetaError> {
    sweep_sparsity_with_ratio(plane, base, levels, DEFAULT_SWEEP_RATIO)
}

/// 4-level quantized gradient magnitude (depth 2).
pub fn gradient_2bit(plane: &ImagePlane, sigma: f64) -> Result<MetadataPlane, MetaError> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(MetaError::Params(format!("sigma {sigma} must be > 0")));
    }
    let g = gradients(plane, sigma);
    let sites = g
        .mag
        .iter()
        .map(|&m| GRAD2_THRESHOLDS.iter().filter(|&&t| m >= t).count() as u8)
        .collect();
    Ok(MetadataPlane {
        width: plane.width(),
        height: plane.height(),
        depth: 2,
        sites,
    })
}

/// `factor` x `factor` block pooling: OR for depth 1, max for depth 2.
///
/// Dimensions that are not multiples of `factor` are zero-padded, so the
/// output is `ceil(w / factor)` x `ceil(h / factor)`.
pub fn downsample_metadata(m: &MetadataPlane, factor: usize) -> Result<MetadataPlane, MetaError> {
    if factor == 0 {
        return Err(MetaError::Factor);
    }
    if factor == 1 {
        return Ok(m.clone());
    }
    let (ow, oh) = (m.width.div_ceil(factor), m.height.div_ceil(factor));
    let mut sites = vec![0u8; ow * oh];
    for y in 0..m.height {
        for x in 0..m.width {
            let o = (y / factor) * ow + x / factor;
            sites[o] = sites[o].max(m.sites[y * m.width + x]);
        }
    }
    Ok(MetadataPlane {
        width: ow,
        height: oh,
        depth: m.depth,
        sites,
    })
}

/// Nearest-neighbour expansion of a pooled map back onto a `width` x `height` grid.
pub fn upsample_metadata(
    m: &MetadataPlane,
    factor: usize,
    width: usize,
    height: usize,
) -> Result<MetadataPlane, MetaError> {
    if factor == 0 {
        return Err(MetaError::Factor);
    }
    if width.div_ceil(factor) != m.width || height.div_ceil(factor) != m.height {
        return Err(MetaError::Params(format!(
            "{}x{} map cannot expand by {factor} to {width}x{height}",
            m.width, m.height
        )));
    }
    let mut sites = Vec::with_capacity(width * height);
    for y in 0..height {
        for x in 0..width {
            sites.push(m.sites[(y / factor) * m.width + x / factor]);
        }
    }
    Ok(MetadataPlane {
        width,
        height,
        depth: m.depth,
        sites,
    })
}

/// 8-neighbourhood dilation by one site; output is depth 1.
pub fn dilate(m: &MetadataPlane) -> MetadataPlane {
    let (w, h) = (m.width as isize, m.height as isize);
    let mut sites = vec![0u8; m.sites.len()];
    for y in 0..h {
        for x in 0..w {
            if m.sites[(y * w + x) as usize] == 0 {
                continue;
            }
            for ny in (y - 1).max(0)..=(y + 1).min(h - 1) {
                for nx in (x - 1).max(0)..=(x + 1).min(w - 1) {
                    sites[(ny * w + nx) as usize] = 1;
                }
            }
        }
    }
    MetadataPlane {
        width: m.width,
        height: m.height,
        depth: 1,
        sites,
    }
}
