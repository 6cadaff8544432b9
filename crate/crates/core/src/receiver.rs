//! Receiver: verification gate and pluggable reconstructors.
//!
//! A reconstructor maps a low-quality plane, optional metadata and an
//! integer scale to a plane at `scale` times the input size. Metadata may be
//! absent (`None`, the fallback symbol) and every reconstructor must accept
//! that. The gate decides whether transmitted metadata is used at all by
//! checking it against edges recoverable from the received signal.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::filter::{
    barrier_smooth, convolve_separable, estimate_noise_sigma, gaussian_weights,
    gaussian_weights_3sigma, laplacian,
};
use crate::metagen::{canny, dilate, CannyParams, MetadataPlane};
use crate::pixel::{resample_bicubic_f64, ImagePlane};

pub const SUPPORTED_SCALES: [usize; 3] = [1, 2, 4];

/// Canny settings the gate applies to the upsampled received plane.
pub const GATE_CANNY: CannyParams = CannyParams {
    gauss_sigma: 1.4,
    low_thresh: 6.0,
    high_thresh: 15.0,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReceiverError {
    #[error("unsupported scale {0}; expected one of 1, 2, 4")]
    Scale(usize),
    #[error("metadata is {mw}x{mh}, expected {ew}x{eh} for the given scale")]
    Dimensions {
        mw: usize,
        mh: usize,
        ew: usize,
        eh: usize,
    },
    #[error("unknown reconstructor '{0}'")]
    Unknown(String),
    #[error("gate threshold {0} must lie in [0, 1]")]
    Tau(f64),
}

fn check_scale(scale: usize) -> Result<(), ReceiverError> {
    if SUPPORTED_SCALES.contains(&scale) {
        Ok(())
    } else {
        Err(ReceiverError::Scale(scale))
    }
}

fn check_meta(lq: &ImagePlane, m: &MetadataPlane, scale: usize) -> Result<(), ReceiverError> {
    let (ew, eh) = (lq.width() * scale, lq.height() * scale);
    if m.width() != ew || m.height() != eh {
        return Err(ReceiverError::Dimensions {
            mw: m.width(),
            mh: m.height(),
            ew,
            eh,
        });
    }
    Ok(())
}

fn upsample_f64(lq: &ImagePlane, scale: usize) -> Vec<f64> {
    if scale == 1 {
        return lq.to_f64();
    }
    resample_bicubic_f64(
        &lq.to_f64(),
        lq.width(),
        lq.height(),
        lq.width() * scale,
        lq.height() * scale,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateDecision {
    pub v: bool,
    pub score: f64,
    pub tau: f64,
}

/// Edge-consistency gate.
///
/// The score is the fraction of transmitted edge sites that fall on the
/// 1-dilated Canny map of the bicubic-upsampled received plane. An empty
/// metadata map scores 1. Depth-2 maps are thresholded at level 2 first.
pub fn gate(
    lq: &ImagePlane,
    m: &MetadataPlane,
    scale: usize,
    tau: f64,
) -> Result<GateDecision, ReceiverError> {
    check_scale(scale)?;
    check_meta(lq, m, scale)?;
    gate_against(&local_edges(lq, scale)?, m, tau)
}

/// Dilated edge map the gate compares against; depends only on the
/// received plane, so callers scoring many maps can compute it once.
pub fn local_edges(lq: &ImagePlane, scale: usize) -> Result<MetadataPlane, ReceiverError> {
    check_scale(scale)?;
    let (w, h) = (lq.width() * scale, lq.height() * scale);
    let up = ImagePlane::from_f64(w, h, &upsample_f64(lq, scale)).expect("valid dims");
    Ok(dilate(&canny(&up, &GATE_CANNY).expect("fixed params are valid")))
}

/// [`gate`] with a precomputed [`local_edges`] map.
pub fn gate_against(
    local: &MetadataPlane,
    m: &MetadataPlane,
    tau: f64,
) -> Result<GateDecision, ReceiverError> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(ReceiverError::Tau(tau));
    }
    if m.width() != local.width() || m.height() != local.height() {
        return Err(ReceiverError::Dimensions {
            mw: m.width(),
            mh: m.height(),
            ew: local.width(),
            eh: local.height(),
        });
    }
    let m = if m.depth() == 2 { m.threshold(2) } else { m.clone() };
    let set = m.count_nonzero();
    let score = if set == 0 {
        1.0
    } else {
        let hits = m
            .sites()
            .iter()
            .zip(local.sites())
            .filter(|(&a, &b)| a != 0 && b != 0)
            .count();
        hits as f64 / set as f64
    };
    Ok(GateDecision {
        v: score >= tau,
        score,
        tau,
    })
}

pub trait Reconstructor: Send + Sync {
    fn id(&self) -> &str;

    /// Whether the output can depend on the metadata argument.
    fn uses_metadata(&self) -> bool;

    /// Inputs are validated by [`Registry::reconstruct`].
    fn run(&self, lq: &ImagePlane, meta: Option<&MetadataPlane>, scale: usize) -> ImagePlane;
}

/// Plain bicubic upsampling; metadata is ignored.
#[derive(Debug, Clone, Copy, Default)]
pub struct Bicubic;

impl Reconstructor for Bicubic {
    fn id(&self) -> &str {
        "bicubic"
    }

    fn uses_metadata(&self) -> bool {
        false
    }

    fn run(&self, lq: &ImagePlane, _meta: Option<&MetadataPlane>, scale: usize) -> ImagePlane {
        let (w, h) = (lq.width() * scale, lq.height() * scale);
        ImagePlane::from_f64(w, h, &upsample_f64(lq, scale)).expect("valid dims")
    }
}

/// Edge-guided enhancement of a bicubic upsample.
///
/// With metadata: sites within one step (8-neighbourhood) of a transmitted
/// edge are sharpened by subtracting `alpha` times a scale-normalized
/// Laplacian-of-Gaussian response; all other sites receive a light 3x3
/// Gaussian denoise, so smoothing never crosses an edge. Without metadata
/// the output is a globally unsharp-masked bicubic upsample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeGuided {
    pub alpha: f64,
    /// LoG scale in output pixels per unit of upsampling factor.
    pub log_sigma_per_scale: f64,
    pub denoise_sigma: f64,
    pub unsharp_amount: f64,
    pub unsharp_sigma: f64,
}

impl Default for EdgeGuided {
    fn default() -> Self {
        Self {
            alpha: 0.6,
            log_sigma_per_scale: 0.5,
            denoise_sigma: 0.5,
            unsharp_amount: 0.5,
            unsharp_sigma: 1.0,
        }
    }
}

impl EdgeGuided {
    pub fn with_alpha(alpha: f64) -> Self {
        Self {
            alpha,
            ..Self::default()
        }
    }

    fn log_sigma(&self, scale: usize) -> f64 {
        (self.log_sigma_per_scale * scale as f64).max(0.5)
    }
}

impl Reconstructor for EdgeGuided {
    fn id(&self) -> &str {
        "edgeguided"
    }

    fn uses_metadata(&self) -> bool {
        true
    }

    fn run(&self, lq: &ImagePlane, meta: Option<&MetadataPlane>, scale: usize) -> ImagePlane {
        let (w, h) = (lq.width() * scale, lq.height() * scale);
        let up = upsample_f64(lq, scale);
        let out = match meta {
            None => {
                let blurred = convolve_separable(&up, w, h, &gaussian_weights_3sigma(self.unsharp_sigma));
                up.iter()
                    .zip(&blurred)
                    .map(|(u, b)| u + self.unsharp_amount * (u - b))
                    .collect::<Vec<f64>>()
            }
            Some(m) => {
                let band = dilate(&if m.depth() == 2 { m.threshold(2) } else { m.clone() });
                let sigma = self.log_sigma(scale);
                let smooth = convolve_separable(&up, w, h, &gaussian_weights_3sigma(sigma));
                let log = laplacian(&smooth, w, h);
                let denoised = convolve_separable(&up, w, h, &gaussian_weights(self.denoise_sigma, 3));
                let norm = sigma * sigma;
                (0..w * h)
                    .map(|i| {
                        if band.sites()[i] != 0 {
                            up[i] - self.alpha * norm * log[i]
                        } else {
                            denoised[i]
                        }
                    })
                    .collect()
            }
        };
        ImagePlane::from_f64(w, h, &out).expect("valid dims")
    }
}

/// Edge-bounded fill of a bicubic upsample.
///
/// Transmitted edge sites act as barriers for a normalized recursive
/// smoother, so averaging never crosses an edge. Sites within `band` output
/// pixels of an edge carry no weight and are filled from the unblurred
/// interior of their own side, which restores step profiles. The smoothing
/// spread grows with the noise level estimated from the received plane.
/// Without metadata the output is the plain bicubic upsample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeFill {
    /// Band half-width in output pixels per unit of upsampling factor.
    pub band_per_scale: f64,
    /// Smoothing spread in output pixels per unit of upsampling factor.
    pub smooth_base: f64,
    /// Extra spread per unit of estimated noise sigma.
    pub smooth_per_noise: f64,
    pub iterations: u32,
}

impl Default for EdgeFill {
    fn default() -> Self {
        Self {
            band_per_scale: 2.0,
            smooth_base: 0.5,
            smooth_per_noise: 0.0,
            iterations: 3,
        }
    }
}

impl EdgeFill {
    fn spread(&self, lq: &ImagePlane, scale: usize) -> f64 {
        let noise = estimate_noise_sigma(&lq.to_f64(), lq.width(), lq.height());
        (scale as f64 * (self.smooth_base + self.smooth_per_noise * noise)).max(0.5)
    }
}

impl Reconstructor for EdgeFill {
    fn id(&self) -> &str {
        "edgefill"
    }

    fn uses_metadata(&self) -> bool {
        true
    }

    fn run(&self, lq: &ImagePlane, meta: Option<&MetadataPlane>, scale: usize) -> ImagePlane {
        let (w, h) = (lq.width() * scale, lq.height() * scale);
        let up = upsample_f64(lq, scale);
        let out: Vec<f64> = match meta {
            None => up,
            Some(m) => {
                let spread = self.spread(lq, scale);
                let edges = if m.depth() == 2 { m.threshold(2) } else { m.clone() };
                let barrier: Vec<bool> = edges.sites().iter().map(|&v| v != 0).collect();
                let mut band = edges;
                for _ in 0..(self.band_per_scale * scale as f64).round() as usize {
                    band = dilate(&band);
                }
                let weights: Vec<f64> = band.sites().iter().map(|&v| if v != 0 { 0.0 } else { 1.0 }).collect();
                let filtered = barrier_smooth(&up, &weights, w, h, &barrier, spread, self.iterations);
                fill_gaps(&filtered, &up, w, h)
            }
        };
        ImagePlane::from_f64(w, h, &out).expect("valid dims")
    }
}

/// Sites without a filtered value take the 8-neighbour value closest to
/// their own upsampled value, or keep the upsampled value if no neighbour
/// has one.
fn fill_gaps(filtered: &[Option<f64>], up: &[f64], w: usize, h: usize) -> Vec<f64> {
    (0..w * h)
        .map(|i| {
            if let Some(v) = filtered[i] {
                return v;
            }
            let (x, y) = ((i % w) as isize, (i / w) as isize);
            let mut best: Option<f64> = None;
            for ny in (y - 1).max(0)..=(y + 1).min(h as isize - 1) {
                for nx in (x - 1).max(0)..=(x + 1).min(w as isize - 1) {
                    if let Some(v) = filtered[ny as usize * w + nx as usize] {
                        if best.is_none_or(|b| (v - up[i]).abs() < (b - up[i]).abs()) {
                            best = Some(v);
                        }
                    }
                }
            }
            best.unwrap_or(up[i])
        })
        .collect()
}

/// Immutable id -> reconstructor map.
#[derive(Clone)]
pub struct Registry {
    entries: BTreeMap<String, Arc<dyn Reconstructor>>,
}

impl Default for Registry {
    fn default() -> Self {
        Self::with_defaults()
    }
}

impl Registry {
    pub fn empty() -> Self {
        Self {
            entries: BTreeMap::new(),
        }
    }

    /// `bicubic`, `edgeguided` and `edgefill` with default parameters.
    pub fn with_defaults() -> Self {
        Self::empty()
            .with(Arc::new(Bicubic))
            .with(Arc::new(EdgeGuided::default()))
            .with(Arc::new(EdgeFill::default()))
    }

    pub fn with(mut self, r: Arc<dyn Reconstructor>) -> Self {
        self.entries.insert(r.id().to_string(), r);
        self
    }

    pub fn get(&self, id: &str) -> Result<&Arc<dyn Reconstructor>, ReceiverError> {
        self.entries
            .get(id)
            .ok_or_else(|| ReceiverError::Unknown(id.to_string()))
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn reconstruct(
        &self,
        id: &str,
        lq: &ImagePlane,
        meta: Option<&MetadataPlane>,
        scale: usize,
    ) -> Result<ImagePlane, ReceiverError> {
        let r = self.get(id)?;
        check_scale(scale)?;
        if let Some(m) = meta {
            check_meta(lq, m, scale)?;
        }
        Ok(r.run(lq, meta, scale))
    }
}

/// Dispatch through the default registry.
pub fn reconstruct(
    id: &str,
    lq: &ImagePlane,
    meta: Option<&MetadataPlane>,
    scale: usize,
) -> Result<ImagePlane, ReceiverError> {
    Registry::with_defaults().reconstruct(id, lq, meta, scale)
}

pub fn edgeguided(
    lq: &ImagePlane,
    meta: Option<&MetadataPlane>,
    scale: usize,
) -> Result<ImagePlane, ReceiverError> {
    reconstruct("edgeguided", lq, meta, scale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metagen::canny;

    fn lq() -> ImagePlane {
        ImagePlane::from_fn(16, 12, |x, y| if x + y / 2 < 9 { 30 } else { 210 }).unwrap()
    }

    #[test]
    fn bicubic_ignores_metadata() {
        let l = lq();
        let m = MetadataPlane::new(64, 48, 1, (0..64 * 48).map(|i| (i % 7 == 0) as u8).collect())
            .unwrap();
        assert_eq!(
            reconstruct("bicubic", &l, Some(&m), 4).unwrap(),
            reconstruct("bicubic", &l, None, 4).unwrap()
        );
    }

    #[test]
    fn scale_one_bicubic_is_identity() {
        let l = lq();
        assert_eq!(reconstruct("bicubic", &l, None, 1).unwrap(), l);
    }

    #[test]
    fn unknown_id_and_bad_scale() {
        assert!(matches!(reconstruct("dit", &lq(), None, 4), Err(ReceiverError::Unknown(_))));
        assert!(matches!(reconstruct("bicubic", &lq(), None, 3), Err(ReceiverError::Scale(3))));
        let m = MetadataPlane::zeros(10, 10, 1).unwrap();
        assert!(matches!(
            reconstruct("edgeguided", &lq(), Some(&m), 2),
            Err(ReceiverError::Dimensions { .. })
        ));
    }

    #[test]
    fn zero_metadata_is_denoised_bicubic() {
        let l = lq();
        let z = MetadataPlane::zeros(32, 24, 1).unwrap();
        let got = edgeguided(&l, Some(&z), 2).unwrap();
        let up = upsample_f64(&l, 2);
        let den = convolve_separable(&up, 32, 24, &gaussian_weights(0.5, 3));
        assert_eq!(got, ImagePlane::from_f64(32, 24, &den).unwrap());
    }

    #[test]
    fn bottom_path_is_unsharp_masked_bicubic() {
        let l = lq();
        let got = edgeguided(&l, None, 2).unwrap();
        let up = upsample_f64(&l, 2);
        let b = convolve_separable(&up, 32, 24, &gaussian_weights_3sigma(1.0));
        let want: Vec<f64> = up.iter().zip(&b).map(|(u, b)| u + 0.5 * (u - b)).collect();
        assert_eq!(got, ImagePlane::from_f64(32, 24, &want).unwrap());
        assert_eq!(got, edgeguided(&l, None, 2).unwrap());
    }

    #[test]
    fn gate_full_and_zero_overlap() {
        let l = lq();
        let up = reconstruct("bicubic", &l, None, 2).unwrap();
        let local = dilate(&canny(&up, &GATE_CANNY).unwrap());
        assert!(local.count_nonzero() > 0);
        let d = gate(&l, &local, 2, 1.0).unwrap();
        assert_eq!(d.score, 1.0);
        assert!(d.v);
        let outside = MetadataPlane::new(
            32,
            24,
            1,
            local.sites().iter().map(|&v| 1 - v).collect(),
        )
        .unwrap();
        let d = gate(&l, &outside, 2, 0.01).unwrap();
        assert_eq!(d.score, 0.0);
        assert!(!d.v);
        let empty = MetadataPlane::zeros(32, 24, 1).unwrap();
        assert_eq!(gate(&l, &empty, 2, 1.0).unwrap().score, 1.0);
        assert!(gate(&l, &empty, 2, 1.5).is_err());
    }

    #[test]
    fn gate_threshold_semantics() {
        let l = lq();
        let up = reconstruct("bicubic", &l, None, 2).unwrap();
        let local = dilate(&canny(&up, &GATE_CANNY).unwrap());
        let mut sites = local.sites().to_vec();
        // half the transmitted sites disagree
        let n = sites.iter().filter(|&&v| v == 1).count();
        let mut added = 0;
        for s in sites.iter_mut() {
            if *s == 0 && added < n {
                *s = 1;
                added += 1;
            }
        }
        let m = MetadataPlane::new(32, 24, 1, sites).unwrap();
        let d = gate(&l, &m, 2, 0.5).unwrap();
        assert!((d.score - 0.5).abs() < 1e-12);
        assert!(d.v);
        assert!(!gate(&l, &m, 2, 0.5 + 1e-9).unwrap().v);
    }

    #[test]
    fn edgefill_without_metadata_is_bicubic() {
        let l = lq();
        assert_eq!(
            reconstruct("edgefill", &l, None, 4).unwrap(),
            reconstruct("bicubic", &l, None, 4).unwrap()
        );
    }

    #[test]
    fn edgefill_keeps_flat_regions_and_sharpens_the_step() {
        // vertical step at x = 32 in the high-resolution frame
        let l = ImagePlane::from_fn(16, 16, |x, _| if x < 8 { 40 } else { 200 }).unwrap();
        let sites = (0..64 * 64).map(|i| u8::from(i % 64 == 31 || i % 64 == 32)).collect();
        let m = MetadataPlane::new(64, 64, 1, sites).unwrap();
        let up = reconstruct("bicubic", &l, None, 4).unwrap();
        let got = reconstruct("edgefill", &l, Some(&m), 4).unwrap();
        let err = |p: &ImagePlane| -> f64 {
            (0..64 * 64)
                .map(|i| {
                    let want = if i % 64 < 32 { 40.0 } else { 200.0 };
                    (f64::from(p.samples()[i]) - want).powi(2)
                })
                .sum()
        };
        assert!(err(&got) < 0.5 * err(&up), "{} vs {}", err(&got), err(&up));
        for y in 0..64 {
            assert_eq!(got.get(0, y), 40);
            assert_eq!(got.get(63, y), 200);
        }
    }

    #[test]
    fn noise_estimate_drives_spread() {
        let r = EdgeFill { smooth_per_noise: 0.1, ..EdgeFill::default() };
        let flat = ImagePlane::filled(16, 16, 90).unwrap();
        assert_eq!(r.spread(&flat, 4), 2.0);
        let noisy = ImagePlane::from_fn(16, 16, |x, y| if (x * 7 + y * 3) % 5 < 2 { 70 } else { 110 }).unwrap();
        assert!(r.spread(&noisy, 4) > 2.0);
    }
}
