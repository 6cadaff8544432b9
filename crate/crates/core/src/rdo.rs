//! Rate-distortion orchestration.
//!
//! A rate point runs the whole sender/channel/receiver chain for one
//! (quality factor, metadata level) pair over a corpus. Points form an
//! [`RDCurve`]; two curves are compared either at matched quality (bitrate
//! saving) or at matched rate (quality gain).
//!
//! Rates are corpus totals in bits: the base payload plus, when metadata is
//! sent, the full metadata container. Distortion is the corpus mean of MSE
//! or of `1 - SSIM`.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::basecodec::{base_decode, base_encode, rate_of, BaseCodecError, QualityFactor};
use crate::bilevel::{meta_decode, meta_encode, meta_rate, BilevelError};
use crate::channel::{degrade, splitmix64, ChannelSeed, DegradePreset};
use crate::metagen::{
    canny, downsample_metadata, gradient_2bit, sweep_sparsity_with_ratio, upsample_metadata,
    CannyParams, MetaError, MetadataPlane,
};
use crate::metrics::{report, MetricError};
use crate::pixel::{resample, ImagePlane, ResampleKernel};
use crate::receiver::{gate_against, local_edges, ReceiverError, Registry, SUPPORTED_SCALES};

/// Samples on the shared interval for matched-axis comparisons.
pub const COMPARISON_GRID: usize = 101;

#[derive(Debug, Error)]
pub enum RdoError {
    #[error("lambda must be finite and >= 0, got {0}")]
    Lambda(f64),
    #[error("rate must be finite and >= 0, got {0}")]
    Rate(f64),
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("curve '{0}' has no points")]
    EmptyCurve(String),
    #[error("no quality factors given")]
    NoQualities,
    #[error("scale {0} not supported")]
    Scale(usize),
    #[error("image {index} is {width}x{height}, not divisible by scale {scale}")]
    Indivisible {
        index: usize,
        width: usize,
        height: usize,
        scale: usize,
    },
    #[error("point has total_bits {total} != base {base} + meta {meta}")]
    Additivity { base: u64, meta: u64, total: u64 },
    #[error("curves do not overlap on the {0} axis")]
    NoOverlap(&'static str),
    #[error("parse: {0}")]
    Parse(String),
    #[error(transparent)]
    Base(#[from] BaseCodecError),
    #[error(transparent)]
    Bilevel(#[from] BilevelError),
    #[error(transparent)]
    Meta(#[from] MetaError),
    #[error(transparent)]
    Receiver(#[from] ReceiverError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistortionKind {
    Mse,
    OneMinusSsim,
}

impl fmt::Display for DistortionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Mse => "mse",
            Self::OneMinusSsim => "one_minus_ssim",
        })
    }
}

impl FromStr for DistortionKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mse" => Ok(Self::Mse),
            "one_minus_ssim" | "1-ssim" | "ssim" => Ok(Self::OneMinusSsim),
            other => Err(format!("unknown distortion kind '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LagrangianCost {
    pub j: f64,
    pub d: f64,
    pub lambda: f64,
    pub r: f64,
}

/// `J = D + lambda * R`.
pub fn lagrangian(d: f64, lambda: f64, r: f64) -> Result<LagrangianCost, RdoError> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(RdoError::Lambda(lambda));
    }
    if !(r >= 0.0 && r.is_finite()) {
        return Err(RdoError::Rate(r));
    }
    Ok(LagrangianCost {
        j: d + lambda * r,
        d,
        lambda,
        r,
    })
}

/// Index of the cheapest `(distortion, rate)` candidate; first wins ties.
pub fn argmin_cost(candidates: &[(f64, f64)], lambda: f64) -> Result<Option<usize>, RdoError> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &(d, r)) in candidates.iter().enumerate() {
        let c = lagrangian(d, lambda, r)?;
        if best.is_none_or(|(_, j)| c.j < j) {
            best = Some((i, c.j));
        }
    }
    Ok(best.map(|(i, _)| i))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    pub regime: String,
    pub reconstructor: String,
    pub q: u8,
    pub meta_level: String,
    pub tau: f64,
    pub base_bits: u64,
    pub meta_bits: u64,
    pub total_bits: u64,
    #[serde(with = "crate::serde_f64")]
    pub psnr: f64,
    pub ssim: f64,
    pub d_kind: DistortionKind,
    pub lambda: f64,
    pub j: f64,
    pub d: f64,
}

impl RatePoint {
    pub fn check(&self) -> Result<(), RdoError> {
        if self.base_bits.checked_add(self.meta_bits) != Some(self.total_bits) {
            return Err(RdoError::Additivity {
                base: self.base_bits,
                meta: self.meta_bits,
                total: self.total_bits,
            });
        }
        Ok(())
    }

    pub fn quality(&self, metric: QualityMetric) -> f64 {
        match metric {
            QualityMetric::Psnr => self.psnr,
            QualityMetric::Ssim => self.ssim,
        }
    }

    /// Bare point for synthetic curves: only rate and quality are meaningful.
    pub fn synthetic(total_bits: u64, psnr: f64, ssim: f64) -> Self {
        Self {
            regime: String::new(),
            reconstructor: String::new(),
            q: 0,
            meta_level: "none".into(),
            tau: 0.0,
            base_bits: total_bits,
            meta_bits: 0,
            total_bits,
            psnr,
            ssim,
            d_kind: DistortionKind::Mse,
            lambda: 0.0,
            j: 0.0,
            d: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RDCurve {
    pub method: String,
    pub points: Vec<RatePoint>,
}

impl RDCurve {
    /// Sorts by total rate; of several points at one rate the one with the
    /// lowest distortion is kept.
    pub fn from_points(method: impl Into<String>, mut points: Vec<RatePoint>) -> Result<Self, RdoError> {
        let method = method.into();
        if points.is_empty() {
            return Err(RdoError::EmptyCurve(method));
        }
        for p in &points {
            p.check()?;
        }
        points.sort_by(|a, b| {
            a.total_bits
                .cmp(&b.total_bits)
                .then(a.d.partial_cmp(&b.d).unwrap_or(std::cmp::Ordering::Equal))
        });
        points.dedup_by(|later, earlier| later.total_bits == earlier.total_bits);
        Ok(Self { method, points })
    }

    /// Points that improve on every cheaper point in `metric`.
    pub fn frontier(&self, metric: QualityMetric) -> Vec<(f64, f64)> {
        let mut out: Vec<(f64, f64)> = Vec::new();
        for p in &self.points {
            let q = p.quality(metric);
            if !q.is_finite() {
                continue;
            }
            if out.last().is_none_or(|&(_, best)| q > best) {
                out.push((p.total_bits as f64, q));
            }
        }
        out
    }

    /// Point minimizing the stored Lagrangian cost.
    pub fn best_by_cost(&self) -> &RatePoint {
        let mut best = &self.points[0];
        for p in &self.points[1..] {
            if p.j < best.j {
                best = p;
            }
        }
        best
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QualityMetric {
    Psnr,
    Ssim,
}

impl FromStr for QualityMetric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "psnr" => Ok(Self::Psnr),
            "ssim" => Ok(Self::Ssim),
            other => Err(format!("unknown metric '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RateAxis {
    #[default]
    Linear,
    Log,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub mean: f64,
    pub max: f64,
    pub lo: f64,
    pub hi: f64,
    pub samples: usize,
}

/// Piecewise-linear interpolation over `(key, value)` knots with strictly
/// increasing keys; `at` must lie within the knot range.
fn interp(knots: &[(f64, f64)], at: f64) -> f64 {
    if knots.len() == 1 {
        return knots[0].1;
    }
    let i = knots
        .windows(2)
        .position(|w| at <= w[1].0)
        .unwrap_or(knots.len() - 2);
    let ((k0, v0), (k1, v1)) = (knots[i], knots[i + 1]);
    if at <= k0 {
        return v0;
    }
    if at >= k1 {
        return v1;
    }
    v0 + (at - k0) / (k1 - k0) * (v1 - v0)
}

fn grid(lo: f64, hi: f64) -> impl Iterator<Item = f64> {
    (0..COMPARISON_GRID).map(move |k| {
        if k + 1 == COMPARISON_GRID {
            hi
        } else {
            lo + (hi - lo) * k as f64 / (COMPARISON_GRID - 1) as f64
        }
    })
}

fn summarize(values: Vec<f64>, lo: f64, hi: f64) -> Comparison {
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Comparison {
        mean,
        max,
        lo,
        hi,
        samples: values.len(),
    }
}

/// Percentage of reference rate saved by `test` at equal quality.
pub fn bitrate_saving_at_matched_quality(
    reference: &RDCurve,
    test: &RDCurve,
    metric: QualityMetric,
) -> Result<Comparison, RdoError> {
    bitrate_saving_with_axis(reference, test, metric, RateAxis::Linear)
}

pub fn bitrate_saving_with_axis(
    reference: &RDCurve,
    test: &RDCurve,
    metric: QualityMetric,
    axis: RateAxis,
) -> Result<Comparison, RdoError> {
    let to_knots = |c: &RDCurve| -> Vec<(f64, f64)> {
        c.frontier(metric)
            .into_iter()
            .map(|(r, q)| (q, if axis == RateAxis::Log { r.ln() } else { r }))
            .collect()
    };
    let (kr, kt) = (to_knots(reference), to_knots(test));
    if kr.is_empty() || kt.is_empty() {
        return Err(RdoError::NoOverlap("quality"));
    }
    let lo = kr[0].0.max(kt[0].0);
    let hi = kr[kr.len() - 1].0.min(kt[kt.len() - 1].0);
    if lo > hi {
        return Err(RdoError::NoOverlap("quality"));
    }
    let back = |v: f64| if axis == RateAxis::Log { v.exp() } else { v };
    let savings = grid(lo, hi)
        .map(|q| {
            let rr = back(interp(&kr, q));
            let rt = back(interp(&kt, q));
            (rr - rt) / rr * 100.0
        })
        .collect();
    Ok(summarize(savings, lo, hi))
}

/// Quality of `test` minus quality of `reference` at equal total rate.
pub fn quality_gain_at_matched_rate(
    reference: &RDCurve,
    test: &RDCurve,
    metric: QualityMetric,
) -> Result<Comparison, RdoError> {
    quality_gain_with_axis(reference, test, metric, RateAxis::Linear)
}

pub fn quality_gain_with_axis(
    reference: &RDCurve,
    test: &RDCurve,
    metric: QualityMetric,
    axis: RateAxis,
) -> Result<Comparison, RdoError> {
    let to_knots = |c: &RDCurve| -> Vec<(f64, f64)> {
        c.frontier(metric)
            .into_iter()
            .map(|(r, q)| (if axis == RateAxis::Log { r.ln() } else { r }, q))
            .collect()
    };
    let (kr, kt) = (to_knots(reference), to_knots(test));
    if kr.is_empty() || kt.is_empty() {
        return Err(RdoError::NoOverlap("rate"));
    }
    let lo = kr[0].0.max(kt[0].0);
    let hi = kr[kr.len() - 1].0.min(kt[kt.len() - 1].0);
    if lo > hi {
        return Err(RdoError::NoOverlap("rate"));
    }
    let gains = grid(lo, hi).map(|r| interp(&kt, r) - interp(&kr, r)).collect();
    let mut c = summarize(gains, lo, hi);
    if axis == RateAxis::Log {
        c.lo = lo.exp();
        c.hi = hi.exp();
    }
    Ok(c)
}

// ---------------------------------------------------------------------------
// Curve construction
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum MetadataSweep {
    None,
    Canny {
        base: CannyParams,
        levels: usize,
        ratio: f64,
        pools: Vec<usize>,
    },
    Grad2 {
        sigma: f64,
        pools: Vec<usize>,
    },
}

struct LevelMap {
    label: String,
    /// Pooled map as transmitted.
    sent: MetadataPlane,
    pool: usize,
}

impl MetadataSweep {
    fn pools(pools: &[usize]) -> Vec<usize> {
        if pools.is_empty() {
            vec![1]
        } else {
            pools.to_vec()
        }
    }

    fn maps(&self, hr: &ImagePlane) -> Result<Vec<LevelMap>, RdoError> {
        let mut out = Vec::new();
        match self {
            MetadataSweep::None => {}
            MetadataSweep::Canny {
                base,
                levels,
                ratio,
                pools,
            } => {
                let maps = if *levels == 1 {
                    vec![canny(hr, base)?]
                } else {
                    sweep_sparsity_with_ratio(hr, base, *levels, *ratio)?.maps
                };
                for pool in Self::pools(pools) {
                    for (i, m) in maps.iter().enumerate() {
                        out.push(LevelMap {
                            label: format!("canny{i}p{pool}"),
                            sent: downsample_metadata(m, pool)?,
                            pool,
                        });
                    }
                }
            }
            MetadataSweep::Grad2 { sigma, pools } => {
                let m = gradient_2bit(hr, *sigma)?;
                for pool in Self::pools(pools) {
                    out.push(LevelMap {
                        label: format!("grad2p{pool}"),
                        sent: downsample_metadata(&m, pool)?,
                        pool,
                    });
                }
            }
        }
        Ok(out)
    }

    fn level_count(&self) -> usize {
        match self {
            MetadataSweep::None => 1,
            MetadataSweep::Canny { levels, pools, .. } => levels * Self::pools(pools).len(),
            MetadataSweep::Grad2 { pools, .. } => Self::pools(pools).len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveConfig {
    pub method: String,
    pub regime: DegradePreset,
    pub reconstructor: String,
    pub metadata: MetadataSweep,
    pub qualities: Vec<u32>,
    pub scale: usize,
    pub seed: u64,
    pub tau: f64,
    pub d_kind: DistortionKind,
    pub lambda: f64,
    pub downsample: ResampleKernel,
}

/// Per-image channel seed, so images see independent noise while every
/// rate point of one image sees the same noise.
pub fn image_seed(seed: u64, index: usize) -> ChannelSeed {
    ChannelSeed(splitmix64(seed ^ splitmix64(index as u64)))
}

/// One corpus item after the sender side has run.
struct Prepared {
    hr: ImagePlane,
    lr: ImagePlane,
    levels: Vec<(LevelMap, u64, MetadataPlane)>,
}

/// Outcome of one pipeline run for one image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ItemOutcome {
    pub base_bits: u64,
    pub meta_bits: u64,
    pub psnr: f64,
    pub ssim: f64,
    pub mse: f64,
    pub gate_accepted: Option<bool>,
}

fn prepare(
    corpus: &[ImagePlane],
    cfg: &CurveConfig,
) -> Result<Vec<Prepared>, RdoError> {
    corpus
        .iter()
        .enumerate()
        .map(|(index, hr)| {
            let (w, h) = (hr.width(), hr.height());
            if w % cfg.scale != 0 || h % cfg.scale != 0 {
                return Err(RdoError::Indivisible {
                    index,
                    width: w,
                    height: h,
                    scale: cfg.scale,
                });
            }
            let lr = resample(hr, w / cfg.scale, h / cfg.scale, cfg.downsample);
            let mut levels = Vec::new();
            for lm in cfg.metadata.maps(hr)? {
                let stream = meta_encode(&lm.sent);
                let bits = meta_rate(&stream);
                // the receiver works from what it decodes
                let received = meta_decode(&stream)?;
                let on_grid = upsample_metadata(&received, lm.pool, w, h)?;
                levels.push((lm, bits, on_grid));
            }
            Ok(Prepared { hr: hr.clone(), lr, levels })
        })
        .collect()
}

/// Received plane and everything about it that does not depend on the
/// metadata level.
struct Received {
    base_bits: u64,
    lq: ImagePlane,
    local: Option<MetadataPlane>,
}

fn receive(
    item: &Prepared,
    index: usize,
    q: QualityFactor,
    cfg: &CurveConfig,
) -> Result<Received, RdoError> {
    let stream = base_encode(&item.lr, q);
    let decoded = base_decode(&stream)?;
    let lq = degrade(&decoded, &cfg.regime, image_seed(cfg.seed, index));
    let local = if item.levels.is_empty() {
        None
    } else {
        Some(local_edges(&lq, cfg.scale)?)
    };
    Ok(Received {
        base_bits: rate_of(&stream),
        lq,
        local,
    })
}

fn run_item(
    item: &Prepared,
    rx: &Received,
    level: Option<usize>,
    cfg: &CurveConfig,
    registry: &Registry,
) -> Result<ItemOutcome, RdoError> {
    let (meta_bits, m_tilde, accepted) = match (level, &rx.local) {
        (Some(l), Some(local)) => {
            let (_, bits, m) = &item.levels[l];
            let decision = gate_against(local, m, cfg.tau)?;
            (*bits, decision.v.then_some(m), Some(decision.v))
        }
        _ => (0, None, None),
    };
    let sr = registry.reconstruct(&cfg.reconstructor, &rx.lq, m_tilde, cfg.scale)?;
    let r = report(&item.hr, &sr)?;
    Ok(ItemOutcome {
        base_bits: rx.base_bits,
        meta_bits,
        psnr: r.psnr,
        ssim: r.ssim,
        mse: r.mse,
        gate_accepted: accepted,
    })
}

/// Runs the chain for every (quality, metadata level) pair and averages
/// over the corpus. Jobs run on the ambient rayon pool; results do not
/// depend on the number of workers.
pub fn build_curve(
    corpus: &[ImagePlane],
    cfg: &CurveConfig,
    registry: &Registry,
) -> Result<RDCurve, RdoError> {
    if corpus.is_empty() {
        return Err(RdoError::EmptyCorpus);
    }
    if cfg.qualities.is_empty() {
        return Err(RdoError::NoQualities);
    }
    if !SUPPORTED_SCALES.contains(&cfg.scale) {
        return Err(RdoError::Scale(cfg.scale));
    }
    if !(cfg.lambda >= 0.0 && cfg.lambda.is_finite()) {
        return Err(RdoError::Lambda(cfg.lambda));
    }
    registry.get(&cfg.reconstructor)?;
    let qualities = cfg
        .qualities
        .iter()
        .map(|&q| QualityFactor::new(q))
        .collect::<Result<Vec<_>, _>>()?;

    let prepared = prepare(corpus, cfg)?;
    let received: Vec<Vec<Received>> = qualities
        .par_iter()
        .map(|&q| {
            prepared
                .iter()
                .enumerate()
                .map(|(i, item)| receive(item, i, q, cfg))
                .collect::<Result<Vec<_>, _>>()
        })
        .collect::<Result<_, _>>()?;
    let levels: Vec<Option<usize>> = match cfg.metadata {
        MetadataSweep::None => vec![None],
        _ => (0..cfg.metadata.level_count()).map(Some).collect(),
    };
    let jobs: Vec<(usize, Option<usize>)> = (0..qualities.len())
        .flat_map(|qi| levels.iter().map(move |&l| (qi, l)))
        .collect();

    let points = jobs
        .par_iter()
        .map(|&(qi, level)| {
            let outcomes = prepared
                .iter()
                .zip(&received[qi])
                .map(|(item, rx)| run_item(item, rx, level, cfg, registry))
                .collect::<Result<Vec<_>, _>>()?;
            let n = outcomes.len() as f64;
            let base_bits: u64 = outcomes.iter().map(|o| o.base_bits).sum();
            let meta_bits: u64 = outcomes.iter().map(|o| o.meta_bits).sum();
            let psnr = outcomes.iter().map(|o| o.psnr).sum::<f64>() / n;
            let ssim = outcomes.iter().map(|o| o.ssim).sum::<f64>() / n;
            let mse = outcomes.iter().map(|o| o.mse).sum::<f64>() / n;
            let d = match cfg.d_kind {
                DistortionKind::Mse => mse,
                DistortionKind::OneMinusSsim => 1.0 - ssim,
            };
            let total_bits = base_bits + meta_bits;
            let cost = lagrangian(d, cfg.lambda, total_bits as f64)?;
            let meta_level = match level {
                None => "none".to_string(),
                Some(l) => prepared[0].levels[l].0.label.clone(),
            };
            Ok(RatePoint {
                regime: cfg.regime.name.clone(),
                reconstructor: cfg.reconstructor.clone(),
                q: qualities[qi].get(),
                meta_level,
                tau: cfg.tau,
                base_bits,
                meta_bits,
                total_bits,
                psnr,
                ssim,
                d_kind: cfg.d_kind,
                lambda: cfg.lambda,
                j: cost.j,
                d,
            })
        })
        .collect::<Result<Vec<_>, RdoError>>()?;
    RDCurve::from_points(cfg.method.clone(), points)
}

/// One curve per image, labelled `<method>/<index>`.
pub fn build_curves_per_image(
    corpus: &[ImagePlane],
    cfg: &CurveConfig,
    registry: &Registry,
) -> Result<Vec<RDCurve>, RdoError> {
    corpus
        .iter()
        .enumerate()
        .map(|(i, img)| {
            let mut c = cfg.clone();
            c.method = format!("{}/{i}", cfg.method);
            // keep the noise realization of the corpus-level run
            c.seed = cfg.seed;
            build_curve_indexed(std::slice::from_ref(img), i, &c, registry)
        })
        .collect()
}

fn build_curve_indexed(
    image: &[ImagePlane],
    index: usize,
    cfg: &CurveConfig,
    registry: &Registry,
) -> Result<RDCurve, RdoError> {
    // Shift the seed so the single image at position 0 draws the noise it
    // would draw at `index` in the full corpus.
    let mut c = cfg.clone();
    let target = image_seed(cfg.seed, index).0;
    c.seed = find_seed_for_index0(target);
    build_curve(image, &c, registry)
}

/// `image_seed(s, 0) == ChannelSeed(target)` is solved by
/// `s = target_pre ^ splitmix64(0)`, where `target_pre` is the splitmix64
/// preimage. splitmix64 is a bijection, so invert it.
fn find_seed_for_index0(target: u64) -> u64 {
    unsplitmix64(target) ^ splitmix64(0)
}

fn unsplitmix64(mut z: u64) -> u64 {
    fn unxorshift(z: u64, s: u32) -> u64 {
        let mut x = z;
        let mut shift = s;
        while shift < 64 {
            x = z ^ (x >> s);
            shift += s;
        }
        x
    }
    const INV1: u64 = 0x3196_42b2_d24d_8ec3; // inverse of 0x94d0_49bb_1331_11eb
    const INV2: u64 = 0x96de_1b17_3f11_9089; // inverse of 0xbf58_476d_1ce4_e5b9
    z = unxorshift(z, 31);
    z = z.wrapping_mul(INV1);
    z = unxorshift(z, 27);
    z = z.wrapping_mul(INV2);
    z = unxorshift(z, 30);
    z.wrapping_sub(0x9e37_79b9_7f4a_7c15)
}

// ---------------------------------------------------------------------------
// Emission
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmitFormat {
    Csv,
    Json,
}

impl FromStr for EmitFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            other => Err(format!("unknown output format '{other}'")),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    method: String,
    regime: String,
    reconstructor: String,
    q: u8,
    meta_level: String,
    tau: f64,
    base_bits: u64,
    meta_bits: u64,
    total_bits: u64,
    psnr_db: f64,
    ssim: f64,
    d_kind: DistortionKind,
    lambda: f64,
    j: f64,
    d: f64,
}

impl CsvRow {
    fn new(method: &str, p: &RatePoint) -> Self {
        Self {
            method: method.to_string(),
            regime: p.regime.clone(),
            reconstructor: p.reconstructor.clone(),
            q: p.q,
            meta_level: p.meta_level.clone(),
            tau: p.tau,
            base_bits: p.base_bits,
            meta_bits: p.meta_bits,
            total_bits: p.total_bits,
            psnr_db: p.psnr,
            ssim: p.ssim,
            d_kind: p.d_kind,
            lambda: p.lambda,
            j: p.j,
            d: p.d,
        }
    }

    fn into_point(self) -> (String, RatePoint) {
        (
            self.method,
            RatePoint {
                regime: self.regime,
                reconstructor: self.reconstructor,
                q: self.q,
                meta_level: self.meta_level,
                tau: self.tau,
                base_bits: self.base_bits,
                meta_bits: self.meta_bits,
                total_bits: self.total_bits,
                psnr: self.psnr_db,
                ssim: self.ssim,
                d_kind: self.d_kind,
                lambda: self.lambda,
                j: self.j,
                d: self.d,
            },
        )
    }
}

/// Serializes curves. CSV has one row per point with the columns
/// `method, regime, reconstructor, q, meta_level, tau, base_bits, meta_bits,
/// total_bits, psnr_db, ssim, d_kind, lambda, j, d`. JSON is an object keyed
/// by method label, each holding the same fields per point.
pub fn emit(curves: &[RDCurve], format: EmitFormat) -> Result<Vec<u8>, RdoError> {
    for c in curves {
        if c.points.is_empty() {
            return Err(RdoError::EmptyCurve(c.method.clone()));
        }
    }
    match format {
        EmitFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            if curves.is_empty() {
                w.write_record([
                    "method", "regime", "reconstructor", "q", "meta_level", "tau", "base_bits",
                    "meta_bits", "total_bits", "psnr_db", "ssim", "d_kind", "lambda", "j", "d",
                ])
                .map_err(|e| RdoError::Parse(e.to_string()))?;
            }
            for c in curves {
                for p in &c.points {
                    w.serialize(CsvRow::new(&c.method, p))
                        .map_err(|e| RdoError::Parse(e.to_string()))?;
                }
            }
            w.into_inner().map_err(|e| RdoError::Parse(e.to_string()))
        }
        EmitFormat::Json => {
            let mut map = serde_json::Map::new();
            for c in curves {
                map.insert(
                    c.method.clone(),
                    serde_json::to_value(&c.points).map_err(|e| RdoError::Parse(e.to_string()))?,
                );
            }
            let mut out = serde_json::to_vec_pretty(&serde_json::Value::Object(map))
                .map_err(|e| RdoError::Parse(e.to_string()))?;
            out.push(b'\n');
            Ok(out)
        }
    }
}

/// Inverse of [`emit`]. Curve order follows first appearance.
pub fn parse(bytes: &[u8], format: EmitFormat) -> Result<Vec<RDCurve>, RdoError> {
    let mut order: Vec<String> = Vec::new();
    let mut groups: HashMap<String, Vec<RatePoint>> = HashMap::new();
    let mut push = |method: String, p: RatePoint| {
        if !groups.contains_key(&method) {
            order.push(method.clone());
        }
        groups.entry(method).or_default().push(p);
    };
    match format {
        EmitFormat::Csv => {
            let mut r = csv::Reader::from_reader(bytes);
            for row in r.deserialize::<CsvRow>() {
                let (m, p) = row.map_err(|e| RdoError::Parse(e.to_string()))?.into_point();
                push(m, p);
            }
        }
        EmitFormat::Json => {
            let v: serde_json::Map<String, serde_json::Value> =
                serde_json::from_slice(bytes).map_err(|e| RdoError::Parse(e.to_string()))?;
            for (m, pts) in v {
                let pts: Vec<RatePoint> =
                    serde_json::from_value(pts).map_err(|e| RdoError::Parse(e.to_string()))?;
                for p in pts {
                    push(m.clone(), p);
                }
            }
        }
    }
    order
        .into_iter()
        .map(|m| {
            let pts = groups.remove(&m).unwrap_or_default();
            for p in &pts {
                p.check()?;
            }
            if pts.windows(2).any(|w| w[1].total_bits <= w[0].total_bits) {
                return Err(RdoError::Parse(format!("curve '{m}' is not sorted by rate")));
            }
            if pts.is_empty() {
                return Err(RdoError::EmptyCurve(m));
            }
            Ok(RDCurve { method: m, points: pts })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve(points: &[(u64, f64)]) -> RDCurve {
        RDCurve::from_points(
            "c",
            points.iter().map(|&(r, q)| RatePoint::synthetic(r, q, q / 100.0)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn lagrangian_identity() {
        let c = lagrangian(10.0, 0.1, 100.0).unwrap();
        assert_eq!(c.j, 20.0);
        assert_eq!(lagrangian(7.5, 0.0, 1e6).unwrap().j, 7.5);
        assert!(lagrangian(1.0, -0.1, 1.0).is_err());
        assert!(lagrangian(1.0, 0.1, -1.0).is_err());
    }

    #[test]
    fn argmin_matches_exhaustive_scan() {
        let cands = [(50.0, 100.0), (30.0, 300.0), (10.0, 900.0), (25.0, 350.0)];
        for lambda in [0.0, 0.01, 0.05, 0.1, 1.0] {
            let mut best = 0;
            for i in 1..cands.len() {
                if cands[i].0 + lambda * cands[i].1 < cands[best].0 + lambda * cands[best].1 {
                    best = i;
                }
            }
            assert_eq!(argmin_cost(&cands, lambda).unwrap(), Some(best));
        }
        assert_eq!(argmin_cost(&[], 1.0).unwrap(), None);
    }

    #[test]
    fn argmin_is_scale_invariant() {
        let cands = [(50.0, 100.0), (30.0, 300.0), (10.0, 900.0), (25.0, 350.0)];
        for lambda in [0.01, 0.05, 0.1] {
            let base = argmin_cost(&cands, lambda).unwrap();
            for k in [0.5, 3.0, 1000.0] {
                let scaled: Vec<(f64, f64)> = cands.iter().map(|&(d, r)| (d * k, r)).collect();
                assert_eq!(argmin_cost(&scaled, lambda * k).unwrap(), base);
            }
        }
    }

    #[test]
    fn curve_sorting_and_dedup() {
        let mut a = RatePoint::synthetic(200, 30.0, 0.8);
        a.d = 5.0;
        let mut b = RatePoint::synthetic(200, 31.0, 0.82);
        b.d = 3.0;
        let c = RatePoint::synthetic(100, 28.0, 0.7);
        let curve = RDCurve::from_points("m", vec![a, b.clone(), c]).unwrap();
        assert_eq!(curve.points.len(), 2);
        assert_eq!(curve.points[0].total_bits, 100);
        assert_eq!(curve.points[1], b);
        assert!(RDCurve::from_points("m", vec![]).is_err());
        let mut bad = RatePoint::synthetic(10, 1.0, 0.1);
        bad.meta_bits = 3;
        assert!(matches!(
            RDCurve::from_points("m", vec![bad]),
            Err(RdoError::Additivity { .. })
        ));
    }

    #[test]
    fn self_comparison_is_zero() {
        let c = curve(&[(100, 30.0), (200, 34.0), (400, 36.0)]);
        let s = bitrate_saving_at_matched_quality(&c, &c, QualityMetric::Psnr).unwrap();
        assert_eq!((s.mean, s.max), (0.0, 0.0));
        let g = quality_gain_at_matched_rate(&c, &c, QualityMetric::Psnr).unwrap();
        assert_eq!((g.mean, g.max), (0.0, 0.0));
        assert!(s.samples >= 50);
    }

    #[test]
    fn half_rate_and_plus_one_db() {
        let r = curve(&[(100, 30.0), (200, 34.0), (400, 36.0)]);
        let half = curve(&[(50, 30.0), (100, 34.0), (200, 36.0)]);
        let s = bitrate_saving_at_matched_quality(&r, &half, QualityMetric::Psnr).unwrap();
        assert!((s.mean - 50.0).abs() < 1e-12 && (s.max - 50.0).abs() < 1e-12);
        let up = curve(&[(100, 31.0), (200, 35.0), (400, 37.0)]);
        let g = quality_gain_at_matched_rate(&r, &up, QualityMetric::Psnr).unwrap();
        assert!((g.mean - 1.0).abs() < 1e-12 && (g.max - 1.0).abs() < 1e-12);
        let sl = bitrate_saving_with_axis(&r, &half, QualityMetric::Psnr, RateAxis::Log).unwrap();
        assert!((sl.mean - 50.0).abs() < 1e-9);
    }

    #[test]
    fn disjoint_curves_error() {
        let a = curve(&[(100, 20.0), (200, 22.0)]);
        let b = curve(&[(300, 30.0), (400, 32.0)]);
        assert!(matches!(
            bitrate_saving_at_matched_quality(&a, &b, QualityMetric::Psnr),
            Err(RdoError::NoOverlap("quality"))
        ));
        assert!(matches!(
            quality_gain_at_matched_rate(&a, &b, QualityMetric::Psnr),
            Err(RdoError::NoOverlap("rate"))
        ));
    }

    #[test]
    fn frontier_drops_dominated_points() {
        let c = curve(&[(100, 30.0), (150, 29.0), (200, 34.0), (250, 34.0), (300, 35.0)]);
        assert_eq!(
            c.frontier(QualityMetric::Psnr),
            vec![(100.0, 30.0), (200.0, 34.0), (300.0, 35.0)]
        );
    }

    #[test]
    fn unsplitmix_inverts() {
        for z in [0u64, 1, 42, u64::MAX, 0xdead_beef_cafe_f00d] {
            assert_eq!(splitmix64(unsplitmix64(z)), z);
            assert_eq!(unsplitmix64(splitmix64(z)), z);
        }
        assert_eq!(image_seed(find_seed_for_index0(77), 0), ChannelSeed(77));
    }

    #[test]
    fn emit_and_parse_round_trip() {
        let mut a = RatePoint::synthetic(120, f64::INFINITY, 1.0);
        a.meta_level = "canny0p1".into();
        a.regime = "HN".into();
        let b = RatePoint::synthetic(340, 31.123456789012345, 0.912345678901);
        let curves = vec![
            RDCurve::from_points("zeta", vec![a.clone(), b.clone()]).unwrap(),
            RDCurve::from_points("alpha", vec![b]).unwrap(),
        ];
        for fmt in [EmitFormat::Csv, EmitFormat::Json] {
            let bytes = emit(&curves, fmt).unwrap();
            assert_eq!(parse(&bytes, fmt).unwrap(), curves, "{fmt:?}");
            assert_eq!(emit(&curves, fmt).unwrap(), bytes);
        }
        let csv = String::from_utf8(emit(&curves[1..], EmitFormat::Csv).unwrap()).unwrap();
        assert_eq!(csv.lines().count(), 2);
        assert!(csv.starts_with("method,regime,reconstructor,q,meta_level,tau,base_bits,meta_bits,total_bits,psnr_db,ssim,d_kind,lambda,j"));
        let empty = RDCurve {
            method: "e".into(),
            points: vec![],
        };
        assert!(emit(&[empty], EmitFormat::Csv).is_err());
    }
}
