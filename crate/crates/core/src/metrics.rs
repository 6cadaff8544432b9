//! Full-reference quality metrics and the temporal frame-difference loss.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::filter::gaussian_weights;
use crate::pixel::{FrameSequence, ImagePlane};

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;
const PEAK: f64 = 255.0;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricError {
    #[error("dimension mismatch: {0}x{1} vs {2}x{3}")]
    Dimensions(usize, usize, usize, usize),
    #[error("image {0}x{1} is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window")]
    TooSmall(usize, usize),
    #[error("frame-difference loss needs at least 2 frames, got {0}")]
    TooFewFrames(usize),
    #[error("frame counts differ: {0} vs {1}")]
    FrameCount(usize, usize),
}

fn check_dims(a: &ImagePlane, b: &ImagePlane) -> Result<(), MetricError> {
    if a.same_dims(b) {
        Ok(())
    } else {
        Err(MetricError::Dimensions(a.width(), a.height(), b.width(), b.height()))
    }
}

pub fn mse(a: &ImagePlane, b: &ImagePlane) -> Result<f64, MetricError> {
    check_dims(a, b)?;
    let sum: f64 = a
        .samples()
        .iter()
        .zip(b.samples())
        .map(|(&x, &y)| {
            let d = f64::from(x) - f64::from(y);
            d * d
        })
        .sum();
    Ok(sum / a.samples().len() as f64)
}

/// `10 log10(255² / mse)`; `f64::INFINITY` when the images are identical.
pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (PEAK * PEAK / mse).log10()
    }
}

pub fn psnr(a: &ImagePlane, b: &ImagePlane) -> Result<f64, MetricError> {
    Ok(psnr_from_mse(mse(a, b)?))
}

/// Convolution keeping only positions where the window fits.
fn valid_filter(src: &[f64], width: usize, height: usize, k: &[f64]) -> (Vec<f64>, usize, usize) {
    let n = k.len();
    let (ow, oh) = (width + 1 - n, height + 1 - n);
    let mut tmp = vec![0.0; ow * height];
    for y in 0..height {
        let row = &src[y * width..(y + 1) * width];
        for x in 0..ow {
            tmp[y * ow + x] = k.iter().zip(&row[x..x + n]).map(|(w, v)| w * v).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = k
                .iter()
                .enumerate()
                .map(|(j, w)| w * tmp[(y + j) * ow + x])
                .sum();
        }
    }
    (out, ow, oh)
}

/// Mean SSIM over all valid 11x11 Gaussian-window positions.
pub fn ssim(a: &ImagePlane, b: &ImagePlane) -> Result<f64, MetricError> {
    check_dims(a, b)?;
    let (w, h) = (a.width(), a.height());
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(MetricError::TooSmall(w, h));
    }
    let k = gaussian_weights(SSIM_SIGMA, SSIM_WINDOW);
    let fa = a.to_f64();
    let fb = b.to_f64();
    let aa: Vec<f64> = fa.iter().map(|v| v * v).collect();
    let bb: Vec<f64> = fb.iter().map(|v| v * v).collect();
    let ab: Vec<f64> = fa.iter().zip(&fb).map(|(x, y)| x * y).collect();
    let (mu_a, _, _) = valid_filter(&fa, w, h, &k);
    let (mu_b, _, _) = valid_filter(&fb, w, h, &k);
    let (e_aa, _, _) = valid_filter(&aa, w, h, &k);
    let (e_bb, _, _) = valid_filter(&bb, w, h, &k);
    let (e_ab, _, _) = valid_filter(&ab, w, h, &k);
    let c1 = (SSIM_K1 * PEAK).powi(2);
    let c2 = (SSIM_K2 * PEAK).powi(2);
    let total: f64 = (0..mu_a.len())
        .map(|i| {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let va = e_aa[i] - ma * ma;
            let vb = e_bb[i] - mb * mb;
            let cov = e_ab[i] - ma * mb;
            ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
                / ((ma * ma + mb * mb + c1) * (va + vb + c2))
        })
        .sum();
    Ok(total / mu_a.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    #[serde(with = "crate::serde_f64")]
    pub psnr: f64,
    pub ssim: f64,
    pub mse: f64,
}

pub fn report(reference: &ImagePlane, test: &ImagePlane) -> Result<MetricReport, MetricError> {
    let m = mse(reference, test)?;
    Ok(MetricReport {
        psnr: psnr_from_mse(m),
        ssim: ssim(reference, test)?,
        mse: m,
    })
}

/// Mean over `i = 2..n` of the per-sample mean absolute difference between
/// the temporal differences `x(i) - x(i-1)` of the two sequences.
pub fn frame_diff_loss(a: &FrameSequence, b: &FrameSequence) -> Result<f64, MetricError> {
    if a.len() != b.len() {
        return Err(MetricError::FrameCount(a.len(), b.len()));
    }
    if a.len() < 2 {
        return Err(MetricError::TooFewFrames(a.len()));
    }
    let (fa, fb) = (a.frames(), b.frames());
    if fa[0].width() != fb[0].width()
        || fa[0].height() != fb[0].height()
        || fa[0].planes().len() != fb[0].planes().len()
    {
        return Err(MetricError::Dimensions(
            fa[0].width(),
            fa[0].height(),
            fb[0].width(),
            fb[0].height(),
        ));
    }
    let mut total = 0.0;
    for i in 1..a.len() {
        let mut sum = 0.0;
        let mut count = 0usize;
        for p in 0..fa[i].planes().len() {
            let (a1, a0) = (fa[i].planes()[p].samples(), fa[i - 1].planes()[p].samples());
            let (b1, b0) = (fb[i].planes()[p].samples(), fb[i - 1].planes()[p].samples());
            for j in 0..a1.len() {
                let da = f64::from(a1[j]) - f64::from(a0[j]);
                let db = f64::from(b1[j]) - f64::from(b0[j]);
                sum += (da - db).abs();
            }
            count += a1.len();
        }
        total += sum / count as f64;
    }
    Ok(total / (a.len() - 1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pattern(w: usize, h: usize, seed: u32) -> ImagePlane {
        ImagePlane::from_fn(w, h, |x, y| {
            (seed.wrapping_mul((x * 7919 + y * 104_729 + 1) as u32) >> 24) as u8
        })
        .unwrap()
    }

    #[test]
    fn psnr_cases() {
        let a = pattern(8, 8, 3);
        assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
        let z = ImagePlane::filled(8, 8, 10).unwrap();
        let o = ImagePlane::filled(8, 8, 11).unwrap();
        assert!((psnr(&z, &o).unwrap() - 48.1308).abs() < 1e-3);
        assert!(psnr(&z, &ImagePlane::filled(4, 8, 0).unwrap()).is_err());
    }

    #[test]
    fn psnr_hand_computed() {
        // differences 0,1,2,3 repeated: mse = (0+1+4+9)/4 = 3.5
        let a = ImagePlane::filled(4, 2, 100).unwrap();
        let b = ImagePlane::from_fn(4, 2, |x, _| 100 + x as u8).unwrap();
        let expect = 10.0 * (65025.0f64 / 3.5).log10();
        assert!((psnr(&a, &b).unwrap() - expect).abs() < 1e-12);
        assert_eq!(mse(&a, &b).unwrap(), 3.5);
    }

    #[test]
    fn ssim_identity_and_symmetry() {
        let a = pattern(23, 19, 7);
        let b = pattern(23, 19, 13);
        assert_eq!(ssim(&a, &a).unwrap(), 1.0);
        assert_eq!(ssim(&a, &b).unwrap(), ssim(&b, &a).unwrap());
        let s = ssim(&a, &b).unwrap();
        assert!(s > -1.0 && s < 1.0);
    }

    #[test]
    fn ssim_constants_closed_form() {
        let a = ImagePlane::filled(16, 16, 0).unwrap();
        let b = ImagePlane::filled(16, 16, 255).unwrap();
        let c1 = 6.5025f64;
        let expect = c1 / (65025.0 + c1);
        assert!((ssim(&a, &b).unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn ssim_rejects_small() {
        let a = ImagePlane::filled(10, 30, 0).unwrap();
        assert!(matches!(ssim(&a, &a), Err(MetricError::TooSmall(10, 30))));
    }

    fn seq(vals: &[u8]) -> FrameSequence {
        FrameSequence::from_planes(vals.iter().map(|&v| ImagePlane::filled(1, 1, v).unwrap()).collect())
            .unwrap()
    }

    #[test]
    fn frame_diff_cases() {
        assert_eq!(frame_diff_loss(&seq(&[0, 10]), &seq(&[0, 4])).unwrap(), 6.0);
        assert_eq!(frame_diff_loss(&seq(&[3, 9, 1]), &seq(&[3, 9, 1])).unwrap(), 0.0);
        assert_eq!(frame_diff_loss(&seq(&[3, 9, 1]), &seq(&[13, 19, 11])).unwrap(), 0.0);
        assert!(matches!(
            frame_diff_loss(&seq(&[1]), &seq(&[1])),
            Err(MetricError::TooFewFrames(1))
        ));
        assert!(frame_diff_loss(&seq(&[1, 2]), &seq(&[1, 2, 3])).is_err());
    }
}
